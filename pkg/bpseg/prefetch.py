#
# bpseg is a bounded-polygon weakly-supervised segmentation toolkit.
# This file is part of bpseg.
#
# Copyright (C) 2024 bpseg contributors
#
#    bpseg is free software: you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation, either version 3 of the License, or
#    (at your option) any later version.
#
#    This program is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with this program.  If not, see <https://www.gnu.org/licenses/>.
#

from .const import LIB_NAME
from .util import StoppableThread

import logging
from queue import Queue, Full

__all__ = ["BatchPrefetcher"]

logger = logging.getLogger(LIB_NAME)

_DONE = object()


class BatchPrefetcher(StoppableThread):
    """Thread loading batches ahead of the training loop.

    The batch order is fixed before the thread starts, so prefetching never
    changes what the loop sees, only when it is loaded.

    Attributes:
        loader:
            function receiving a list of indices and returning a batch.
        plan:
            list of index lists, one per batch, in consumption order.
        batch_queue:
            bounded Queue of loaded batches.
    """
    def __init__(self, loader, plan, maxsize=2, name="prefetch"):
        super(BatchPrefetcher, self).__init__(name=name, daemon=True)
        self.loader = loader
        self.plan = list(plan)
        self.batch_queue = Queue(maxsize=max(1, maxsize))

    def run(self):
        try:
            for indices in self.plan:
                if self.stop_flag.is_set():
                    break
                self._put(self.loader(indices))
        except Exception as e:
            logger.exception("Exception occured while loading a batch.")
            self._put(e)
        finally:
            self._put(_DONE)

    def _put(self, item):
        # Waits at most 1 second at a time so that stop_flag still works
        while not self.stop_flag.is_set():
            try:
                self.batch_queue.put(item, timeout=1)
                return
            except Full:
                continue

    def batch_generator(self):
        """Generator yielding loaded batches in plan order.

        Starts the thread if needed. Exceptions raised by the loader are
        re-raised here, in the consuming thread.
        """
        if not self.is_alive() and not self.stop_flag.is_set():
            self.start()
        try:
            while True:
                item = self.batch_queue.get()
                if item is _DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self.stop()
