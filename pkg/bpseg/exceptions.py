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

__all__ = ["BPSegError", "ErosionEmptyError", "MultiComponentError",
           "DegenerateError", "NoForegroundError", "InvalidParamsError",
           "MissingFileError", "ShapeMismatchError", "InvalidConfigError",
           "ConfigMismatchError", "NonFiniteLossError", "EmptyPoolsError",
           "ReportIOError"]


class BPSegError(Exception):
    """Base Exception for bpseg Errors.

    Attributes:
        operation:
            Dotted name of the operation that failed, e.g.
            "geometry.dilate_erode". Can be None.
        message:
            Human readable description of the failure.
    """
    def __init__(self, message, operation=None):
        super(BPSegError, self).__init__(message, operation)
        self.message = message
        self.operation = operation

        if operation is not None:
            self.args = (f"{operation}: {message}",)
        else:
            self.args = (message,)


class ErosionEmptyError(BPSegError):
    """Raised when erosion leaves no foreground pixel."""
    pass


class MultiComponentError(BPSegError):
    """Raised when a mask doesn't have exactly one 4-connected component.

    Attributes:
        n_components:
            Number of components found in the mask.
    """
    def __init__(self, message, operation=None, n_components=None):
        super(MultiComponentError, self).__init__(message, operation)
        self.n_components = n_components


class DegenerateError(BPSegError):
    """Raised when a polygon or an annotation collapses."""
    pass


class NoForegroundError(BPSegError):
    pass


class InvalidParamsError(BPSegError):
    pass


class MissingFileError(BPSegError):
    """Raised when a file referenced by a manifest doesn't exist.

    Attributes:
        path:
            Path of the missing file.
    """
    def __init__(self, message, operation=None, path=None):
        super(MissingFileError, self).__init__(message, operation)
        self.path = path


class ShapeMismatchError(BPSegError):
    pass


class InvalidConfigError(BPSegError):
    pass


class ConfigMismatchError(BPSegError):
    """Raised when the manifest lacks annotations a supervision mode needs."""
    pass


class NonFiniteLossError(BPSegError):
    """Raised when a loss term becomes NaN or Inf during training.

    Attributes:
        term:
            Name of the offending loss term, e.g. "l_pcl".
        step:
            Optimization step in which it happened.
        epoch:
            Epoch in which it happened.
    """
    def __init__(self, message, operation=None, term=None, step=None,
                 epoch=None):
        super(NonFiniteLossError, self).__init__(message, operation)
        self.term = term
        self.step = step
        self.epoch = epoch


class EmptyPoolsError(BPSegError):
    """Raised when a class has no certain pixel to sample from.

    Attributes:
        label:
            The class (0 or 1) whose pool is empty.
    """
    def __init__(self, message, operation=None, label=None):
        super(EmptyPoolsError, self).__init__(message, operation)
        self.label = label


class ReportIOError(BPSegError):
    pass
