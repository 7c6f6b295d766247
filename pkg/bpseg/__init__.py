from .cli import *
from .confidence import *
from .config import *
from .const import *
from .dataset import *
from .evaluation import *
from .exceptions import *
from .geometry import *
from .losses import *
from .model import *
from .prefetch import *
from .raster import *
from .report import *
from .trainer import *
from .util import *

__version__ = LIB_VER
