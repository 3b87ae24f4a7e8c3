__version__ = '0.1.0'

from . import utils  # noqa
from .data import *  # noqa
from .diffcore import *  # noqa
from .encoder import *  # noqa
from .engine import *  # noqa
from .errors import *  # noqa
from .evaluation import *  # noqa
from .losses import *  # noqa
