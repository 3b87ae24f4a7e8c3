from .branches import *  # noqa
from .config import *  # noqa
from .layers import *  # noqa
from .model import *  # noqa
