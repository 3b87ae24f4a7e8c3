from .env import *  # noqa
from .events import *  # noqa
from .json import *  # noqa
from .rng import *  # noqa
from .undefined import *  # noqa
