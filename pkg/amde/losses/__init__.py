from .classification import *  # noqa
from .config import *  # noqa
from .distance import *  # noqa
from .joint import *  # noqa
from .metric import *  # noqa
