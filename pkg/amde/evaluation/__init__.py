from .metrics import *  # noqa
from .ranking import *  # noqa
from .report import *  # noqa
