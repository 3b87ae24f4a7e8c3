from .gradcheck import *  # noqa
from .ops import *  # noqa
from .tensor import *  # noqa
