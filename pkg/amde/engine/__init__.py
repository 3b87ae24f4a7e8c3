from .ablation import *  # noqa
from .checkpoint import *  # noqa
from .config import *  # noqa
from .evaluate import *  # noqa
from .gradcheck import *  # noqa
from .optim import *  # noqa
from .trainer import *  # noqa
