from .dataset import *  # noqa
from .occlusion import *  # noqa
from .sampler import *  # noqa
from .storage import *  # noqa
from .synthetic import *  # noqa
