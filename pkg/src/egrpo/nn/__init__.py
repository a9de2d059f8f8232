"""Dense-network numerics: autodiff tensors, MLPs, Adam, checkpoints."""

from .checkpoint import CheckpointError, load_into, load_params, save_params
from .mlp import Mlp, clone_mlp
from .optim import Adam, polyak_update
from .tensor import Tensor

from . import tensor as ops  # noqa: F401  (functional op namespace)


def expectile_value(x, tau):
    """Scalar/array expectile loss |tau - 1(x<0)| * x^2 (no autodiff)."""
    import numpy as np

    if not 0.5 <= tau < 1.0:
        raise ValueError(f"expectile tau must be in [0.5, 1), got {tau}")
    x = np.asarray(x, dtype=np.float64)
    w = np.where(x < 0.0, 1.0 - tau, tau)
    return w * x * x


def gelu_value(x):
    """Elementwise GELU (tanh form) on raw arrays."""
    from .. import _kernels as K
    import numpy as np

    return K.gelu_fwd(np.asarray(x, dtype=np.float32))
