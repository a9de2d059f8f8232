"""Adam with bias correction, and polyak averaging for target networks."""

import numpy as np

from .. import _kernels as K


class Adam:
    """Adam over a dict of named parameter tensors.

    Moment accumulators live per parameter; the step counter is shared and
    strictly increasing. step() consumes .grad in place and clears it.
    """

    def __init__(self, params, lr=3e-4, b1=0.9, b2=0.999, eps=1e-8):
        if isinstance(params, dict):
            params = list(params.values())
        self.params = params
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                # decay moments even for params untouched this step
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            K.adam_update(p.data, g, m, v, self.t, self.lr, self.b1, self.b2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def polyak_update(target_params, online_params, rho):
    """target <- (1-rho)*target + rho*online, elementwise over matching params."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    if isinstance(target_params, dict):
        target_params = list(target_params.values())
        online_params = list(online_params.values())
    for tp, op in zip(target_params, online_params):
        if tp.data.shape != op.data.shape:
            raise ValueError("parameter shape mismatch in polyak_update")
        K.polyak(tp.data, op.data, rho)
