"""Pure-numpy implementations of the hot kernels.

Same call signatures and formulas as the Cython core (`_core.pyx`); the
backend is chosen once at import time in `egrpo._kernels`. Matrix products
are not part of this API because numpy already delegates them to BLAS.
All arrays are float32 and C-contiguous.
"""

import numpy as np

# tanh-form GELU constants
GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
GELU_C1 = 0.044715

LN_EPS = 1e-5


def gelu_fwd(x):
    """0.5*x*(1+tanh(c0*(x+c1*x^3))), elementwise."""
    u = GELU_C0 * (x + GELU_C1 * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x, gout):
    """Gradient of the tanh-form GELU at x, times upstream gout."""
    x2 = x * x
    u = GELU_C0 * (x + GELU_C1 * x * x2)
    t = np.tanh(u)
    du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x2)
    return gout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def layernorm_fwd(x, scale, shift):
    """Row-wise layer norm: returns (out, mean, rstd); x is (B, D)."""
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean[:, None]) * rstd[:, None]
    out = xhat * scale + shift
    return (
        np.ascontiguousarray(out, dtype=np.float32),
        mean.astype(np.float32, copy=False),
        rstd.astype(np.float32, copy=False),
    )


def layernorm_bwd(x, scale, mean, rstd, gout):
    """Backward of layernorm_fwd: returns (gx, gscale, gshift)."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    gxhat = gout * scale
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    gscale = (gout * xhat).sum(axis=0)
    gshift = gout.sum(axis=0)
    return (
        np.ascontiguousarray(gx, dtype=np.float32),
        gscale.astype(np.float32, copy=False),
        gshift.astype(np.float32, copy=False),
    )


def adam_update(p, g, m, v, t, lr, b1, b2, eps):
    """One bias-corrected Adam step, in place on p, m, v. t is the step count (>=1)."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def polyak(target, online, rho):
    """target <- (1-rho)*target + rho*online, in place on target."""
    target *= 1.0 - rho
    target += rho * online
