"""Dense networks: affine layers with pre-activation layer norm and GELU.

Hidden layers compute gelu(layernorm(x @ W + b)); the final layer is a raw
affine map unless activate_final is set. Weights use fan-in-scaled uniform
init from an explicit rng so every downstream run is reproducible.
"""

import numpy as np

from .. import _kernels as K
from . import tensor as T


class Mlp:
    """Fully-connected network over float32 tensors.

    sizes = [in, hidden..., out]. Two forward paths: __call__ builds the
    autodiff graph; forward_np is a graph-free numpy pass for targets,
    rollouts and sampling (identical arithmetic).
    """

    def __init__(self, sizes, rng, activate_final=False, layer_norm=True):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)
        self.activate_final = activate_final
        self.layer_norm = layer_norm
        self.activation = "gelu-tanh"
        self.weights = []
        self.biases = []
        self.ln_scales = []
        self.ln_shifts = []
        n_layers = len(sizes) - 1
        for li in range(n_layers):
            fan_in, fan_out = sizes[li], sizes[li + 1]
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
            b = rng.uniform(-bound, bound, size=(fan_out,)).astype(np.float32)
            self.weights.append(T.Tensor(w, requires_grad=True))
            self.biases.append(T.Tensor(b, requires_grad=True))
            if layer_norm and self._is_activated(li):
                self.ln_scales.append(T.Tensor(np.ones(fan_out, np.float32), requires_grad=True))
                self.ln_shifts.append(T.Tensor(np.zeros(fan_out, np.float32), requires_grad=True))
            else:
                self.ln_scales.append(None)
                self.ln_shifts.append(None)

    def _is_activated(self, li):
        return li < len(self.sizes) - 2 or self.activate_final

    def __call__(self, x):
        h = x if isinstance(x, T.Tensor) else T.Tensor(x)
        for li in range(len(self.weights)):
            h = T.add(T.matmul(h, self.weights[li]), self.biases[li])
            if self._is_activated(li):
                if self.layer_norm:
                    h = T.layernorm(h, self.ln_scales[li], self.ln_shifts[li])
                h = T.gelu(h)
        return h

    def forward_np(self, x):
        h = np.ascontiguousarray(x, dtype=np.float32)
        for li in range(len(self.weights)):
            h = h @ self.weights[li].data + self.biases[li].data
            if self._is_activated(li):
                if self.layer_norm:
                    h, _, _ = K.layernorm_fwd(h, self.ln_scales[li].data, self.ln_shifts[li].data)
                h = K.gelu_fwd(h)
        return h

    def params(self, prefix=""):
        """Named parameter tensors, stable order."""
        out = {}
        for li in range(len(self.weights)):
            out[f"{prefix}w{li}"] = self.weights[li]
            out[f"{prefix}b{li}"] = self.biases[li]
            if self.ln_scales[li] is not None:
                out[f"{prefix}lns{li}"] = self.ln_scales[li]
                out[f"{prefix}lnb{li}"] = self.ln_shifts[li]
        return out

    def set_requires_grad(self, flag):
        for p in self.params().values():
            p.requires_grad = flag

    def copy_from(self, other):
        """Copy parameter values from a same-shaped network."""
        mine, theirs = self.params(), other.params()
        if mine.keys() != theirs.keys():
            raise ValueError("network shapes differ")
        for k in mine:
            np.copyto(mine[k].data, theirs[k].data)


def clone_mlp(mlp, rng=None):
    """Structural copy with identical parameter values (e.g. target nets)."""
    out = Mlp(mlp.sizes, rng or np.random.default_rng(0),
              activate_final=mlp.activate_final, layer_norm=mlp.layer_norm)
    out.copy_from(mlp)
    return out
