"""Goal-reaching RL from action-free observation data, at desk scale.

Pipeline: generate (or corrupt) state-only maze trajectories, pretrain a
state-goal value function and a diffusion subgoal policy from them, then
run subgoal-guided online actor-critic training.
"""

import os as _os

# Small-matrix workloads: multi-threaded BLAS only adds overhead here.
# Must be set before numpy first loads; harmless if numpy is already up.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from ._kernels import BACKEND  # noqa: E402,F401

__version__ = "0.1.0"
