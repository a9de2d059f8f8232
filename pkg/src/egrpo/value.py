"""State-goal value learning from action-free data.

V(s, g) is trained by expectile regression of the one-step TD residual
r + gamma * V_target(s', g) - V(s, g) under the {0,-1} goal-conditioned
reward, with goals relabeled by the dataset sampler. The goal encoder
emits unit-norm 10-dimensional features; the value head consumes the
concatenated state and goal features. A polyak-averaged target copy
provides the bootstrap values.
"""

from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .nn import Adam, Mlp, clone_mlp, load_params, ops, polyak_update, save_params

GOAL_EMBED_DIM = 10


class TrainingDiverged(Exception):
    pass


@dataclass
class ValueTrainConfig:
    tau: float = 0.7
    gamma: float = 0.99
    lr: float = 3e-4
    batch_size: int = 256
    polyak: float = 0.005
    steps: int = 20000
    hidden: tuple = (128, 128, 128)
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if not 0.5 <= self.tau < 1.0:
            raise ValueError(f"tau must be in [0.5, 1), got {self.tau}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")


class StateGoalValueNet:
    """State encoder + normalized goal encoder + value head, with target copies."""

    def __init__(self, state_dim, hidden=(128, 128, 128), seed=0, goal_dim=2):
        rng = np.random.default_rng(seed)
        hidden = tuple(hidden)
        self.state_dim = state_dim
        self.goal_dim = goal_dim
        self.hidden = hidden
        self.state_enc = Mlp([state_dim, *hidden], rng, activate_final=True)
        self.goal_enc = Mlp([goal_dim, *hidden, GOAL_EMBED_DIM], rng)
        self.head = Mlp([hidden[-1] + GOAL_EMBED_DIM, hidden[-1], 1], rng)
        self.t_state_enc = clone_mlp(self.state_enc)
        self.t_goal_enc = clone_mlp(self.goal_enc)
        self.t_head = clone_mlp(self.head)
        for m in (self.t_state_enc, self.t_goal_enc, self.t_head):
            m.set_requires_grad(False)

    def params(self):
        return {
            **self.state_enc.params("senc/"),
            **self.goal_enc.params("genc/"),
            **self.head.params("head/"),
        }

    def target_params(self):
        return {
            **self.t_state_enc.params("senc/"),
            **self.t_goal_enc.params("genc/"),
            **self.t_head.params("head/"),
        }

    def goal_features(self, g):
        """Unit-norm goal embedding (graph-free)."""
        feats = self.goal_enc.forward_np(np.asarray(g, np.float32))
        norm = np.maximum(np.linalg.norm(feats, axis=-1, keepdims=True), 1e-12)
        return feats / norm

    def value_graph(self, s, g):
        """V(s, g) as a graph tensor (batch, 1); gradients into online params."""
        sf = self.state_enc(ops.Tensor(np.asarray(s, np.float32)))
        gf = ops.l2normalize(self.goal_enc(ops.Tensor(np.asarray(g, np.float32))))
        return self.head(ops.concat([sf, gf]))

    def value(self, s, g):
        """V(s, g) as raw float32 (batch,), online parameters."""
        s = np.atleast_2d(np.asarray(s, np.float32))
        g = np.atleast_2d(np.asarray(g, np.float32))
        sf = self.state_enc.forward_np(s)
        gf = self.goal_features(g)
        return self.head.forward_np(np.concatenate([sf, gf], axis=1))[:, 0]

    def target_value(self, s, g):
        """V(s, g) under the polyak-averaged target parameters."""
        s = np.atleast_2d(np.asarray(s, np.float32))
        g = np.atleast_2d(np.asarray(g, np.float32))
        sf = self.t_state_enc.forward_np(s)
        gf = self.t_goal_enc.forward_np(g)
        gf = gf / np.maximum(np.linalg.norm(gf, axis=-1, keepdims=True), 1e-12)
        return self.t_head.forward_np(np.concatenate([sf, gf], axis=1))[:, 0]

    def sync_target(self, rho=1.0):
        polyak_update(self.target_params(), self.params(), rho)

    def save(self, path):
        named = {k: v.data for k, v in self.params().items()}
        named["meta/state_dim"] = np.float32(self.state_dim)
        named["meta/goal_dim"] = np.float32(self.goal_dim)
        named["meta/hidden"] = np.asarray(self.hidden, np.float32)
        save_params(path, named)

    @classmethod
    def load(cls, path):
        stored = load_params(path)
        net = cls(
            state_dim=int(stored["meta/state_dim"]),
            hidden=tuple(int(h) for h in stored["meta/hidden"]),
            goal_dim=int(stored["meta/goal_dim"]),
        )
        for k, t in net.params().items():
            np.copyto(t.data, stored[k])
        net.sync_target(1.0)
        return net


def value_loss(net, batch, tau, gamma):
    """Mean expectile loss of the TD residual against the target network.

    The goal is absorbing: when s equals the goal (r = 0) the bootstrap
    term is masked out, anchoring V(g, g) at zero so that V tracks the
    discounted cost-to-reach. Gradients flow only into the online network.
    """
    v = net.value_graph(batch.s, batch.g)
    v_next = net.target_value(batch.s2, batch.g)
    mask = (batch.r < 0.0).astype(np.float32)
    target = batch.r + gamma * mask * v_next
    residual = ops.sub(ops.Tensor(target[:, None]), v)
    loss = ops.mean(ops.expectile(residual, tau))
    ops.assert_finite(loss, "value loss")
    return loss


class _DivergenceGuard:
    """Abort when the running-mean loss exceeds 10x its level at step 100."""

    def __init__(self, window=100, factor=10.0, arm_at=100):
        self.window = window
        self.factor = factor
        self.arm_at = arm_at
        self.recent = []
        self.base = None
        self.n = 0

    def push(self, loss):
        self.n += 1
        self.recent.append(loss)
        if len(self.recent) > self.window:
            self.recent.pop(0)
        mean = float(np.mean(self.recent))
        if self.n == self.arm_at:
            self.base = mean
        elif self.base is not None and mean > self.factor * self.base + 1e-8:
            raise TrainingDiverged(
                f"loss running mean {mean:.4g} exceeds 10x baseline {self.base:.4g}"
            )


def train_value(dataset, config, callback=None):
    """Run the configured gradient steps; returns (net, loss curve rows)."""
    ss = np.random.SeedSequence(config.seed)
    init_seed, batch_seed = ss.spawn(2)
    net = StateGoalValueNet(
        dataset.state_dim,
        hidden=config.hidden,
        seed=init_seed.generate_state(1)[0],
    )
    rng = np.random.default_rng(batch_seed)
    opt = Adam(net.params(), lr=config.lr)
    guard = _DivergenceGuard()
    curve = []
    for step in range(1, config.steps + 1):
        batch = datagen.sample_value_batch(dataset, config.gamma, config.batch_size, rng)
        loss = value_loss(net, batch, config.tau, config.gamma)
        opt.zero_grad()
        loss.backward()
        opt.step()
        polyak_update(net.target_params(), net.params(), config.polyak)
        lval = loss.item()
        guard.push(lval)
        if step % config.log_every == 0 or step == config.steps:
            curve.append((step, lval))
            if callback is not None:
                callback(step, lval)
    return net, curve


def advantage(net, s, g_sub, g):
    """Simplified advantage V(g_sub, g) - V(s, g); g_sub sits in the state slot."""
    return net.value(g_sub, g) - net.value(s, g)


def full_advantage(net, states_slice, g, gamma, same_tol=0.5):
    """Unsimplified estimate over one in-trajectory slice s_t..s_{t+k}.

    gamma^k * V(s_{t+k}, g) + sum of {0,-1} rewards over the first k states
    minus V(s_t, g). Provided to validate the simplification empirically.
    """
    states = np.asarray(states_slice, np.float32)
    k = states.shape[0] - 1
    g = np.asarray(g, np.float32)
    if k == 0:
        return 0.0
    v_end = float(net.value(states[-1], g)[0])
    v_start = float(net.value(states[0], g)[0])
    dists = np.linalg.norm(states[:k, :2] - g[None, :2], axis=1)
    rewards = np.where(dists <= same_tol, 0.0, -1.0)
    return float(gamma**k * v_end + rewards.sum() - v_start)
