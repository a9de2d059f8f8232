"""Non-expert, action-free observation datasets.

Generation: a noisy waypoint follower rolls out goal-directed but
suboptimal trajectories between random (or fixed) start/goal cells; only
states are stored. Corruption operators reproduce the robustness
protocols: keep a fraction of trajectories, cut a spatial region, or chop
each trajectory into contiguous segments.

Samplers produce the two pretraining batch types. Value batches relabel
goals as random dataset states / future states (geometric offsets) /
the current state with probabilities 0.3 / 0.5 / 0.2 and attach the
{0, -1} reward. Subgoal batches pair a state with its k-step-ahead
trajectory state, with goals from the future (p=0.7) or anywhere (p=0.3).
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .envs import GOAL_TOL, GridMaze, PointMaze, distance_field, load_layout, shortest_path_distance

DS_MAGIC = b"EGRPO-DS"
DS_VERSION = 1

REGIONS = ("begin", "medium", "goal")


class DatasetError(Exception):
    pass


@dataclass
class TrajectoryDataset:
    trajectories: list  # list of (L_i, d) float32 arrays, L_i >= 2
    state_dim: int
    layout_name: str
    meta: dict = field(default_factory=dict)  # env_kind, noise_level, seed, corruptions

    def __post_init__(self):
        if not self.trajectories:
            raise DatasetError("dataset must contain at least one trajectory")
        for tr in self.trajectories:
            if tr.ndim != 2 or tr.shape[1] != self.state_dim:
                raise DatasetError("trajectory state dimension mismatch")
            if tr.shape[0] < 2:
                raise DatasetError("every trajectory needs length >= 2")
        self._index = None

    @property
    def n_trajectories(self):
        return len(self.trajectories)

    @property
    def n_states(self):
        return sum(t.shape[0] for t in self.trajectories)

    def cell_size(self):
        return float(self.meta.get("cell_size", 1.0))

    def env_kind(self):
        return self.meta.get("env_kind", "point" if self.state_dim == 4 else "grid")

    def index(self):
        """Flat views for vectorized sampling (built once, immutable)."""
        if self._index is None:
            lens = np.array([t.shape[0] for t in self.trajectories], np.int64)
            offsets = np.concatenate([[0], np.cumsum(lens)])
            states = np.concatenate(self.trajectories, axis=0).astype(np.float32)
            traj_id = np.repeat(np.arange(len(lens)), lens)
            t_in_traj = np.arange(states.shape[0]) - offsets[traj_id]
            trans_idx = np.nonzero(t_in_traj < lens[traj_id] - 1)[0]
            self._index = dict(
                lens=lens, offsets=offsets, states=states,
                traj_id=traj_id, t_in_traj=t_in_traj, trans_idx=trans_idx,
            )
        return self._index

    def same_state_tol(self):
        """Radius for the 'state equals goal' test of the {0,-1} reward."""
        if self.env_kind() == "grid":
            return 0.5 * self.cell_size()  # states are cell centres: same cell
        return GOAL_TOL * self.cell_size()

    def with_trajectories(self, trajectories, corruption):
        meta = dict(self.meta)
        meta["corruptions"] = list(meta.get("corruptions", [])) + [corruption]
        return TrajectoryDataset(
            trajectories=trajectories,
            state_dim=self.state_dim,
            layout_name=self.layout_name,
            meta=meta,
        )


@dataclass
class ValueBatch:
    s: np.ndarray       # (B, d)
    s2: np.ndarray      # (B, d) successor in the source trajectory
    g: np.ndarray       # (B, 2) goal positions
    r: np.ndarray       # (B,) in {0, -1}
    source: np.ndarray  # (B,) 0=random 1=future 2=current
    idx: np.ndarray     # (B,) flat index of s (adjacency check support)


@dataclass
class SubgoalBatch:
    s: np.ndarray       # (B, d)
    g_sub: np.ndarray   # (B, d) target subgoal states
    g: np.ndarray       # (B, 2) goal positions
    source: np.ndarray  # (B,) 1=future 0=random


def generate_nonexpert(layout, n_traj, noise_level, seed, env_kind="point",
                       length_cap=None, mode="diverse"):
    """Roll out noisy waypoint-follower trajectories; states only.

    With probability noise_level each step takes a uniform random action
    instead of the scripted one. mode='diverse' draws random start/goal
    cells per trajectory, 'play' uses the layout's fixed start/goal sets.
    """
    if not 0.0 <= noise_level <= 1.0:
        raise DatasetError("noise_level must be in [0, 1]")
    if n_traj < 1:
        raise DatasetError("n_traj must be positive")
    if isinstance(layout, str):
        layout = load_layout(layout)
    rng = np.random.default_rng(seed)
    env_mode = "diverse" if mode == "diverse" else "fixed"
    if env_kind == "point":
        env = PointMaze(layout, mode=env_mode, step_limit=10**9)
    elif env_kind == "grid":
        env = GridMaze(layout, mode=env_mode, step_limit=10**9)
    else:
        raise DatasetError(f"unknown env kind {env_kind!r}")
    cap = length_cap if length_cap is not None else layout.step_limit()

    trajectories = []
    for _ in range(n_traj):
        obs, goal = env.reset(rng)
        dist = distance_field(layout, layout.cell_of(goal))
        states = [obs]
        for _ in range(cap):
            if rng.random() < noise_level:
                a = rng.uniform(-1.0, 1.0, 2)
            else:
                a = _scripted_action(env, layout, dist, obs, goal, rng)
            tr = env.step(a)
            obs = tr.s2
            states.append(obs)
            if tr.r == 1.0:
                break
        if len(states) >= 2:
            trajectories.append(np.stack(states).astype(np.float32))
    return TrajectoryDataset(
        trajectories=trajectories,
        state_dim=env.obs_dim,
        layout_name=layout.name,
        meta=dict(
            env_kind=env_kind, noise_level=noise_level, seed=seed,
            mode=mode, cell_size=layout.cell_size, corruptions=[],
        ),
    )


def _scripted_action(env, layout, dist, obs, goal, rng):
    """Greedy BFS descent toward the goal; P-D control for the point mass."""
    cell = layout.cell_of(obs[:2])
    if dist[cell] == 0:
        target = np.asarray(goal, np.float32)
    else:
        r, c = cell
        best, best_d = None, dist[cell]
        nbrs = [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)]
        rng.shuffle(nbrs)
        for nb in nbrs:
            if not layout.is_wall(*nb) and 0 <= dist[nb] < best_d:
                best, best_d = nb, dist[nb]
        if best is None:
            return rng.uniform(-1.0, 1.0, 2)
        target = layout.cell_center(best)
    if isinstance(env, GridMaze):
        d = target - obs[:2]
        return np.clip(d, -1.0, 1.0)
    pos, vel = obs[:2], obs[2:]
    return np.clip(1.2 * (target - pos) - 1.6 * vel, -1.0, 1.0)


def corrupt_limit(dataset, fraction, seed=0):
    """Keep floor(fraction * n) uniformly chosen trajectories."""
    if not 0.0 < fraction <= 1.0:
        raise DatasetError("fraction must be in (0, 1]")
    n = dataset.n_trajectories
    keep = int(np.floor(fraction * n))
    if keep < 1:
        raise DatasetError("corrupt_limit would remove every trajectory")
    idx = np.sort(np.random.default_rng(seed).choice(n, size=keep, replace=False))
    kept = [dataset.trajectories[i].copy() for i in idx]
    return dataset.with_trajectories(kept, dict(op="limit", fraction=fraction, seed=seed))


def region_of_cells(layout):
    """Cell regions 0=begin 1=medium 2=goal by start-distance terciles.

    Thresholds at 1/3 and 2/3 of d(start, goal); cells farther than the
    goal count as goal region.
    """
    dist = distance_field(layout, layout.starts[0])
    d_goal = shortest_path_distance(layout, layout.starts[0], layout.goals[0])
    region = np.full(layout.walls.shape, -1, np.int64)
    open_mask = ~layout.walls
    region[open_mask & (dist <= d_goal / 3.0)] = 0
    region[open_mask & (dist > d_goal / 3.0) & (dist <= 2.0 * d_goal / 3.0)] = 1
    region[open_mask & (dist > 2.0 * d_goal / 3.0)] = 2
    return region


def corrupt_coverage(dataset, region, layout=None):
    """Remove every state inside the named region; split survivors."""
    rname = str(region).lower()
    if rname not in REGIONS:
        raise DatasetError(f"region must be one of {REGIONS}, got {region!r}")
    if layout is None:
        layout = load_layout(dataset.layout_name)
    rid = REGIONS.index(rname)
    regions = region_of_cells(layout)
    cs = layout.cell_size
    out = []
    for tr in dataset.trajectories:
        rows = np.floor(tr[:, 1] / cs).astype(np.int64)
        cols = np.floor(tr[:, 0] / cs).astype(np.int64)
        drop = regions[rows, cols] == rid
        for seg in _split_on_mask(tr, drop):
            out.append(seg)
    if not out:
        raise DatasetError("corrupt_coverage removed all data")
    return dataset.with_trajectories(out, dict(op="coverage", region=rname))


def _split_on_mask(tr, drop):
    segs = []
    start = None
    for i, d in enumerate(drop):
        if d:
            if start is not None and i - start >= 2:
                segs.append(tr[start:i].copy())
            start = None
        elif start is None:
            start = i
    if start is not None and tr.shape[0] - start >= 2:
        segs.append(tr[start:].copy())
    return segs


def corrupt_segment(dataset, divisions):
    """Split each trajectory into `divisions` near-equal contiguous segments."""
    if divisions < 2:
        raise DatasetError("divisions must be >= 2")
    out = []
    for tr in dataset.trajectories:
        n = tr.shape[0]
        base, rem = divmod(n, divisions)
        if base < 2:
            raise DatasetError(
                f"trajectory of length {n} cannot be split into {divisions} segments of >= 2"
            )
        start = 0
        for i in range(divisions):
            size = base + (1 if i < rem else 0)
            out.append(tr[start : start + size].copy())
            start += size
    return dataset.with_trajectories(out, dict(op="segment", divisions=divisions))


def sample_value_batch(dataset, gamma, batch_size, rng, goal_probs=(0.3, 0.5, 0.2)):
    """Value-training batch: adjacent (s, s') plus relabeled goal and {0,-1} reward."""
    if not 0.0 < gamma < 1.0:
        raise DatasetError("gamma must be in (0, 1)")
    ix = dataset.index()
    states, offsets = ix["states"], ix["offsets"]
    tid, tloc, lens = ix["traj_id"], ix["t_in_traj"], ix["lens"]
    flat = ix["trans_idx"][rng.integers(len(ix["trans_idx"]), size=batch_size)]

    u = rng.random(batch_size)
    p_random, p_future = goal_probs[0], goal_probs[1]
    source = np.full(batch_size, 2, np.uint8)  # current
    source[u < p_random] = 0                   # random
    source[(u >= p_random) & (u < p_random + p_future)] = 1  # future

    g_idx = flat.copy()
    rnd = source == 0
    g_idx[rnd] = rng.integers(len(states), size=int(rnd.sum()))
    fut = source == 1
    if fut.any():
        offs = rng.geometric(1.0 - gamma, size=int(fut.sum()))
        t_last = lens[tid[flat[fut]]] - 1
        t_g = np.minimum(tloc[flat[fut]] + offs, t_last)
        g_idx[fut] = offsets[tid[flat[fut]]] + t_g

    s = states[flat]
    s2 = states[flat + 1]
    g = states[g_idx][:, :2].copy()
    tol = dataset.same_state_tol()
    same = np.linalg.norm(s[:, :2] - g, axis=1) <= tol
    r = np.where(same, 0.0, -1.0).astype(np.float32)
    return ValueBatch(s=s, s2=s2, g=g, r=r, source=source, idx=flat)


def sample_subgoal_batch(dataset, k, batch_size, rng, future_prob=0.7):
    """Subgoal-training batch: (s, g_sub at offset min(k, ...), goal)."""
    if k < 1:
        raise DatasetError("k must be >= 1")
    ix = dataset.index()
    states, offsets = ix["states"], ix["offsets"]
    tid, tloc, lens = ix["traj_id"], ix["t_in_traj"], ix["lens"]
    flat = ix["trans_idx"][rng.integers(len(ix["trans_idx"]), size=batch_size)]
    t = tloc[flat]
    t_last = lens[tid[flat]] - 1

    fut = rng.random(batch_size) < future_prob
    source = fut.astype(np.uint8)
    # future branch: goal uniform among strictly-later states of the same trajectory
    t_g = t + 1 + np.floor(rng.random(batch_size) * (t_last - t)).astype(np.int64)
    g_idx = offsets[tid[flat]] + t_g
    # random branch: goal uniform over the dataset; subgoal capped at the end
    rnd_idx = rng.integers(len(states), size=batch_size)
    g_idx = np.where(fut, g_idx, rnd_idx)
    sub_t = np.where(fut, np.minimum(t + k, t_g), np.minimum(t + k, t_last))
    sub_idx = offsets[tid[flat]] + sub_t

    return SubgoalBatch(
        s=states[flat],
        g_sub=states[sub_idx],
        g=states[g_idx][:, :2].copy(),
        source=source,
    )


def save_dataset(dataset, path):
    """Binary dataset file; see DS_MAGIC layout in the module for framing."""
    with open(path, "wb") as f:
        f.write(DS_MAGIC)
        f.write(struct.pack("<III", DS_VERSION, dataset.state_dim, dataset.n_trajectories))
        for tr in dataset.trajectories:
            f.write(struct.pack("<I", tr.shape[0]))
            f.write(np.ascontiguousarray(tr, dtype="<f4").tobytes())
        meta = dict(dataset.meta)
        meta["layout_name"] = dataset.layout_name
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


def _read_exact(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise DatasetError("truncated dataset file")
    return buf


def load_dataset(path):
    with open(path, "rb") as f:
        if _read_exact(f, len(DS_MAGIC)) != DS_MAGIC:
            raise DatasetError("bad magic: not a trajectory dataset")
        version, dim, count = struct.unpack("<III", _read_exact(f, 12))
        if version != DS_VERSION:
            raise DatasetError(f"unsupported dataset version {version}")
        trajectories = []
        for _ in range(count):
            (length,) = struct.unpack("<I", _read_exact(f, 4))
            data = np.frombuffer(_read_exact(f, 4 * length * dim), dtype="<f4")
            trajectories.append(data.reshape(length, dim).copy())
        tail = f.read(4)
        meta = {}
        if len(tail) == 4:
            (blob_len,) = struct.unpack("<I", tail)
            meta = json.loads(_read_exact(f, blob_len).decode("utf-8"))
        layout_name = meta.pop("layout_name", "custom")
        return TrajectoryDataset(
            trajectories=trajectories, state_dim=dim, layout_name=layout_name, meta=meta
        )
