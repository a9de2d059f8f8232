"""Goal-conditioned maze environments.

GridMaze: discrete 4-neighbour moves on the cell graph, driven by the same
[-1,1]^2 action interface as PointMaze (dominant axis + sign picks the
move, magnitudes below 0.5 hold still).

PointMaze: a point mass with velocity damping 0.9/step, acceleration
0.25 cell/step^2 and per-axis speed cap 1 cell/step, so one cell of
progress takes a few steps and medium-maze episodes run 50-150 steps.
Wall contact is resolved per axis: the blocked axis keeps its position
and zeroes its velocity.

Observations are float32: GridMaze [x, y] (cell centre), PointMaze
[x, y, vx, vy]. Goals are world (x, y); the sparse reward is 1 exactly
when the goal is reached, and episodes end on success or step limit.
"""

from dataclasses import dataclass

import numpy as np

GOAL_TOL = 0.5  # PointMaze goal radius, in cells

DAMPING = 0.9
ACCEL = 0.25
VMAX = 1.0


@dataclass
class EnvState:
    position: np.ndarray  # world (x, y)
    velocity: np.ndarray  # (2,) for PointMaze, (0,) for GridMaze
    step: int = 0


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s2: np.ndarray
    r: float
    done: bool
    goal: np.ndarray


class _MazeBase:
    obs_dim = 2

    def __init__(self, layout, mode="fixed", step_limit=None):
        if mode not in ("fixed", "diverse"):
            raise ValueError(f"mode must be fixed|diverse, got {mode!r}")
        self.layout = layout
        self.mode = mode
        self.step_limit = step_limit if step_limit is not None else layout.step_limit()
        self.state = None
        self.goal = None

    def reset(self, rng, mode=None):
        """Start a new episode; returns (obs, goal). rng drives diverse draws."""
        mode = mode or self.mode
        lay = self.layout
        if mode == "fixed":
            start, goal_cell = lay.starts[0], lay.goals[0]
        else:
            cells = lay.open_cells()
            start = cells[rng.integers(len(cells))]
            others = [c for c in cells if c != start]
            goal_cell = others[rng.integers(len(others))]
        self.goal = lay.cell_center(goal_cell)
        self.state = self._initial_state(start)
        return self.observe(), self.goal.copy()

    def observe(self):
        raise NotImplementedError

    def goal_reached(self, obs, goal):
        raise NotImplementedError

    def _finish(self, s, a, s2):
        st = self.state
        reached = self.goal_reached(s2, self.goal)
        r = 1.0 if reached else 0.0
        done = reached or st.step >= self.step_limit
        return Transition(s=s, a=a, s2=s2, r=r, done=done, goal=self.goal.copy())


class GridMaze(_MazeBase):
    """Discrete maze: one cell per step, blocked by walls."""

    obs_dim = 2

    def __init__(self, layout, mode="fixed", step_limit=None):
        super().__init__(layout, mode, step_limit)
        if self.step_limit is None:
            self.step_limit = layout.step_limit()

    def _initial_state(self, cell):
        return EnvState(
            position=self.layout.cell_center(cell),
            velocity=np.zeros(0, np.float32),
            step=0,
        )

    def observe(self):
        return self.state.position.copy()

    def goal_reached(self, obs, goal):
        return self.layout.cell_of(obs[:2]) == self.layout.cell_of(goal)

    def step(self, action):
        a = np.clip(np.asarray(action, np.float32), -1.0, 1.0)
        s = self.observe()
        r0, c0 = self.layout.cell_of(self.state.position)
        dx, dy = float(a[0]), float(a[1])
        nr, nc = r0, c0
        if max(abs(dx), abs(dy)) >= 0.5:
            if abs(dx) >= abs(dy):
                nc = c0 + (1 if dx > 0 else -1)
            else:
                nr = r0 + (1 if dy > 0 else -1)
            if self.layout.is_wall(nr, nc):
                nr, nc = r0, c0
        self.state.position = self.layout.cell_center((nr, nc))
        self.state.step += 1
        return self._finish(s, a, self.observe())


class PointMaze(_MazeBase):
    """Continuous maze: damped point mass with per-axis wall blocking."""

    obs_dim = 4

    def _initial_state(self, cell):
        return EnvState(
            position=self.layout.cell_center(cell),
            velocity=np.zeros(2, np.float32),
            step=0,
        )

    def observe(self):
        return np.concatenate([self.state.position, self.state.velocity]).astype(np.float32)

    def goal_reached(self, obs, goal):
        return float(np.linalg.norm(np.asarray(obs)[:2] - np.asarray(goal)[:2])) <= GOAL_TOL * self.layout.cell_size

    def step(self, action):
        a = np.clip(np.asarray(action, np.float32), -1.0, 1.0)
        s = self.observe()
        st = self.state
        cs = self.layout.cell_size
        v = DAMPING * st.velocity + ACCEL * cs * a
        v = np.clip(v, -VMAX * cs, VMAX * cs)
        x, y = float(st.position[0]), float(st.position[1])
        # axis-separated blocking: speed cap <= 1 cell/step per axis, so the
        # destination cell check cannot tunnel through a wall
        nx = x + float(v[0])
        if self.layout.is_wall(*self.layout.cell_of((nx, y))):
            nx, v[0] = x, 0.0
        ny = y + float(v[1])
        if self.layout.is_wall(*self.layout.cell_of((nx, ny))):
            ny, v[1] = y, 0.0
        st.position = np.array([nx, ny], np.float32)
        st.velocity = v.astype(np.float32)
        st.step += 1
        return self._finish(s, a, self.observe())


def make_env(kind, layout, mode="fixed", step_limit=None):
    if kind == "grid":
        return GridMaze(layout, mode, step_limit)
    if kind == "point":
        return PointMaze(layout, mode, step_limit)
    raise ValueError(f"unknown env kind {kind!r}")


def goal_state(env, goal):
    """Embed a world-coordinate goal into the observation space (zero velocity)."""
    g = np.asarray(goal, np.float32)[:2]
    if env.obs_dim == 2:
        return g.copy()
    return np.concatenate([g, np.zeros(2, np.float32)])
