"""Maze layouts: wall grids with named start/goal cells.

Text format, one row per line: '#' wall, '.' open, 'S' start, 'G' goal.
Loaded layouts are validated: rectangular, fully walled border, at least
one start and one goal, and every open cell reachable from every start.
"""

from collections import deque
from dataclasses import dataclass, field
from importlib import resources

import numpy as np


class LayoutError(Exception):
    pass


BUILTIN_LAYOUTS = ("umaze", "medium", "large", "ultra", "open5")

# per-layout episode step limits (PointMaze); GridMaze uses half
STEP_LIMITS = {"umaze": 200, "medium": 200, "large": 500, "ultra": 800, "open5": 200}


@dataclass
class MazeLayout:
    name: str
    walls: np.ndarray  # bool (rows, cols), True = wall
    starts: list = field(default_factory=list)  # [(row, col)]
    goals: list = field(default_factory=list)
    cell_size: float = 1.0

    @property
    def rows(self):
        return self.walls.shape[0]

    @property
    def cols(self):
        return self.walls.shape[1]

    def is_wall(self, row, col):
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            return True
        return bool(self.walls[row, col])

    def open_cells(self):
        rs, cs = np.nonzero(~self.walls)
        return list(zip(rs.tolist(), cs.tolist()))

    def cell_center(self, cell):
        """World (x, y) of a (row, col) cell centre."""
        r, c = cell
        return np.array([(c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size], np.float32)

    def cell_of(self, xy):
        """(row, col) containing the world point (x, y)."""
        x, y = float(xy[0]), float(xy[1])
        return int(np.floor(y / self.cell_size)), int(np.floor(x / self.cell_size))

    def world_extent(self):
        """(width, height) in world units."""
        return self.cols * self.cell_size, self.rows * self.cell_size

    def step_limit(self):
        return STEP_LIMITS.get(self.name, 200)


def parse_layout(text, name="custom", cell_size=1.0):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LayoutError("empty layout")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise LayoutError("ragged layout: all rows must have equal length")
    rows, cols = len(lines), width
    walls = np.zeros((rows, cols), dtype=bool)
    starts, goals = [], []
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            if ch == "#":
                walls[r, c] = True
            elif ch == ".":
                pass
            elif ch == "S":
                starts.append((r, c))
            elif ch == "G":
                goals.append((r, c))
            else:
                raise LayoutError(f"unknown cell character {ch!r} at row {r}, col {c}")
    layout = MazeLayout(name=name, walls=walls, starts=starts, goals=goals, cell_size=cell_size)
    validate_layout(layout)
    return layout


def validate_layout(layout):
    walls = layout.walls
    if not (walls[0].all() and walls[-1].all() and walls[:, 0].all() and walls[:, -1].all()):
        raise LayoutError("layout border must be fully walled")
    if not layout.starts:
        raise LayoutError("layout needs at least one start cell")
    if not layout.goals:
        raise LayoutError("layout needs at least one goal cell")
    open_count = int((~walls).sum())
    dist = distance_field(layout, layout.starts[0])
    if int((dist >= 0).sum()) != open_count:
        raise LayoutError("every open cell must be reachable from the start")
    for s in layout.starts[1:]:
        if dist[s] < 0:
            raise LayoutError("start cells must be mutually reachable")


def load_layout(name_or_path, cell_size=1.0):
    """Load a built-in layout by name, or any layout file by path."""
    name = str(name_or_path)
    if name in BUILTIN_LAYOUTS:
        text = (
            resources.files("egrpo.envs").joinpath(f"layouts/{name}.txt").read_text()
        )
        return parse_layout(text, name=name, cell_size=cell_size)
    try:
        with open(name_or_path) as f:
            text = f.read()
    except OSError as e:
        raise LayoutError(f"cannot load layout {name_or_path!r}: {e}") from e
    stem = name.rsplit("/", 1)[-1].removesuffix(".txt")
    return parse_layout(text, name=stem, cell_size=cell_size)


def distance_field(layout, cell):
    """BFS distances from `cell` over the 4-neighbour open-cell graph (-1 unreachable)."""
    walls = layout.walls
    dist = np.full(walls.shape, -1, dtype=np.int64)
    r0, c0 = cell
    if walls[r0, c0]:
        raise LayoutError(f"distance_field source {cell} is a wall")
    dist[r0, c0] = 0
    q = deque([(r0, c0)])
    while q:
        r, c = q.popleft()
        d = dist[r, c] + 1
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if not walls[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = d
                q.append((nr, nc))
    return dist


def shortest_path_distance(layout, cell_a, cell_b):
    """BFS steps between two open cells; raises if unreachable."""
    if layout.walls[cell_a] or layout.walls[cell_b]:
        raise LayoutError("shortest_path_distance endpoints must be open cells")
    d = distance_field(layout, cell_a)[cell_b]
    if d < 0:
        raise LayoutError(f"cells {cell_a} and {cell_b} are not connected")
    return int(d)


def shortest_path_cells(layout, cell_a, cell_b):
    """One BFS-optimal cell path from a to b, inclusive."""
    dist = distance_field(layout, cell_b)
    if dist[cell_a] < 0:
        raise LayoutError(f"cells {cell_a} and {cell_b} are not connected")
    path = [cell_a]
    r, c = cell_a
    while (r, c) != cell_b:
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if not layout.walls[nr, nc] and dist[nr, nc] == dist[r, c] - 1:
                r, c = nr, nc
                break
        path.append((r, c))
    return path
