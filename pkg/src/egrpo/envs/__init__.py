"""Maze environments: layouts, discrete GridMaze, continuous PointMaze."""

from .layout import (
    BUILTIN_LAYOUTS,
    LayoutError,
    MazeLayout,
    distance_field,
    load_layout,
    parse_layout,
    shortest_path_cells,
    shortest_path_distance,
)
from .maze import (
    GOAL_TOL,
    EnvState,
    GridMaze,
    PointMaze,
    Transition,
    goal_state,
    make_env,
)
