"""Shared heavyweight fixtures: trained nets are expensive on one core, so
the tabular-oracle value net and its dataset are session-scoped."""

import numpy as np
import pytest

from egrpo import datagen, envs, value


@pytest.fixture(scope="session")
def open5_layout():
    return envs.load_layout("open5")


@pytest.fixture(scope="session")
def open5_dataset():
    return datagen.generate_nonexpert(
        "open5", n_traj=300, noise_level=0.3, seed=0, env_kind="grid", length_cap=60
    )


def train_open5_value(dataset, seed):
    cfg = value.ValueTrainConfig(steps=12000, hidden=(64, 64), batch_size=256, seed=seed)
    net, curve = value.train_value(dataset, cfg)
    return net, curve


@pytest.fixture(scope="session")
def open5_value_net(open5_dataset):
    net, _ = train_open5_value(open5_dataset, seed=1)
    return net


@pytest.fixture(scope="session")
def open5_all_pairs(open5_layout):
    """All (state-centre, goal-centre) pairs with BFS distances."""
    lay = open5_layout
    cells = lay.open_cells()
    centers = np.array([lay.cell_center(c) for c in cells], np.float32)
    n = len(cells)
    S = np.repeat(centers, n, axis=0)
    G = np.tile(centers, (n, 1))
    D = np.array(
        [envs.shortest_path_distance(lay, a, b) for a in cells for b in cells],
        np.float64,
    )
    return cells, centers, S, G, D
