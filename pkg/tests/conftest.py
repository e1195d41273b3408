import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from obsrobust.benchmarks import make_fsc
from obsrobust.pomdp import Fsc, Pomdp

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def _simplex(rng, k, sparsity=0.0):
    p = rng.random(k) * (rng.random(k) >= sparsity)
    if p.sum() == 0:
        p[rng.integers(k)] = 1.0
    return p / p.sum()


def random_instance(rng, n_states=3, n_actions=2, n_obs=2, n_nodes=2, discount=0.9, horizon=3,
                    sparsity=0.3, injective=False):
    """Random POMDP with a complete random controller.

    injective=True gives every node distinct successors per observation, so
    the node reached is a function of the full observation history.
    """
    S = tuple(f"s{i}" for i in range(n_states))
    A = tuple(f"a{i}" for i in range(n_actions))
    O = tuple(f"o{i}" for i in range(n_obs))
    T = np.array([[_simplex(rng, n_states, sparsity) for _ in A] for _ in S])
    Z = np.array([[_simplex(rng, n_obs, sparsity) for _ in S] for _ in A])
    R = rng.integers(-5, 6, size=(n_states, n_actions)).astype(float)
    b0 = _simplex(rng, n_states, sparsity)
    m = Pomdp(S, A, O, T, Z, R, discount, b0, horizon=horizon)
    if injective:
        return m, tree_fsc(m, horizon, rng)
    nxt = rng.integers(n_nodes, size=(n_nodes, n_obs))
    pi = Fsc(tuple(f"n{i}" for i in range(n_nodes)), 0, rng.integers(n_actions, size=n_nodes), nxt)
    return m, pi


def tree_fsc(m, depth, rng):
    """Controller whose nodes are the observation histories up to depth."""
    nodes, frontier = [], [()]
    for d in range(depth + 1):
        nodes += frontier
        frontier = [h + (o,) for h in frontier for o in range(m.n_observations)] if d < depth else []
    ids = {h: i for i, h in enumerate(nodes)}
    rows = []
    for h in nodes:
        succ = {m.observations[o]: f"h{ids[h + (o,)] if h + (o,) in ids else ids[h]}"
                for o in range(m.n_observations)}
        rows.append((f"h{ids[h]}", m.actions[rng.integers(m.n_actions)], succ))
    return make_fsc(m, rows)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
