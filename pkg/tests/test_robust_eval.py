import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from obsrobust import errors
from obsrobust.benchmarks import builtin
from obsrobust.chains import SparseChain, build_tsimc, build_tsmc, repair_unreachable
from obsrobust.robust_eval import evaluate_kernel, ipe_min, robust_backup_min, vi_point
from obsrobust.validation import brute_force_min

from conftest import random_instance


def test_backup_hand_example():
    p, v = robust_backup_min([0.4, 0.4], [0.6, 0.6], [0.0, 10.0])
    assert np.allclose(p, [0.6, 0.4]) and v == pytest.approx(4.0)


def test_backup_infeasible():
    with pytest.raises(errors.InfeasibleRow):
        robust_backup_min([0.6, 0.6], [0.7, 0.7], [0, 1])


@st.composite
def interval_rows(draw):
    k = draw(st.integers(1, 6))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    p = rng.dirichlet(np.ones(k))
    lo = np.clip(p - rng.random(k) * 0.3, 0, 1)
    hi = np.clip(p + rng.random(k) * 0.3, 0, 1)
    return lo, hi, rng.normal(size=k) * 10


@given(interval_rows())
def test_backup_matches_linear_program(row):
    lo, hi, v = row
    p, val = robust_backup_min(lo, hi, v)
    assert np.all(p >= lo - 1e-12) and np.all(p <= hi + 1e-12) and p.sum() == pytest.approx(1.0)
    lp = linprog(v, A_eq=np.ones((1, len(v))), b_eq=[1.0], bounds=list(zip(lo, hi)), method="highs")
    assert val == pytest.approx(lp.fun, abs=1e-8)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([None, 3]))
def test_zero_radius_is_point_value(seed, horizon):
    m, pi = random_instance(np.random.default_rng(seed), horizon=horizon, discount=0.85)
    c = build_tsmc(m, pi)
    table, _ = ipe_min(repair_unreachable(build_tsimc(c, 0.0)), horizon, 1e-10)
    assert table.initial == pytest.approx(vi_point(c, horizon, 1e-10).initial, abs=1e-7)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([None, 4]))
def test_monotone_in_delta(seed, horizon):
    rng = np.random.default_rng(seed)
    m, pi = random_instance(rng, horizon=horizon, discount=0.85)
    c = build_tsmc(m, pi)
    vals = [ipe_min(repair_unreachable(build_tsimc(c, d)), horizon, 1e-10)[0].initial
            for d in np.linspace(0, 1, 6)]
    assert np.all(np.diff(vals) <= 1e-7)


def _hand_chain():
    # q_I -> state 1; state 1 has one interval row over states 1, 2, 3
    lower = np.array([1.0, 0.1, 0.2, 0.3, 1.0, 1.0])
    upper = np.array([1.0, 0.5, 0.6, 0.5, 1.0, 1.0])
    probs = np.array([1.0, 0.3, 0.4, 0.3, 1.0, 1.0])
    return SparseChain(labels=["q_I", 1, 2, 3], indptr=np.array([0, 1, 4, 5, 6]),
                       indices=np.array([1, 1, 2, 3, 2, 3]), probs=probs,
                       reward=np.array([0.0, 1.0, 3.0, -2.0]), discount=np.array([1.0, 0.9, 0.9, 0.9]),
                       model_discount=0.9, lower=lower, upper=upper)


@pytest.mark.parametrize("h", [1, 2, 3, 4])
def test_three_state_chain_against_vertices(h):
    c = _hand_chain()
    assert ipe_min(c, h)[0].initial == pytest.approx(brute_force_min(c, h), abs=1e-12)


def test_toy_rover_nonsticky_worst_case():
    m, pi = builtin("toy-rover")
    m = m.replace(discount=1.0)
    c = build_tsmc(m, pi)
    ci = repair_unreachable(build_tsimc(c, 0.1, 0.01))
    table, w = ipe_min(ci, 5)
    assert table.initial == pytest.approx(0.8466, abs=1e-3)
    la = m.state_index("large-angular")
    src, dst = c.index(la, 2, 1), c.index(la, 6, 0)
    a, b = c.indptr[src], c.indptr[src + 1]
    j = a + int(np.flatnonzero(c.indices[a:b] == dst)[0])
    # sweeps run N1 move, N1 sense, N3 move, N3 sense
    assert w.at(3)[j] == pytest.approx(0.99)
    assert evaluate_kernel(ci, w, 5).initial == pytest.approx(table.initial, abs=1e-12)


def test_infinite_horizon_witness_reproduces_value():
    m, pi = builtin("cancer")
    ci = repair_unreachable(build_tsimc(build_tsmc(m, pi), 0.05))
    table, w = ipe_min(ci, None, 1e-9)
    assert w.stationary
    assert evaluate_kernel(ci, w, None).initial == pytest.approx(table.initial, abs=1e-5)
    vi, _ = ipe_min(ci, None, 1e-9, method="vi", max_iter=10 ** 6)
    assert vi.initial == pytest.approx(table.initial, abs=1e-5)


def test_nonconvergent_infinite_horizon():
    m, pi = builtin("toy-rover")
    with pytest.raises(errors.NonContractive):
        ipe_min(build_tsimc(build_tsmc(m.replace(discount=1.0), pi), 0.1), None)
