import numpy as np
import pytest
from hypothesis import given, strategies as st

from obsrobust import errors
from obsrobust.benchmarks import BENCHMARKS, builtin
from obsrobust.chains import (build_pmc, build_product_mc, build_tsimc, build_tsmc, instantiate,
                              pmc_probs, region_for, repair_unreachable)
from obsrobust.pomdp import Fsc, Pomdp, fsc_value
from obsrobust.robust_eval import vi_point

from conftest import random_instance


def test_toy_rover_sizes():
    m, pi = builtin("toy-rover")
    assert build_product_mc(m, pi).n == 36
    assert build_tsmc(m, pi).n == 71


def test_index_layout():
    m, pi = builtin("toy-rover")
    c, t = build_product_mc(m, pi), build_tsmc(m, pi)
    assert c.labels[c.index(3, 4)] == (3, 4) and c.index(3, 4) == 1 + 3 * 7 + 4
    assert t.labels[t.index(2, 5, 1)] == (2, 5, 1) and t.index(2, 5, 1) == 1 + 2 * (2 * 7 + 5) + 1
    assert c.discount[0] == 1.0 and c.reward[0] == 0.0


@pytest.mark.parametrize("name", BENCHMARKS)
def test_three_evaluators_agree(name):
    m, pi = builtin(name)
    h = m.horizon
    v, _ = fsc_value(m, pi, eps=1e-10)
    assert vi_point(build_product_mc(m, pi), h, 1e-10).initial == pytest.approx(v, rel=1e-7, abs=1e-7)
    assert vi_point(build_tsmc(m, pi), h, 1e-10).initial == pytest.approx(v, rel=1e-7, abs=1e-7)


def test_toy_rover_long_horizon():
    m, pi = builtin("toy-rover")
    v, _ = fsc_value(m, pi, 50)
    assert vi_point(build_tsmc(m, pi), 50).initial == pytest.approx(v, abs=1e-6)


@given(st.integers(0, 2 ** 32 - 1))
def test_tsmc_matches_fsc_value(seed):
    m, pi = random_instance(np.random.default_rng(seed), horizon=None, discount=0.8)
    v, _ = fsc_value(m, pi, eps=1e-10)
    assert vi_point(build_tsmc(m, pi), None, 1e-10).initial == pytest.approx(v, abs=1e-7)


def _entry(c, src, dst):
    a, b = c.indptr[src], c.indptr[src + 1]
    return a + int(np.flatnonzero(c.indices[a:b] == dst)[0])


def test_interval_clamps():
    m, pi = builtin("toy-rover")
    t = build_tsmc(m, pi)
    s = m.state_index("large-smooth")
    src = t.index(s, 0, 1)
    j_hi, j_lo = _entry(t, src, t.index(s, 1, 0)), _entry(t, src, t.index(s, 2, 0))
    ti = build_tsimc(t, 0.2, 0.0)
    assert (ti.lower[j_hi], ti.upper[j_hi]) == pytest.approx((0.79, 1.0))
    ti = build_tsimc(t, 0.1, 0.01)
    assert (ti.lower[j_lo], ti.upper[j_lo]) == pytest.approx((0.01, 0.11))
    # state-transition rows stay point intervals
    j = t.indptr[t.index(s, 0, 0)]
    assert ti.lower[j] == ti.upper[j] == t.probs[j]


def test_interval_rejects_bad_delta():
    m, pi = builtin("toy-rover")
    with pytest.raises(errors.InvalidQuery):
        build_tsimc(build_tsmc(m, pi), 1.5)


def test_parameter_count_and_regions():
    m, pi = builtin("toy-rover")
    c = build_pmc(m, pi)
    # sensing rows of measure-size and measure-texture in the four sand states, k = 2 each
    assert c.n_params == 8 and c.used.all()
    r = region_for(m, 0.1, 0.01)
    assert np.allclose(sorted(set(np.round(r.lower, 12))), [0.01, 0.89])
    assert np.allclose(sorted(set(np.round(r.upper, 12))), [0.11, 0.99])
    r = region_for(m, 1.0, 0.01)
    assert np.allclose(r.lower, 0.01) and np.allclose(r.upper, 0.99)


def test_instantiate_nominal_is_product_chain():
    m, pi = builtin("cancer")
    c = build_pmc(m, pi)
    assert np.allclose(pmc_probs(c, c.nominal), c.base.probs)
    inst = instantiate(c, c.nominal)
    assert vi_point(inst, None).initial == pytest.approx(fsc_value(m, pi, None)[0], abs=1e-5)


def test_instantiate_off_region_rejected():
    m, pi = builtin("toy-rover")
    c = build_pmc(m, pi)
    with pytest.raises(errors.InvalidDistribution):
        instantiate(c, np.full(c.n_params, 1.5))


def test_three_outcome_row_has_sum_constraint():
    m, pi = random_instance(np.random.default_rng(7), n_obs=3, sparsity=0.0)
    r = region_for(m, 0.2, 0.01)
    assert r.sums
    pts = np.random.default_rng(0).uniform(r.lower, r.upper, size=(200, r.dim))
    inside = [p for p in pts if r.contains(p)]
    c = build_pmc(m, pi)
    for p in inside:
        instantiate(c, p)


def _partial_model():
    T = np.zeros((2, 1, 2))
    T[0, 0, 1] = T[1, 0, 1] = 1.0
    Z = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    return Pomdp(("a", "b"), ("x",), ("o", "p"), T, Z, np.zeros((2, 1)), 0.9, [1.0, 0.0], horizon=3)


def test_repair_unreachable_rows():
    m = _partial_model()
    # n1 lacks an edge on p, n2 has no edges at all; neither is reachable from n0
    pi = Fsc(("n0", "n1", "n2"), 0, [0, 0, 0], [[0, 0], [1, -1], [-1, -1]])
    c = build_tsmc(m, pi)
    ci = repair_unreachable(build_tsimc(c, 0.1))
    sums = ci.row_sums()
    assert np.allclose(sums, 1.0)
    q = ci.index(1, 2, 1)
    a, b = ci.indptr[q], ci.indptr[q + 1]
    assert list(ci.indices[a:b]) == [q] and ci.lower[a] == ci.upper[a] == 1.0


def test_reachable_undefined_update_raises():
    m = _partial_model()
    pi = Fsc(("n0",), 0, [0], [[0, -1]])
    with pytest.raises(errors.UndefinedMemoryUpdate):
        build_tsmc(m, pi)
