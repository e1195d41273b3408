"""Acceptance criteria; each test records one PASS/FAIL line.

The lines are printed in the pytest terminal summary, or directly when this
file is run as a script.
"""
import time

import numpy as np
import pytest

from obsrobust import errors
from obsrobust.benchmarks import AC_POLICY1, AC_POLICY2, BENCHMARKS, builtin
from obsrobust.chains import build_pmc, build_tsimc, build_tsmc, region_for, repair_unreachable
from obsrobust.param_lifting import pla_min
from obsrobust.pomdp import fsc_value
from obsrobust.robust_eval import ipe_min, vi_point
from obsrobust.search import RobustnessQuery, analyze, mbs
from obsrobust.validation import (brute_force_min, empirical_eta, history_brute_force_min,
                                  monte_carlo, sample_extrema_ns, sample_extrema_sticky,
                                  simulate_chain, sweep, witness_value)

from conftest import random_instance

RESULTS = []


def record(name, ok, detail):
    RESULTS.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def _toy():
    m, pi = builtin("toy-rover")
    return m.replace(discount=1.0), pi


def test_c1_toy_rover_sticky():
    t = time.perf_counter()
    m, pi = _toy()
    c = build_pmc(m, pi)
    v, p = pla_min(c, region_for(m, 0.1, 0.01, c.params), 5)
    dt = time.perf_counter() - t
    # every sensing row moves 0.1 towards the wrong reading
    expect = c.nominal - 0.1 * np.sign(c.nominal - 0.5)
    ok = abs(v - 0.8521) <= 1e-3 and np.allclose(p, expect, atol=1e-9) and dt < 10
    record("1 toy rover sticky", ok, f"value {v:.4f}, argmin {np.round(p, 2).tolist()}, {dt:.2f}s")


def test_c2_toy_rover_nonsticky():
    m, pi = _toy()
    t = time.perf_counter()
    c = build_tsmc(m, pi)
    table, w = ipe_min(repair_unreachable(build_tsimc(c, 0.1, 0.01)), 5)
    dt = time.perf_counter() - t
    la = m.state_index("large-angular")
    src, dst = c.index(la, 2, 1), c.index(la, 6, 0)     # N3 senses texture, "true" leads to N7
    a, b = c.indptr[src], c.indptr[src + 1]
    j = a + int(np.flatnonzero(c.indices[a:b] == dst)[0])
    z = w.at(3)[j]
    ok = abs(table.initial - 0.8466) <= 1e-3 and abs(z - 0.99) < 1e-12 and dt < 1
    record("2 toy rover nonsticky", ok, f"value {table.initial:.4f}, Z(AN|N3) {z:.2f}, {dt:.3f}s")


def test_c3_toy_rover_deltas():
    m, pi = _toy()
    t = time.perf_counter()
    ns = analyze(RobustnessQuery(m, pi, "nonsticky", eta=0.1, eps_p=0.01, eps_mbs=1e-5))
    s = analyze(RobustnessQuery(m, pi, "sticky", eta=0.1, eps_p=0.01, eps_mbs=1e-5))
    dt = time.perf_counter() - t
    ok = (abs(ns.delta - 0.1006) <= 1e-3 and abs(s.delta - 0.1078) <= 1e-3
          and ns.delta <= s.delta and dt < 60)
    record("3 toy rover delta", ok, f"nonsticky {ns.delta:.4f}, sticky {s.delta:.4f}, {dt:.2f}s")


def test_c4_rover_navigation():
    m, pi = builtin("rover-nav")
    t = time.perf_counter()
    q = RobustnessQuery(m, pi, eta=0.2, eps_p=0.0, discount=1.0)
    r = analyze(q)
    c = build_tsmc(q.effective_model, pi)
    groups = {k: [i for i, l in enumerate(c.labels) if l != "q_I" and pi.nodes[l[1]].startswith(k)]
              for k in ("through", "around")}

    def freq(sand, path):
        start = c.index(m.state_index(f"{sand}@1,1"), pi.initial, 0)
        return simulate_chain(c, r.witness, 10_000, 100, seed=1, start=start, groups=groups)[path]

    smooth, angular = freq("large-smooth", "through"), freq("large-angular", "around")
    dt = time.perf_counter() - t
    ok = (abs(r.delta - 0.2) <= 5e-3 and abs(smooth - 0.6264) <= 0.02
          and abs(angular - 0.6320) <= 0.02 and dt < 60)
    record("4 rover navigation", ok, f"delta {r.delta:.4f}, through on large-smooth {smooth:.4f}, "
           f"around on large-angular {angular:.4f}, {dt:.2f}s")


def test_c5_cancer():
    m, pi = builtin("cancer")
    t = time.perf_counter()
    v0 = vi_point(build_tsmc(m, pi), None, 1e-10).initial
    q = RobustnessQuery(m, pi, delta_threshold=1.0, eps_mbs=1e-4)
    grid = np.linspace(2.5, 50.0, 20)
    deltas = [r.delta for r in sweep(q, grid)]
    dt = time.perf_counter() - t
    # the degradation at full deviation is where the curve reaches 1
    full = v0 - ipe_min(repair_unreachable(build_tsimc(build_tsmc(m, pi), 1.0)), None)[0].initial
    hit = grid[int(np.argmax(np.isclose(deltas, 1.0)))] if np.isclose(deltas, 1.0).any() else None
    ok = (abs(v0 - 98.53) <= 0.05 and abs(full - 48) <= 2 and hit is not None
          and all(d < 1 for g, d in zip(grid, deltas) if g < full)
          and np.all(np.diff(deltas) >= 0) and dt < 120)
    record("5 cancer", ok, f"nominal {v0:.4f}, delta reaches 1 at Delta {full:.2f}, "
           f"first grid point at 1: {hit}, sweep {dt:.1f}s")


def test_c6_part_qc():
    m, pi = builtin("part-qc-policy1")
    res = monte_carlo(m, pi, 10_000, seed=0)
    freq = res.state_action[m.state_index("failing"), m.action_index("accept")]
    grid = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    curves = {}
    for name, ac in (("part-qc-policy1", AC_POLICY1), ("part-qc-policy2", AC_POLICY2)):
        mm, pp = builtin(name)
        rs = sweep(RobustnessQuery(mm, pp, delta_threshold=1.0, eps_mbs=1e-4), grid)
        curves[name] = np.minimum(1 - ac + np.array([r.delta for r in rs]), 1.0)
    c1, c2 = curves["part-qc-policy1"], curves["part-qc-policy2"]
    ok = (abs(freq - 0.0099) <= 0.003 and c1[-1] == 1.0 and c2[-1] == 1.0
          and np.all(c2 >= c1) and np.all(np.diff(c1) >= 0) and np.all(np.diff(c2) >= 0))
    record("6 part QC", ok, f"failing accepted {freq:.4f}, policy 1 {np.round(c1, 3).tolist()}, "
           f"policy 2 {np.round(c2, 3).tolist()}")


def test_c7_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    worst, n = 0.0, 0
    while n < 200:
        h = int(rng.integers(1, 5))
        m, pi = random_instance(rng, n_states=3, n_obs=2, n_nodes=2, horizon=h,
                                discount=float(rng.uniform(0.5, 1.0)))
        ci = repair_unreachable(build_tsimc(build_tsmc(m, pi), float(rng.uniform(0, 1))))
        try:
            bf = brute_force_min(ci, h)
        except errors.TooLarge:
            continue
        worst = max(worst, abs(bf - ipe_min(ci, h)[0].initial))
        n += 1
    dt = time.perf_counter() - t
    record("7 brute force vs IPE", worst <= 1e-9 and dt < 60,
           f"{n} instances, max difference {worst:.2e}, {dt:.1f}s")


def test_c8a_monotone_in_delta():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(50):
        h = [None, 3, 4][int(rng.integers(3))]
        m, pi = random_instance(rng, n_states=int(rng.integers(2, 5)), n_obs=int(rng.integers(2, 4)),
                                n_nodes=int(rng.integers(1, 4)), horizon=h, discount=0.85)
        c = build_tsmc(m, pi)
        grid = np.sort(rng.uniform(0, 1, 6))
        vals = [ipe_min(repair_unreachable(build_tsimc(c, d)), h, 1e-10)[0].initial for d in grid]
        bad += int(np.any(np.diff(vals) > 1e-7))
    record("8a monotone worst case", bad == 0, f"{bad} of 50 triples increase with delta")


def test_c8b_ordering():
    rows, bad = [], 0
    t = time.perf_counter()
    for name in BENCHMARKS:
        m, pi = builtin(name)
        for eta in (0.05, 0.25, 0.45):
            ns = analyze(RobustnessQuery(m, pi, "nonsticky", eta=eta, eps_mbs=1e-3)).delta
            s = analyze(RobustnessQuery(m, pi, "sticky", eta=eta, eps_mbs=1e-3)).delta
            # both searches stop within eps_mbs of their own boundary
            bad += int(ns > s + 1e-3)
            rows.append(f"{name}@{eta} {ns:.3f}<={s:.3f}")
    dt = time.perf_counter() - t
    record("8b nonsticky <= sticky", bad == 0, f"{bad} violations in {len(rows)} ({dt:.0f}s)")


def test_c8c_sampler_dominance():
    m, pi = _toy()
    ci = repair_unreachable(build_tsimc(build_tsmc(m, pi), 0.1, 0.01))
    worst = ipe_min(ci, 5)[0].initial
    ns = min(vi_point(x, 5).initial for x in sample_extrema_ns(ci, 10_000, seed=0))
    c = build_pmc(m, pi)
    sticky, _ = pla_min(c, region_for(m, 0.1, 0.01, c.params), 5)
    s = min(fsc_value(x, pi, 5)[0] for x in sample_extrema_sticky(m, 0.1, 0.01, 10_000, seed=0))
    ok = ns >= worst - 1e-9 and s >= sticky - 1e-7 and s >= worst - 1e-9
    record("8c sampler dominance", ok, f"nonsticky samples {ns:.4f} >= {worst:.4f}, "
           f"sticky samples {s:.4f} >= {sticky:.4f}")


def test_c8d_mbs_convergence():
    rng = np.random.default_rng(5)
    eps, worst = 1e-7, 0.0
    for i in range(100):
        root = float(rng.uniform(0.01, 0.99))
        k = float(rng.uniform(0.5, 5))
        f = [lambda x: np.tanh(k * (x - root)),
             lambda x: (x - root) ** 3,
             lambda x: np.exp(k * x) - np.exp(k * root),
             lambda x: 1.0 + np.floor(10 * (x - root)) if x > root else -1.0][i % 4]
        worst = max(worst, abs(mbs(f, eps_mbs=eps) - root))
    record("8d bisection convergence", worst <= eps, f"max |delta* - delta| {worst:.2e}")


def test_c8e_history_equivalence():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(40):
        h = int(rng.integers(1, 4))
        m, pi = random_instance(rng, n_states=2, n_obs=2, n_nodes=4, horizon=h, injective=True)
        d = float(rng.uniform(0, 0.5))
        hist = history_brute_force_min(m, pi, d, 0.0, h)
        node = ipe_min(repair_unreachable(build_tsimc(build_tsmc(m, pi), d)), h)[0].initial
        worst = max(worst, abs(hist - node))
    record("8e history vs node adversary", worst <= 1e-9, f"max difference {worst:.2e}")


def test_c8f_tiger_self_consistency():
    m, pi = builtin("tiger")
    c = build_tsmc(m, pi)
    worst = 0.0
    for eta in np.round(np.arange(0.05, 0.86, 0.1), 2):
        r = analyze(RobustnessQuery(m, pi, eta=float(eta)))
        ci = repair_unreachable(build_tsimc(c, r.delta, 0.0))
        eta_s = empirical_eta(r.nominal_value, witness_value(ci, r, None))
        worst = max(worst, abs(eta_s - eta))
    record("8f tiger witness eta", worst <= 1e-3, f"max |eta_s - eta| {worst:.2e}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
