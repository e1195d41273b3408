"""Sampling-based validation, brute-force oracles, rollouts and threshold sweeps."""
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import errors
from .chains import build_tsimc, build_tsmc, repair_unreachable
from .pomdp import horizon_steps
from .robust_eval import evaluate_kernel, vi_point
from .search import analyze

DEFAULT_SAMPLES = 10_000
MAX_ENUMERATION = 10 ** 6


@dataclass
class ValidationReport:
    target_eta: float
    delta_used: float
    eta_witness: float
    eta_sampled_ns: float       # None for sticky queries (nonsticky kernels may undercut them)
    eta_sampled_s: float
    samples: int
    seed: int


def empirical_eta(V0, V):
    """Relative degradation (V0 - V) / |V0|."""
    if V0 == 0:
        raise errors.ZeroNominalValue("nominal value is 0; report the absolute degradation instead")
    return (V0 - V) / abs(V0)


def _greedy_vertex(lo, hi, order):
    p = lo.copy()
    budget = 1.0 - lo.sum()
    for j in order:
        add = min(hi[j] - lo[j], budget)
        p[j] += add
        budget -= add
    return p


def sample_extrema_ns(c, n, seed=0):
    """Point chains whose interval rows sit at random vertices of their polytopes.

    Each row fills its lower bounds and then hands the remaining mass to its
    successors in a uniformly random order.
    """
    rng = np.random.default_rng(seed)
    rows = c.row_ids()
    lo, hi = c.lower, c.upper
    slack = hi - lo
    budget = 1.0 - np.bincount(rows, weights=lo, minlength=c.n)
    if np.any(budget < -1e-9) or np.any(np.bincount(rows, weights=hi, minlength=c.n) < 1 - 1e-9):
        raise errors.InfeasibleRow("some row admits no distribution")
    budget = np.maximum(budget, 0.0)
    for _ in range(n):
        order = np.lexsort((rng.random(c.nnz), rows))
        r, s = rows[order], slack[order]
        cs = np.cumsum(s)
        before = cs - s
        starts = np.flatnonzero(np.r_[True, r[1:] != r[:-1]]) if len(r) else np.array([], int)
        base = np.repeat(before[starts], np.diff(np.r_[starts, len(r)]))
        p = np.empty(c.nnz)
        p[order] = lo[order] + np.clip(budget[r] - (before - base), 0.0, s)
        out = replace(c)
        out.probs, out.lower, out.upper = p, None, None
        yield out


def observation_ball(z, delta, eps_p):
    """Bounds of the support-preserving ball around one observation row."""
    supp = z > 0
    lo = np.where(supp, np.maximum(z - delta, eps_p), 0.0)
    hi = np.where(supp, np.minimum(z + delta, 1.0 - eps_p if supp.sum() > 1 else 1.0), 0.0)
    return lo, hi


def sample_extrema_sticky(m, delta, eps_p, n, seed=0):
    """POMDPs whose observation rows sit at random vertices of their delta balls."""
    rng = np.random.default_rng(seed)
    bounds = {}
    for a in range(m.n_actions):
        for s2 in range(m.n_states):
            if np.count_nonzero(m.Z[a, s2]) > 1:
                lo, hi = observation_ball(m.Z[a, s2], delta, eps_p)
                if lo.sum() > 1 + 1e-9 or hi.sum() < 1 - 1e-9:
                    raise errors.EmptyInterval(f"row ({m.actions[a]}, {m.states[s2]}) is empty")
                bounds[(a, s2)] = (lo, hi, np.flatnonzero(m.Z[a, s2] > 0))
    for _ in range(n):
        Z = np.array(m.Z)
        for (a, s2), (lo, hi, supp) in bounds.items():
            Z[a, s2] = _greedy_vertex(lo, hi, rng.permutation(supp))
        yield m.replace(Z=Z)


def row_vertices(lo, hi, tol=1e-12):
    """All vertices of {lo <= p <= hi, sum p = 1}.

    A vertex has every coordinate but at most one at a bound; enumerate which
    coordinate is free and where the others sit.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    k = len(lo)
    out = []
    for f in range(k):
        others = [j for j in range(k) if j != f]
        for pick in itertools.product((0, 1), repeat=k - 1):
            p = np.empty(k)
            for j, b in zip(others, pick):
                p[j] = hi[j] if b else lo[j]
            p[f] = 1.0 - p[others].sum()
            if lo[f] - tol <= p[f] <= hi[f] + tol:
                p[f] = min(max(p[f], lo[f]), hi[f])
                if not any(np.allclose(p, v, atol=1e-12, rtol=0) for v in out):
                    out.append(p)
    return out


def brute_force_min(c, horizon, max_rows=6, limit=MAX_ENUMERATION):
    """Exact finite-horizon minimum over vertex kernels by exhaustive enumeration.

    Every interval row's vertex set is listed explicitly; each backward step
    tries every joint assignment of vertices to rows and keeps the best value
    per state.
    """
    steps = horizon_steps(horizon)
    if steps is None or steps > 4:
        raise errors.TooLarge("brute force needs a finite horizon of at most 4")
    rows = c.row_ids()
    slack_rows = np.flatnonzero(np.bincount(rows, weights=c.upper - c.lower, minlength=c.n) > 0)
    if len(slack_rows) > max_rows:
        raise errors.TooLarge(f"{len(slack_rows)} interval rows exceed the limit of {max_rows}")
    verts = []
    for q in slack_rows:
        a, b = c.indptr[q], c.indptr[q + 1]
        verts.append(row_vertices(c.lower[a:b], c.upper[a:b]))
    if np.prod([len(v) for v in verts], dtype=float) > limit:
        raise errors.TooLarge("too many joint vertex assignments")
    M = c.matrix()
    r, d = c.reward, c.discount
    V = np.zeros(c.n)
    for _ in range(steps * c.period):
        ev = M @ V
        best = None
        for combo in itertools.product(*verts):
            e = ev.copy()
            for q, p in zip(slack_rows, combo):
                a, b = c.indptr[q], c.indptr[q + 1]
                e[q] = p @ V[c.indices[a:b]]
            best = e if best is None else np.minimum(best, e)
        V = r + d * (best if best is not None else ev)
    a, b = c.indptr[0], c.indptr[1]
    return float(c.probs[a:b] @ V[c.indices[a:b]])


def history_brute_force_min(m, pi, delta, eps_p, horizon):
    """Worst case over observation functions that may depend on the full history.

    Recurses over the history tree; at every (history, next state) the
    adversary picks a vertex of the observation ball. The controller node is
    recomputed from the history, so nothing here relies on node-level
    aggregation.
    """
    balls = {}
    for a in range(m.n_actions):
        for s2 in range(m.n_states):
            z = m.Z[a, s2]
            lo, hi = np.where(z > 0, np.maximum(z - delta, eps_p), 0.0), np.where(z > 0, np.minimum(z + delta, 1.0), 0.0)
            balls[(a, s2)] = row_vertices(lo, hi)
    g = m.discount

    def node_after(history):
        n = pi.initial
        for o in history:
            n = int(pi.next_node[n, o])
            if n < 0:
                return None
        return n

    def value(history, s, t):
        if t == horizon:
            return 0.0
        n = node_after(history)
        a = int(pi.action[n])
        total = m.R[s, a]
        for s2 in np.flatnonzero(m.T[s, a] > 0):
            best = np.inf
            for z in balls[(a, s2)]:
                v = 0.0
                for o in np.flatnonzero(z > 0):
                    if node_after(history + (o,)) is None:
                        raise errors.UndefinedMemoryUpdate("controller lacks an edge on a reachable path")
                    v += z[o] * value(history + (o,), s2, t + 1)
                best = min(best, v)
            total += g * m.T[s, a, s2] * best
        return total

    return float(sum(m.b0[s] * value((), s, 0) for s in np.flatnonzero(m.b0 > 0)))


@dataclass
class MonteCarloResult:
    mean: float
    stderr: float
    state_visits: np.ndarray        # fraction of rollouts that visit each state
    node_visits: np.ndarray         # fraction of rollouts that visit each node
    state_action: np.ndarray        # fraction of rollouts that take action a in state s

    def __iter__(self):
        return iter((self.mean, self.stderr, self))


def _sample_rows(cum, idx, rng):
    """Draw one column per row index from row-wise cumulative tables."""
    u = rng.random(len(idx))
    return (cum[idx] < u[:, None]).sum(axis=1).clip(max=cum.shape[1] - 1)


def monte_carlo(m, pi, n_rollouts, horizon="model", seed=0):
    """Roll out pi on m; returns mean discounted return, its standard error and visit frequencies."""
    h = m.horizon if horizon == "model" else horizon_steps(horizon)
    if h is None:
        raise errors.InvalidQuery("Monte Carlo rollouts need a finite horizon")
    rng = np.random.default_rng(seed)
    nS, nA, nN = m.n_states, m.n_actions, pi.n_nodes
    cumT = np.cumsum(np.asarray(m.T).reshape(nS * nA, nS), axis=1)
    cumZ = np.cumsum(np.asarray(m.Z).reshape(nA * nS, -1), axis=1)
    s = (np.cumsum(m.b0)[None, :] < rng.random(n_rollouts)[:, None]).sum(axis=1).clip(max=nS - 1)
    n = np.full(n_rollouts, pi.initial)
    ret = np.zeros(n_rollouts)
    seen_s = np.zeros((n_rollouts, nS), dtype=bool)
    seen_n = np.zeros((n_rollouts, nN), dtype=bool)
    seen_sa = np.zeros((n_rollouts, nS, nA), dtype=bool)
    rows = np.arange(n_rollouts)
    disc = 1.0
    for _ in range(h):
        a = pi.action[n]
        seen_s[rows, s] = True
        seen_n[rows, n] = True
        seen_sa[rows, s, a] = True
        ret += disc * m.R[s, a]
        disc *= m.discount
        s = _sample_rows(cumT, s * nA + a, rng)
        o = _sample_rows(cumZ, a * nS + s, rng)
        n = pi.next_node[n, o]
        if np.any(n < 0):
            raise errors.UndefinedMemoryUpdate("a rollout hit an undefined controller edge")
    stderr = float(ret.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return MonteCarloResult(float(ret.mean()), stderr, seen_s.mean(axis=0), seen_n.mean(axis=0),
                            seen_sa.mean(axis=0))


def simulate_chain(c, kernel=None, n_runs=10_000, steps=None, seed=0, start=0, groups=None):
    """Fraction of runs visiting each chain state.

    With groups (a mapping name -> state indices) the result is instead, per
    group, the fraction of runs visiting at least one of its states.

    kernel is None (use the chain's own probabilities), one probability vector,
    or a list with one vector per transition in forward order (as stored in a
    finite-horizon witness). Runs starting at q_I take its row first without
    consuming a transition.
    """
    if hasattr(kernel, "kernel"):
        kernel = kernel.kernel
    if isinstance(kernel, list):
        steps = len(kernel) if steps is None else steps
    if steps is None:
        raise errors.InvalidQuery("give the number of transitions to simulate")
    rng = np.random.default_rng(seed)
    x = np.full(n_runs, start)
    seen = np.zeros((n_runs, c.n), dtype=bool)
    runs = np.arange(n_runs)

    def step(x, probs):
        cs = np.cumsum(probs)
        first = c.indptr[x]
        before = np.where(first > 0, cs[np.maximum(first - 1, 0)], 0.0)
        total = cs[c.indptr[x + 1] - 1] - before
        j = np.searchsorted(cs, before + rng.random(len(x)) * total, side="right")
        return c.indices[np.clip(j, first, c.indptr[x + 1] - 1)]

    seen[runs, x] = True
    if start == 0:
        x = step(x, c.probs)
        seen[runs, x] = True
    for t in range(steps):
        probs = c.probs if kernel is None else (kernel[t] if isinstance(kernel, list) else kernel)
        x = step(x, probs)
        seen[runs, x] = True
    if groups is not None:
        return {k: float(seen[:, list(v)].any(axis=1).mean()) for k, v in groups.items()}
    return seen.mean(axis=0)


def _workers():
    try:
        k = int(os.environ.get("OBSROBUST_THREADS", "0"))
    except ValueError:
        k = 1
    if k == 0:
        return os.cpu_count() or 1
    return max(k, 1)


def sweep(q, thresholds):
    """Run the query once per threshold (eta or Delta, matching the query's mode)."""
    thresholds = list(thresholds)
    if not thresholds:
        raise errors.InvalidQuery("sweep needs at least one threshold")
    key = "eta" if q.eta is not None else "delta_threshold"
    queries = [replace(q, **{key: float(t)}) for t in thresholds]
    k = _workers()
    if k == 1:
        return [analyze(x) for x in queries]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(analyze, queries))


def validate(q, samples=DEFAULT_SAMPLES, seed=0, result=None):
    """Sample extreme perturbations at the computed delta and compare with its witness."""
    result = analyze(q) if result is None else result
    m, h = q.effective_model, q.effective_horizon
    v0 = result.nominal_value
    eta_w = empirical_eta(v0, result.worst_case_value_at_delta)
    c = build_tsmc(m, q.policy)
    eta_ns = None
    if q.variant == "nonsticky":
        ci = repair_unreachable(build_tsimc(c, result.delta, q.eps_p))
        worst = min(vi_point(x, h).initial for x in sample_extrema_ns(ci, samples, seed))
        eta_ns = empirical_eta(v0, worst)
    worst_s = min(vi_point(build_tsmc(x, q.policy), h).initial
                  for x in sample_extrema_sticky(m, result.delta, q.eps_p, samples, seed))
    target = q.eta if q.eta is not None else (result.threshold / abs(v0) if v0 else float("nan"))
    return ValidationReport(target_eta=target, delta_used=result.delta, eta_witness=eta_w,
                            eta_sampled_ns=eta_ns, eta_sampled_s=empirical_eta(v0, worst_s),
                            samples=samples, seed=seed)


def witness_value(c, result, horizon):
    """Value of a nonsticky result's witness kernel on chain c."""
    return evaluate_kernel(c, result.witness, horizon).initial
