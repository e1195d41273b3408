"""Point and interval (worst-case) evaluation of sparse chains."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import errors
from .pomdp import horizon_steps

EPS_IPE = 1e-7


@dataclass
class ValueTable:
    values: np.ndarray
    horizon_tag: object        # number of sweeps run (finite) or "converged"
    residual: float

    @property
    def initial(self):
        return float(self.values[0])


@dataclass
class WorstCaseWitness:
    """Minimizing probabilities for every entry of the chain.

    kernel is one probability vector (aligned with the chain's CSR entries)
    for infinite horizons, or a list of them in forward time order.
    """
    kernel: object
    value_at_initial: float

    @property
    def stationary(self):
        return not isinstance(self.kernel, list)

    def at(self, t=0):
        return self.kernel if self.stationary else self.kernel[t]


def _steps(c, horizon):
    h = horizon_steps(horizon)
    if h is None:
        if c.model_discount >= 1.0:
            raise errors.NonContractive("infinite horizon needs a discount below 1")
        return None
    return h * c.period


def _threshold(c, eps):
    g = c.model_discount ** (1.0 / c.period)
    return eps * (1 - g) / g if g > 0 else 0.0


def robust_backup_min(row_lower, row_upper, succ_values):
    """Minimize p . v over lower <= p <= upper, sum(p) = 1.

    Start from the lower bounds and hand the remaining mass to successors in
    ascending value order (ties by position), each up to its upper bound.
    """
    lo = np.asarray(row_lower, dtype=float)
    hi = np.asarray(row_upper, dtype=float)
    v = np.asarray(succ_values, dtype=float)
    if np.any(lo > hi + 1e-12) or lo.sum() > 1 + 1e-9 or hi.sum() < 1 - 1e-9:
        raise errors.InfeasibleRow(f"no distribution within bounds (sum lower {lo.sum()}, sum upper {hi.sum()})")
    p = lo.copy()
    budget = 1.0 - lo.sum()
    for j in np.lexsort((np.arange(len(v)), v)):
        if budget <= 0:
            break
        add = min(hi[j] - lo[j], budget)
        p[j] += add
        budget -= add
    return p, float(p @ v)


class _Backup:
    """Vectorized greedy minimization over all interval rows of a chain."""

    def __init__(self, c):
        self.c = c
        rows = c.row_ids()
        lo = c.lower if c.is_interval else c.probs
        hi = c.upper if c.is_interval else c.probs
        slack = hi - lo
        row_slack = np.bincount(rows, weights=slack, minlength=c.n)
        irow = row_slack > 0
        ient = irow[rows]
        self.ient = np.flatnonzero(ient)
        self.fixed_probs = np.where(ient, 0.0, lo)
        self.fixed = sp.csr_matrix((self.fixed_probs, c.indices, c.indptr), shape=(c.n, c.n))
        self.rows = rows[ient]
        self.idx = c.indices[ient]
        self.lo = lo[ient]
        self.slack = slack[ient]
        self.budget = 1.0 - np.bincount(self.rows, weights=self.lo, minlength=c.n)

    def __call__(self, V):
        """Returns (expected successor value per row, entry probabilities)."""
        out = self.fixed @ V
        probs = self.fixed_probs.copy()
        if self.ient.size == 0:
            return out, probs
        v = V[self.idx]
        order = np.lexsort((self.idx, v, self.rows))
        r = self.rows[order]
        s = self.slack[order]
        cs = np.cumsum(s)
        before = cs - s
        starts = np.flatnonzero(np.r_[True, r[1:] != r[:-1]])
        base = np.repeat(before[starts], np.diff(np.r_[starts, len(r)]))
        extra = np.clip(self.budget[r] - (before - base), 0.0, s)
        p_sorted = self.lo[order] + extra
        p = np.empty_like(p_sorted)
        p[order] = p_sorted
        out += np.bincount(self.rows, weights=p * v, minlength=self.c.n)
        probs[self.ient] = p
        return out, probs


def _evaluate_fixed(c, probs_seq, steps, eps, method="solve"):
    """Value of a point chain whose entry probabilities may vary per sweep."""
    r, d = c.reward, c.discount
    if steps is not None:
        V = np.zeros(c.n)
        last, M = None, None
        for k in range(steps):
            probs = probs_seq(steps - 1 - k)
            if probs is not last:
                last, M = probs, c.matrix(probs)
            V = r + d * (M @ V)
        V = _initial_hop(c, V, probs_seq(0) if steps else c.probs)
        return ValueTable(V, steps, 0.0)
    probs = probs_seq(0)
    M = c.matrix(probs)
    if method == "solve":
        A = sp.identity(c.n, format="csc") - sp.diags(d) @ M
        V = spla.spsolve(A.tocsc(), r)
        V = np.atleast_1d(V)
        res = float(np.max(np.abs(r + d * (M @ V) - V))) if c.n else 0.0
        return ValueTable(V, "converged", res)
    thresh = _threshold(c, eps)
    V = np.zeros(c.n)
    while True:
        Vn = r + d * (M @ V)
        res = float(np.max(np.abs(Vn - V)))
        V = Vn
        if res <= thresh:
            return ValueTable(V, "converged", res)


def _initial_hop(c, V, probs):
    """q_I is a zero-reward, zero-time hop into the initial belief."""
    V = V.copy()
    a, b = c.indptr[0], c.indptr[1]
    V[0] = probs[a:b] @ V[c.indices[a:b]]
    return V


def vi_point(c, horizon, eps=EPS_IPE, method="solve"):
    """Exact value of a point chain.

    Finite horizons run period * horizon backward sweeps. Infinite horizons
    solve the linear system directly (method="solve") or run Jacobi sweeps to
    the eps stopping rule (method="vi").
    """
    steps = _steps(c, horizon)
    return _evaluate_fixed(c, lambda t: c.probs, steps, eps, method)


def evaluate_kernel(c, kernel, horizon, eps=EPS_IPE, method="solve"):
    """Value of chain c with its entries replaced by a witness kernel."""
    steps = _steps(c, horizon)
    if isinstance(kernel, WorstCaseWitness):
        kernel = kernel.kernel
    if isinstance(kernel, list):
        if steps is None or len(kernel) != steps:
            raise errors.IndexMismatch("per-step kernel length does not match the horizon")
        return _evaluate_fixed(c, lambda t: kernel[t], steps, eps, method)
    return _evaluate_fixed(c, lambda t: kernel, steps, eps, method)


def ipe_min(c, horizon, eps_ipe=EPS_IPE, store_kernels=True, method="pi", max_iter=10000):
    """Worst-case value over the interval chain c.

    Finite horizons run exactly period * horizon Jacobi sweeps and record the
    minimizing kernel of every sweep. Infinite horizons use policy iteration
    on the minimizing kernel (method="pi") or plain Jacobi sweeps
    (method="vi"), stopping once the sweep residual is below
    eps * (1 - g) / g.
    """
    steps = _steps(c, horizon)
    backup = _Backup(c)
    r, d = c.reward, c.discount
    if steps is not None:
        V = np.zeros(c.n)
        kernels = []
        for _ in range(steps):
            ev, probs = backup(V)
            V = r + d * ev
            if store_kernels:
                kernels.append(probs)
        kernels.reverse()
        V = _initial_hop(c, V, c.probs)
        table = ValueTable(V, steps, 0.0)
        return table, WorstCaseWitness(kernels if store_kernels else None, table.initial)

    thresh = _threshold(c, eps_ipe)
    if method == "pi":
        V = _evaluate_fixed(c, lambda t: c.probs, None, eps_ipe).values
        for _ in range(max_iter):
            _, probs = backup(V)
            Vn = _evaluate_fixed(c, lambda t: probs, None, eps_ipe).values
            improved = np.max(V - Vn) > 1e-12 * (1.0 + np.max(np.abs(V)))
            V = Vn
            if not improved:
                break
    else:
        V = np.zeros(c.n)
    # Jacobi sweeps certify (and, for method="vi", produce) the fixed point
    for _ in range(10 ** 8):
        ev, probs = backup(V)
        Vn = r + d * ev
        res = float(np.max(np.abs(Vn - V)))
        V = Vn
        if res <= thresh:
            break
    table = ValueTable(V, "converged", res)
    return table, WorstCaseWitness(probs, float(V[0]))
