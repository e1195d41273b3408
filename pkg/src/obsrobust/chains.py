"""Markov chains induced by running a controller on a POMDP.

All chains use CSR-style sparse rows. State 0 is always the synthetic initial
state q_I whose row is the initial belief; it carries no reward and does not
consume a step of the horizon.
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import errors
from .pomdp import TOL, check_compatible

Q_INIT = "q_I"


@dataclass(eq=False)
class SparseChain:
    labels: list
    indptr: np.ndarray
    indices: np.ndarray
    probs: np.ndarray
    reward: np.ndarray
    discount: np.ndarray        # per-state factor applied to successor values
    model_discount: float       # discount per model step
    period: int = 1             # sweeps per model step
    lower: np.ndarray = None
    upper: np.ndarray = None

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def nnz(self):
        return len(self.indices)

    @property
    def is_interval(self):
        return self.lower is not None

    def row_ids(self):
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def row(self, q):
        lo, hi = self.indptr[q], self.indptr[q + 1]
        return self.indices[lo:hi], self.probs[lo:hi]

    def row_sums(self, vals=None):
        vals = self.probs if vals is None else vals
        return np.bincount(self.row_ids(), weights=vals, minlength=self.n)

    def matrix(self, vals=None):
        vals = self.probs if vals is None else vals
        return sp.csr_matrix((vals, self.indices, self.indptr), shape=(self.n, self.n))

    def reachable(self, vals=None):
        """Boolean mask of states reachable from q_I over positive entries."""
        vals = self.probs if vals is None else vals
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            q = stack.pop()
            lo, hi = self.indptr[q], self.indptr[q + 1]
            for j in range(lo, hi):
                q2 = self.indices[j]
                if vals[j] > 0 and not seen[q2]:
                    seen[q2] = True
                    stack.append(q2)
        return seen

    def dense(self, vals=None):
        return self.matrix(vals).toarray()


@dataclass(eq=False)
class ProductMc(SparseChain):
    n_states: int = 0
    n_nodes: int = 0

    def index(self, s, n):
        return 1 + s * self.n_nodes + n


@dataclass(eq=False)
class TwoStepMc(SparseChain):
    n_states: int = 0
    n_nodes: int = 0
    phase: np.ndarray = None    # -1 for q_I, else 0 or 1
    obs_sets: list = None       # per entry: observation tuple (phase-1 entries only)

    def index(self, s, n, i):
        return 1 + 2 * (s * self.n_nodes + n) + i


@dataclass(eq=False)
class TwoStepIntervalMc(TwoStepMc):
    delta: float = 0.0
    eps_p: float = 0.0


def _csr(rows, n):
    """rows: list of lists of (succ, prob) pairs, merged per successor."""
    indptr = [0]
    indices, probs = [], []
    for r in rows:
        acc = {}
        for q2, p in r:
            acc[q2] = acc.get(q2, 0.0) + p
        for q2 in sorted(acc):
            indices.append(q2)
            probs.append(acc[q2])
        indptr.append(len(indices))
    return (np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64),
            np.array(probs, dtype=float))


def _node_weights(m, pi, n, s2):
    """Mass of moving from node n to each successor after landing in s2.

    Returns {n2: (prob, obs tuple)} and the mass lost to undefined updates.
    """
    a = pi.action[n]
    out = {}
    lost = 0.0
    for o in range(m.n_observations):
        z = m.Z[a, s2, o]
        n2 = int(pi.next_node[n, o])
        if n2 < 0:
            lost += z
            continue
        p, obs = out.get(n2, (0.0, ()))
        out[n2] = (p + z, obs + (o,))
    return out, lost


def _check_reachable_rows(c, what, describe):
    reach = c.reachable()
    sums = c.row_sums()
    bad = np.flatnonzero(reach & (np.abs(sums - 1.0) > 1e-8))
    if bad.size:
        raise errors.UndefinedMemoryUpdate(
            f"{what}: reachable row {describe(int(bad[0]))} sums to {sums[bad[0]]:.12g}; "
            "the controller lacks a successor for a possible observation")


def build_product_mc(m, pi):
    check_compatible(m, pi)
    nS, nN = m.n_states, pi.n_nodes
    labels = [Q_INIT] + [(s, n) for s in range(nS) for n in range(nN)]
    rows = [[(1 + s * nN + pi.initial, m.b0[s]) for s in range(nS) if m.b0[s] > 0]]
    reward = np.zeros(1 + nS * nN)
    for s in range(nS):
        for n in range(nN):
            a = pi.action[n]
            reward[1 + s * nN + n] = m.R[s, a]
            r = []
            for s2 in np.flatnonzero(m.T[s, a] > 0):
                w, _ = _node_weights(m, pi, n, s2)
                for n2, (z, _) in w.items():
                    if z > 0:
                        r.append((1 + s2 * nN + n2, m.T[s, a, s2] * z))
            rows.append(r)
    indptr, indices, probs = _csr(rows, len(labels))
    disc = np.full(len(labels), m.discount)
    disc[0] = 1.0
    c = ProductMc(labels=labels, indptr=indptr, indices=indices, probs=probs, reward=reward,
                  discount=disc, model_discount=m.discount, period=1,
                  n_states=nS, n_nodes=nN)
    _check_reachable_rows(c, "product chain", lambda q: _describe(m, pi, labels[q]))
    return c


def _describe(m, pi, lab):
    if lab == Q_INIT:
        return Q_INIT
    s, n = lab[0], lab[1]
    tail = "" if len(lab) == 2 else f", phase {lab[2]}"
    return f"({m.states[s]}, {pi.nodes[n]}{tail})"


def build_tsmc(m, pi):
    check_compatible(m, pi)
    nS, nN = m.n_states, pi.n_nodes
    size = 1 + 2 * nS * nN
    labels = [Q_INIT] + [(s, n, i) for s in range(nS) for n in range(nN) for i in (0, 1)]
    phase = np.array([-1] + [i for s in range(nS) for n in range(nN) for i in (0, 1)])
    rows = [[(1 + 2 * (s * nN + pi.initial), m.b0[s]) for s in range(nS) if m.b0[s] > 0]]
    obs_rows = [[()] * len(rows[0])]
    reward = np.zeros(size)
    for s in range(nS):
        for n in range(nN):
            a = pi.action[n]
            q0 = 1 + 2 * (s * nN + n)
            reward[q0] = m.R[s, a]
            succ = [(1 + 2 * (s2 * nN + n) + 1, m.T[s, a, s2]) for s2 in np.flatnonzero(m.T[s, a] > 0)]
            rows.append(succ)
            obs_rows.append([()] * len(succ))
            w, _ = _node_weights(m, pi, n, s)
            succ1 = sorted((1 + 2 * (s * nN + n2), z, obs) for n2, (z, obs) in w.items() if z > 0)
            rows.append([(q, z) for q, z, _ in succ1])
            obs_rows.append([obs for _, _, obs in succ1])
    indptr, indices, probs = _csr(rows, size)
    # successors are unique within each row here, so observation sets line up after sorting
    obs_sets = []
    for r, ob in zip(rows, obs_rows):
        order = np.argsort([q for q, _ in r], kind="stable")
        obs_sets.extend(ob[i] for i in order)
    g = np.sqrt(m.discount)
    disc = np.full(size, g)
    disc[0] = 1.0
    c = TwoStepMc(labels=labels, indptr=indptr, indices=indices, probs=probs, reward=reward,
                  discount=disc, model_discount=m.discount, period=2,
                  n_states=nS, n_nodes=nN, phase=phase, obs_sets=obs_sets)
    _check_reachable_rows(c, "two-step chain", lambda q: _describe(m, pi, labels[q]))
    return c


def build_tsimc(c, delta, eps_p=0.0):
    """Interval version of a two-step chain with radius delta on observation rows."""
    if not 0.0 <= delta <= 1.0:
        raise errors.InvalidQuery(f"delta must lie in [0, 1], got {delta}")
    if not 0.0 <= eps_p < 1.0:
        raise errors.InvalidQuery(f"eps_p must lie in [0, 1), got {eps_p}")
    rows = c.row_ids()
    obs_entry = c.phase[rows] == 1
    p = c.probs
    lower = p.copy()
    upper = p.copy()
    lower[obs_entry] = np.maximum(p[obs_entry] - delta, eps_p)
    upper[obs_entry] = np.minimum(p[obs_entry] + delta, 1.0)
    out = TwoStepIntervalMc(**{f: getattr(c, f) for f in _chain_fields(c)})
    out.lower, out.upper = lower, upper
    out.delta, out.eps_p = float(delta), float(eps_p)
    _check_feasible(out)
    return out


def _chain_fields(c):
    return [f for f in c.__dataclass_fields__ if f not in ("lower", "upper", "delta", "eps_p")]


def _check_feasible(c, only_complete=True):
    sums = c.row_sums()
    lo = c.row_sums(c.lower)
    hi = c.row_sums(c.upper)
    complete = np.abs(sums - 1.0) <= 1e-8 if only_complete else np.ones(c.n, dtype=bool)
    bad = np.flatnonzero(complete & ((lo > 1.0 + TOL) | (hi < 1.0 - TOL)))
    if np.any(c.lower > c.upper + TOL):
        j = int(np.flatnonzero(c.lower > c.upper + TOL)[0])
        raise errors.EmptyInterval(f"entry {j} has lower {c.lower[j]} above upper {c.upper[j]}")
    if bad.size:
        q = int(bad[0])
        raise errors.EmptyInterval(
            f"row {c.labels[q]} admits no distribution (lower sum {lo[q]:.6g}, upper sum {hi[q]:.6g})")


def repair_unreachable(c):
    """Make every unreachable row a valid distribution.

    Empty rows get a probability-1 self-loop; rows with mass g in (0, 1) are
    scaled by 1/g along with their bounds. Reachable rows are left alone.
    """
    reach = c.reachable()
    sums = c.row_sums()
    fix = ~reach & (np.abs(sums - 1.0) > 1e-12)
    if not fix.any():
        return c
    rows_idx, rows_p, rows_lo, rows_hi = [], [], [], []
    indptr = [0]
    for q in range(c.n):
        a, b = c.indptr[q], c.indptr[q + 1]
        idx, p = c.indices[a:b], c.probs[a:b]
        lo = c.lower[a:b] if c.is_interval else p
        hi = c.upper[a:b] if c.is_interval else p
        if fix[q]:
            g = p.sum()
            if g <= 0:
                idx, p, lo, hi = np.array([q]), np.ones(1), np.ones(1), np.ones(1)
            else:
                p, lo, hi = p / g, lo / g, np.minimum(hi / g, 1.0)
        rows_idx.append(idx)
        rows_p.append(p)
        rows_lo.append(lo)
        rows_hi.append(hi)
        indptr.append(indptr[-1] + len(idx))
    out = replace(c)
    out.indptr = np.array(indptr, dtype=np.int64)
    out.indices = np.concatenate(rows_idx).astype(np.int64)
    out.probs = np.concatenate(rows_p)
    if c.is_interval:
        out.lower = np.concatenate(rows_lo)
        out.upper = np.concatenate(rows_hi)
    if getattr(c, "obs_sets", None) is not None:
        obs = []
        for q in range(c.n):
            a, b = c.indptr[q], c.indptr[q + 1]
            if fix[q] and c.probs[a:b].sum() <= 0:
                obs.append(())
            else:
                obs.extend(c.obs_sets[a:b])
        out.obs_sets = obs
    return out


# ---------------------------------------------------------------- parametric


@dataclass(frozen=True)
class ParamTable:
    """One parameter per (action, next state, support index < k - 1)."""
    keys: tuple            # (a, s2, i)
    nominal: np.ndarray
    groups: tuple          # per (a, s2) with k >= 2: (a, s2, support obs, param ids)

    @property
    def size(self):
        return len(self.keys)


def param_table(m):
    keys, nominal, groups = [], [], []
    for a in range(m.n_actions):
        for s2 in range(m.n_states):
            supp = np.flatnonzero(m.Z[a, s2] > 0)
            if len(supp) < 2:
                continue
            ids = []
            for i, o in enumerate(supp[:-1]):
                ids.append(len(keys))
                keys.append((a, s2, i))
                nominal.append(m.Z[a, s2, o])
            groups.append((a, s2, tuple(int(o) for o in supp), tuple(ids)))
    return ParamTable(tuple(keys), np.array(nominal, dtype=float), tuple(groups))


@dataclass(eq=False)
class ParametricMc:
    """Product chain whose entries are const + coef @ p."""
    base: ProductMc            # structure and nominal probabilities
    const: np.ndarray
    coef: sp.csr_matrix        # nnz x n_params
    params: ParamTable
    used: np.ndarray           # params that appear in some entry reachable from q_I
    entry_groups: list = field(default=None)
    model: object = None
    policy: object = None

    @property
    def n_params(self):
        return self.params.size

    @property
    def nominal(self):
        return self.params.nominal


def build_pmc(m, pi):
    base = build_product_mc(m, pi)
    table = param_table(m)
    gid = {(a, s2): g for g, (a, s2, _, _) in enumerate(table.groups)}
    nN = pi.n_nodes
    const = np.zeros(base.nnz)
    rows, cols, vals = [], [], []
    entry_groups = [None] * base.nnz
    for q in range(1, base.n):
        s, n = divmod(q - 1, nN)
        a = int(pi.action[n])
        for j in range(base.indptr[q], base.indptr[q + 1]):
            s2, n2 = divmod(int(base.indices[j]) - 1, nN)
            t = m.T[s, a, s2]
            obs = pi.obs_set(n, n2)
            g = gid.get((a, s2))
            if g is None:
                const[j] = t * sum(m.Z[a, s2, o] for o in obs)
                continue
            entry_groups[j] = g
            _, _, supp, ids = table.groups[g]
            last = supp[-1]
            if last in obs:
                const[j] += t
            for o, pid in zip(supp[:-1], ids):
                w = (o in obs) - (last in obs)
                if w:
                    rows.append(j)
                    cols.append(pid)
                    vals.append(t * w)
    for j in range(base.indptr[0], base.indptr[1]):
        const[j] = base.probs[j]
    coef = sp.csr_matrix((vals, (rows, cols)), shape=(base.nnz, table.size))
    reach = base.reachable()
    live = np.repeat(reach, np.diff(base.indptr))
    used = np.zeros(table.size, dtype=bool)
    if table.size:
        used = np.asarray(abs(coef[live]).sum(axis=0)).ravel() > 0
    return ParametricMc(base=base, const=const, coef=coef, params=table, used=used,
                        entry_groups=entry_groups, model=m, policy=pi)


@dataclass(eq=False)
class Region:
    lower: np.ndarray
    upper: np.ndarray
    # per group with k >= 3: (param ids, min sum, max sum) keeping the dependent entry in its ball
    sums: tuple = ()

    @property
    def dim(self):
        return len(self.lower)

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def widths(self):
        return self.upper - self.lower

    def contains(self, p, tol=1e-12):
        if np.any(p < self.lower - tol) or np.any(p > self.upper + tol):
            return False
        for ids, lo, hi in self.sums:
            t = p[list(ids)].sum()
            if t < lo - tol or t > hi + tol:
                return False
        return True

    def with_box(self, lower, upper):
        return Region(np.asarray(lower, float), np.asarray(upper, float), self.sums)


def region_for(m, delta, eps_p=0.01, table=None):
    """Box of parameter values within delta of nominal, kept inside [eps_p, 1 - eps_p]."""
    if not 0.0 <= delta <= 1.0:
        raise errors.InvalidQuery(f"delta must lie in [0, 1], got {delta}")
    table = param_table(m) if table is None else table
    z = table.nominal
    lo = np.maximum(z - delta, eps_p)
    hi = np.minimum(z + delta, 1.0 - eps_p)
    if np.any(lo > hi + TOL):
        j = int(np.flatnonzero(lo > hi + TOL)[0])
        a, s2, i = table.keys[j]
        raise errors.EmptyInterval(
            f"parameter for ({m.actions[a]}, {m.states[s2]}, #{i}) has empty range [{lo[j]}, {hi[j]}]")
    hi = np.maximum(hi, lo)
    sums = []
    for a, s2, supp, ids in table.groups:
        if len(supp) < 3:
            continue
        zk = m.Z[a, s2, supp[-1]]
        dep_lo = max(zk - delta, eps_p)
        dep_hi = min(zk + delta, 1.0 - eps_p)
        smin, smax = 1.0 - dep_hi, 1.0 - dep_lo
        if smin > hi[list(ids)].sum() + TOL or smax < lo[list(ids)].sum() - TOL:
            raise errors.EmptyInterval(f"observation row ({m.actions[a]}, {m.states[s2]}) is empty")
        sums.append((ids, smin, smax))
    return Region(lo, hi, tuple(sums))


def pmc_probs(c, point):
    return c.const + c.coef @ np.asarray(point, dtype=float)


def instantiate(c, point):
    """Substitute a parameter point into every transition polynomial."""
    probs = pmc_probs(c, point)
    if np.any(probs < -1e-12) or np.any(probs > 1 + 1e-12):
        raise errors.InvalidDistribution("instantiated entries fall outside [0, 1]")
    out = replace(c.base)
    out.probs = np.clip(probs, 0.0, 1.0)
    sums = out.row_sums()
    reach = out.reachable()
    if np.any(reach & (np.abs(sums - 1.0) > 1e-9)):
        raise errors.InvalidDistribution("instantiated rows do not sum to 1")
    return out
