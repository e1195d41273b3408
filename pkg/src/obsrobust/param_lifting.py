"""Minimum value of a parametric chain over a parameter box.

Bounds come from an interval relaxation of a simple pMC (every entry is a
constant, q or 1 - q) in which each occurrence of a parameter may pick its
value independently. Incumbents come from instantiating box vertices.
"""
import heapq
import itertools
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import errors
from .chains import Q_INIT, SparseChain, instantiate, pmc_probs
from .pomdp import horizon_steps
from .robust_eval import EPS_IPE, _threshold, ipe_min, vi_point

EPS_PLA = 1e-7
MAX_VERTICES = 2 ** 12
MAX_REGIONS = 200_000

__all__ = ["SimplePmc", "to_simple", "relax_min", "pla_min", "instantiate", "rescale", "q_box"]


@dataclass(eq=False)
class SimplePmc:
    """Binary decomposition of a ParametricMc.

    Entry probabilities are const + coef * q[param] (param -1 means constant),
    where q holds the rescaled parameters q_j = p_j / (1 - sum_{i<j} p_i).
    States 1..|S||N| coincide with the product chain; auxiliary states follow.
    """
    chain: SparseChain
    param: np.ndarray
    const: np.ndarray
    coef: np.ndarray
    source: object            # the ParametricMc
    layers: int
    back: list                # original product state behind each auxiliary state

    def probs(self, q):
        q = np.asarray(q, dtype=float)
        out = self.const.copy()
        has = self.param >= 0
        out[has] += self.coef[has] * q[self.param[has]]
        return out

    def at(self, point):
        """Point chain for an original parameter point p."""
        c = replace(self.chain)
        c.probs = self.probs(rescale(self.source, point))
        return c


def rescale(c, point):
    """Map original parameters p to the binary branch parameters q."""
    p = np.asarray(point, dtype=float)
    q = p.copy()
    for _, _, _, ids in c.params.groups:
        rest = 1.0
        for pid in ids:
            q[pid] = p[pid] / rest if rest > 1e-15 else 0.0
            rest -= p[pid]
    return np.clip(q, 0.0, 1.0)


def q_box(c, region):
    """Conservative box on q containing the image of the region."""
    lo, hi = region.lower, region.upper
    qlo, qhi = lo.copy(), hi.copy()
    caps = {tuple(ids): smax for ids, _, smax in region.sums}
    for _, _, _, ids in c.params.groups:
        cap = caps.get(tuple(ids), 1.0)
        s_lo = s_hi = 0.0
        for pid in ids:
            qlo[pid] = lo[pid] / (1.0 - s_lo) if s_lo < 1.0 else 0.0
            room = 1.0 - min(s_hi, cap)
            qhi[pid] = hi[pid] / room if room > 1e-15 else 1.0
            s_lo += lo[pid]
            s_hi += hi[pid]
    return np.clip(qlo, 0.0, 1.0), np.clip(qhi, 0.0, 1.0)


def to_simple(c):
    """Split every parametric observation row into a chain of binary branches.

    After landing in s' from (s, n), an auxiliary state per layer j decides
    between observation o_j (probability q_j) and the remaining ones. Every
    path through the auxiliary layers is padded to the same length so each
    model step takes exactly layers + 1 hops. Auxiliary hops have discount 1
    and reward 0.
    """
    m, pi = c.model, c.policy
    if m is None or pi is None:
        raise errors.UnsupportedPolynomial("only chains produced by build_pmc can be decomposed")
    nS, nN = m.n_states, pi.n_nodes
    groups = {(a, s2): (supp, ids) for a, s2, supp, ids in c.params.groups}
    L = max([len(ids) for _, _, _, ids in c.params.groups] + [1])

    labels = [Q_INIT] + [(s, n) for s in range(nS) for n in range(nN)]
    back = list(range(len(labels)))
    rows = {}           # state -> list of (succ, const, coef, param)
    ids_of = {}

    def new_state(label, orig):
        labels.append(label)
        back.append(orig)
        return len(labels) - 1

    sink = None

    def product(s, n):
        return 1 + s * nN + n

    def delay(q, r):
        if r == 0:
            return q
        key = ("delay", q, r)
        if key not in ids_of:
            ids_of[key] = new_state(key, q)
            rows[ids_of[key]] = [(delay(q, r - 1), 1.0, 0.0, -1)]
        return ids_of[key]

    def target(s2, n, o, depth):
        nonlocal sink
        n2 = int(pi.next_node[n, o])
        if n2 < 0:
            if sink is None:
                sink = new_state(("sink",), 0)
                rows[sink] = [(sink, 1.0, 0.0, -1)]
            return sink
        return delay(product(s2, n2), L - depth)

    def aux(s2, n, j):
        key = ("aux", s2, n, j)
        if key in ids_of:
            return ids_of[key]
        q = new_state(key, product(s2, n))
        ids_of[key] = q
        a = int(pi.action[n])
        g = groups.get((a, s2))
        if g is None:
            acc = {}
            for o in np.flatnonzero(m.Z[a, s2] > 0):
                t = target(s2, n, o, 1)
                acc[t] = acc.get(t, 0.0) + m.Z[a, s2, o]
            rows[q] = [(t, p, 0.0, -1) for t, p in acc.items()]
            return q
        supp, ids = g
        k = len(supp)
        take = target(s2, n, supp[j - 1], j)
        rest = target(s2, n, supp[k - 1], j) if j == k - 1 else aux(s2, n, j + 1)
        if take == rest:
            rows[q] = [(take, 1.0, 0.0, -1)]
        else:
            rows[q] = [(take, 0.0, 1.0, ids[j - 1]), (rest, 1.0, -1.0, ids[j - 1])]
        return q

    reward = {}
    rows[0] = [(product(s, pi.initial), float(m.b0[s]), 0.0, -1) for s in range(nS) if m.b0[s] > 0]
    for s in range(nS):
        for n in range(nN):
            q = product(s, n)
            a = int(pi.action[n])
            reward[q] = m.R[s, a]
            rows[q] = [(aux(s2, n, 1), float(m.T[s, a, s2]), 0.0, -1)
                       for s2 in np.flatnonzero(m.T[s, a] > 0)]

    size = len(labels)
    indptr = [0]
    idx, const, coef, param = [], [], [], []
    for q in range(size):
        for t, k0, k1, pid in sorted(rows.get(q, [])):
            idx.append(t)
            const.append(k0)
            coef.append(k1)
            param.append(pid)
        indptr.append(len(idx))
    rew = np.zeros(size)
    for q, r in reward.items():
        rew[q] = r
    disc = np.ones(size)
    disc[1:1 + nS * nN] = m.discount
    chain = SparseChain(labels=labels, indptr=np.array(indptr, dtype=np.int64),
                        indices=np.array(idx, dtype=np.int64), probs=np.zeros(len(idx)),
                        reward=rew, discount=disc, model_discount=m.discount, period=L + 1)
    out = SimplePmc(chain=chain, param=np.array(param, dtype=np.int64),
                    const=np.array(const), coef=np.array(coef), source=c, layers=L, back=back)
    chain.probs = out.probs(rescale(c, c.nominal))
    return out


def _interval_chain(s, region):
    qlo, qhi = q_box(s.source, region)
    c = replace(s.chain)
    has = s.param >= 0
    lo = s.const.copy()
    hi = s.const.copy()
    pos = has & (s.coef > 0)
    neg = has & (s.coef < 0)
    lo[pos] += qlo[s.param[pos]]
    hi[pos] += qhi[s.param[pos]]
    lo[neg] -= qhi[s.param[neg]]
    hi[neg] -= qlo[s.param[neg]]
    c.lower, c.upper = lo, hi
    c.probs = s.probs(np.clip(rescale(s.source, region.center()), qlo, qhi))
    return c


def relax_min(s, r, horizon, eps=EPS_IPE):
    """Lower bound on the minimum value over region r (parameter coupling dropped)."""
    table, _ = ipe_min(_interval_chain(s, r), horizon, eps, store_kernels=False)
    return table.initial


class _Relaxation:
    """relax_min specialised to the binary rows of a simple pMC.

    Each binary row (q to x, 1 - q to y) contributes v_y + q (v_x - v_y), so the
    pessimistic choice is q_lo when v_x > v_y and q_hi otherwise.
    """

    def __init__(self, s, horizon, eps=EPS_IPE):
        ch = s.chain
        self.s, self.steps, self.eps = s, horizon_steps(horizon), eps
        if self.steps is None:
            self.steps = None if ch.model_discount < 1.0 else -1
        rows = ch.row_ids()
        # iterate only over states reachable from q_I through any entry
        keep = ch.reachable(np.ones(ch.nnz))
        pos = -np.ones(ch.n, dtype=np.int64)
        pos[keep] = np.arange(int(keep.sum()))
        n = int(keep.sum())
        live = keep[rows]
        take = live & (s.param >= 0) & (s.coef > 0)
        rest = live & (s.param >= 0) & (s.coef < 0)
        fixed = live & (s.param < 0)
        self.fixed = sp.csr_matrix((s.const[fixed], (pos[rows[fixed]], pos[ch.indices[fixed]])),
                                   shape=(n, n))
        # take/rest entries of one row are adjacent after sorting by row
        ti, ri = np.flatnonzero(take), np.flatnonzero(rest)
        ti = ti[np.argsort(rows[ti], kind="stable")]
        ri = ri[np.argsort(rows[ri], kind="stable")]
        self.brow, self.bx, self.by = pos[rows[ti]], pos[ch.indices[ti]], pos[ch.indices[ri]]
        self.bpid = s.param[ti]
        self.r, self.d = ch.reward[keep], ch.discount[keep]
        self.n = n
        self.thresh = _threshold(ch, eps) if self.steps is None else 0.0
        a, b = ch.indptr[0], ch.indptr[1]
        self.init_idx, self.init_p = pos[ch.indices[a:b]], s.const[a:b]

    def _sweep(self, V, qlo, qhi):
        diff = V[self.bx] - V[self.by]
        q = np.where(diff > 0, qlo[self.bpid], qhi[self.bpid])
        ev = self.fixed @ V
        ev += np.bincount(self.brow, weights=V[self.by] + q * diff, minlength=self.n)
        return self.r + self.d * ev, q

    def _solve(self, q):
        M = self._matrix(q)
        A = sp.identity(self.n, format="csc") - sp.diags(self.d) @ M
        return np.atleast_1d(spla.spsolve(A.tocsc(), self.r))

    def _matrix(self, q):
        B = sp.csr_matrix((q, (self.brow, self.bx)), shape=(self.n, self.n)) \
            + sp.csr_matrix((1.0 - q, (self.brow, self.by)), shape=(self.n, self.n))
        return self.fixed + B

    def _conflicts(self, region, qlo, trail, x0):
        """Per-parameter score: how strongly rows sharing a parameter pull it
        towards opposite ends, weighted by how often those rows are visited."""
        lo_w = np.zeros(len(region.lower))
        hi_w = np.zeros(len(region.lower))
        x = x0
        for q, diff, weight in trail:
            occ = x[self.brow] if weight is None else weight[self.brow]
            w = occ * np.abs(diff)
            at_lo = q == qlo[self.bpid]
            lo_w += np.bincount(self.bpid[at_lo], weights=w[at_lo], minlength=len(lo_w))
            hi_w += np.bincount(self.bpid[~at_lo], weights=w[~at_lo], minlength=len(hi_w))
            if weight is None:
                x = self._matrix(q).T @ x
        return np.minimum(lo_w, hi_w) * region.widths()

    def __call__(self, region, score=False):
        qlo, qhi = q_box(self.s.source, region)
        if self.steps == -1:
            raise errors.NonContractive("infinite horizon needs a discount below 1")
        trail = []
        if self.steps is not None:
            V = np.zeros(self.n)
            for _ in range(self.steps * self.s.chain.period):
                Vn, q = self._sweep(V, qlo, qhi)
                if score:
                    trail.append((q, V[self.bx] - V[self.by], None))
                V = Vn
            trail.reverse()     # forward time order for the occupancy pass
        else:
            # policy iteration on the endpoint choices, then certify by sweeps
            V = self._solve(qlo[self.bpid])
            for _ in range(1000):
                _, q = self._sweep(V, qlo, qhi)
                Vn = self._solve(q)
                done = np.max(V - Vn) <= 1e-12 * (1.0 + np.max(np.abs(V)))
                V = Vn
                if done:
                    break
            while True:
                Vn, q = self._sweep(V, qlo, qhi)
                res = np.max(np.abs(Vn - V))
                if res <= self.thresh:
                    break
                V = Vn
            if score:
                # discounted visitation under the minimizing choices
                A = sp.identity(self.n, format="csc") - (sp.diags(self.d) @ self._matrix(q)).T
                x0 = np.zeros(self.n)
                x0[self.init_idx] = self.init_p
                occ = np.atleast_1d(spla.spsolve(A.tocsc(), x0))
                trail.append((q, V[self.bx] - V[self.by], occ))
            V = Vn
        value = float(self.init_p @ V[self.init_idx])
        if not score:
            return value
        x0 = np.zeros(self.n)
        x0[self.init_idx] = self.init_p
        return value, self._conflicts(region, qlo, trail, x0)


def _project(region, p):
    """Pull a box point inside the region's sum constraints."""
    p = p.copy()
    for ids, smin, smax in region.sums:
        ids = list(ids)
        t = p[ids].sum()
        if t > smax:
            room = p[ids] - region.lower[ids]
            p[ids] -= room * min(1.0, (t - smax) / max(room.sum(), 1e-300))
        elif t < smin:
            room = region.upper[ids] - p[ids]
            p[ids] += room * min(1.0, (smin - t) / max(room.sum(), 1e-300))
    return p


def _candidates(region, free, rng, fixed_dim=None):
    """Box vertices (all of them, or a random sample) plus the center.

    With fixed_dim set, only vertices on the face where that coordinate sits at
    its lower end are produced: after a split, the other vertices of a child
    are shared with its parent and were already evaluated.
    """
    lo, hi = region.lower, region.upper
    if fixed_dim is not None:
        free = free[free != fixed_dim]
    d = len(free)
    if 2 ** d <= MAX_VERTICES:
        bits = np.array(list(itertools.product((0, 1), repeat=d)), dtype=bool).reshape(2 ** d, d)
    else:
        bits = rng.random((MAX_VERTICES, d)) < 0.5
    pts = np.repeat(region.center()[None, :], len(bits) + 1, axis=0)
    if fixed_dim is not None:
        pts[:-1, fixed_dim] = lo[fixed_dim]
    if d:
        pts[:-1, free] = np.where(bits, hi[free], lo[free])
    if region.sums:
        pts = np.array([_project(region, p) for p in pts])
    return pts


class _PointValues:
    """Values at q_I of the product chain instantiated at many points at once.

    Only states reachable from q_I are iterated. Entries that do not depend on
    any parameter go through one constant sparse matrix.
    """

    def __init__(self, c, horizon):
        self.c, self.steps = c, horizon_steps(horizon)
        base = c.base
        rows = base.row_ids()
        keep = base.reachable(np.ones(base.nnz))
        keep[0] = False     # the q_I hop is applied once, after the sweeps
        # compact numbering of the reachable states
        pos = -np.ones(base.n, dtype=np.int64)
        pos[keep] = np.arange(int(keep.sum()))
        n = int(keep.sum())
        ent = keep[rows]
        var = ent & (np.diff(c.coef.tocsr().indptr) > 0)
        fix = ent & ~var
        self.M = sp.csr_matrix((c.const[fix], (pos[rows[fix]], pos[base.indices[fix]])), shape=(n, n))
        nv = int(var.sum())
        self.var_cols = pos[base.indices[var]]
        self.var_const = c.const[var]
        self.var_coef = c.coef.tocsr()[np.flatnonzero(var)]
        self.Sv = sp.csr_matrix((np.ones(nv), (pos[rows[var]], np.arange(nv))), shape=(n, nv))
        self.r = base.reward[keep][:, None]
        self.d = base.discount[keep][:, None]
        self.n = n
        a, b = base.indptr[0], base.indptr[1]
        self.init_idx, self.init_p = pos[base.indices[a:b]], base.probs[a:b]

    def __call__(self, points):
        c = self.c
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.steps is None:
            return np.array([vi_point(instantiate(c, p), None).initial for p in points])
        P = np.repeat(self.var_const[:, None], len(points), axis=1)
        if self.var_coef.shape[1]:
            P += np.asarray(self.var_coef @ points.T)
        V = np.zeros((self.n, len(points)))
        for _ in range(self.steps):
            V = self.r + self.d * (self.M @ V + self.Sv @ (P * V[self.var_cols]))
        return self.init_p @ V[self.init_idx]


def batch_values(c, points, horizon):
    """Values at q_I of the product chain instantiated at each point."""
    return _PointValues(c, horizon)(points)


def _affine_params(c, horizon):
    """Parameters the value depends on affinely.

    A parameter whose rows are never used twice on one path (within the
    horizon) enters every path probability at most once, so the value is
    affine in it when the others are held fixed.
    """
    base = c.base
    steps = horizon_steps(horizon)
    rows = base.row_ids()
    G = sp.csr_matrix((np.ones(base.nnz), (rows, base.indices)), shape=(base.n, base.n))
    coef = c.coef.tocsc()
    out = np.zeros(coef.shape[1], dtype=bool)
    for j in range(coef.shape[1]):
        users = np.zeros(base.n, dtype=bool)
        users[rows[coef.indices[coef.indptr[j]:coef.indptr[j + 1]]]] = True
        if not users.any():
            continue
        # rows at steps 0 .. steps - 2 carry probability into the value
        limit = base.n if steps is None else steps - 2
        front = (G.T @ users.astype(float)) > 0
        seen = front.copy()
        hit = False
        for _ in range(limit):
            if (front & users).any():
                hit = True
                break
            front = ((G.T @ front.astype(float)) > 0) & ~seen
            if not front.any():
                break
            seen |= front
        out[j] = not hit
    return out


def pla_min(c, r0, horizon, eps_pla=EPS_PLA, max_regions=MAX_REGIONS, seed=0, simple=None,
            decide=None):
    """Branch and bound for the minimum pMC value over region r0.

    Returns (value, argmin point). value is attained at the returned point and
    lies within eps_pla of the true minimum. Raises Inconclusive with the
    current bounds once max_regions regions have been refined.

    With decide=t the search may stop as soon as the comparison
    value >= t - eps_pla is settled; the incumbent only decreases and the global
    lower bound only increases, so the answer matches a full run.
    """
    s = to_simple(c) if simple is None else simple
    relax = _Relaxation(s, horizon)
    values = _PointValues(c, horizon)
    rng = np.random.default_rng(seed)
    used = c.used
    # affine parameters outside sum constraints are split into their two end faces
    faces = _affine_params(c, horizon)
    for ids, _, _ in r0.sums:
        faces[list(ids)] = False

    def pin(region):
        # parameters the controller never exercises stay at nominal
        lo = np.where(used, region.lower, np.clip(c.nominal, region.lower, region.upper))
        hi = np.where(used, region.upper, lo)
        return region.with_box(lo, hi)

    best_val, best_pt = np.inf, None

    def incumbent(region, fixed_dim=None):
        nonlocal best_val, best_pt
        free = np.flatnonzero(region.widths() > 0)
        pts = _candidates(region, free, rng, fixed_dim)
        vals = values(pts)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_pt = float(vals[i]), pts[i]

    region = pin(r0)
    incumbent(region)
    counter = itertools.count()
    lb0, score0 = relax(region, score=True)
    heap = [(lb0, next(counter), region, score0)]
    refined = 0
    while heap:
        lb, _, region, score = heapq.heappop(heap)
        if best_val - lb <= eps_pla:
            break
        if decide is not None and (best_val < decide - eps_pla or lb >= decide - eps_pla):
            break
        refined += 1
        if refined > max_regions:
            raise errors.Inconclusive(
                f"region budget of {max_regions} exhausted with gap {best_val - lb:.3g}",
                lower=lb, upper=best_val, point=best_pt)
        # split where the relaxation is loosest; fall back to the widest side
        j = int(np.argmax(score)) if score.max() > 0 else int(np.argmax(region.widths()))
        if faces[j]:
            # the minimum sits on one of the two end faces
            lo, hi = region.lower.copy(), region.upper.copy()
            hi[j] = lo[j]
            left = region.with_box(lo, hi)
            lo, hi = region.lower.copy(), region.upper.copy()
            lo[j] = hi[j]
            right = region.with_box(lo, hi)
            if 2 ** int(np.count_nonzero(region.widths() > 0)) > MAX_VERTICES:
                incumbent(left)
                incumbent(right)
        else:
            mid = 0.5 * (region.lower[j] + region.upper[j])
            lo, hi = region.lower.copy(), region.upper.copy()
            hi[j] = mid
            left = region.with_box(lo, hi)
            lo, hi = region.lower.copy(), region.upper.copy()
            lo[j] = mid
            right = region.with_box(lo, hi)
            # the new face is shared by both children; the rest belong to the parent
            incumbent(right, fixed_dim=j)
        for child in (left, right):
            clb, cscore = relax(child, score=True)
            clb = max(clb, lb)
            if clb < best_val - eps_pla:
                heapq.heappush(heap, (clb, next(counter), child, cscore))
    return best_val, best_pt


def point_value(c, point, horizon):
    return vi_point(instantiate(c, point), horizon).initial


__all__ += ["batch_values", "point_value", "pmc_probs"]
