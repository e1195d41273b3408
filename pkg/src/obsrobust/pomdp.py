"""POMDP, belief and finite-state controller types with nominal evaluation."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import errors

TOL = 1e-9


def horizon_steps(h):
    """Normalize a horizon setting to an int (finite) or None (infinite)."""
    if h is None:
        return None
    if isinstance(h, str):
        if h.strip().lower() in ("inf", "infinite", "infinity"):
            return None
        h = int(h)
    if isinstance(h, float):
        if math.isinf(h):
            return None
        if h != int(h):
            raise ValueError(f"horizon must be an integer, got {h}")
        h = int(h)
    if h < 0:
        raise ValueError(f"horizon must be non-negative, got {h}")
    return int(h)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pomdp:
    """Tabular POMDP.

    T[s, a, s'], Z[a, s', o], R[s, a]. horizon is an int or None (infinite).
    """
    states: tuple
    actions: tuple
    observations: tuple
    T: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    discount: float
    b0: np.ndarray
    horizon: object = None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "T", _frozen(self.T))
        object.__setattr__(self, "Z", _frozen(self.Z))
        object.__setattr__(self, "R", _frozen(self.R))
        object.__setattr__(self, "b0", _frozen(self.b0))
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "horizon", horizon_steps(self.horizon))
        nS, nA, nO = len(self.states), len(self.actions), len(self.observations)
        if self.T.shape != (nS, nA, nS):
            raise errors.IndexMismatch(f"T has shape {self.T.shape}, expected {(nS, nA, nS)}")
        if self.Z.shape != (nA, nS, nO):
            raise errors.IndexMismatch(f"Z has shape {self.Z.shape}, expected {(nA, nS, nO)}")
        if self.R.shape != (nS, nA):
            raise errors.IndexMismatch(f"R has shape {self.R.shape}, expected {(nS, nA)}")
        if self.b0.shape != (nS,):
            raise errors.IndexMismatch(f"b0 has shape {self.b0.shape}, expected {(nS,)}")

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def n_observations(self):
        return len(self.observations)

    def state_index(self, name):
        return self.states.index(name)

    def action_index(self, name):
        return self.actions.index(name)

    def observation_index(self, name):
        return self.observations.index(name)

    def replace(self, **kw):
        d = dict(states=self.states, actions=self.actions, observations=self.observations,
                 T=self.T, Z=self.Z, R=self.R, discount=self.discount, b0=self.b0,
                 horizon=self.horizon)
        d.update(kw)
        return Pomdp(**d)

    def __eq__(self, other):
        if not isinstance(other, Pomdp):
            return NotImplemented
        return (self.states == other.states and self.actions == other.actions
                and self.observations == other.observations
                and self.discount == other.discount and self.horizon == other.horizon
                and np.array_equal(self.T, other.T) and np.array_equal(self.Z, other.Z)
                and np.array_equal(self.R, other.R) and np.array_equal(self.b0, other.b0))

    __hash__ = None


@dataclass(frozen=True)
class Belief:
    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if np.any(p < -TOL) or abs(p.sum() - 1.0) > TOL:
            raise errors.InvalidDistribution(f"not a distribution: {p}")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True, eq=False)
class Fsc:
    """Finite-state controller.

    action[n] is the action index of node n; next_node[n, o] is the successor
    node index or -1 where the memory update is undefined.
    """
    nodes: tuple
    initial: int
    action: np.ndarray
    next_node: np.ndarray
    warnings: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "action", _frozen(self.action, dtype=np.int64))
        object.__setattr__(self, "next_node", _frozen(self.next_node, dtype=np.int64))
        object.__setattr__(self, "initial", int(self.initial))
        n = len(self.nodes)
        if self.action.shape != (n,):
            raise errors.IndexMismatch("action map must be total on the nodes")
        if self.next_node.ndim != 2 or self.next_node.shape[0] != n:
            raise errors.IndexMismatch("memory update table must have one row per node")
        if not 0 <= self.initial < n:
            raise errors.IndexMismatch("initial node out of range")
        if np.any(self.next_node >= n) or np.any(self.next_node < -1):
            raise errors.IndexMismatch("memory update points outside the node set")

    @property
    def n_nodes(self):
        return len(self.nodes)

    def node_index(self, name):
        return self.nodes.index(name)

    def obs_set(self, n, n2):
        """Observations that move node n to node n2."""
        return tuple(int(o) for o in np.flatnonzero(self.next_node[n] == n2))

    def successors(self, n):
        return sorted(set(int(x) for x in self.next_node[n] if x >= 0))

    def reachable_nodes(self):
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            n = stack.pop()
            for n2 in self.successors(n):
                if n2 not in seen:
                    seen.add(n2)
                    stack.append(n2)
        return seen

    def __eq__(self, other):
        if not isinstance(other, Fsc):
            return NotImplemented
        return (self.nodes == other.nodes and self.initial == other.initial
                and np.array_equal(self.action, other.action)
                and np.array_equal(self.next_node, other.next_node))

    __hash__ = None


def check_compatible(m, pi):
    if pi.next_node.shape[1] != m.n_observations:
        raise errors.IndexMismatch(
            f"controller has {pi.next_node.shape[1]} observation columns, model has {m.n_observations}")
    if np.any(pi.action < 0) or np.any(pi.action >= m.n_actions):
        raise errors.IndexMismatch("controller uses an action outside the model")


def belief_update(b, a, o, m):
    """Bayes filter step: b'(s') ~ Z(o|a,s') sum_s T(s'|s,a) b(s)."""
    probs = b.probs if isinstance(b, Belief) else np.asarray(b, dtype=float)
    pred = probs @ m.T[:, a, :]
    unnorm = m.Z[a, :, o] * pred
    total = unnorm.sum()
    if total <= 0.0:
        raise errors.ImpossibleObservation(
            f"observation {m.observations[o]!r} has probability 0 after action {m.actions[a]!r}")
    return Belief(unnorm / total)


def product_kernel(m, pi):
    """Dense kernel over (s, n) pairs, flattened as s * |N| + n.

    Also returns the per-row probability mass that hits undefined memory updates.
    """
    check_compatible(m, pi)
    nS, nN = m.n_states, pi.n_nodes
    P = np.zeros((nS * nN, nS * nN))
    missing = np.zeros(nS * nN)
    for n in range(nN):
        a = pi.action[n]
        # mass of reaching s' and moving to node n2
        for o in range(m.n_observations):
            n2 = pi.next_node[n, o]
            w = m.T[:, a, :] * m.Z[a, :, o][None, :]   # [s, s']
            if n2 < 0:
                missing[np.arange(nS) * nN + n] += w.sum(axis=1)
                continue
            P[np.arange(nS)[:, None] * nN + n, np.arange(nS)[None, :] * nN + n2] += w
    return P, missing


def _reachable(P, start):
    seen = np.zeros(P.shape[0], dtype=bool)
    seen[start] = True
    frontier = np.flatnonzero(seen)
    while frontier.size:
        nxt = np.flatnonzero((P[frontier] > 0).any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = nxt
    return seen


def fsc_value(m, pi, horizon="model", eps=1e-7):
    """Value of controller pi on m.

    Returns (value at b0, V[s, n]). Finite horizons use backward induction;
    infinite horizons use Jacobi sweeps until the sup-norm residual drops below
    eps * (1 - gamma) / gamma.
    """
    h = m.horizon if horizon == "model" else horizon_steps(horizon)
    g = m.discount
    if h is None and g >= 1.0:
        raise errors.NonContractive("infinite horizon needs a discount below 1")
    P, missing = product_kernel(m, pi)
    nS, nN = m.n_states, pi.n_nodes
    starts = np.flatnonzero(m.b0 > 0) * nN + pi.initial
    reach = _reachable(P, starts)
    bad = np.flatnonzero(reach & (missing > TOL))
    if bad.size:
        s, n = divmod(int(bad[0]), nN)
        raise errors.UndefinedMemoryUpdate(
            f"node {pi.nodes[n]!r} has no successor for an observation possible in state {m.states[s]!r}")
    r = m.R[:, pi.action].reshape(-1)    # index s * nN + n
    V = np.zeros(nS * nN)
    if h is not None:
        for _ in range(h):
            V = r + g * (P @ V)
    else:
        thresh = eps * (1 - g) / g if g > 0 else 0.0
        while True:
            Vn = r + g * (P @ V)
            res = np.max(np.abs(Vn - V)) if V.size else 0.0
            V = Vn
            if res <= thresh:
                break
    table = V.reshape(nS, nN)
    return float(m.b0 @ table[:, pi.initial]), table


def validate_model(m):
    """List every invariant violation as a human-readable string."""
    out = []
    nS, nA = m.n_states, m.n_actions
    for name, arr in (("T", m.T), ("Z", m.Z), ("R", m.R), ("b0", m.b0)):
        if not np.all(np.isfinite(arr)):
            out.append(f"{name} has non-finite entries")
    for s in range(nS):
        for a in range(nA):
            row = m.T[s, a]
            if np.any(row < 0) or np.any(row > 1 + TOL):
                out.append(f"T({m.states[s]}, {m.actions[a]}) has entries outside [0, 1]")
            if abs(row.sum() - 1.0) > TOL:
                out.append(f"T({m.states[s]}, {m.actions[a]}) sums to {row.sum():.12g}")
    for a in range(nA):
        for s in range(nS):
            row = m.Z[a, s]
            if np.any(row < 0) or np.any(row > 1 + TOL):
                out.append(f"Z({m.actions[a]}, {m.states[s]}) has entries outside [0, 1]")
            if abs(row.sum() - 1.0) > TOL:
                out.append(f"Z({m.actions[a]}, {m.states[s]}) sums to {row.sum():.12g}")
    for s in range(nS):
        if m.b0[s] < 0:
            out.append(f"b0({m.states[s]}) is negative")
    if abs(m.b0.sum() - 1.0) > TOL:
        out.append(f"b0 sums to {m.b0.sum():.12g}")
    if not 0.0 <= m.discount <= 1.0:
        out.append(f"discount {m.discount} outside [0, 1]")
    if m.horizon is None and m.discount >= 1.0:
        out.append("infinite horizon requires discount < 1")
    return out
