"""Largest admissible observation deviation via modified bisection."""
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .chains import build_pmc, build_tsimc, build_tsmc, region_for, repair_unreachable
from .param_lifting import EPS_PLA, pla_min, point_value, to_simple
from .robust_eval import EPS_IPE, ipe_min, vi_point

EPS_MBS = 1e-7
VARIANTS = ("sticky", "nonsticky")
DEFAULT_EPS_P = {"nonsticky": 0.0, "sticky": 0.01}


def _variant(v):
    v = str(v).replace("-", "").replace("_", "").lower()
    if v not in VARIANTS:
        raise errors.InvalidQuery(f"variant must be one of {VARIANTS}, got {v!r}")
    return v


@dataclass
class RobustnessQuery:
    """Exactly one of eta (relative, Delta = eta |V0|) or delta_threshold (absolute)."""
    model: object
    policy: object
    variant: str = "nonsticky"
    eta: float = None
    delta_threshold: float = None
    horizon: object = "model"
    eps_mbs: float = EPS_MBS
    eps_inner: float = EPS_IPE
    eps_p: float = None
    discount: float = None      # evaluate with this discount instead of the model's

    def __post_init__(self):
        self.variant = _variant(self.variant)
        if (self.eta is None) == (self.delta_threshold is None):
            raise errors.InvalidQuery("give exactly one of eta or delta_threshold")
        if self.eta is not None and not self.eta >= 0:
            raise errors.InvalidQuery(f"eta must be non-negative, got {self.eta}")
        if self.delta_threshold is not None and not self.delta_threshold >= 0:
            raise errors.InvalidQuery(f"Delta must be non-negative, got {self.delta_threshold}")
        if not (self.eps_mbs > 0 and self.eps_inner > 0):
            raise errors.InvalidQuery("tolerances must be positive")
        if self.eps_p is None:
            self.eps_p = DEFAULT_EPS_P[self.variant]
        pos = self.model.Z[self.model.Z > 0]
        if not 0.0 <= self.eps_p < 1.0 or (pos.size and self.eps_p > pos.min()):
            raise errors.InvalidQuery(
                f"eps_p {self.eps_p} must lie in [0, smallest positive observation probability]")

    @property
    def effective_model(self):
        if self.discount is None:
            return self.model
        return self.model.replace(discount=self.discount)

    @property
    def effective_horizon(self):
        return self.model.horizon if self.horizon == "model" else self.horizon

    def threshold(self, v0):
        return self.eta * abs(v0) if self.eta is not None else self.delta_threshold


@dataclass
class RobustnessResult:
    delta: float
    nominal_value: float
    worst_case_value_at_delta: float
    variant: str
    iterations: list = field(default_factory=list)     # (delta, f(delta)) in evaluation order
    witness: object = None      # WorstCaseWitness (nonsticky) or parameter point (sticky)
    saturated: bool = False
    threshold: float = None     # absolute Delta used

    @property
    def worst_case_value(self):
        return self.worst_case_value_at_delta

    def __eq__(self, other):
        if not isinstance(other, RobustnessResult):
            return NotImplemented
        plain = ("delta", "nominal_value", "worst_case_value_at_delta", "variant", "saturated",
                 "threshold")
        if any(getattr(self, k) != getattr(other, k) for k in plain):
            return False
        if [tuple(t) for t in self.iterations] != [tuple(t) for t in other.iterations]:
            return False
        return _same_witness(self.witness, other.witness)


def _same_witness(a, b):
    if a is None or b is None:
        return a is b
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and np.array_equal(a, b)
    if a.value_at_initial != b.value_at_initial or a.stationary != b.stationary:
        return False
    if a.kernel is None or b.kernel is None:
        return a.kernel is None and b.kernel is None
    if a.stationary:
        return np.array_equal(a.kernel, b.kernel)
    return len(a.kernel) == len(b.kernel) and all(
        np.array_equal(x, y) for x, y in zip(a.kernel, b.kernel))


def mbs(f, a0=0.0, b0=1.0, eps_mbs=EPS_MBS, trace=None):
    """Modified bisection: largest delta with f(delta) <= 0 for monotone f.

    f(c) == 0 moves the lower end instead of stopping. Returns b0 directly when
    both ends are feasible.
    """
    def ev(x):
        v = f(x)
        if trace is not None:
            trace.append((float(x), float(v)))
        return v

    a, b = float(a0), float(b0)
    fa = ev(a)
    if fa > 0:
        raise errors.PreconditionViolated(f"f({a}) = {fa} > 0: the lower end is infeasible")
    fb = ev(b)
    if np.sign(fa) == np.sign(fb) or fb <= 0:
        return b
    while b - a > eps_mbs:
        c = 0.5 * (a + b)
        fc = ev(c)
        if fc <= 0:     # f(c) == 0 also advances the lower end
            a = c
        else:
            b = c
    return a


class _Memo:
    def __init__(self, fn):
        self.fn, self.cache = fn, {}

    def __call__(self, d):
        d = float(d)
        if d not in self.cache:
            self.cache[d] = self.fn(d)
        return self.cache[d]


def feasibility_ns(c_tz, V0, Delta, eps_ipe=EPS_IPE, eps_p=0.0, horizon=None):
    """f(delta) = V0 - Delta - worst-case value of the interval chain at delta."""
    def f(delta):
        c = repair_unreachable(build_tsimc(c_tz, delta, eps_p))
        table, _ = ipe_min(c, horizon, eps_ipe, store_kernels=False)
        return V0 - Delta - table.initial
    return _Memo(f)


def feasibility_s(c_p, V0, Delta, eps_pla=EPS_PLA, eps_p=0.01, horizon=None, simple=None):
    """-1 when the minimum over the delta region keeps the value within Delta, else +1."""
    m = c_p.model
    simple = to_simple(c_p) if simple is None else simple
    target = V0 - Delta

    def f(delta):
        r = region_for(m, delta, eps_p, c_p.params)
        v, _ = pla_min(c_p, r, horizon, eps_pla, simple=simple, decide=target)
        return -1.0 if v >= target - eps_pla else 1.0
    return _Memo(f)


def ris_ns(q):
    if q.variant != "nonsticky":
        raise errors.InvalidQuery("ris_ns needs the nonsticky variant")
    m, h = q.effective_model, q.effective_horizon
    c = build_tsmc(m, q.policy)
    v0 = vi_point(c, h, q.eps_inner).initial
    Delta = q.threshold(v0)
    f = feasibility_ns(c, v0, Delta, q.eps_inner, q.eps_p, h)
    trace = []
    # the inner tolerance is granted once, at the sign test
    delta = mbs(lambda d: f(d) - q.eps_inner, 0.0, 1.0, q.eps_mbs, trace)
    table, witness = ipe_min(repair_unreachable(build_tsimc(c, delta, q.eps_p)), h, q.eps_inner)
    return RobustnessResult(delta=delta, nominal_value=v0,
                            worst_case_value_at_delta=table.initial, variant=q.variant,
                            iterations=trace, witness=witness,
                            saturated=delta == 1.0 and len(trace) == 2, threshold=Delta)


def ris_s(q):
    if q.variant != "sticky":
        raise errors.InvalidQuery("ris_s needs the sticky variant")
    m, h = q.effective_model, q.effective_horizon
    c = build_pmc(m, q.policy)
    v0 = point_value(c, c.nominal, h)
    Delta = q.threshold(v0)
    simple = to_simple(c)
    f = feasibility_s(c, v0, Delta, q.eps_inner, q.eps_p, h, simple)
    trace = []
    delta = mbs(f, 0.0, 1.0, q.eps_mbs, trace)
    value, point = pla_min(c, region_for(m, delta, q.eps_p, c.params), h, q.eps_inner, simple=simple)
    return RobustnessResult(delta=delta, nominal_value=v0, worst_case_value_at_delta=value,
                            variant=q.variant, iterations=trace, witness=point,
                            saturated=delta == 1.0 and len(trace) == 2, threshold=Delta)


def analyze(q):
    return ris_s(q) if q.variant == "sticky" else ris_ns(q)
