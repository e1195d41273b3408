"""Robustness of POMDP finite-state controllers against observation-model deviations."""
from .benchmarks import BENCHMARKS, builtin
from .chains import (build_pmc, build_product_mc, build_tsimc, build_tsmc, instantiate,
                     region_for, repair_unreachable)
from .model_io import parse_fsc, parse_pomdp, read_result, write_fsc, write_pomdp, write_result
from .param_lifting import pla_min, relax_min, to_simple
from .pomdp import Belief, Fsc, Pomdp, belief_update, fsc_value, validate_model
from .robust_eval import ipe_min, robust_backup_min, vi_point
from .search import (RobustnessQuery, RobustnessResult, analyze, feasibility_ns, feasibility_s, mbs,
                     ris_ns, ris_s)
from .validation import (brute_force_min, empirical_eta, monte_carlo, sample_extrema_ns,
                         sample_extrema_sticky, sweep, validate)

__all__ = [
    "analyze",
    "Belief",
    "belief_update",
    "BENCHMARKS",
    "brute_force_min",
    "build_pmc",
    "build_product_mc",
    "build_tsimc",
    "build_tsmc",
    "builtin",
    "empirical_eta",
    "feasibility_ns",
    "feasibility_s",
    "Fsc",
    "fsc_value",
    "instantiate",
    "ipe_min",
    "mbs",
    "monte_carlo",
    "parse_fsc",
    "parse_pomdp",
    "pla_min",
    "Pomdp",
    "read_result",
    "region_for",
    "relax_min",
    "repair_unreachable",
    "ris_ns",
    "ris_s",
    "robust_backup_min",
    "RobustnessQuery",
    "RobustnessResult",
    "sample_extrema_ns",
    "sample_extrema_sticky",
    "sweep",
    "to_simple",
    "validate",
    "validate_model",
    "vi_point",
    "write_fsc",
    "write_pomdp",
    "write_result",
]
