"""Period function derivatives of planar centers via normalizers of the vector field."""

from .errors import PeriodNormError
from .expr import compile_expr, differentiate, evaluate, fold, parse
from .fields import Point, SystemDef, builtin_names, builtin_system
from .flow import Cycle, find_cycle, integrate
from .liecalc import (combine_normalizer, lie_bracket, mu_from_bracket, normalizer_gradient,
                      normalizer_kappa, normalizer_separable, normalizer_zeta)
from .period import (PeriodDerivativeReport, PeriodOptions, analyze_cycle, analyze_level,
                     critical_cycles, scan_annulus)
from .verify import VerificationReport, run_checks

__version__ = "0.1.0"

__all__ = [
    "Cycle", "PeriodDerivativeReport", "PeriodNormError", "PeriodOptions", "Point", "SystemDef",
    "VerificationReport", "analyze_cycle", "analyze_level", "builtin_names", "builtin_system",
    "combine_normalizer", "compile_expr", "critical_cycles", "differentiate", "evaluate",
    "find_cycle", "fold", "integrate", "lie_bracket", "mu_from_bracket", "normalizer_gradient",
    "normalizer_kappa", "normalizer_separable", "normalizer_zeta", "parse", "run_checks",
    "scan_annulus",
]
