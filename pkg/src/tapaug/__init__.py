"""Exact-arithmetic toolkit for the tree augmentation problem."""
from .core import Link, TapInstance, contract, load_instance, dump_instance, shadow_closure, shadow_complete
from .errors import (
    BoundViolation,
    CapExceededError,
    CertificateFailure,
    InfeasibleError,
    InvalidInstanceError,
    NoSubtreeFound,
    TapError,
)
from .exact import solve_exact, solve_exact_subset
from .generate import generate
from .lp import build_bunch3_lp, build_cut_lp, build_kbranch_lp, solve_lp
from .bounded import PipelineParams, lazy_kbranch_driver, solve_diameter_le7
from .unitgap import build_dual, check_certificate, iterative_contraction

__version__ = "0.1.0"
