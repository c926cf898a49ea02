"""Tails, moment curves and norms of random variables in grand Lebesgue and B(phi) spaces."""
from . import bphi, conjugate, counterexamples, gls, moments, numerics, tails
from .bphi import PhiFunction, bphi_norm, bphi_tail_bound, make_phi, natural_phi, n_function, z_condition_check
from .conjugate import SampledConvexFunction, conjugate_derivative, fenchel_moreau_check
from .counterexamples import (CounterexampleReport, run_counterexample_A, run_counterexample_B,
                              run_example_equivalences)
from .errors import (ConstructionError, DivergenceError, InputError, NonConvexError, NotApplicableError,
                     QuadratureError, TailNormError)
from .gls import PsiFunction, gls_norm, gls_norm_of_tail, gls_tail_bound, make_psi, r_psi
from .moments import MomentCurve, cramer_check, log_mgf, mgf, moment, natural_psi
from .tails import NormEstimate, TailFunction, lorentz_quasinorm, make_tail

__version__ = "0.1.0"

__all__ = [
    "bphi", "conjugate", "counterexamples", "gls", "moments", "numerics", "tails",
    "PhiFunction", "bphi_norm", "bphi_tail_bound", "make_phi", "natural_phi", "n_function",
    "z_condition_check", "SampledConvexFunction", "conjugate_derivative", "fenchel_moreau_check",
    "CounterexampleReport", "run_counterexample_A", "run_counterexample_B", "run_example_equivalences",
    "ConstructionError", "DivergenceError", "InputError", "NonConvexError", "NotApplicableError",
    "QuadratureError", "TailNormError", "PsiFunction", "gls_norm", "gls_norm_of_tail", "gls_tail_bound",
    "make_psi", "r_psi", "MomentCurve", "cramer_check", "log_mgf", "mgf", "moment", "natural_psi",
    "NormEstimate", "TailFunction", "lorentz_quasinorm", "make_tail",
]
