"""Observability of nonlinear systems driven by known and unknown inputs."""
__version__ = "0.1.0"

from .expr import Expr, Namespace, parse_expr, to_str, diff, var, const, param
from .lie import VectorField, Covector, gradient, lie_scalar, lie_covector, lie_bracket
from .span import SamplePlan, Codistribution, generic_rank, contains, verify_symmetry
from .model import SystemModel, ModelError
from .modelfile import parse_model, parse_model_text, dump_model, ModelSyntaxError
from .observability import (AnalysisReport, NonConvergence, orc, omega_single, omega_general,
                            extend_model, extended_codistribution, separation_check)
from .canonization import canonize_general, canonize_single, shortcut_outputs, CanonizationError
from .analysis import analyze, run_analyze, run_oracle, run_canonize, run_example
