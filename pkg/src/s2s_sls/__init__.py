"""Learned step-to-step models and system-level synthesis for push-robust walking."""
from .config import ExperimentConfig
from .hlip import DiscreteState, HlipParams
from .learn import S2SModel, fit_linf
from .lp import LpProblem, LpSolution, LpStatus, solve
from .sets import BoxSet
from .sls import FirController, SynthesisInfeasible, synthesize

__all__ = [
    "BoxSet",
    "DiscreteState",
    "ExperimentConfig",
    "FirController",
    "HlipParams",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "S2SModel",
    "SynthesisInfeasible",
    "fit_linf",
    "solve",
    "synthesize",
]

__version__ = "0.1.0"
