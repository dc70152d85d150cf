"""Explicit summed sub-geometric convergence bounds for Markov chains, with
exact verification on finite state spaces."""
from .certify import condition2_certificate, drift_constants, fit_beta, minorisation
from .chain import FiniteKernel, KernelSequence, evolve_function, evolve_measure, stationary
from .constants import DriftCertificate, TheoremConstants, c_star, theorem_c
from .ratefn import PhiSpec, rate_r
from .young import YoungPair, make_pair

__version__ = "0.1.0"

__all__ = ["PhiSpec", "rate_r", "YoungPair", "make_pair", "DriftCertificate", "TheoremConstants",
           "c_star", "theorem_c", "FiniteKernel", "KernelSequence", "evolve_function",
           "evolve_measure", "stationary", "drift_constants", "fit_beta", "minorisation",
           "condition2_certificate", "__version__"]
