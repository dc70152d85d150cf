"""Numerical tolerances shared by every module and test."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-12            # kernel rows repaired below this, rejected above
    quad_abs: float = 1e-12           # self-check quadrature for H
    quad_rel: float = 1e-10           # closed form vs quadrature agreement
    inv_residual: float = 1e-12       # |H(t) - u| for the bisection inverse
    inv_rel: float = 1e-9             # bisection vs closed-form inverse
    rate_rel: float = 1e-12           # rate submultiplicativity and increment bounds
    c_star_tol: float = 1e-10         # relative truncation of the c* series
    c_star_max_terms: int = 1_000_000
    eps_b_margin: float = 1e-9        # relative safety margin on the largest admissible eps_b
    eps_b_default: float = 0.5        # eps_b when the small set is the whole space
    negative_q: float = 1e-12         # residual kernel entries below -this are an error
    marginal: float = 1e-12
    dp_tol: float = 1e-10             # DP truncation: tail <= dp_tol * value
    dp_max_steps: int = 1_000_000
    check_slack: float = 1e-10        # absolute slack allowed in pointwise re-checks
    theorem_tail: float = 1e-8        # theorem truncation: tail <= theorem_tail * rhs
    sim_max_steps: int = 10_000_000


DEFAULT = Tolerances()
