"""Explicit constants for summed sub-geometric convergence bounds.

Given drift/minorisation data (a :class:`DriftCertificate`) this module
assembles ``bar_b``, ``M_1``, ``c_*`` and the final constant ``c`` for the bound

    sum_n psi1(r(n)) |P^(n) f(x) - P^(n) f(x')| <= c (V(x) + V(x') - 1) ||f||_W,

plus the polynomial-drift helpers and the pairwise right-hand sides of the
intermediate expectation bounds that the verifier checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT
from .errors import ConvergenceError, DomainError
from .ratefn import PhiSpec, delta_k, eval_phi, rate_r
from .young import make_pair

__all__ = [
    "DriftCertificate", "TheoremConstants", "Rescaled",
    "bar_b", "m_one", "c_star", "theorem_c",
    "poly_min_const", "poly_corollary_const", "rescale_condition2",
    "vbar", "cbar_mask", "lemma_phi_sum_rhs", "lemma_first_tour_rhs", "lemma_rate_sum_rhs",
]


@dataclass(frozen=True)
class DriftCertificate:
    """Drift and one-step minorisation constants for a kernel sequence.

    ``v``/``small_set``/``nus``/``seq`` may be omitted when only the scalar
    constants are of interest.  ``small_set`` is a boolean mask over states and
    ``nus[i]`` is the minorising law of ``seq.kernels[i]``.
    """

    phi: PhiSpec
    b_v: float
    c_v: float
    eps_b: float
    eps_nu: float
    v: np.ndarray | None = None
    small_set: np.ndarray | None = None
    nus: tuple | None = None
    seq: object = field(default=None, compare=False)

    def __post_init__(self):
        if not self.b_v >= 0:
            raise DomainError(f"b_v must be non-negative, got {self.b_v}")
        if not self.c_v >= 1:
            raise DomainError(f"c_v must be at least 1, got {self.c_v}")
        if not 0 < self.eps_b < 1:
            raise DomainError(f"eps_b must lie in (0, 1), got {self.eps_b}")
        if not 0 < self.eps_nu <= 1:
            raise DomainError(f"eps_nu must lie in (0, 1], got {self.eps_nu}")
        if self.v is not None:
            v = np.asarray(self.v, dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, "v", v)
            if np.any(v < 1):
                raise DomainError("V must be >= 1 everywhere")
            mask = np.asarray(self.small_set, dtype=bool)
            mask.setflags(write=False)
            object.__setattr__(self, "small_set", mask)
            if mask.shape != v.shape or not mask.any():
                raise DomainError("small set must be a non-empty mask over the states")
            if v[mask].max() > self.c_v:
                raise DomainError("sup_C V exceeds c_v")
            if (~mask).any():
                inf_off = float(eval_phi(self.phi, v[~mask]).min())
                if inf_off < self.b_v / (1 - self.eps_b):
                    raise DomainError("inf off C of phi(V) is below b_v / (1 - eps_b)")

    @property
    def phi_one(self) -> float:
        return self.phi.phi_one

    def r(self, n):
        return rate_r(self.phi, self.eps_b, n)


@dataclass(frozen=True)
class TheoremConstants:
    bar_b: float
    m_one: float
    c_star: float
    c: float
    series_terms_used: int
    series_tail_bound: float
    r_one: float


def bar_b(cert: DriftCertificate) -> float:
    return 2.0 * cert.b_v + cert.eps_b * cert.phi_one


def m_one(cert: DriftCertificate) -> float:
    if cert.eps_nu >= 1.0:
        raise DomainError("M_1 is undefined for eps_nu = 1 (coupling is certain; c_* = 1)")
    r1 = cert.r(1)
    return r1 * (1.0 + 2.0 * r1 / (cert.eps_b * cert.phi_one)
                 * ((cert.b_v + cert.c_v) / (1.0 - cert.eps_nu) - 1.0))


def c_star(cert: DriftCertificate, tol: float = DEFAULT.c_star_tol,
           max_terms: int = DEFAULT.c_star_max_terms):
    """Upper bound on ``sum_j (1-eps_nu)^(j-1) prod_{k<j} (1 + delta_k M_1)``.

    Returns ``(value, terms, tail)``.  The term ratios
    ``rho_j = (1-eps_nu)(1 + delta_j M_1)`` are non-increasing, so once
    ``rho_J < 1`` the remainder is at most ``t_J rho_J / (1 - rho_J)``; that
    bound is added to the partial sum.  Accumulation is in log space because
    the product can exceed the double range before the geometric factor wins.
    """
    eps = cert.eps_nu
    if eps >= 1.0:
        return 1.0, 1, 0.0
    if cert.phi.alpha == 0.0:
        return 1.0 / eps, 1, 0.0
    m1 = m_one(cert)
    log_q = math.log1p(-eps)
    log_t = 0.0
    log_s = 0.0
    for j in range(1, max_terms + 1):
        d = float(delta_k(cert.phi, cert.eps_b, j))
        log_rho = log_q + math.log1p(d * m1)
        if log_rho < 0.0:
            rho = math.exp(log_rho)
            log_tail = log_t + log_rho - math.log1p(-rho)
            if log_tail < math.log(tol) + log_s:
                log_total = np.logaddexp(log_s, log_tail)
                if log_total > math.log(np.finfo(float).max):
                    raise OverflowError(f"c_* = exp({log_total:.6g}) exceeds double range")
                return math.exp(log_total), j, math.exp(log_tail)
        log_t += log_rho
        log_s = float(np.logaddexp(log_s, log_t))
    raise ConvergenceError(f"c_* series did not settle within {max_terms} terms")


def theorem_c(cert: DriftCertificate, tol: float = DEFAULT.c_star_tol) -> TheoremConstants:
    bb = bar_b(cert)
    cs, terms, tail = c_star(cert, tol)
    r1 = cert.r(1)
    ebp = cert.eps_b * cert.phi_one
    m1 = m_one(cert) if cert.eps_nu < 1 else float("nan")
    c = 2.0 / ebp * (2.0 + bb / cert.eps_nu + cs * bb * r1 * (1.0 + r1 / ebp))
    if not math.isfinite(c):
        raise OverflowError("theorem constant c is not finite in double precision")
    return TheoremConstants(bb, m1, cs, c, terms, tail, r1)


def poly_min_const(alpha: float, beta: float, eps_b: float) -> float:
    """``min(1, (eps_b beta (1-alpha))**(alpha/(1-alpha)))``, so that ``r(n) >= it * (n+1)**(alpha/(1-alpha))``."""
    PhiSpec(beta, alpha)
    if not 0 < eps_b < 1:
        raise DomainError("eps_b must lie in (0, 1)")
    return min(1.0, (eps_b * beta * (1 - alpha)) ** (alpha / (1 - alpha)))


def poly_corollary_const(alpha: float, beta: float, eps_b: float, xi: float) -> float:
    """Multiplier ``K`` with ``sum (n+1)**(xi a/(1-a)) |Delta_n f| <= K c ||f||_{V**(a(1-xi))} Vbar``.

    From ``psi1(r(n)) >= a1 c0**xi (n+1)**(xi a/(1-a))`` and
    ``W = a2 V**(a(1-xi))`` with the stored prefactors of :func:`make_pair`,
    ``K = c0**(-xi) / (a1 a2)``.  Since ``phi(V)/phi(1) = V**alpha`` there is
    no beta dependence beyond ``c0``.
    """
    pair = make_pair(xi)
    c0 = poly_min_const(alpha, beta, eps_b)
    return c0 ** (-xi) / (pair.a1 * pair.a2)


@dataclass(frozen=True)
class Rescaled:
    eta: float
    alpha_lambda: float
    phi: PhiSpec
    b_v: float
    c_v: float
    eps_b: float


def rescale_condition2(alpha, beta, b_hat, c_hat, lam, eps_b_target) -> Rescaled:
    """Drift data for ``V = Vhat**eta`` with ``eta = 1 - lam*alpha``.

    The new shape is ``eta*beta*v**alpha_lambda``, ``b_V = b_hat**eta + phi_new(c_hat)``
    and ``c_V`` is the smallest value ``>= c_hat`` with
    ``phi_new(c_V) >= b_V / (1 - eps_b)``.  The matching small set is
    ``{x : V(x) <= c_V}``.
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if not beta > 0 or not b_hat >= 0 or not c_hat >= 1:
        raise DomainError("need beta > 0, b_hat >= 0, c_hat >= 1")
    if not 0 <= lam < 1:
        raise DomainError("lambda must lie in [0, 1)")
    if not 0 < eps_b_target < 1:
        raise DomainError("eps_b must lie in (0, 1)")
    eta = 1.0 - lam * alpha
    a_lam = alpha * (1.0 - lam) / eta
    phi_new = PhiSpec(eta * beta, a_lam)
    b_v = b_hat ** eta + eval_phi(phi_new, c_hat)
    need = b_v / (1.0 - eps_b_target)
    log_level = math.log(need / phi_new.beta) / a_lam
    if log_level > 700.0:
        raise DomainError(f"level c_V = exp({log_level:.4g}) overflows; lambda is too close to 1")
    c_v = max(c_hat, math.exp(log_level))
    while eval_phi(phi_new, c_v) < need:
        c_v = math.nextafter(c_v, math.inf)
    # exp/pow rounding can overshoot by a few ulps
    while c_v > c_hat and eval_phi(phi_new, math.nextafter(c_v, 0.0)) >= need:
        c_v = math.nextafter(c_v, 0.0)
    return Rescaled(eta, a_lam, phi_new, b_v, c_v, eps_b_target)


def vbar(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[:, None] + v[None, :] - 1.0


def cbar_mask(small_set) -> np.ndarray:
    m = np.asarray(small_set, dtype=bool)
    return m[:, None] & m[None, :]


def lemma_phi_sum_rhs(cert: DriftCertificate) -> np.ndarray:
    """``Vbar/eps_b + bar_b/(eps_b eps_nu)`` over all pairs."""
    return vbar(cert.v) / cert.eps_b + bar_b(cert) / (cert.eps_b * cert.eps_nu)


def lemma_first_tour_rhs(cert: DriftCertificate) -> np.ndarray:
    """``1 + r(1)/(eps_b phi(1)) (Vbar - 1)`` off the product small set, 1 on it."""
    k = cert.r(1) / (cert.eps_b * cert.phi_one)
    return 1.0 + k * (vbar(cert.v) - 1.0) * ~cbar_mask(cert.small_set)


def lemma_rate_sum_rhs(cert: DriftCertificate, consts: TheoremConstants | None = None) -> np.ndarray:
    consts = consts or theorem_c(cert)
    ebp = cert.eps_b * cert.phi_one
    r1 = consts.r_one
    vb = vbar(cert.v)
    cb = consts.c_star * consts.bar_b * r1
    return (vb - 1.0 + cb * (1.0 + r1 / ebp * (vb - 1.0))) / ebp
