"""Drift shape phi(v) = beta * v**alpha and the rate sequence it generates.

Everything here is a pure function of a :class:`PhiSpec`.  The closed forms
are the primary path; :func:`big_h_quad` and :func:`big_h_inv_bisect` are
independent numerical routes kept as self-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .config import DEFAULT
from .errors import DomainError

__all__ = [
    "PhiSpec",
    "RateTable",
    "eval_phi",
    "eval_dphi",
    "big_h",
    "big_h_quad",
    "big_h_inv",
    "big_h_inv_bisect",
    "rate_r",
    "log_rate_slope",
    "delta_k",
    "h_k",
    "rate_table",
]


@dataclass(frozen=True)
class PhiSpec:
    """Polynomial drift shape ``phi(v) = beta * v**alpha`` on ``[1, inf)``.

    ``alpha = 0`` is the constant drift ``phi == beta``.
    """

    beta: float
    alpha: float = 0.0
    family: str = "polynomial"

    def __post_init__(self):
        if self.family != "polynomial":
            raise DomainError(f"unsupported phi family {self.family!r}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be positive and finite, got {self.beta}")
        if not (0.0 <= self.alpha < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {self.alpha}")

    def scaled(self, factor: float) -> "PhiSpec":
        """The shape ``factor * phi``."""
        return PhiSpec(self.beta * factor, self.alpha, self.family)

    @property
    def phi_one(self) -> float:
        return self.beta


def _check_eps_b(eps_b):
    if not (0.0 < eps_b <= 1.0):
        raise DomainError(f"eps_b must lie in (0, 1], got {eps_b}")


def _as_float_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def eval_phi(spec: PhiSpec, v):
    """``beta * v**alpha`` for ``v >= 1`` (scalar or array)."""
    v, scalar = _as_float_array(v)
    if np.any(v < 1.0) or np.any(np.isnan(v)):
        raise DomainError("phi is defined on [1, inf)")
    out = spec.beta * v ** spec.alpha
    return float(out) if scalar else out


def eval_dphi(spec: PhiSpec, v):
    v, scalar = _as_float_array(v)
    if np.any(v < 1.0):
        raise DomainError("phi' is defined on [1, inf)")
    out = spec.alpha * spec.beta * v ** (spec.alpha - 1.0)
    return float(out) if scalar else out


def big_h(spec: PhiSpec, t: float) -> float:
    """``H(t) = int_1^t ds / phi(s)`` in closed form."""
    if not t >= 1.0:
        raise DomainError(f"H is defined on [1, inf), got t={t}")
    one_minus = 1.0 - spec.alpha
    return math.expm1(one_minus * math.log(t)) / (spec.beta * one_minus)


def big_h_quad(spec: PhiSpec, t: float, tol=DEFAULT) -> float:
    """``H(t)`` by adaptive quadrature; used to cross-check :func:`big_h`."""
    if not t >= 1.0:
        raise DomainError(f"H is defined on [1, inf), got t={t}")
    if t == 1.0:
        return 0.0
    # s = e^y turns ds / phi(s) into the smooth e^{(1-alpha) y} dy / beta
    value, _ = integrate.quad(
        lambda y: math.exp((1.0 - spec.alpha) * y) / spec.beta,
        0.0, math.log(t), epsabs=tol.quad_abs, epsrel=1e-13, limit=500,
    )
    return value


def big_h_inv(spec: PhiSpec, u: float) -> float:
    """The unique ``t >= 1`` with ``H(t) = u`` (closed form)."""
    if not u >= 0.0:
        raise DomainError(f"H^-1 is defined on [0, inf), got u={u}")
    one_minus = 1.0 - spec.alpha
    return math.exp(math.log1p(u * spec.beta * one_minus) / one_minus)


def big_h_inv_bisect(spec: PhiSpec, u: float, tol=DEFAULT) -> float:
    """Invert ``H`` by bisection on ``[1, max(2, 2 t_closed)]``.

    Stops when ``|H(t) - u| <= tol.inv_residual`` or the bracket has shrunk
    to adjacent floats.
    """
    if not u >= 0.0:
        raise DomainError(f"H^-1 is defined on [0, inf), got u={u}")
    if u == 0.0:
        return 1.0
    lo, hi = 1.0, max(2.0, 2.0 * big_h_inv(spec, u))
    while big_h(spec, hi) < u:  # only reachable through rounding in the seed
        hi *= 2.0
    best, best_res = lo, abs(big_h(spec, lo) - u)
    while True:
        mid = 0.5 * (lo + hi)
        h_mid = big_h(spec, mid)
        res = abs(h_mid - u)
        if res < best_res:
            best, best_res = mid, res
        if res <= tol.inv_residual or mid <= lo or mid >= hi:
            break
        if h_mid < u:
            lo = mid
        else:
            hi = mid
    for t in (lo, hi):
        res = abs(big_h(spec, t) - u)
        if res < best_res:
            best, best_res = t, res
    return best


def rate_r(spec: PhiSpec, eps_b: float, n):
    """``r(n) = phi(H^-1(eps_b n)) / phi(1)``, vectorised over ``n``."""
    _check_eps_b(eps_b)
    n, scalar = _as_float_array(n)
    if np.any(n < 0):
        raise DomainError("rate index must be non-negative")
    if spec.alpha == 0.0:
        out = np.ones_like(n)
    else:
        one_minus = 1.0 - spec.alpha
        out = np.exp(spec.alpha / one_minus * np.log1p(eps_b * n * spec.beta * one_minus))
    return float(out) if scalar else out


def log_rate_slope(spec: PhiSpec, eps_b: float, t):
    """``eps_b * phi'(H^-1(eps_b t))`` for real ``t >= 0``: the derivative of ``log r``."""
    _check_eps_b(eps_b)
    t, scalar = _as_float_array(t)
    if np.any(t < 0):
        raise DomainError("argument must be non-negative")
    one_minus = 1.0 - spec.alpha
    out = eps_b * spec.alpha * spec.beta / (eps_b * t * spec.beta * one_minus + 1.0)
    return float(out) if scalar else out


def delta_k(spec: PhiSpec, eps_b: float, k):
    """The decrement ``delta_k = eps_b phi'(H^-1(eps_b k))``, ``k >= 1``."""
    k_arr = np.asarray(k)
    if np.any(k_arr < 1):
        raise DomainError("delta_k is indexed from k = 1")
    return log_rate_slope(spec, eps_b, k)


def h_k(spec: PhiSpec, v: float, k: float) -> float:
    """``H^-1(H(v) + k) - H^-1(k)``: the k-th transformed drift function."""
    if not v >= 1.0 or k < 0:
        raise DomainError("h_k needs v >= 1 and k >= 0")
    return big_h_inv(spec, big_h(spec, v) + k) - big_h_inv(spec, k)


@dataclass(frozen=True)
class RateTable:
    eps_b: float
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def __getitem__(self, n):
        return self.values[n]


def rate_table(spec: PhiSpec, eps_b: float, n_max: int) -> RateTable:
    values = rate_r(spec, eps_b, np.arange(n_max + 1))
    values.setflags(write=False)
    return RateTable(eps_b, values)
