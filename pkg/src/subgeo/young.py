"""Power-family Young pairs, the weight W and weighted sup-norms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import DomainError
from .ratefn import PhiSpec, eval_phi

__all__ = ["YoungPair", "WeightW", "make_pair", "unnormalised_pair", "check_young",
           "young_gap", "weight_values", "weighted_norm"]


@dataclass(frozen=True)
class YoungPair:
    """``psi1(x) = a1 x**xi`` and ``psi2(y) = a2 y**(1 - xi)``."""

    xi: float
    a1: float
    a2: float

    def psi1(self, x):
        return self.a1 * np.asarray(x, dtype=float) ** self.xi

    def psi2(self, y):
        return self.a2 * np.asarray(y, dtype=float) ** (1.0 - self.xi)


def _round_down(x):
    return math.nextafter(x, 0.0)


def make_pair(xi: float) -> YoungPair:
    """Weighted AM-GM pair ``(x/xi)**xi * (y/(1-xi))**(1-xi) <= x + y``.

    Prefactors use ``0**0 = 1`` so ``xi = 1`` gives ``(x, 1)`` and ``xi = 0``
    gives ``(1, y)``.  Non-trivial prefactors are stored one ulp low so the
    stored pair satisfies the inequality exactly, not just up to rounding.
    """
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"xi must lie in [0, 1], got {xi}")
    a1 = xi ** -xi if xi > 0 else 1.0
    a2 = (1.0 - xi) ** -(1.0 - xi) if xi < 1 else 1.0
    if a1 != 1.0:
        a1 = _round_down(a1)
    if a2 != 1.0:
        a2 = _round_down(a2)
    return YoungPair(float(xi), a1, a2)


def unnormalised_pair(xi: float) -> YoungPair:
    """The prefactors ``1/xi`` and ``1/(1-xi)``; not a Young pair for ``xi in (0, 1)``.

    Kept only so the regression test can document the violation.
    """
    if xi in (0.0, 1.0):
        return make_pair(xi)
    if not 0.0 < xi < 1.0:
        raise DomainError(f"xi must lie in [0, 1], got {xi}")
    return YoungPair(float(xi), 1.0 / xi, 1.0 / (1.0 - xi))


def young_gap(pair: YoungPair, x: float, y: float) -> float:
    """``psi1(x) psi2(y) - (x + y)`` evaluated in 40-digit arithmetic."""
    with mpmath.workdps(40):
        x_, y_ = mpmath.mpf(x), mpmath.mpf(y)
        val = (mpmath.mpf(pair.a1) * x_ ** mpmath.mpf(pair.xi)
               * mpmath.mpf(pair.a2) * y_ ** (1 - mpmath.mpf(pair.xi)) - (x_ + y_))
        return float(val)


def check_young(pair: YoungPair, grid: int) -> float:
    """Largest ``psi1(x) psi2(y) - (x + y)`` on a log grid of ``[1, 1e8]**2``."""
    if grid < 2:
        raise DomainError("grid must have at least two points")
    pts = np.logspace(0.0, 8.0, grid)
    pts[0], pts[-1] = 1.0, 1e8
    with mpmath.workdps(40):
        a1, a2 = mpmath.mpf(pair.a1), mpmath.mpf(pair.a2)
        xi = mpmath.mpf(pair.xi)
        p1 = [a1 * mpmath.mpf(x) ** xi for x in pts]
        p2 = [a2 * mpmath.mpf(y) ** (1 - xi) for y in pts]
        worst = None
        for i, x in enumerate(pts):
            for j, y in enumerate(pts):
                gap = p1[i] * p2[j] - (mpmath.mpf(x) + mpmath.mpf(y))
                if worst is None or gap > worst:
                    worst = gap
        return float(worst)


@dataclass(frozen=True)
class WeightW:
    """``W(x) = psi2(phi(V(x)) / phi(1))`` on a finite state space."""

    phi: PhiSpec
    pair: YoungPair
    v: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return weight_values(self.phi, self.pair, self.v)


def weight_values(phi: PhiSpec, pair: YoungPair, v) -> np.ndarray:
    return pair.psi2(eval_phi(phi, np.asarray(v, dtype=float)) / phi.phi_one)


def weighted_norm(f, w) -> float:
    """``max_x |f(x)| / W(x)``; ``w`` is a :class:`WeightW` or the weight values."""
    w_vals = w.values if isinstance(w, WeightW) else np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(w_vals)):
        raise DomainError("weight has non-finite entries")
    if f.shape != w_vals.shape:
        raise DomainError("f and W must have the same shape")
    return float(np.max(np.abs(f) / w_vals))
