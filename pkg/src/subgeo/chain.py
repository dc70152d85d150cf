"""Finite-state kernels, kernel sequences, and exact evolution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .config import DEFAULT
from .errors import KernelError

__all__ = ["FiniteKernel", "KernelSequence", "evolve_function", "evolve_measure",
           "tv_distance", "stationary", "period", "check_measure"]


class FiniteKernel:
    """A row-stochastic matrix, validated on construction and read-only afterwards.

    Rows within ``tol.row_sum`` of 1 are renormalised; anything further off is
    rejected with the offending row in the message.
    """

    def __init__(self, rows, tol=DEFAULT):
        p = np.array(rows, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] == 0:
            raise KernelError(f"kernel must be a non-empty square matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise KernelError("kernel has non-finite entries")
        if np.any(p < 0):
            i, j = np.argwhere(p < 0)[0]
            raise KernelError(f"negative entry P[{i},{j}] = {p[i, j]}")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol.row_sum)
        if bad.size:
            i = bad[0]
            raise KernelError(f"row {i} sums to {sums[i]!r}, not 1 (row-sum tolerance {tol.row_sum})")
        p /= sums[:, None]
        p.setflags(write=False)
        self.matrix = p

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"FiniteKernel(n_states={self.n_states})"


@dataclass(frozen=True)
class KernelSequence:
    """The kernels ``P_1, P_2, ...`` driving an inhomogeneous chain.

    ``homogeneous`` repeats one kernel, ``cycle`` repeats the list in order and
    ``explicit`` uses the list once and then keeps the last kernel.
    """

    kernels: tuple
    mode: str = "homogeneous"
    _mats: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = tuple(k if isinstance(k, FiniteKernel) else FiniteKernel(k) for k in self.kernels)
        if not ks:
            raise KernelError("a kernel sequence needs at least one kernel")
        if self.mode not in ("homogeneous", "cycle", "explicit"):
            raise KernelError(f"unknown sequence mode {self.mode!r}")
        if self.mode == "homogeneous" and len(ks) != 1:
            raise KernelError("homogeneous mode takes exactly one kernel")
        if len({k.n_states for k in ks}) != 1:
            raise KernelError("kernels disagree on the number of states")
        object.__setattr__(self, "kernels", ks)
        object.__setattr__(self, "_mats", tuple(k.matrix for k in ks))

    @classmethod
    def homogeneous(cls, rows):
        return cls((rows,), "homogeneous")

    @property
    def n_states(self) -> int:
        return self.kernels[0].n_states

    def index(self, k: int) -> int:
        """Position in ``kernels`` of ``P_k`` (``k >= 1``)."""
        if k < 1:
            raise ValueError("kernels are indexed from 1")
        if self.mode == "homogeneous":
            return 0
        if self.mode == "cycle":
            return (k - 1) % len(self.kernels)
        return min(k, len(self.kernels)) - 1

    def matrix(self, k: int) -> np.ndarray:
        return self._mats[self.index(k)]

    def shifted(self, m: int) -> "KernelSequence":
        """The sequence ``P_{m+1}, P_{m+2}, ...``."""
        if m == 0 or self.mode == "homogeneous":
            return self
        if self.mode == "cycle":
            s = m % len(self.kernels)
            return KernelSequence(self.kernels[s:] + self.kernels[:s], "cycle")
        return KernelSequence(self.kernels[min(m, len(self.kernels) - 1):], "explicit")

    @property
    def distinct(self):
        return self._mats


def _check_dim(seq, vec, what):
    if vec.shape != (seq.n_states,):
        raise KernelError(f"{what} has shape {vec.shape}, expected ({seq.n_states},)")


def evolve_function(seq: KernelSequence, f, n: int) -> np.ndarray:
    """``P^(n) f = P_1 (P_2 (... P_n f))``; ``n = 0`` returns ``f``."""
    f = np.asarray(f, dtype=float)
    _check_dim(seq, f, "function")
    out = f.copy()
    for k in range(n, 0, -1):
        out = seq.matrix(k) @ out
    return out


def evolve_measure(seq: KernelSequence, mu, n: int) -> np.ndarray:
    """``mu P_1 ... P_n``."""
    mu = np.asarray(mu, dtype=float)
    _check_dim(seq, mu, "measure")
    out = mu.copy()
    for k in range(1, n + 1):
        out = out @ seq.matrix(k)
    return out


def check_measure(mu, n_states=None, tol=DEFAULT) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or (n_states is not None and mu.shape[0] != n_states):
        raise KernelError("measure has the wrong shape")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > tol.row_sum:
        raise KernelError("not a probability vector")
    return mu


def tv_distance(mu1, mu2, tol=DEFAULT) -> float:
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if mu1.shape != mu2.shape:
        raise KernelError("measures have different dimensions")
    if abs(mu1.sum() - mu2.sum()) > tol.row_sum:
        raise KernelError(f"mass mismatch: {mu1.sum()!r} vs {mu2.sum()!r}")
    return 0.5 * float(np.abs(mu1 - mu2).sum())


def period(p: np.ndarray) -> int:
    """Period of an irreducible kernel (BFS level differences along edges)."""
    n = p.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(p[i] > 0):
                if level[j] < 0:
                    level[j] = level[i] + 1
                    nxt.append(j)
                else:
                    g = math.gcd(g, int(level[i] + 1 - level[j]))
        frontier = nxt
    return g


def stationary(kernel, tol=DEFAULT) -> np.ndarray:
    """Invariant law of an irreducible aperiodic kernel."""
    p = kernel.matrix if isinstance(kernel, FiniteKernel) else FiniteKernel(kernel).matrix
    n = p.shape[0]
    n_comp, _ = connected_components(p > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise KernelError("kernel is reducible")
    d = period(p)
    if d != 1:
        raise KernelError(f"kernel is periodic with period {d}")
    a = p.T - np.eye(n)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(a, rhs)
    # one step of the power map removes most of the solve's residual
    pi = np.clip(pi @ p, 0.0, None)
    pi /= pi.sum()
    return pi

