"""Coupled pair chain ``(X_n, X'_n, D_n)`` with coupling at visits to ``C x C``.

Off ``C x C`` the two coordinates move independently with ``P_k``; on it they
couple with probability ``eps_nu`` (jointly drawn from ``nu_k``) and otherwise
move independently with the residual kernel
``Q_k = (P_k - eps_nu nu_k) / (1 - eps_nu)``.

Expectations of sums up to the coupling time ``tau`` (or the first hitting
time ``T_1`` of ``C x C``) are computed exactly by propagating the
sub-probability law of the un-coupled pair.  Pair functions are stored as
``n x n`` matrices indexed ``[x, x']``, so one step of the product kernel is
``P @ H @ P.T``.  Truncated sums carry a tail bound built from a dominating
function ``L`` with ``E_s[remaining sum] <= L(s)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import KernelSequence
from .config import DEFAULT
from .constants import (DriftCertificate, cbar_mask, lemma_first_tour_rhs, lemma_phi_sum_rhs,
                        lemma_rate_sum_rhs, theorem_c, vbar)
from .errors import ConvergenceError, DomainError, KernelError
from .ratefn import eval_phi

__all__ = ["AugmentedKernel", "AugmentedSequence", "build_augmented", "marginal_check",
           "weight_matrix", "default_dominator", "lemma_dominator", "survival_dominator",
           "DPResult", "dp_expected_sum", "dp_all_starts", "SimStats", "simulate"]


@dataclass(frozen=True)
class AugmentedKernel:
    p: np.ndarray
    q: np.ndarray            # residual kernel; rows off C are copies of p and never used
    nu: np.ndarray
    eps_nu: float
    in_c: np.ndarray
    cbar: np.ndarray

    @property
    def n_states(self):
        return self.p.shape[0]

    def step_alive(self, h: np.ndarray) -> np.ndarray:
        """Expected value of ``h`` one step ahead on ``{D = 0}``: ``K h``."""
        out = self.p @ h @ self.p.T
        if self.eps_nu < 1:
            resid = (1.0 - self.eps_nu) * (self.q @ h @ self.q.T)
            out = np.where(self.cbar, resid, out)
        else:
            out = np.where(self.cbar, 0.0, out)
        return out

    def step_off(self, h: np.ndarray) -> np.ndarray:
        """``K h`` for the chain killed on entering ``C x C`` (first-tour sums)."""
        return np.where(self.cbar, 0.0, self.p @ h @ self.p.T)

    def push_alive(self, mu: np.ndarray) -> np.ndarray:
        """Law on ``{D = 0}`` after one step, from the law ``mu`` on ``{D = 0}``."""
        off = np.where(self.cbar, 0.0, mu)
        out = self.p.T @ off @ self.p
        if self.eps_nu < 1:
            on = np.where(self.cbar, mu, 0.0)
            out += (1.0 - self.eps_nu) * (self.q.T @ on @ self.q)
        return out

    def push_off(self, mu: np.ndarray) -> np.ndarray:
        off = np.where(self.cbar, 0.0, mu)
        return self.p.T @ off @ self.p

    def coupled_inflow(self, mu: np.ndarray) -> np.ndarray:
        """Mass entering ``{D = 1}`` in one step, as a law on the diagonal."""
        return self.eps_nu * float(mu[self.cbar].sum()) * self.nu

    def dense(self) -> np.ndarray:
        """Full transition matrix on ``X x X x {0, 1}``; state ``(x, x', d)`` is
        index ``d n^2 + x n + x'``.  Only for small state spaces."""
        n = self.n_states
        nn = n * n
        out = np.zeros((2 * nn, 2 * nn))
        for x in range(n):
            for xp in range(n):
                s = x * n + xp
                if self.cbar[x, xp]:
                    out[s, :nn] = (1 - self.eps_nu) * np.outer(self.q[x], self.q[xp]).ravel()
                    out[s, nn + np.arange(n) * (n + 1)] = self.eps_nu * self.nu
                else:
                    out[s, :nn] = np.outer(self.p[x], self.p[xp]).ravel()
                if x == xp:
                    out[nn + s, nn + np.arange(n) * (n + 1)] = self.p[x]
                else:
                    out[nn + s, nn + s] = 1.0
        return out


def build_augmented(cert: DriftCertificate, k: int, seq: KernelSequence | None = None,
                    tol=DEFAULT) -> AugmentedKernel:
    seq = seq or cert.seq
    if seq is None or cert.nus is None:
        raise DomainError("certificate is not bound to a kernel sequence")
    idx = seq.index(k)
    p = seq.distinct[idx]
    nu = np.asarray(cert.nus[idx], dtype=float)
    eps = cert.eps_nu
    in_c = np.asarray(cert.small_set, dtype=bool)
    q = p.copy()
    if eps < 1:
        resid = (p[in_c] - eps * nu[None, :]) / (1.0 - eps)
        if resid.min() < -tol.negative_q:
            i, y = np.unravel_index(np.argmin(resid), resid.shape)
            raise KernelError(
                f"residual kernel negative at ({np.flatnonzero(in_c)[i]}, {y}): {resid[i, y]:.3g}")
        resid = np.clip(resid, 0.0, None)
        resid /= resid.sum(axis=1, keepdims=True)
        q[in_c] = resid
    else:
        q[in_c] = nu
    for a in (p, q):
        if np.abs(a.sum(axis=1) - 1).max() > tol.row_sum:
            raise KernelError("augmented kernel rows do not sum to one")
    if abs(nu.sum() - 1) > tol.row_sum or nu.min() < 0:
        raise KernelError("minorising measure is not a probability vector")
    q.setflags(write=False)
    return AugmentedKernel(p, q, nu, eps, in_c, cbar_mask(in_c))


class AugmentedSequence:
    """The augmented kernels for every step, built lazily per distinct kernel."""

    def __init__(self, cert: DriftCertificate, seq: KernelSequence | None = None):
        self.cert = cert
        self.seq = seq or cert.seq
        self._cache = {}

    @property
    def n_states(self):
        return self.seq.n_states

    def step(self, k: int) -> AugmentedKernel:
        idx = self.seq.index(k)
        if idx not in self._cache:
            self._cache[idx] = build_augmented(self.cert, k, self.seq)
        return self._cache[idx]

    def __getstate__(self):
        return {"cert": self.cert, "seq": self.seq, "_cache": {}}


def _point(n, x, xp):
    mu = np.zeros((n, n))
    mu[x, xp] = 1.0
    return mu


def marginal_check(aug: AugmentedSequence, x: int, xp: int, n: int) -> float:
    """Largest deviation, over times ``0..n``, between the coordinate laws of the
    coupled chain and ``delta_x P^(t)``, ``delta_x' P^(t)``."""
    size = aug.n_states
    mu = _point(size, x, xp)
    coupled = np.zeros(size)
    a = np.zeros(size)
    a[x] = 1.0
    b = np.zeros(size)
    b[xp] = 1.0
    worst = 0.0
    for t in range(n + 1):
        if t > 0:
            step = aug.step(t)
            inflow = step.coupled_inflow(mu)
            coupled = coupled @ step.p + inflow
            mu = step.push_alive(mu)
            a = a @ step.p
            b = b @ step.p
        worst = max(worst,
                    float(np.abs(mu.sum(axis=1) + coupled - a).max()),
                    float(np.abs(mu.sum(axis=0) + coupled - b).max()))
    return worst


def weight_matrix(cert: DriftCertificate, name: str) -> np.ndarray:
    """Named pair functions: ``one``, ``phi_vbar`` and ``cbar`` (indicator of ``C x C``)."""
    n = len(cert.v)
    if name == "one":
        return np.ones((n, n))
    if name == "phi_vbar":
        return eval_phi(cert.phi, vbar(cert.v))
    if name == "cbar":
        return cbar_mask(cert.small_set).astype(float)
    raise DomainError(f"unknown weight {name!r}")


def lemma_dominator(cert: DriftCertificate, g: np.ndarray, rate, stop: str) -> np.ndarray:
    """Pointwise bound on the expected remaining (rate-normalised) sum built from
    the pairwise expectation bounds.

    For ``stop='tau'``: ``g <= max g`` gives ``max g * L_rate``; with unit rate
    ``g <= (max g/phi(Vbar)) phi(Vbar)`` also gives a multiple of the
    phi-sum bound, and the pointwise minimum of two bounds is a bound.  For
    ``stop='T1'`` the first-tour bound is used.  Since these are the very
    bounds the verifier checks, this dominator is not used there.
    """
    gmax = float(g.max())
    if stop == "T1":
        return gmax * lemma_first_tour_rhs(cert)
    dom = gmax * lemma_rate_sum_rhs(cert, theorem_c(cert))
    if rate is None:
        ratio = float((g / eval_phi(cert.phi, vbar(cert.v))).max())
        dom = np.minimum(dom, ratio * lemma_phi_sum_rhs(cert))
    return dom


def _phases(seq: KernelSequence) -> int:
    return 1 if seq.mode == "homogeneous" else len(seq.kernels)


def survival_dominator(aug: "AugmentedSequence", g: np.ndarray, rate, stop: str,
                       n_max: int = DEFAULT.dp_max_steps) -> np.ndarray:
    """Constant bound on the expected remaining sum from any pair at any time.

    Let ``s`` be the largest probability, over starts and kernel phases, of
    still running after ``L`` steps.  Then the chance of running at time
    ``jL + i`` is at most ``s**j``, and ``r(jL + i) <= r(L)**j r(i)`` gives
    ``sum_t r(t) g P(running at t) <= max g * R_L / (1 - s r(L))`` with
    ``R_L = sum_{i<L} r(i)``.  ``L`` doubles until ``s r(L) <= 1/2``.
    Independent of every drift-based bound, so safe for checking them.
    """
    _check_stop(stop)
    r = _rates(aug.cert, rate)
    gmax = float(np.max(g))
    n = aug.n_states
    length = 8
    while True:
        s = 0.0
        for ph in range(_phases(aug.seq)):
            h = np.ones((n, n))
            for t in range(1, length + 1):
                step = aug.step(ph + t)
                h = step.step_alive(h) if stop == "tau" else step.step_off(h)
            s = max(s, float(h.max()))
        r_l = r(length)
        if s * r_l <= 0.5:
            r_sum = math.fsum(r(i) for i in range(length))
            return np.full((n, n), gmax * r_sum / (1.0 - s * r_l))
        if length >= n_max:
            raise ConvergenceError(f"survival still {s:.3g} after {length} steps")
        length *= 2


def default_dominator(aug: "AugmentedSequence", g: np.ndarray, rate, stop: str) -> np.ndarray:
    return survival_dominator(aug, g, rate, stop)


@dataclass(frozen=True)
class DPResult:
    value: object     # float for a single start, matrix over starts otherwise
    tail: object
    steps: int


def _rates(cert, rate):
    if rate is None:
        return lambda n: 1.0
    if rate == "r":
        return cert.r
    raise DomainError("rate must be None (unit) or 'r'")


def _dominator(aug, g, rate, stop, dominator):
    if dominator is None or dominator == "survival":
        return survival_dominator(aug, g, rate, stop)
    if isinstance(dominator, str):
        if dominator == "lemma":
            return lemma_dominator(aug.cert, g, rate, stop)
        raise DomainError(f"unknown dominator {dominator!r}")
    return np.asarray(dominator, dtype=float)


def _check_stop(stop):
    if stop not in ("tau", "T1"):
        raise DomainError(f"stop must be 'tau' or 'T1', got {stop!r}")


def dp_expected_sum(aug: AugmentedSequence, start, weight="one", rate=None, stop="tau",
                    inclusive=True, tol=DEFAULT.dp_tol, n_max=DEFAULT.dp_max_steps,
                    dominator=None) -> DPResult:
    """``E_{x,x',0}[sum_{n < stop} rate(n) g(X_n, X'_n)]`` by forward propagation.

    With ``stop='T1'`` the sum runs over ``0..T_1`` (``inclusive``) or
    ``0..T_1 - 1``.  Propagation stops once ``tail <= tol * value``; the
    returned tail bounds the omitted remainder.
    """
    _check_stop(stop)
    cert = aug.cert
    g = weight_matrix(cert, weight) if isinstance(weight, str) else np.asarray(weight, float)
    if np.any(g < 0):
        raise DomainError("weight must be non-negative")
    dom = _dominator(aug, g, rate, stop, dominator)
    r = _rates(cert, rate)
    x, xp = start
    mu = _point(aug.n_states, x, xp)
    value = 0.0
    first = aug.step(1)
    contrib_mask = (np.ones_like(g, dtype=bool) if stop == "tau" or inclusive else ~first.cbar)
    for n in range(n_max + 1):
        tail = r(n) * float((mu * dom).sum())
        if tail <= tol * value or tail == 0.0:
            return DPResult(value, tail, n)
        value += r(n) * float((mu * g)[contrib_mask].sum())
        step = aug.step(n + 1)
        mu = step.push_alive(mu) if stop == "tau" else step.push_off(mu)
    raise ConvergenceError(f"mass did not decay within {n_max} steps")


def _backward(aug, g, dom, r, stop, inclusive, horizon):
    first = aug.step(1)
    contrib = g if stop == "tau" or inclusive else np.where(first.cbar, 0.0, g)
    val = np.zeros_like(g)
    tail = r(horizon) * dom
    for n in range(horizon - 1, -1, -1):
        step = aug.step(n + 1)
        move = step.step_alive if stop == "tau" else step.step_off
        val = r(n) * contrib + move(val)
        tail = move(tail)
    return val, tail


def dp_all_starts(aug: AugmentedSequence, weight="one", rate=None, stop="tau", inclusive=True,
                  tol=DEFAULT.dp_tol, n_max=DEFAULT.dp_max_steps, dominator=None,
                  horizon=64) -> DPResult:
    """Same sums as :func:`dp_expected_sum` for every start pair at once.

    Uses the backward recursion ``h_n = rate(n) g + K_{n+1} h_{n+1}`` with a
    horizon that doubles until every start meets ``tail <= tol * value``.
    """
    _check_stop(stop)
    cert = aug.cert
    g = weight_matrix(cert, weight) if isinstance(weight, str) else np.asarray(weight, float)
    dom = _dominator(aug, g, rate, stop, dominator)
    r = _rates(cert, rate)
    while True:
        val, tail = _backward(aug, g, dom, r, stop, inclusive, horizon)
        if np.all(tail <= tol * val):
            return DPResult(val, tail, horizon)
        if horizon >= n_max:
            raise ConvergenceError(f"tail still above tolerance at horizon {horizon}")
        horizon = min(2 * horizon, n_max)


@dataclass(frozen=True)
class SimStats:
    """Per-statistic mean, variance and standard error over replicates."""

    replicates: int
    master_seed: int
    mean: dict
    variance: dict
    std_error: dict
    samples: dict

    STATS = ("tau", "sum_r", "sum_phi_vbar", "t1")


def _substream_key(master_seed: int) -> np.ndarray:
    return np.random.SeedSequence(master_seed).generate_state(2, np.uint64)


def _generator(key, replicate: int) -> np.random.Generator:
    # counter-based substream: the top counter word is the replicate index
    return np.random.Generator(np.random.Philox(counter=[0, 0, 0, replicate], key=key))


def _sample_rows(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[:, None] >= cum[rows]).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


def _run_chunk(aug, key, start, lo, hi, phi_vbar, block, max_steps):
    m = hi - lo
    gens = [_generator(key, i) for i in range(lo, hi)]
    x = np.full(m, start[0])
    xp = np.full(m, start[1])
    tau = np.zeros(m, dtype=np.int64)
    t1 = np.full(m, -1, dtype=np.int64)
    sum_r = np.zeros(m)
    sum_phi = np.zeros(m)
    alive = np.arange(m)
    buf = np.empty((m, block, 3))
    cache = {}
    n = 0
    while alive.size:
        if n > max_steps:
            raise ConvergenceError(f"replicate exceeded {max_steps} steps")
        if n % block == 0:
            for i in alive:
                buf[i] = gens[i].random((block, 3))
        step = aug.step(n + 1)
        key_k = id(step)
        if key_k not in cache:
            cache[key_k] = (np.cumsum(step.p, axis=1), np.cumsum(step.q, axis=1))
        cum_p, cum_q = cache[key_k]
        xa, xpa = x[alive], xp[alive]
        sum_r[alive] += aug.cert.r(n)
        sum_phi[alive] += phi_vbar[xa, xpa]
        in_cb = step.cbar[xa, xpa]
        fresh = in_cb & (t1[alive] < 0)
        t1[alive[fresh]] = n
        u = buf[alive, n % block]
        couple = in_cb & (u[:, 0] < step.eps_nu)
        tau[alive[couple]] = n + 1
        keep = ~couple
        alive, xa, xpa, in_cb, u = alive[keep], xa[keep], xpa[keep], in_cb[keep], u[keep]
        nx_p = _sample_rows(cum_p, xa, u[:, 1])
        nxp_p = _sample_rows(cum_p, xpa, u[:, 2])
        nx_q = _sample_rows(cum_q, xa, u[:, 1])
        nxp_q = _sample_rows(cum_q, xpa, u[:, 2])
        x[alive] = np.where(in_cb, nx_q, nx_p)
        xp[alive] = np.where(in_cb, nxp_q, nxp_p)
        n += 1
    return tau, sum_r, sum_phi, t1


def simulate(aug: AugmentedSequence, start, replicates: int, master_seed: int,
             threads: int | None = None, chunk: int = 4096, block: int = 128,
             max_steps: int = DEFAULT.sim_max_steps) -> SimStats:
    """Monte Carlo estimates of ``tau``, ``sum_{n<tau} r(n)``, ``sum_{n<tau} phi(Vbar)`` and ``T_1``.

    Replicate ``i`` draws from a Philox stream keyed by ``master_seed`` with
    counter offset ``i``, so results do not depend on chunking or thread count.
    Aggregates use exactly rounded sums.
    """
    if replicates < 1:
        raise DomainError("need at least one replicate")
    if not 0 <= master_seed < 2 ** 64:
        raise DomainError("seed must be an unsigned 64-bit integer")
    threads = threads or int(os.environ.get("SUBGEO_THREADS", "1"))
    key = _substream_key(master_seed)
    phi_vbar = weight_matrix(aug.cert, "phi_vbar")
    for k in range(1, len(aug.seq.kernels) + 1):
        aug.step(k)
    bounds = [(lo, min(lo + chunk, replicates)) for lo in range(0, replicates, chunk)]
    run = lambda b: _run_chunk(aug, key, tuple(start), b[0], b[1], phi_vbar, block, max_steps)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    cols = [np.concatenate([p[j] for p in parts]) for j in range(4)]
    samples = dict(zip(SimStats.STATS, cols))
    mean, var, se = {}, {}, {}
    for name, arr in samples.items():
        vals = arr.astype(float).tolist()
        mu = math.fsum(vals) / replicates
        v = math.fsum((a - mu) ** 2 for a in vals) / (replicates - 1) if replicates > 1 else 0.0
        mean[name], var[name], se[name] = mu, v, math.sqrt(v / replicates)
    return SimStats(replicates, master_seed, mean, var, se, samples)
