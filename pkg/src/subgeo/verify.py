"""Numerical verification of the drift, expectation and convergence bounds.

Every check returns :class:`CheckRow` records with the computed left-hand
side, a rigorous bound on any truncated remainder, the right-hand side and
the slack ``rhs - lhs - tail``.  A row passes when the slack is non-negative
up to one part in ``1e12`` of the right-hand side (floating-point rounding).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .chain import KernelSequence, stationary
from .config import DEFAULT
from .constants import (DriftCertificate, bar_b, cbar_mask, lemma_first_tour_rhs,
                        lemma_phi_sum_rhs, lemma_rate_sum_rhs, poly_corollary_const,
                        theorem_c, vbar)
from .coupling import (AugmentedSequence, dp_all_starts, marginal_check, survival_dominator,
                       weight_matrix)
from .errors import DomainError, KernelError
from .ratefn import PhiSpec, big_h, big_h_inv, eval_phi, log_rate_slope, rate_r
from .young import make_pair, weight_values, weighted_norm

__all__ = ["CheckRow", "check_bivariate_drift", "check_rate_props", "check_rate_rows",
           "check_transformed_drift", "check_lemma_bounds", "check_theorem",
           "check_corollary", "check_corollary_condition2", "check_marginals",
           "run_suite", "SUITES", "ROUNDING"]

ROUNDING = 1e-12
SUITES = ("drift", "lemmas", "theorem", "corollary", "all")


@dataclass(frozen=True)
class CheckRow:
    check_id: str
    chain_id: str
    pair: str
    lhs: float
    tail: float
    rhs: float
    steps: int = 0

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs - self.tail

    @property
    def passed(self) -> bool:
        return bool(self.slack >= -ROUNDING * max(1.0, abs(self.rhs)))

    FIELDS = ("check_id", "chain_id", "pair", "lhs", "tail", "rhs", "slack", "steps", "pass")

    def as_tuple(self):
        return (self.check_id, self.chain_id, self.pair, self.lhs, self.tail, self.rhs,
                self.slack, self.steps, self.passed)


def _pair(x, xp):
    return f"{x}|{xp}"


def _rows(check_id, chain_id, lhs, tail, rhs, mask=None, steps=0):
    lhs, tail, rhs = (np.broadcast_to(np.asarray(a, float), np.shape(lhs)) for a in (lhs, tail, rhs))
    out = []
    for (x, xp) in np.ndindex(lhs.shape):
        if mask is None or mask[x, xp]:
            out.append(CheckRow(check_id, chain_id, _pair(x, xp), float(lhs[x, xp]),
                                float(tail[x, xp]), float(rhs[x, xp]), steps))
    return out


def _aug(cert, aug):
    if aug is not None:
        return aug
    if cert.seq is None:
        raise DomainError("certificate is not bound to a kernel sequence")
    return AugmentedSequence(cert)


def _phase_indices(seq: KernelSequence):
    """Step indices ``k`` hitting every distinct kernel once."""
    return list(range(1, len(seq.kernels) + 1))


# --------------------------------------------------------------------------- drift


def check_bivariate_drift(cert: DriftCertificate, aug: AugmentedSequence | None = None,
                          chain_id: str = "") -> list[CheckRow]:
    """One-step drift of ``Vbar`` under the coupled kernel, items (i) to (iv).

    The one-step expectation is summed over the augmented transition
    structure: residual product moves plus coupled mass landing on the
    diagonal, where ``Vbar(y, y) = 2 V(y) - 1``.
    """
    aug = _aug(cert, aug)
    v = cert.v
    vb = vbar(v)
    cb = cbar_mask(cert.small_set)
    phi_vb = eval_phi(cert.phi, vb)
    bb = bar_b(cert)
    rows = []
    for k in _phase_indices(aug.seq):
        step = aug.step(k)
        free = step.p @ vb @ step.p.T
        if cert.eps_nu < 1:
            resid = step.q @ vb @ step.q.T
            coupled = (1 - cert.eps_nu) * resid + cert.eps_nu * float(step.nu @ (2 * v - 1))
        else:
            resid = None
            coupled = np.full_like(vb, float(step.nu @ (2 * v - 1)))
        lhs = np.where(cb, coupled, free)
        tag = f"[k={k}]"
        rows += _rows("drift_i" + tag, chain_id, lhs, 0.0, vb - cert.eps_b * phi_vb, ~cb)
        rows += _rows("drift_ii" + tag, chain_id, lhs, 0.0, 2 * (cert.b_v + cert.c_v) - 1, cb)
        rows += _rows("drift_iii" + tag, chain_id, lhs, 0.0, vb - cert.eps_b * phi_vb + bb * cb)
        if resid is not None:
            rows += _rows("drift_iv" + tag, chain_id, resid, 0.0,
                          2 * (cert.b_v + cert.c_v) / (1 - cert.eps_nu) - 1, cb)
    return rows


def _h_k(phi: PhiSpec, v: np.ndarray, k: int) -> np.ndarray:
    base = big_h_inv(phi, float(k))
    return np.array([big_h_inv(phi, big_h(phi, float(t)) + k) - base for t in np.ravel(v)]).reshape(np.shape(v))


def check_transformed_drift(cert: DriftCertificate, aug: AugmentedSequence | None = None,
                            k_max: int = 32, chain_id: str = "") -> list[CheckRow]:
    """``P V_{k+1} <= V_k - phi(1) r_phi(k) + b r_phi(k+1) 1_C`` for ``k <= k_max``.

    Run for the single chain (shape ``phi``, constant ``b_V``) and for the
    coupled pair chain (shape ``eps_b phi``, constant ``bar_b``, set ``C x C``).
    Reported per ``k`` as the worst state.
    """
    aug = _aug(cert, aug)
    v = cert.v
    mask = cert.small_set
    vb = vbar(v)
    cb = cbar_mask(mask)
    pair_phi = cert.phi.scaled(cert.eps_b)
    bb = bar_b(cert)
    rows = []
    uni = [_h_k(cert.phi, v, k) for k in range(k_max + 2)]
    biv = [_h_k(pair_phi, vb, k) for k in range(k_max + 2)]
    diag = [np.diag(b) for b in biv]
    for kk in _phase_indices(aug.seq):
        step = aug.step(kk)
        for k in range(k_max + 1):
            r_k = rate_r(cert.phi, 1.0, k)
            r_k1 = rate_r(cert.phi, 1.0, k + 1)
            lhs = step.p @ uni[k + 1]
            rhs = uni[k] - cert.phi_one * r_k + cert.b_v * r_k1 * mask
            i = int(np.argmin(rhs - lhs))
            rows.append(CheckRow(f"transformed_drift[k={kk}][j={k}]", chain_id, str(i),
                                 float(lhs[i]), 0.0, float(rhs[i]), k))
            s_k = rate_r(pair_phi, 1.0, k)
            s_k1 = rate_r(pair_phi, 1.0, k + 1)
            hb = biv[k + 1]
            free = step.p @ hb @ step.p.T
            if cert.eps_nu < 1:
                coupled = (1 - cert.eps_nu) * (step.q @ hb @ step.q.T) + cert.eps_nu * float(step.nu @ diag[k + 1])
            else:
                coupled = np.full_like(hb, float(step.nu @ diag[k + 1]))
            lhs2 = np.where(cb, coupled, free)
            rhs2 = biv[k] - pair_phi.phi_one * s_k + bb * s_k1 * cb
            x, xp = np.unravel_index(np.argmin(rhs2 - lhs2), lhs2.shape)
            rows.append(CheckRow(f"transformed_drift_pair[k={kk}][j={k}]", chain_id, _pair(x, xp),
                                 float(lhs2[x, xp]), 0.0, float(rhs2[x, xp]), k))
    return rows


def check_rate_props(phi: PhiSpec, eps_b: float, n_max: int):
    """Worst relative violations of ``r(n+m) <= r(n) r(m)`` and of the increment
    bound ``r(n+m) - r(n) <= eps_b phi'(H^-1(eps_b n)) r(n) sum_{k=1}^m r(k)``
    over ``0 <= n, m <= n_max``.  Negative means no violation."""
    n = np.arange(n_max + 1)
    r = rate_r(phi, eps_b, np.arange(2 * n_max + 1))
    rn = r[n][:, None]
    rnm = r[n[:, None] + n[None, :]]
    scale = np.maximum(rnm, 1.0)
    viol_i = float(((rnm - rn * r[n][None, :]) / scale).max())
    partial = np.concatenate([[0.0], np.cumsum(r[1:n_max + 1])])   # sum_{k=1}^m r(k)
    slope = log_rate_slope(phi, eps_b, n.astype(float))[:, None]
    viol_ii = float(((rnm - rn - slope * rn * partial[None, :]) / scale).max())
    return viol_i, viol_ii


def check_rate_rows(phi: PhiSpec, eps_b: float, n_max: int, chain_id: str = "") -> list[CheckRow]:
    vi, vii = check_rate_props(phi, eps_b, n_max)
    return [CheckRow("rate_submultiplicative", chain_id, f"n,m<={n_max}", vi, 0.0, 0.0, n_max),
            CheckRow("rate_increment", chain_id, f"n,m<={n_max}", vii, 0.0, 0.0, n_max)]


def check_marginals(cert, aug=None, n: int = 100, chain_id: str = "",
                    tol: float = DEFAULT.marginal) -> list[CheckRow]:
    aug = _aug(cert, aug)
    size = aug.n_states
    err = np.array([[marginal_check(aug, x, xp, n) for xp in range(size)] for x in range(size)])
    return _rows("marginal", chain_id, err, 0.0, tol, steps=n)


# --------------------------------------------------------------------------- lemmas


def check_lemma_bounds(cert: DriftCertificate, aug: AugmentedSequence | None = None,
                       chain_id: str = "", tol: float = DEFAULT.dp_tol) -> list[CheckRow]:
    """The three pairwise expectation bounds, for every start pair, by exact DP."""
    aug = _aug(cert, aug)
    consts = theorem_c(cert)
    rows = []
    phi_sum = dp_all_starts(aug, "phi_vbar", None, "tau", tol=tol)
    rows += _rows("lemma_phi_sum", chain_id, phi_sum.value, phi_sum.tail,
                  lemma_phi_sum_rhs(cert), steps=phi_sum.steps)
    tour = dp_all_starts(aug, "one", "r", "T1", inclusive=True, tol=tol)
    rows += _rows("lemma_first_tour", chain_id, tour.value, tour.tail,
                  lemma_first_tour_rhs(cert), steps=tour.steps)
    rate_sum = dp_all_starts(aug, "one", "r", "tau", tol=tol)
    rows += _rows("lemma_rate_sum", chain_id, rate_sum.value, rate_sum.tail,
                  lemma_rate_sum_rhs(cert, consts), steps=rate_sum.steps)
    return rows


# --------------------------------------------------------------------------- theorem


def _difference_sums(seq: KernelSequence, f: np.ndarray, weights: np.ndarray, measures=()):
    """``sum_n w(n) |P^(n) f(x) - P^(n) f(x')|`` for every pair, plus the same
    sums for each measure pair ``(mu1, mu2)``, over ``n < len(weights)``."""
    n = seq.n_states
    # differences ignore constants; centring keeps a constant f exactly at zero
    f = f - 0.5 * (f.max() + f.min())
    a = np.eye(n)
    pair_sum = np.zeros((n, n))
    meas_sum = np.zeros(len(measures))
    for t, w in enumerate(weights):
        if t > 0:
            a = a @ seq.matrix(t)
        m = a @ f
        pair_sum += w * np.abs(m[:, None] - m[None, :])
        for i, (mu1, mu2) in enumerate(measures):
            meas_sum[i] += w * abs(float(mu1 @ m - mu2 @ m))
    return pair_sum, meas_sum


class _Tail:
    """Bound on ``sum_{n >= N} E[1{tau > n} (r(n) + phi(Vbar_n)/phi(1))]`` per start."""

    def __init__(self, aug: AugmentedSequence):
        cert = aug.cert
        self.aug = aug
        self.cert = cert
        self.d_r = survival_dominator(aug, np.ones((aug.n_states,) * 2), "r", "tau")
        self.d_phi = survival_dominator(aug, weight_matrix(cert, "phi_vbar"), None, "tau")

    def at(self, n_steps: int) -> np.ndarray:
        h = self.cert.r(n_steps) * self.d_r + self.d_phi / self.cert.phi_one
        for k in range(n_steps, 0, -1):
            h = self.aug.step(k).step_alive(h)
        return h


def _theorem_like(aug, f, weight_fn, scale_fn, rhs_pair, rhs_meas, measures, tol_rel, n0=64,
                  n_cap=1 << 16):
    """Shared truncation loop: exact weighted difference sums up to ``N`` and
    ``scale * <mu_N, dominator>`` as the tail; ``N`` doubles until the tail is
    below ``tol_rel`` of the right-hand side at every off-diagonal pair."""
    tail_src = _Tail(aug)
    seq = aug.seq
    n_steps = n0
    off = ~np.eye(seq.n_states, dtype=bool)
    while True:
        weights = weight_fn(np.arange(n_steps))
        lhs, meas = _difference_sums(seq, f, weights, measures)
        tail = scale_fn * tail_src.at(n_steps)
        tail[~off] = 0.0            # identical starts: every difference is exactly 0
        mtail = [float(mu1 @ tail @ mu2) for mu1, mu2 in measures]
        ok = np.all(tail[off] <= tol_rel * rhs_pair[off]) and all(
            t <= tol_rel * r for t, r in zip(mtail, rhs_meas))
        if ok or n_steps >= n_cap:
            return lhs, tail, meas, mtail, n_steps
        n_steps *= 2


def _shared_stationary(seq: KernelSequence):
    """The common invariant law of all kernels, or ``None``."""
    try:
        pi = stationary(seq.kernels[0])
    except KernelError:
        return None
    for p in seq.distinct:
        if np.abs(pi @ p - pi).max() > 1e-12:
            return None
    return pi


def check_theorem(cert: DriftCertificate, f, xi: float, aug: AugmentedSequence | None = None,
                  chain_id: str = "", measures=(), use_stationary: bool = True,
                  tol: float = DEFAULT.theorem_tail) -> list[CheckRow]:
    """``sum_n psi1(r(n)) |P^(n) f(x) - P^(n) f(x')| <= c Vbar(x, x') ||f||_W`` for every pair.

    The left side is summed exactly up to ``N``; beyond ``N`` the coupling
    representation, the Young split and ``r(n+m) <= r(n) r(m)`` bound the
    remainder by ``2 ||f||_W <mu_N, r(N) D_r + D_phi / phi(1)>``.  Measure
    pairs and (when all kernels share one) the invariant law are checked too.
    """
    aug = _aug(cert, aug)
    f = np.asarray(f, dtype=float)
    pair = make_pair(xi)
    w = weight_values(cert.phi, pair, cert.v)
    fn = weighted_norm(f, w)
    c = theorem_c(cert).c
    v = cert.v
    measures = [(np.asarray(a, float), np.asarray(b, float)) for a, b in measures]
    labels = [f"mu{i}" for i in range(len(measures))]
    pi = _shared_stationary(aug.seq) if use_stationary else None
    if pi is not None:
        for x in range(len(v)):
            e = np.zeros(len(v))
            e[x] = 1.0
            measures.append((e, pi))
            labels.append(f"{x}|pi")
    rhs_pair = c * vbar(v) * fn
    rhs_meas = [c * (float(a @ v) + float(b @ v) - 1.0) * fn for a, b in measures]
    lhs, tail, meas, mtail, n_steps = _theorem_like(
        aug, f, lambda n: pair.psi1(cert.r(n)), 2.0 * fn, rhs_pair, rhs_meas, measures, tol)
    tag = f"theorem[xi={xi:g}]"
    rows = _rows(tag, chain_id, lhs, tail, rhs_pair, steps=n_steps)
    for lab, lv, tv, rv in zip(labels, meas, mtail, rhs_meas):
        kind = "theorem_stationary" if lab.endswith("pi") else "theorem_measure"
        rows.append(CheckRow(f"{kind}[xi={xi:g}]", chain_id, lab, lv, tv, rv, n_steps))
    return rows


def check_corollary(cert: DriftCertificate, f, xi: float, aug: AugmentedSequence | None = None,
                    chain_id: str = "", tol: float = DEFAULT.theorem_tail,
                    norm_weight=None, exponent=None, label: str = "corollary") -> list[CheckRow]:
    """``sum_n (n+1)**(xi a/(1-a)) |Delta_n f| <= K c ||f||_{V**(a(1-xi))} Vbar``.

    ``K`` is :func:`poly_corollary_const`.  ``norm_weight`` and ``exponent``
    override the weight and rate exponent (used by the rescaled variant to
    pass them in terms of ``Vhat``).
    """
    aug = _aug(cert, aug)
    f = np.asarray(f, dtype=float)
    a, beta = cert.phi.alpha, cert.phi.beta
    expo = xi * a / (1 - a) if exponent is None else exponent
    nw = cert.v ** (a * (1 - xi)) if norm_weight is None else np.asarray(norm_weight, float)
    fn = weighted_norm(f, nw)
    k_const = poly_corollary_const(a, beta, cert.eps_b, xi)
    c = theorem_c(cert).c
    rhs = k_const * c * fn * vbar(cert.v)
    # (n+1)**expo <= psi1(r(n)) / (a1 c0**xi) and ||f||_W = fn / a2, so the
    # theorem's tail bound times K covers the corollary's remainder
    lhs, tail, _, _, n_steps = _theorem_like(
        aug, f, lambda n: (n + 1.0) ** expo, 2.0 * k_const * fn, rhs, [], [], tol)
    return _rows(f"{label}[xi={xi:g}]", chain_id, lhs, tail, rhs, steps=n_steps)


def check_corollary_condition2(seq: KernelSequence, cert: DriftCertificate, v_hat, alpha: float,
                               lam: float, f, xi: float, chain_id: str = "",
                               tol: float = DEFAULT.theorem_tail) -> list[CheckRow]:
    """The rescaled corollary, stated in terms of ``Vhat``.

    ``cert`` must come from ``condition2_certificate(..., lam, ...)``; the rate
    exponent ``alpha (1-lam) xi / (1-alpha)`` and the norm weight
    ``Vhat**(alpha (1-lam) (1-xi))`` are formed from the original data and
    must agree with the rescaled certificate's own exponents.
    """
    v_hat = np.asarray(v_hat, dtype=float)
    eta = 1 - lam * alpha
    a_l = cert.phi.alpha
    expo = alpha * (1 - lam) * xi / (1 - alpha)
    if not math.isclose(expo, xi * a_l / (1 - a_l), rel_tol=1e-12, abs_tol=1e-15):
        raise DomainError("rescaled certificate does not match the rate exponent")
    if np.abs(v_hat ** eta - cert.v).max() > 1e-12 * cert.v.max():
        raise DomainError("certificate V is not Vhat**(1 - lam*alpha)")
    nw = v_hat ** (alpha * (1 - lam) * (1 - xi))
    return check_corollary(cert, f, xi, AugmentedSequence(cert, seq), chain_id, tol,
                           norm_weight=nw, exponent=expo, label=f"corollary[lam={lam:g}]")


# --------------------------------------------------------------------------- suites


def run_suite(spec, suite: str = "all") -> list[CheckRow]:
    """Run one named suite on a loaded :class:`~subgeo.specfile.ChainSpec`."""
    if suite not in SUITES:
        raise DomainError(f"unknown suite {suite!r}; choose from {SUITES}")
    cert = spec.certificate()
    aug = AugmentedSequence(cert)
    name = spec.name
    rows = []
    if suite in ("drift", "all"):
        rows += check_marginals(cert, aug, spec.horizon, name, spec.tol.marginal)
        rows += check_bivariate_drift(cert, aug, name)
        rows += check_transformed_drift(cert, aug, 32, name)
        rows += check_rate_rows(cert.phi, cert.eps_b, 64, name)
    if suite in ("lemmas", "all"):
        rows += check_lemma_bounds(cert, aug, name, spec.tol.dp_tol)
    if suite in ("theorem", "all"):
        for j, f in enumerate(spec.functions):
            for xi in spec.xis:
                for row in check_theorem(cert, f, xi, aug, name, spec.measures, True,
                                         spec.tol.theorem_tail):
                    rows.append(_tag(row, j))
    if suite in ("corollary", "all"):
        for j, f in enumerate(spec.functions):
            for xi in spec.xis:
                for lam in spec.lambdas:
                    if lam == 0.0:
                        got = check_corollary(cert, f, xi, aug, name, spec.tol.theorem_tail,
                                              label="corollary[lam=0]")
                        rows += [_tag(r, j) for r in got]
                    if spec.has_condition2:
                        c2cert, _, _ = spec.condition2(lam)
                        v_hat, alpha = spec.condition2_params()
                        got = check_corollary_condition2(spec.seq, c2cert, v_hat, alpha, lam, f, xi,
                                                         name, spec.tol.theorem_tail)
                        rows += [_tag(dataclasses.replace(r, check_id="c2_" + r.check_id), j) for r in got]
    return rows


def _tag(row: CheckRow, j: int) -> CheckRow:
    return dataclasses.replace(row, check_id=f"{row.check_id}[f={j}]")
