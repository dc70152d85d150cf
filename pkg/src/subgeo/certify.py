"""Extract and check drift/minorisation constants for concrete finite kernels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import KernelSequence
from .config import DEFAULT
from .constants import DriftCertificate, rescale_condition2
from .errors import CertificationError, DomainError
from .ratefn import PhiSpec, eval_phi

__all__ = ["Minorisation", "minorisation", "drift_constants", "fit_beta", "recheck",
           "Condition2Report", "certify_condition2", "condition2_certificate", "as_mask"]


def as_mask(set_c, n_states: int) -> np.ndarray:
    """Accept a boolean mask or an iterable of state indices."""
    arr = np.asarray(set_c)
    if arr.dtype == bool:
        if arr.shape != (n_states,):
            raise DomainError("small-set mask has the wrong length")
        return arr.copy()
    mask = np.zeros(n_states, dtype=bool)
    idx = arr.astype(int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n_states):
        raise DomainError("small-set index out of range")
    mask[idx] = True
    return mask


@dataclass(frozen=True)
class Minorisation:
    eps_nu: float
    nus: tuple                      # one probability vector per distinct kernel (None if mass 0)
    masses: tuple
    witness: tuple | None = None    # (x, x', kernel) with the least row overlap when eps_nu = 0


def minorisation(seq: KernelSequence, set_c) -> Minorisation:
    """Componentwise-minimum minorisation over the rows in ``set_c``.

    For each kernel ``m_k(y) = min_{x in C} P_k(x, y)``; the common constant
    is the smallest mass and ``nu_k = m_k / |m_k|``.
    """
    mask = as_mask(set_c, seq.n_states)
    if not mask.any():
        raise DomainError("small set is empty")
    rows = np.flatnonzero(mask)
    nus, masses = [], []
    for p in seq.distinct:
        m = p[rows].min(axis=0)
        mass = float(m.sum())
        masses.append(mass)
        nus.append(m / mass if mass > 0 else None)
    eps = min(masses)
    witness = None
    if eps <= 0:
        k = masses.index(eps)
        p = seq.distinct[k]
        best = None
        for i in rows:
            for j in rows:
                ov = float(np.minimum(p[i], p[j]).sum())
                if best is None or ov < best[0]:
                    best = (ov, int(i), int(j))
        witness = (best[1], best[2], k + 1)
        eps = 0.0
    return Minorisation(min(eps, 1.0), tuple(nus), tuple(masses), witness)


def fit_beta(seq: KernelSequence, v, alpha: float, set_c) -> float:
    """Largest ``beta`` with ``P_k V <= V - beta V**alpha`` off ``C`` for every kernel."""
    v = np.asarray(v, dtype=float)
    mask = as_mask(set_c, seq.n_states)
    off = ~mask
    if not off.any():
        raise DomainError("cannot fit beta when the small set is the whole space")
    ratios = [((v - p @ v) / v ** alpha)[off].min() for p in seq.distinct]
    beta = min(ratios)
    if beta <= 0:
        raise CertificationError(
            f"V does not decrease off C (best beta {beta:.6g})",
            [(k + 1, int(np.flatnonzero(off)[np.argmin(((v - p @ v) / v ** alpha)[off])]), -float(r))
             for k, (p, r) in enumerate(zip(seq.distinct, ratios)) if r <= 0],
        )
    return beta * (1 - 1e-12)


def drift_constants(seq: KernelSequence, v, phi: PhiSpec, set_c, eps_b=None,
                    tol=DEFAULT) -> DriftCertificate:
    """Smallest ``b_V``, ``c_V`` and largest ``eps_b``, ``eps_nu`` for the given ``V``, ``phi``, ``C``.

    Raises :class:`CertificationError` listing ``(kernel, state, margin)`` when
    the drift fails off ``C``, ``eps_b`` cannot be positive or the
    minorisation constant is zero.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (seq.n_states,):
        raise DomainError("V has the wrong length")
    if np.any(v < 1):
        raise DomainError("V must be >= 1 everywhere")
    mask = as_mask(set_c, seq.n_states)
    if not mask.any():
        raise DomainError("small set is empty")
    phi_v = eval_phi(phi, v)
    violations = []
    b_v = 0.0
    for k, p in enumerate(seq.distinct):
        g = p @ v - v + phi_v
        for x in np.flatnonzero(~mask & (g > tol.check_slack)):
            violations.append((k + 1, int(x), float(g[x])))
        if mask.any():
            b_v = max(b_v, float(g[mask].max()))
    if violations:
        raise CertificationError("drift inequality fails off the small set", violations)
    c_v = float(v[mask].max())
    if (~mask).any():
        inf_off = float(phi_v[~mask].min())
        eps_max = 1.0 - b_v / inf_off
        if eps_max <= 0:
            x = int(np.flatnonzero(~mask)[np.argmin(phi_v[~mask])])
            raise CertificationError(
                "inf off C of phi(V) does not exceed b_V; no eps_b in (0, 1)",
                [(0, x, b_v - inf_off)])
        if eps_b is None:
            eps_b = min(eps_max, 1.0) * (1.0 - tol.eps_b_margin)
        elif eps_b > eps_max:
            raise CertificationError(f"requested eps_b={eps_b} exceeds the admissible {eps_max}",
                                     [(0, -1, eps_b - eps_max)])
    elif eps_b is None:
        eps_b = tol.eps_b_default
    mino = minorisation(seq, mask)
    if mino.eps_nu <= 0:
        x, xp, k = mino.witness
        raise CertificationError(
            f"no minorisation on C: rows {x} and {xp} of kernel {k} barely overlap",
            [(k, x, 0.0), (k, xp, 0.0)])
    return DriftCertificate(phi, b_v, max(c_v, 1.0), eps_b, mino.eps_nu,
                            v=v, small_set=mask, nus=mino.nus, seq=seq)


def recheck(cert: DriftCertificate, seq: KernelSequence | None = None, tol=DEFAULT):
    """Independent pointwise check of every drift/minorisation inequality.

    Returns a list of ``(kernel, state, what, margin)``; empty means the
    certificate holds for ``seq``.
    """
    seq = seq or cert.seq
    v, mask = cert.v, cert.small_set
    phi_v = eval_phi(cert.phi, v)
    bad = []
    for k, p in enumerate(seq.distinct):
        lhs = p @ v
        rhs = v - phi_v + cert.b_v * mask
        for x in np.flatnonzero(lhs - rhs > tol.check_slack):
            bad.append((k + 1, int(x), "drift", float(lhs[x] - rhs[x])))
        nu = cert.nus[k]
        if cert.eps_nu > 0:
            gap = p[mask] - cert.eps_nu * nu[None, :]
            if gap.min() < -tol.check_slack:
                i, y = np.unravel_index(np.argmin(gap), gap.shape)
                bad.append((k + 1, int(np.flatnonzero(mask)[i]), "minorisation", float(-gap[i, y])))
        if abs(nu.sum() - 1.0) > tol.row_sum or nu.min() < 0:
            bad.append((k + 1, -1, "nu", float(abs(nu.sum() - 1.0))))
    if v[mask].max() > cert.c_v + tol.check_slack:
        bad.append((0, int(np.argmax(np.where(mask, v, -np.inf))), "c_v", float(v[mask].max() - cert.c_v)))
    if (~mask).any():
        need = cert.b_v / (1 - cert.eps_b)
        off = phi_v[~mask].min()
        if off < need - tol.check_slack:
            bad.append((0, -1, "eps_b", float(need - off)))
    return bad


@dataclass
class Condition2Report:
    ok: bool
    b_hat: float
    c_hat: float
    eps_v: float
    level: float
    violations: list = field(default_factory=list)


def certify_condition2(seq: KernelSequence, v_hat, alpha: float, beta: float, set_c,
                       level: float, tol=DEFAULT) -> Condition2Report:
    """Check the two-branch polynomial drift for every kernel and uniform
    minorisation of the level set ``{Vhat <= level}``.

    ``b_hat`` is the smallest admissible ceiling on ``C`` and ``eps_v`` the
    largest componentwise-minimum minorisation constant of the level set.
    """
    v_hat = np.asarray(v_hat, dtype=float)
    mask = as_mask(set_c, seq.n_states)
    violations = []
    b_hat = 0.0
    for k, p in enumerate(seq.distinct):
        pv = p @ v_hat
        off_rhs = v_hat - beta * v_hat ** alpha
        for x in np.flatnonzero(~mask & (pv - off_rhs > tol.check_slack)):
            violations.append((k + 1, int(x), "drift", float(pv[x] - off_rhs[x])))
        b_hat = max(b_hat, float(pv[mask].max()))
    level_set = v_hat <= level
    eps_v = 0.0
    if not level_set.any():
        violations.append((0, -1, "level set empty", level))
    else:
        mino = minorisation(seq, level_set)
        eps_v = mino.eps_nu
        if eps_v <= 0:
            x, xp, k = mino.witness
            violations.append((k, x, "minorisation", 0.0))
    return Condition2Report(not violations, b_hat, float(v_hat[mask].max()), eps_v, level, violations)


def condition2_certificate(seq: KernelSequence, v_hat, alpha: float, beta: float, set_c,
                           lam: float, eps_b: float, tol=DEFAULT):
    """Certificate for ``V = Vhat**(1 - lam*alpha)`` built from polynomial-drift data.

    Returns ``(certificate, rescaled, condition2_report)``.  The certificate
    uses the rescaled ``b_V``, the small set ``{V <= c_V}`` and ``sup_C V`` as
    its ``c_V``; it is re-checked pointwise before being returned.
    """
    v_hat = np.asarray(v_hat, dtype=float)
    rep = certify_condition2(seq, v_hat, alpha, beta, set_c, level=np.inf, tol=tol)
    drift_bad = [b for b in rep.violations if b[2] == "drift"]
    if drift_bad:
        raise CertificationError("polynomial drift fails", [(k, x, m) for k, x, _, m in drift_bad])
    rs = rescale_condition2(alpha, beta, rep.b_hat, rep.c_hat, lam, eps_b)
    v = v_hat ** rs.eta
    new_c = v <= rs.c_v
    mino = minorisation(seq, new_c)
    if mino.eps_nu <= 0:
        x, xp, k = mino.witness
        raise CertificationError(
            f"level set {{V <= {rs.c_v:.6g}}} is not 1-small: rows {x}, {xp} of kernel {k}",
            [(k, x, 0.0), (k, xp, 0.0)])
    # the level c_V fixes C; the certificate only needs sup_C V <= c_V, so it
    # carries the (usually much smaller) attained supremum
    c_sup = max(float(v[new_c].max()), 1.0)
    cert = DriftCertificate(rs.phi, rs.b_v, c_sup, eps_b, mino.eps_nu,
                            v=v, small_set=new_c, nus=mino.nus, seq=seq)
    bad = recheck(cert, seq, tol)
    if bad:
        raise CertificationError("rescaled certificate fails the pointwise re-check",
                                 [(k, x, m) for k, x, _, m in bad])
    return cert, rs, rep

