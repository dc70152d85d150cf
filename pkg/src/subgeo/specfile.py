"""YAML chain specification files (schema version 1).

A file describes either a concrete chain (kernels, ``V``, ``C``, drift shape,
test functions) or, for constant computations only, a bare ``certificate``
block of scalars.  See the README for the full schema.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .certify import condition2_certificate, drift_constants, fit_beta
from .chain import KernelSequence
from .config import DEFAULT, Tolerances
from .constants import DriftCertificate
from .errors import DomainError
from .ratefn import PhiSpec

__all__ = ["ChainSpec", "load_spec", "parse_spec", "shipped_specs", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
_TOP_KEYS = {"schema_version", "name", "description", "states", "sequence", "v", "small_set",
             "phi", "eps_b", "f", "xi", "measures", "condition2", "corollary", "simulate",
             "horizon", "tolerances", "certificate"}


@dataclass
class ChainSpec:
    name: str
    raw: dict
    tol: Tolerances = DEFAULT
    seq: KernelSequence | None = None
    path: str | None = None
    _cert: DriftCertificate | None = field(default=None, repr=False)

    @property
    def has_chain(self) -> bool:
        return self.seq is not None

    @property
    def xis(self):
        return [float(x) for x in self.raw.get("xi", [0.0, 0.5, 1.0])]

    @property
    def functions(self):
        fs = self.raw.get("f") or []
        return [np.asarray(f, dtype=float) for f in fs]

    @property
    def measures(self):
        return [(np.asarray(a, float), np.asarray(b, float)) for a, b in self.raw.get("measures", [])]

    @property
    def horizon(self) -> int:
        return int(self.raw.get("horizon", 100))

    @property
    def lambdas(self):
        return [float(x) for x in self.raw.get("corollary", {}).get("lambdas", [0.0])]

    @property
    def simulate_opts(self) -> dict:
        return dict(self.raw.get("simulate", {}))

    def certificate(self) -> DriftCertificate:
        """The drift certificate, fitted from the chain or read from the file."""
        if self._cert is not None:
            return self._cert
        if not self.has_chain:
            c = self.raw["certificate"]
            phi = _phi(c.get("phi", {}), None)
            self._cert = DriftCertificate(phi, float(c["b_v"]), float(c["c_v"]),
                                          float(c["eps_b"]), float(c["eps_nu"]))
            return self._cert
        v = np.asarray(self.raw["v"], dtype=float)
        set_c = self.raw["small_set"]
        ph = self.raw.get("phi", {})
        beta = ph.get("beta", "fit")
        if beta == "fit":
            beta = fit_beta(self.seq, v, float(ph.get("alpha", 0.0)), set_c)
        phi = PhiSpec(float(beta), float(ph.get("alpha", 0.0)))
        eps_b = self.raw.get("eps_b")
        self._cert = drift_constants(self.seq, v, phi, set_c,
                                     None if eps_b is None else float(eps_b), self.tol)
        return self._cert

    @property
    def has_condition2(self) -> bool:
        return self.has_chain and "condition2" in self.raw

    def condition2(self, lam: float):
        """``(certificate, rescaled, report)`` for ``V = Vhat**(1 - lam*alpha)``."""
        c2 = self.raw["condition2"]
        v_hat = np.asarray(c2["v_hat"], dtype=float)
        alpha = float(c2["alpha"])
        beta = c2.get("beta", "fit")
        if beta == "fit":
            beta = fit_beta(self.seq, v_hat, alpha, c2["small_set"])
        return condition2_certificate(self.seq, v_hat, alpha, float(beta), c2["small_set"],
                                      lam, float(c2.get("eps_b", 0.5)), self.tol)

    def condition2_params(self):
        c2 = self.raw["condition2"]
        v_hat = np.asarray(c2["v_hat"], dtype=float)
        return v_hat, float(c2["alpha"])


def _phi(block, default_alpha):
    alpha = float(block.get("alpha", default_alpha or 0.0))
    beta = block.get("beta", 1.0)
    if beta == "fit":
        raise DomainError("beta: fit needs a chain")
    return PhiSpec(float(beta), alpha)


def _tolerances(block) -> Tolerances:
    if not block:
        return DEFAULT
    names = {f.name for f in dataclasses.fields(Tolerances)}
    unknown = set(block) - names
    if unknown:
        raise DomainError(f"unknown tolerance keys: {sorted(unknown)}")
    return dataclasses.replace(DEFAULT, **{k: type(getattr(DEFAULT, k))(v) for k, v in block.items()})


def parse_spec(raw: dict, path: str | None = None) -> ChainSpec:
    if not isinstance(raw, dict):
        raise DomainError("a chain spec must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DomainError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise DomainError(f"unknown keys in chain spec: {sorted(unknown)}")
    tol = _tolerances(raw.get("tolerances"))
    name = str(raw.get("name", Path(path).stem if path else "chain"))
    if "sequence" not in raw:
        if "certificate" not in raw:
            raise DomainError("spec needs either a sequence or a certificate block")
        return ChainSpec(name, raw, tol, None, path)
    s = raw["sequence"]
    seq = KernelSequence(tuple(np.asarray(k, dtype=float) for k in s["kernels"]),
                         s.get("mode", "homogeneous"))
    if "states" in raw and int(raw["states"]) != seq.n_states:
        raise DomainError(f"states={raw['states']} but kernels have {seq.n_states} states")
    for key in ("v", "small_set"):
        if key not in raw:
            raise DomainError(f"chain spec is missing {key!r}")
    return ChainSpec(name, raw, tol, seq, path)


def load_spec(path) -> ChainSpec:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return parse_spec(raw, path)


def shipped_specs() -> list[ChainSpec]:
    """The example chains bundled with the package."""
    root = resources.files("subgeo") / "chains"
    return [load_spec(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".yaml")]
