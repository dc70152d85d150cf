"""End-to-end acceptance criteria, one test each, with their stated tolerances and time budgets.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary) before asserting.
"""
import itertools
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from subgeo.certify import recheck
from subgeo.constants import DriftCertificate, c_star, cbar_mask
from subgeo.coupling import AugmentedSequence, dp_expected_sum, marginal_check, simulate
from subgeo.ratefn import PhiSpec, big_h, big_h_inv, big_h_inv_bisect, big_h_quad
from subgeo.specfile import shipped_specs
from subgeo.verify import (check_bivariate_drift, check_corollary, check_corollary_condition2,
                           check_lemma_bounds, check_rate_props, check_theorem)
from subgeo.young import check_young, make_pair, unnormalised_pair, young_gap

XIS = (0.0, 0.5, 1.0)


@pytest.fixture(scope="module")
def specs():
    return {s.name: s for s in shipped_specs()}


def test_c1_constant_phi_identity(report):
    t0 = time.perf_counter()
    worst = 0.0
    for eps_nu in (0.1, 0.25, 0.5, 0.9):
        cert = DriftCertificate(PhiSpec(1.0, 0.0), 1.0, 1.0, 0.5, eps_nu)
        value, _, _ = c_star(cert)
        worst = max(worst, abs(value * eps_nu - 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    report(1, ok, f"max |c* eps_nu - 1| = {worst:.2e}", elapsed)
    assert ok


def test_c2_closed_form_vs_numeric(report):
    t0 = time.perf_counter()
    grid = itertools.product((0.0, 0.2, 0.45, 0.7, 0.9), (0.1, 0.5, 1.0, 3.0, 10.0),
                             (1.0, 1.7, 5.0, 40.0, 500.0))
    worst_quad = worst_inv = 0.0
    for alpha, beta, t in grid:
        spec = PhiSpec(beta, alpha)
        u = big_h(spec, t)
        q = big_h_quad(spec, t)
        worst_quad = max(worst_quad, abs(q - u) / u if u > 0 else abs(q))
        for inv in (big_h_inv, big_h_inv_bisect):
            worst_inv = max(worst_inv, abs(big_h(spec, inv(spec, u)) - u))
    elapsed = time.perf_counter() - t0
    ok = worst_quad <= 1e-10 and worst_inv <= 1e-12 and elapsed < 5.0
    report(2, ok, f"125 points: quad rel {worst_quad:.2e}, inverse residual {worst_inv:.2e}", elapsed)
    assert ok


def test_c3_rate_properties(report):
    t0 = time.perf_counter()
    configs = [(a, b, e) for a in (0.0, 0.25, 0.5, 0.75, 0.9) for b, e in ((0.3, 0.2), (2.0, 0.9))]
    configs += [(0.5, 1.0, 0.5), (0.6, 10.0, 0.05)]
    worst = max(max(check_rate_props(PhiSpec(b, a), e, 64)) for a, b, e in configs)
    elapsed = time.perf_counter() - t0
    ok = len(configs) >= 10 and worst <= 1e-12 and elapsed < 5.0
    report(3, ok, f"{len(configs)} configurations, n,m <= 64, max relative violation {worst:.2e}",
           elapsed)
    assert ok


def test_c4_young_contract(report):
    t0 = time.perf_counter()
    worst = max(check_young(make_pair(float(xi)), 64) for xi in np.linspace(0.0, 1.0, 21))
    gap = young_gap(unnormalised_pair(0.5), 1.0, 1.0)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.0 and gap == pytest.approx(2.0, rel=1e-15) and elapsed < 5.0
    report(4, ok, f"max gap over 21 xi = {worst:.2e}; unnormalised pair gap at (1,1) = {gap!r}",
           elapsed)
    assert ok


def test_c5_marginals(report, specs):
    t0 = time.perf_counter()
    worst, pairs = 0.0, 0
    for spec in specs.values():
        aug = AugmentedSequence(spec.certificate())
        n = aug.n_states
        for x in range(n):
            for xp in range(n):
                worst = max(worst, marginal_check(aug, x, xp, 100))
                pairs += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 30.0
    report(5, ok, f"{pairs} start pairs over {len(specs)} chains, n <= 100, max deviation {worst:.2e}",
           elapsed)
    assert ok


def _identity_row(row, cert):
    """Start pairs inside C x C for the first-tour bound: T_1 = 0, so both sides equal 1."""
    if not row.check_id.startswith("lemma_first_tour"):
        return False
    x, xp = (int(s) for s in row.pair.split("|"))
    return bool(cbar_mask(cert.small_set)[x, xp])


def test_c6_lemma_suite(report, specs):
    t0 = time.perf_counter()
    rows_total, min_slack, identity, bad = 0, np.inf, [], []
    for spec in specs.values():
        cert = spec.certificate()
        assert cert.v.size <= 50
        aug = AugmentedSequence(cert)
        rows = check_bivariate_drift(cert, aug, spec.name)
        rows += check_lemma_bounds(cert, aug, spec.name, spec.tol.dp_tol)
        rows_total += len(rows)
        for row in rows:
            if _identity_row(row, cert):
                identity.append(row)
                if not (row.lhs == row.rhs == 1.0 and row.tail == 0.0):
                    bad.append(row)
            else:
                min_slack = min(min_slack, row.slack)
                if not row.slack > 0:
                    bad.append(row)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 120.0
    report(6, ok, f"{rows_total} rows; min slack {min_slack:.3g} off the {len(identity)} "
                  f"C x C first-tour rows, where lhs = rhs = 1 exactly", elapsed)
    assert ok, bad[:5]


def test_c7_theorem(report, specs):
    t0 = time.perf_counter()
    counts = {"theorem": 0, "theorem_measure": 0, "theorem_stationary": 0}
    bad, ratio = [], 0.0
    for spec in specs.values():
        cert = spec.certificate()
        aug = AugmentedSequence(cert)
        for f in spec.functions:
            for xi in XIS:
                for row in check_theorem(cert, f, xi, aug, spec.name, spec.measures, True,
                                         spec.tol.theorem_tail):
                    counts[row.check_id.split("[")[0]] += 1
                    ratio = max(ratio, (row.lhs + row.tail) / row.rhs)
                    if not row.passed:
                        bad.append(row)
    inhomogeneous = specs["alternating"].seq.mode == "cycle"
    elapsed = time.perf_counter() - t0
    ok = (not bad and inhomogeneous and counts["theorem_measure"] > 0
          and counts["theorem_stationary"] > 0 and elapsed < 300.0)
    report(7, ok, f"{counts}; max (lhs + tail)/rhs = {ratio:.3g}", elapsed)
    assert ok, bad[:5]


def test_c8_corollary(report, specs):
    t0 = time.perf_counter()
    n_rows, bad, covered = 0, [], []
    for spec in specs.values():
        cert = spec.certificate()
        aug = AugmentedSequence(cert)
        for f in spec.functions:
            for xi in XIS:
                rows = check_corollary(cert, f, xi, aug, spec.name, spec.tol.theorem_tail,
                                       label="corollary[lam=0]")
                n_rows += len(rows)
                bad += [r for r in rows if not r.passed]
        if not spec.has_condition2:
            continue
        v_hat, alpha = spec.condition2_params()
        for lam in (0.0, 0.5):
            c2cert, _, _ = spec.condition2(lam)
            if recheck(c2cert):
                bad.append((spec.name, lam, "re-certification failed"))
            for f in spec.functions:
                for xi in XIS:
                    rows = check_corollary_condition2(spec.seq, c2cert, v_hat, alpha, lam, f, xi,
                                                      spec.name, spec.tol.theorem_tail)
                    n_rows += len(rows)
                    bad += [r for r in rows if not r.passed]
            covered.append(f"{spec.name}@{lam:g}")
    elapsed = time.perf_counter() - t0
    ok = not bad and {"two_state@0.5", "alternating@0.5"} <= set(covered) and elapsed < 300.0
    report(8, ok, f"{n_rows} rows; rescaled certificates: {', '.join(covered)}", elapsed)
    assert ok, bad[:5]


def test_c9_simulation_oracle(report, specs):
    t0 = time.perf_counter()
    details, ok = [], True
    for name in ("two_state", "birth_death"):
        spec = specs[name]
        aug = AugmentedSequence(spec.certificate())
        start = tuple(spec.simulate_opts["start"])
        stats = simulate(aug, start, 100_000, int(spec.simulate_opts["seed"]))
        for stat, weight in (("tau", "one"), ("sum_phi_vbar", "phi_vbar")):
            dp = dp_expected_sum(aug, start, weight, None, "tau", tol=1e-12)
            z = (stats.mean[stat] - dp.value) / stats.std_error[stat]
            ok &= abs(z) <= 3.0
            details.append(f"{name}/{stat} z={z:+.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    report(9, ok, "; ".join(details), elapsed)
    assert ok


def test_c10_determinism(report, specs, tmp_path):
    t0 = time.perf_counter()
    outputs = []
    for run, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"sim{run}.csv"
        env = dict(os.environ, SUBGEO_THREADS=threads)
        subprocess.run([sys.executable, "-m", "subgeo", "simulate", "--spec",
                        specs["alternating"].path, "--replicates", "20000", "--seed", "4242",
                        "--out", str(out)], check=True, env=env)
        outputs.append(out.read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outputs[0] == outputs[1] == outputs[2] and len(outputs[0]) > 0
    report(10, ok, "two runs at 1 thread and one at 4 threads: byte-identical CSV", elapsed)
    assert ok
