"""Command-line interface: ``subgeo {rates,certify,constants,verify,simulate}``.

Every command writes a CSV (17 significant digits, header first) to
``--out`` or stdout.  The exit status is 0 when everything requested
succeeded and every check passed, 1 otherwise.  ``SUBGEO_THREADS`` sets the
simulation thread count.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys

import numpy as np

from . import __version__
from .certify import recheck
from .config import DEFAULT
from .constants import theorem_c
from .coupling import AugmentedSequence, dp_expected_sum, simulate
from .errors import CertificationError, ConvergenceError, DomainError, KernelError
from .ratefn import PhiSpec, big_h, big_h_inv, log_rate_slope, rate_r
from .specfile import load_spec, shipped_specs
from .verify import SUITES, CheckRow, run_suite

__all__ = ["main", "fmt"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write(args, header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _specs(args):
    if not args.spec:
        return shipped_specs()
    return [load_spec(p) for p in args.spec]


def _one_spec(args):
    if not args.spec or len(args.spec) != 1:
        raise DomainError("this command takes exactly one --spec")
    return load_spec(args.spec[0])


def cmd_rates(args) -> int:
    phi = PhiSpec(args.beta, args.alpha)
    rows = []
    for n in range(args.n + 1):
        arg = args.eps_b * n
        # delta(n) = eps_b phi'(H^-1(eps_b n)), the slope of log r, also defined at n = 0
        rows.append((n, rate_r(phi, args.eps_b, n), log_rate_slope(phi, args.eps_b, n),
                     big_h(phi, n + 1.0), big_h_inv(phi, arg)))
    _write(args, ("n", "r", "delta", "h", "h_inv"), rows)
    return 0


def cmd_certify(args) -> int:
    spec = _one_spec(args)
    try:
        cert = spec.certificate()
    except CertificationError as exc:
        _write(args, ("kernel", "state", "margin"), exc.violations)
        print(f"certification failed: {exc}", file=sys.stderr)
        return 1
    rows = [("alpha", cert.phi.alpha), ("beta", cert.phi.beta), ("b_v", cert.b_v),
            ("c_v", cert.c_v), ("eps_b", cert.eps_b), ("eps_nu", cert.eps_nu)]
    bad = []
    if spec.has_chain:
        rows.append(("small_set", " ".join(str(i) for i in np.flatnonzero(cert.small_set))))
        bad = recheck(cert)
        rows.append(("recheck_violations", len(bad)))
    _write(args, ("quantity", "value"), rows)
    return 1 if bad else 0


def cmd_constants(args) -> int:
    spec = _one_spec(args)
    cert = spec.certificate()
    tc = theorem_c(cert, args.tol if args.tol is not None else DEFAULT.c_star_tol)
    header = ("bar_b", "m_one", "c_star", "c", "series_terms_used", "series_tail_bound", "r_one",
              "eps_nu", "eps_b")
    _write(args, header, [(tc.bar_b, tc.m_one, tc.c_star, tc.c, tc.series_terms_used,
                           tc.series_tail_bound, tc.r_one, cert.eps_nu, cert.eps_b)])
    return 0


def cmd_verify(args) -> int:
    rows: list[CheckRow] = []
    for spec in _specs(args):
        if args.tol is not None:
            spec.tol = dataclasses.replace(spec.tol, dp_tol=args.tol)
        rows += run_suite(spec, args.suite)
    _write(args, CheckRow.FIELDS, [r.as_tuple() for r in rows])
    failed = [r for r in rows if not r.passed]
    for r in failed[:20]:
        print(f"FAIL {r.check_id} {r.chain_id} {r.pair}: lhs={r.lhs:.6g} tail={r.tail:.3g} "
              f"rhs={r.rhs:.6g}", file=sys.stderr)
    return 1 if failed else 0


_DP_FOR = {"tau": ("one", None, "tau", True), "sum_r": ("one", "r", "tau", True),
           "sum_phi_vbar": ("phi_vbar", None, "tau", True), "t1": ("one", None, "T1", False)}


def cmd_simulate(args) -> int:
    spec = _one_spec(args)
    opts = spec.simulate_opts
    start = tuple(int(s) for s in opts.get("start", (0, spec.seq.n_states - 1)))
    reps = args.replicates if args.replicates is not None else int(opts.get("replicates", 100000))
    seed = args.seed if args.seed is not None else int(opts.get("seed", 0))
    cert = spec.certificate()
    aug = AugmentedSequence(cert)
    stats = simulate(aug, start, reps, seed)
    tol = args.tol if args.tol is not None else spec.tol.dp_tol
    rows = []
    for name in stats.STATS:
        w, rate, stop, incl = _DP_FOR[name]
        dp = dp_expected_sum(aug, start, w, rate, stop, incl, tol=tol)
        se = stats.std_error[name]
        z = (stats.mean[name] - dp.value) / se if se > 0 else 0.0 if stats.mean[name] == dp.value else float("inf")
        rows.append((spec.name, f"{start[0]}|{start[1]}", name, reps, seed, stats.mean[name],
                     stats.variance[name], se, dp.value, dp.tail, z))
    _write(args, ("chain_id", "start", "stat", "replicates", "seed", "mean", "variance",
                  "std_error", "dp_value", "dp_tail", "z"), rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subgeo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", action="append", help="chain spec YAML file")
        sp.add_argument("--out", help="write the CSV here instead of stdout")
        sp.add_argument("--tol", type=float, default=None, help="truncation tolerance")

    sp = sub.add_parser("rates", help="table of r(n), delta, H^-1 and H")
    common(sp, spec=False)
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--eps-b", type=float, default=0.5)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("certify", help="extract drift/minorisation constants")
    common(sp)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("constants", help="theorem constants for a certificate")
    common(sp)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("verify", help="run a verification suite (shipped chains by default)")
    common(sp)
    sp.add_argument("--suite", choices=SUITES, default="all")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="Monte Carlo coupling statistics next to the exact DP")
    common(sp)
    sp.add_argument("--replicates", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, KernelError, CertificationError, ConvergenceError, OverflowError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
