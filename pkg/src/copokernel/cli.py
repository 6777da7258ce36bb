"""Command-line front end (``python3 -m copokernel``).

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 solver
numerical limit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds, tensor_cop
from .bounds import BoundReport, BoundSpec

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
SEED_ENV = "COPOKERNEL_SEED"

_STATUS_EXIT = {
    bounds.OPTIMAL: EXIT_OK,
    bounds.INFEASIBLE: EXIT_OK,
    bounds.VERIFICATION_FAILED: EXIT_VERIFY,
    bounds.NUMERICAL_LIMIT: EXIT_NUMERICAL,
    bounds.UNBOUNDED: EXIT_NUMERICAL,
    "invalid": EXIT_USAGE,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return bounds.DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _cos_theta(text: str) -> Fraction:
    try:
        return bounds.parse_cos_theta(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="copokernel", description="Copositive-kernel bounds for spherical codes and finite graphs.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, fmt=True):
        if fmt:
            sp.add_argument("--out", choices=("text", "csv", "json"), default="text", help="output format")
        sp.add_argument("--seed", type=int, default=None, help=f"sampling seed (default: ${SEED_ENV} or built-in)")

    b = sub.add_parser("bound", help="one kissing-number / spherical-code bound")
    b.add_argument("--level", type=int, choices=(0, 1, 2), required=True)
    b.add_argument("--dim", type=int, required=True, help="n, for points on the sphere S^(n-1)")
    b.add_argument("--degree", type=int, default=None, help="N (defaults 24 / 12 / 4 by level)")
    b.add_argument("--cos-theta", type=_cos_theta, default=Fraction(1, 2), help="exact rational, e.g. 1/2 or 0.5")
    b.add_argument("--export-sdpa", type=Path, default=None, metavar="PATH")
    b.add_argument("--tol", type=float, default=bounds.conic.DEFAULT_TOL)
    b.add_argument("--samples", type=int, default=bounds.DEFAULT_SAMPLES)
    b.add_argument("--no-certificate", action="store_true", help="omit the certificate from JSON output")
    b.add_argument("--no-timing", action="store_true", help="report wall_ms as 0 (byte-stable output)")
    common(b)

    s = sub.add_parser("sweep", help="bounds over a list of angles")
    s.add_argument("--level", type=int, choices=(0, 1), required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--degree", type=int, default=None)
    s.add_argument("--cos-theta-file", type=Path, required=True, metavar="PATH")
    s.add_argument("--samples", type=int, default=bounds.DEFAULT_SAMPLES)
    s.add_argument("--no-timing", action="store_true")
    common(s)

    f = sub.add_parser("finite", help="membership of a matrix in C_r or Q_r")
    f.add_argument("--matrix", type=Path, required=True, metavar="PATH")
    f.add_argument("--r", type=int, required=True)
    f.add_argument("--cone", choices=("C", "Q"), required=True)
    f.add_argument("--method", choices=("polynomial", "tensor"), default="polynomial", help="C_r route")
    f.add_argument("--tol", type=float, default=1e-7)
    common(f)

    g = sub.add_parser("graph-bound", help="gamma_r or nu_r of a finite graph")
    g.add_argument("--graph", type=Path, required=True, metavar="PATH")
    g.add_argument("--r", type=int, required=True)
    g.add_argument("--kind", choices=("gamma", "nu"), required=True)
    g.add_argument("--no-timing", action="store_true")
    common(g)

    v = sub.add_parser("verify", help="re-check a saved JSON bound report")
    v.add_argument("--report", type=Path, required=True, metavar="PATH")
    v.add_argument("--samples", type=int, default=bounds.DEFAULT_SAMPLES)
    common(v)

    t = sub.add_parser("selftest", help="quick property checks")
    t.add_argument("--quick", action="store_true", help="skip the bound solves")
    return p


# -- output -------------------------------------------------------------------


def _report_text(r: BoundReport) -> str:
    head = f"{r.problem} n={r.n} level={r.level} N={r.N}"
    if r.cos_theta:
        head += f" cos_theta={r.cos_theta}"
    lines = [head, f"value        {r.display_value()}", f"status       {r.status}"]
    if r.residual_eq is not None:
        lines.append(f"residual_eq  {r.residual_eq:.3e}")
    if r.residual_psd is not None:
        lines.append(f"residual_psd {r.residual_psd:.3e}")
    lines.append(f"seed         {r.seed}")
    lines.append(f"wall_ms      {r.wall_ms:.1f}")
    if r.message:
        lines.append(f"note         {r.message}")
    return "\n".join(lines)


def _emit_reports(reports, fmt: str, include_certificate: bool = True) -> str:
    if fmt == "csv":
        return bounds.reports_to_csv(reports).rstrip("\n")
    if fmt == "json":
        if len(reports) == 1:
            return reports[0].to_json(include_certificate)
        return "[" + ",\n".join(r.to_json(include_certificate) for r in reports) + "]"
    if len(reports) == 1:
        return _report_text(reports[0])
    rows = [f"{'cos_theta':>14}  {'value':>12}  status"]
    for r in reports:
        rows.append(f"{r.cos_theta:>14}  {r.display_value():>12}  {r.status}")
    return "\n".join(rows)


def _exit_for(reports) -> int:
    return max((_STATUS_EXIT.get(r.status, EXIT_NUMERICAL) for r in reports), default=EXIT_OK)


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


def _read_cos_thetas(path: Path) -> list:
    out = []
    for ln in path.read_text().splitlines():
        ln = ln.split("#", 1)[0].strip().split(",")[0].strip()
        if not ln:
            continue
        if not out and not any(ch.isdigit() for ch in ln):
            continue  # header
        out.append(ln)
    return out


# -- subcommands --------------------------------------------------------------


def cmd_bound(args, out) -> int:
    try:
        spec = BoundSpec(args.dim, args.level, args.degree, args.cos_theta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    r = bounds.solve_bound(spec, tol=args.tol, seed=_seed(args), samples=args.samples,
                           export_sdpa=args.export_sdpa)
    if args.no_timing:
        r.wall_ms = 0.0
    print(_emit_reports([r], args.out, not args.no_certificate), file=out)
    return _exit_for([r])


def cmd_sweep(args, out) -> int:
    try:
        cos = _read_cos_thetas(args.cos_theta_file)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    try:
        BoundSpec(args.dim, args.level, args.degree)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    reports = bounds.sweep(args.dim, args.level, cos, args.degree, seed=_seed(args), samples=args.samples,
                           keep_certificate=args.out == "json")
    if args.no_timing:
        for r in reports:
            r.wall_ms = 0.0
    print(_emit_reports(reports, args.out), file=out)
    return _exit_for(reports)


def cmd_finite(args, out) -> int:
    try:
        M = tensor_cop.read_matrix_csv(args.matrix)
    except (OSError, ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from None
    if args.r < 0:
        raise UsageError("--r must be nonnegative")
    try:
        if args.cone == "C":
            res = tensor_cop.in_Cr(M, args.r, method=args.method)
        else:
            res = tensor_cop.in_Qr(M, args.r, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    payload = {"cone": args.cone, "r": args.r, "n": len(M), "member": res.member,
               "residual": res.residual, "message": res.message}
    if args.out == "json":
        print(json.dumps(payload, sort_keys=True), file=out)
    elif args.out == "csv":
        print("cone,r,n,member,residual", file=out)
        print(f"{args.cone},{args.r},{len(M)},{res.member},{res.residual}", file=out)
    else:
        print(f"{args.cone}_{args.r} membership (n={len(M)}): member={res.member}", file=out)
        print(f"residual {res.residual:.3e}", file=out)
        if res.message:
            print(f"note     {res.message}", file=out)
    return EXIT_NUMERICAL if res.member == tensor_cop.UNDETERMINED else EXIT_OK


def cmd_graph(args, out) -> int:
    try:
        G = tensor_cop.read_graph(args.graph)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if args.r < 0:
        raise UsageError("--r must be nonnegative")
    fn = tensor_cop.gamma_r if args.kind == "gamma" else tensor_cop.nu_r
    r = fn(G, args.r)
    r.seed = _seed(args)
    if args.no_timing:
        r.wall_ms = 0.0
    print(_emit_reports([r], args.out), file=out)
    return _exit_for([r])


def cmd_verify(args, out) -> int:
    try:
        text = args.report.read_text()
        report = BoundReport.from_json(text)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"cannot read report: {exc}") from None
    if report.certificate is None:
        raise UsageError("report has no certificate (was it written with --no-certificate?)")
    seed = args.seed if args.seed is not None else report.seed
    ver = bounds.verify_bound(report, samples=args.samples, seed=seed)
    payload = {"ok": ver.ok, "residual_eq": ver.residual_eq, "residual_psd": ver.residual_psd,
               "samples": ver.samples, "seed": ver.seed, "worst_interval": ver.worst_interval,
               "worst_sos": ver.worst_sos, "failures": ver.failures}
    if args.out == "json":
        print(json.dumps(payload, sort_keys=True), file=out)
    elif args.out == "csv":
        print("ok,residual_eq,residual_psd,samples,seed", file=out)
        print(f"{ver.ok},{ver.residual_eq},{ver.residual_psd},{ver.samples},{ver.seed}", file=out)
    else:
        print(f"verification {'passed' if ver.ok else 'FAILED'}", file=out)
        print(f"residual_eq  {ver.residual_eq:.3e}  (limit {bounds.EQ_TOL:.0e})", file=out)
        print(f"residual_psd {ver.residual_psd:.3e}  (floor {bounds.PSD_FLOOR:.0e})", file=out)
        print(f"samples      {ver.samples} (seed {ver.seed})", file=out)
        for f in ver.failures:
            print(f"failure      {f}", file=out)
    return EXIT_OK if ver.ok else EXIT_VERIFY


def cmd_selftest(args, out) -> int:
    from .selftest import run_selftest
    return EXIT_OK if run_selftest(out, quick=args.quick) else EXIT_VERIFY


COMMANDS = {
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "finite": cmd_finite,
    "graph-bound": cmd_graph,
    "verify": cmd_verify,
    "selftest": cmd_selftest,
}


def run(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main(argv=None) -> int:
    np.seterr(all="ignore")
    return run(argv)
