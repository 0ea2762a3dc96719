"""Command-line interface: ``ftstab {analyze,synthesize,simulate,verify,margin,transition}``.

Exit status 0 means the command ran; the verdict is part of the payload.
Operational failures (I/O, parse, validation, preconditions) exit with 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FtsError
from .gramian import check_fts_exact, check_fts_sufficient_cor1, moment_propagate, perturbation_margin
from .kron import DEFAULT_ROW_CAP, Kind, transition
from .lmi import (
    DEFAULT_ANALYSIS_GRID,
    DEFAULT_SYNTHESIS_GRID,
    certificate_from_dict,
    certificate_to_dict,
    check_fts_lyapunov,
    synthesize_gains,
    verify_certificate,
)
from .model import NoiseModel, closed_loop, gains_to_dict, load_gains, load_problem, matrix_to_json
from .sim import estimate_to_csv, monte_carlo

MACHINE_DIGITS = 17
HUMAN_DIGITS = 6


def dumps(obj, digits=MACHINE_DIGITS):
    """JSON text with every float printed to ``digits`` significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v, digits)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v, digits) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return "null"
        return f"{x:.{digits}g}"
    return json.dumps(obj)


def _fmt(x, digits=HUMAN_DIGITS):
    return f"{x:.{digits}g}"


def _grid(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _label_key(label):
    # "decrease j=10" sorts after "decrease j=9"
    head, _, num = label.rpartition("=")
    return (head, int(num)) if num.isdigit() else (label, -1)


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _base_report(args):
    return {"command": args.command, "input": {"path": args.file, "sha256": _digest(args.file)}}


def _system_under_test(problem, gains_path):
    if gains_path is None:
        return problem.open_loop, False
    if not problem.controlled:
        raise FtsError("--gains needs a file with B and D")
    return closed_loop(problem.system, load_gains(gains_path)), True


def cmd_analyze(args):
    problem = load_problem(args.file)
    sys_, closed = _system_under_test(problem, args.gains)
    spec = problem.spec
    report = _base_report(args)
    report["mode"] = args.mode
    report["closed_loop"] = closed
    lines = []
    if args.mode == "exact":
        v = check_fts_exact(sys_, spec)
        report.update(
            stable=v.stable,
            margins=v.margins,
            gramian=[matrix_to_json(H) for H in v.gram.H],
            gramian_max_eig=[spec.ratio - m for m in v.margins],
            first_violation=v.first_violation,
            boundary=v.boundary,
            stable_non_strict=bool(np.min(v.margins) >= -1e-10),
        )
        lines.append(f"exact test: {'STABLE' if v.stable else 'NOT STABLE'} (strict inequality)")
        for k, m in enumerate(v.margins):
            lines.append(f"  k={k:3d}  margin={_fmt(m)}")
        if v.first_violation is not None:
            lines.append(f"first violation at k={v.first_violation}")
        if v.boundary:
            lines.append("boundary: minimum margin is 0 within 1e-10; stable under the non-strict reading")
    elif args.mode == "cor1":
        passed, margins = check_fts_sufficient_cor1(sys_, spec)
        report.update(stable=passed, margins=margins, sufficient_only=True)
        lines.append(f"sufficient test: {'STABLE' if passed else 'inconclusive (condition is sufficient only)'}")
        for k, m in enumerate(margins):
            lines.append(f"  k={k:3d}  margin={_fmt(m)}")
    else:
        grid = args.alpha_grid or DEFAULT_ANALYSIS_GRID
        cert = check_fts_lyapunov(sys_, spec, grid)
        report.update(alpha_grid=list(grid), stable=cert is not None, sufficient_only=True)
        if cert is None:
            report["certificate"] = None
            lines.append("no certificate (condition is sufficient only)")
        else:
            rep = verify_certificate(cert, sys_, spec)
            report["certificate"] = certificate_to_dict(cert)
            report["worst_residual"] = rep.worst
            lines.append(f"certificate found at alpha={_fmt(cert.alpha)}; worst residual {_fmt(rep.worst)}")
            if args.out:
                Path(args.out).write_text(dumps(certificate_to_dict(cert)) + "\n")
                lines.append(f"certificate written to {args.out}")
    return report, lines


def cmd_synthesize(args):
    problem = load_problem(args.file)
    if not problem.controlled:
        raise FtsError("synthesize needs B and D in the system file")
    grid = args.alpha_grid or DEFAULT_SYNTHESIS_GRID
    result = synthesize_gains(problem.system, problem.spec, grid)
    report = _base_report(args)
    report["alpha_grid"] = list(grid)
    if result is None:
        report["status"] = "synthesis failed"
        return report, ["synthesis failed: no feasible alpha in the grid"]
    v = result.closed_loop_verdict
    report.update(
        status="ok",
        alpha=result.certificate.alpha,
        gains=gains_to_dict(result.law)["K"],
        certificate=certificate_to_dict(result.certificate),
        closed_loop={"stable": v.stable, "margins": v.margins, "boundary": v.boundary},
    )
    lines = [f"gains found at alpha={_fmt(result.certificate.alpha)}"]
    for k, K in enumerate(result.law.K):
        lines.append(f"  K_{k} = {np.array2string(K, precision=4)}")
    lines.append(f"closed loop exact test: {'STABLE' if v.stable else 'NOT STABLE'} (min margin {_fmt(v.min_margin)})")
    if args.out:
        # repr-precision JSON: re-reading reproduces the gains bit for bit
        Path(args.out).write_text(json.dumps(gains_to_dict(result.law)) + "\n")
        report["gains_file"] = args.out
        lines.append(f"gains written to {args.out}")
    return report, lines


def cmd_simulate(args):
    problem = load_problem(args.file)
    if problem.x0 is None:
        raise FtsError(f"{args.file}: field 'x0' is required for simulation")
    sys_, closed = _system_under_test(problem, args.gains)
    est = monte_carlo(sys_, problem.spec, problem.x0, args.paths, args.noise, args.seed, args.blowup)
    exact = moment_propagate(sys_, problem.x0, problem.spec).weighted
    csv_text = estimate_to_csv(est)
    report = _base_report(args)
    report.update(
        closed_loop=closed,
        paths=args.paths,
        seed=args.seed,
        noise=NoiseModel(args.noise).value,
        mean=est.mean,
        stderr=est.stderr,
        n_divergent=est.n_divergent,
        exact=exact,
        below_c2=bool(np.all(est.mean < problem.spec.c2)),
    )
    lines = []
    if args.out:
        Path(args.out).write_text(csv_text)
        report["csv"] = args.out
        lines.append(f"CSV written to {args.out}")
    else:
        lines.append(csv_text.rstrip("\n"))
    return report, lines


def cmd_verify(args):
    problem = load_problem(args.file)
    cert = certificate_from_dict(json.loads(Path(args.certificate).read_text()))
    if hasattr(cert, "X"):
        if not problem.controlled:
            raise FtsError("a synthesis certificate needs a file with B and D")
        target = problem.system
    else:
        target, _ = _system_under_test(problem, args.gains)
    rep = verify_certificate(cert, target, problem.spec, args.tol)
    report = _base_report(args)
    report.update(
        passed=rep.passed,
        worst=rep.worst,
        worst_label=rep.worst_label,
        residuals={k: v for k, v in rep.residuals.items() if np.isfinite(v)},
        failures=sorted(rep.failures(), key=_label_key),
    )
    lines = [f"{'PASS' if rep.passed else 'FAIL'}: worst residual {_fmt(rep.worst)} ({rep.worst_label})"]
    for label in sorted(rep.failures(), key=_label_key):
        lines.append(f"  violated: {label} ({_fmt(rep.residuals[label])})")
    return report, lines


def cmd_margin(args):
    problem = load_problem(args.file)
    sys_, closed = _system_under_test(problem, args.gains)
    res = perturbation_margin(sys_, problem.spec, args.eps_max, args.tol, args.samples)
    report = _base_report(args)
    report.update(
        eps_star=res.eps_star,
        reached_limit=res.reached_limit,
        min_margin_at_star=res.min_margin_at_star,
        curve={"eps": res.eps_samples, "min_margin": res.margin_samples},
    )
    lines = [f"eps* = {_fmt(res.eps_star)}" + (" (search limit reached)" if res.reached_limit else "")]
    for e, m in zip(res.eps_samples, res.margin_samples):
        lines.append(f"  eps={_fmt(e)}  min margin={_fmt(m)}")
    return report, lines


def cmd_transition(args):
    problem = load_problem(args.file)
    tm = transition(problem.open_loop, args.l, args.k, args.kind, problem.spec, args.row_cap)
    report = _base_report(args)
    report.update(l=tm.l, k=tm.k, kind=tm.kind.value, matrix=matrix_to_json(tm.data))
    return report, [dumps(matrix_to_json(tm.data), HUMAN_DIGITS)]


def build_parser():
    p = argparse.ArgumentParser(prog="ftstab", description="Finite-time stability of discrete time-varying stochastic systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("file", help="system-definition JSON file")
        sp.add_argument("--json", action="store_true", help="machine-readable JSON report on stdout")
        sp.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")

    a = sub.add_parser("analyze", help="decide finite-time stability")
    common(a)
    a.add_argument("--mode", choices=("exact", "cor1", "lyapunov"), default="exact")
    a.add_argument("--alpha-grid", type=_grid)
    a.add_argument("--gains", help="analyze the closed loop under these gains")
    a.add_argument("--out", help="write the Lyapunov certificate here")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synthesize", help="synthesize finite-time stabilizing gains")
    common(s)
    s.add_argument("--alpha-grid", type=_grid)
    s.add_argument("--out", help="write the gains JSON here")
    s.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", help="Monte Carlo estimate of E x_k' R_k x_k")
    common(m)
    m.add_argument("--paths", type=int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--gains", help="simulate the closed loop under these gains")
    m.add_argument("--noise", choices=[n.value for n in NoiseModel], default=NoiseModel.STANDARD_NORMAL.value)
    m.add_argument("--blowup", type=float, default=math.inf, help="weighted-norm level counted as divergence")
    m.add_argument("--out", help="write the CSV here instead of stdout")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="re-verify a certificate file")
    common(v)
    v.add_argument("certificate")
    v.add_argument("--tol", type=float, default=1e-9)
    v.add_argument("--gains", help="verify an analysis certificate against the closed loop")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("margin", help="largest eps with (A+eps I, C+eps I) still finite-time stable")
    common(g)
    g.add_argument("--eps-max", type=float, default=1.0)
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--samples", type=int, default=101)
    g.add_argument("--gains")
    g.set_defaults(func=cmd_margin)

    t = sub.add_parser("transition", help="print a mean-square transition matrix")
    common(t)
    t.add_argument("l", type=int)
    t.add_argument("k", type=int)
    t.add_argument("--kind", choices=[k.value for k in Kind], default=Kind.PHI.value)
    t.add_argument("--row-cap", type=int, default=DEFAULT_ROW_CAP)
    t.set_defaults(func=cmd_transition)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        report, lines = args.func(args)
    except json.JSONDecodeError as exc:
        print(f"error: {args.file}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    except (OSError, FtsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.timings:
        report["timings"] = {"seconds": time.perf_counter() - start}
    if args.json:
        print(dumps(report))
    else:
        print("\n".join(lines))
        if args.timings:
            print(f"({_fmt(report['timings']['seconds'], 3)} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
