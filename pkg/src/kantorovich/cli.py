"""Command-line entry point.

Every subcommand writes CSV series and a JSON summary into the output
directory (``--out``, else ``$KANTOROVICH_OUT``, else the working
directory).  Each CSV starts with a ``# config:`` line holding the resolved
parameters, so identical invocations produce identical files.

Exit codes: 0 success, 1 domain error, 2 accuracy error, 3 a ``verify``
check failed, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, discsim, measures, seqcore, verification
from ._validation import AccuracyError, DomainError
from .observables import parse_polynomial, polynomial_text
from .operators import OperatorSpec, make_operator

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_ACCURACY = 2
EXIT_CHECK_FAILED = 3
EXIT_USAGE = 64

OUT_ENV = "KANTOROVICH_OUT"
M_CAP = 10_000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a complex number such as 0.4+0.3j, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kantorovich", description="Iterates of Kantorovich-type operators and their duals.")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def operator_args(q):
        q.add_argument("--op", choices=["projection", "bernstein", "mkz", "kantorovich"], default="kantorovich")
        q.add_argument("--i", type=int, default=1, help="parameter of mkz and kantorovich")
        q.add_argument("--k", type=int, default=2, help="degree of bernstein")
        q.add_argument("--f", default="t", help='polynomial in t, e.g. "3*t^2-4*t"')
        q.add_argument("--m", type=int, default=500)
        q.add_argument("--eps", type=float, default=1e-10)

    q = sub.add_parser("iterate", help="iterate an operator and judge uniform convergence")
    operator_args(q)
    q.add_argument("--tol", type=float, default=1e-2)

    q = sub.add_parser("cesaro", help="Cesaro average of the first m iterates on the grid")
    operator_args(q)

    q = sub.add_parser("dual", help="TV distance to Lebesgue measure along the dual orbit")
    q.add_argument("--i", type=int, default=1)
    q.add_argument("--x", type=float, default=0.5)
    q.add_argument("--m", type=int, default=500)
    q.add_argument("--eps", type=float, default=1e-12)
    q.add_argument("--n-cells", type=int, default=8192)
    q.add_argument("--stop-below", type=float, default=None)

    q = sub.add_parser("gap02", help="one-step versus two-step TV gap near 1")
    q.add_argument("--i", type=int, default=1)
    q.add_argument("--x", type=_float_list, default=list(analysis.NEAR_ONE))
    q.add_argument("--eps", type=float, default=1e-10)

    q = sub.add_parser("verify", help="run the full invariant suite")
    q.add_argument("--i", type=int, default=1)
    q.add_argument("--seed", type=int, default=0)

    q = sub.add_parser("weights", help="dump alpha, beta, gamma and the index landmarks")
    q.add_argument("--i", type=int, default=1)
    q.add_argument("--x", type=float, default=0.5)
    q.add_argument("--eps", type=float, default=1e-10)

    q = sub.add_parser("kernel-check", help="row and column sums of the transition density")
    q.add_argument("--i", type=int, default=1)
    q.add_argument("--J", type=int, default=200)
    q.add_argument("--quad-points", type=int, default=64)

    q = sub.add_parser("disc-sim", help="simulate the disc diffusion")
    q.add_argument("--z0", type=_complex, default=0j)
    q.add_argument("--n", type=int, default=10**5)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--trajectory-id", type=int, default=0)
    q.add_argument("--f", default="t", help="polynomial in t = |z|^2")
    q.add_argument("--stride", type=int, default=1, help="write every stride-th step")

    q = sub.add_parser("bernstein-rate", help="geometric rate of Bernstein iterates")
    q.add_argument("--k", type=_int_list, default=[2, 3, 4, 5, 6])
    q.add_argument("--f", default="t^2")
    q.add_argument("--m", type=int, default=60)
    return p


# ---------------------------------------------------------------------------
# output helpers


def _out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "out"}
    for k, v in cfg.items():
        if isinstance(v, complex):
            cfg[k] = repr(v)
    return cfg


def _header(args) -> str:
    return "config: " + json.dumps(_config(args), sort_keys=True)


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path: Path, payload: dict) -> None:
    _write(path, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _table(header: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _spec(args) -> OperatorSpec:
    if args.op == "bernstein":
        return OperatorSpec.bernstein(args.k)
    if args.op == "projection":
        return OperatorSpec.projection()
    return OperatorSpec(args.op, args.i, args.eps)


def _check_m(m: int, cap: int = M_CAP) -> int:
    if not 1 <= m <= cap:
        raise DomainError(f"m must lie in 1..{cap}, got {m}")
    return m


# ---------------------------------------------------------------------------
# subcommands


def cmd_iterate(args, out: Path) -> int:
    spec = _spec(args)
    f = parse_polynomial(args.f)
    m = _check_m(args.m)
    if spec.kind == "kantorovich":
        rep = analysis.uniform_convergence_probe(spec.param, f, m, args.tol, polynomial_text(f), operator=spec)
    else:
        rep = analysis.affine_limit_probe(spec, f, m, args.tol, polynomial_text(f))
    _write(out / "iterate.csv", rep.to_csv(_header(args)))
    _write_json(out / "iterate.json", rep.summary())
    print(f"{spec.label()} f={polynomial_text(f)}: {rep.verdict} after m={int(rep.m_values[-1])}, sup error {rep.sup_errors[-1]:.3g}")
    return EXIT_OK


def cmd_cesaro(args, out: Path) -> int:
    spec = _spec(args)
    f = parse_polynomial(args.f)
    m = _check_m(args.m)
    avg = make_operator(spec).cesaro(f, m)
    rows = ([repr(float(x)), repr(float(v))] for x, v in zip(avg.grid, avg.values))
    _write(out / "cesaro.csv", _table(_header(args), ["x", "value"], rows))
    verdict = analysis.acu_rasa_verdict(f)
    inside = avg.grid <= 0.9
    summary = {
        "operator": spec.label(),
        "observable": polynomial_text(f),
        "m": m,
        "integral": verdict.integral,
        "value_at_1": float(avg.values[-1]),
        "interior_error": float(np.max(np.abs(avg.values[inside] - verdict.integral))),
    }
    _write_json(out / "cesaro.json", summary)
    print(f"cesaro m={m}: value at 1 = {summary['value_at_1']:.6g}, interior distance to integral {summary['interior_error']:.3g}")
    return EXIT_OK


def cmd_dual(args, out: Path) -> int:
    m = _check_m(args.m, 1000)
    run = analysis.dual_convergence_probe(args.i, args.x, m, args.eps, args.n_cells, args.stop_below)
    _write(out / "dual.csv", run.to_csv(_header(args)))
    summary = {
        "i": args.i,
        "x": args.x,
        "steps": len(run.distances) - 1,
        "final_tv": float(run.distances[-1]),
        "final_upper": float(run.upper[-1]),
        "first_below_1e-3": run.first_below(1e-3),
        "max_increase": run.max_increase(),
    }
    _write_json(out / "dual.json", summary)
    print(f"dual i={args.i} x={args.x}: tv {summary['final_tv']:.3g} (certified <= {summary['final_upper']:.3g}) after {summary['steps']} steps")
    return EXIT_OK


def cmd_gap02(args, out: Path) -> int:
    survey = analysis.gap02_survey(args.i, args.x, args.eps)
    _write(out / "gap02.csv", survey.to_csv(_header(args)))
    summary = {"i": args.i, "max_gap": survey.max_gap, "min_wedge": survey.min_wedge, "passed": survey.passed}
    _write_json(out / "gap02.json", summary)
    print(f"gap02 i={args.i}: max_gap {survey.max_gap:.6g}, min_wedge {survey.min_wedge:.6g}, passed={survey.passed}")
    return EXIT_OK


def cmd_verify(args, out: Path) -> int:
    results = verification.run_suite(args.i, args.seed, progress=lambda r: print(r.line(), flush=True))
    rows = ([r.name, "pass" if r.passed else "fail", json.dumps(r.details, sort_keys=True, default=_jsonable)] for r in results)
    _write(out / "verify.csv", _table(_header(args), ["check", "status", "details"], rows))
    payload = {"all_passed": all(r.passed for r in results), "checks": {r.name: {"passed": r.passed, **r.details} for r in results}}
    _write_json(out / "verify.json", payload)
    return EXIT_OK if payload["all_passed"] else EXIT_CHECK_FAILED


def cmd_weights(args, out: Path) -> int:
    w = seqcore.kantorovich_weights(args.i, args.x, eps=args.eps)
    gammas = measures.gamma_weights(args.i, args.x, J=w.J, eps=args.eps)
    rows = ([j, repr(float(a)), repr(float(b)), repr(float(g))] for j, (a, b, g) in enumerate(zip(w.alphas, w.betas, gammas)))
    _write(out / "weights.csv", _table(_header(args), ["j", "alpha", "beta", "gamma"], rows))
    summary = {"i": w.i, "x": w.x, "J": w.J, "pivot": w.pivot, "alpha_peak": w.alpha_peak, "beta_peak": w.beta_peak, "tail_bound": w.tail_bound}
    _write_json(out / "weights.json", summary)
    print(f"weights i={w.i} x={w.x}: J={w.J} pivot={w.pivot} alpha_peak={w.alpha_peak} beta_peak={w.beta_peak}")
    return EXIT_OK


def cmd_kernel_check(args, out: Path) -> int:
    res = analysis.kernel_stochasticity_check(args.i, args.J, args.quad_points)
    summary = {"i": args.i, "J": args.J, "max_row_err": res.max_row_err, "max_col_err": res.max_col_err}
    _write_json(out / "kernel_check.json", summary)
    print(f"kernel i={args.i}: row error {res.max_row_err:.3g}, column error {res.max_col_err:.3g}")
    return EXIT_OK


def cmd_disc_sim(args, out: Path) -> int:
    if args.stride < 1:
        raise DomainError("stride must be at least 1")
    g = parse_polynomial(args.f)
    path = discsim.disc_trajectory(args.z0, args.n, args.seed, args.trajectory_id)
    values = g(np.abs(path) ** 2)
    avg = np.cumsum(values) / np.arange(1, len(values) + 1)
    keep = np.arange(0, len(path), args.stride)
    header = _header(args)
    _write(out / "disc_trajectory.csv", _table(header, ["step", "re", "im"], ([k, repr(float(path[k].real)), repr(float(path[k].imag))] for k in keep)))
    _write(out / "disc_averages.csv", _table(header, ["step", "avg"], ([k, repr(float(avg[k]))] for k in keep)))
    summary = {"steps": args.n, "final_average": float(avg[-1])}
    if len(values) >= 100:
        summary["std_error"] = discsim.batch_means_error(values)
    _write_json(out / "disc_sim.json", summary)
    print(f"disc-sim n={args.n}: running average {avg[-1]:.6g}")
    return EXIT_OK


def cmd_bernstein_rate(args, out: Path) -> int:
    f = parse_polynomial(args.f)
    m = _check_m(args.m)
    rows, summary = [], {}
    for k in args.k:
        rep = analysis.affine_limit_probe(OperatorSpec.bernstein(k), f, m, tol=1e-11)
        errors = rep.sup_errors[1:]
        errors = errors[errors >= 1e-11]
        rate = analysis.rate_estimate(errors) if len(errors) >= 5 else None
        lam = verification.third_eigenvalue(k)
        rows += [[k, n + 1, repr(float(e))] for n, e in enumerate(errors)]
        summary[str(k)] = {"rate": rate, "third_eigenvalue": lam}
        print(f"bernstein k={k}: rate {rate if rate is None else f'{rate:.6g}'}, third eigenvalue {lam:.6g}")
    _write(out / "bernstein_rate.csv", _table(_header(args), ["k", "m", "sup_error"], rows))
    _write_json(out / "bernstein_rate.json", summary)
    return EXIT_OK


COMMANDS = {
    "iterate": cmd_iterate,
    "cesaro": cmd_cesaro,
    "dual": cmd_dual,
    "gap02": cmd_gap02,
    "verify": cmd_verify,
    "weights": cmd_weights,
    "kernel-check": cmd_kernel_check,
    "disc-sim": cmd_disc_sim,
    "bernstein-rate": cmd_bernstein_rate,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, _out_dir(args))
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except AccuracyError as exc:
        print(f"accuracy error: {exc} (achieved bound {exc.achieved:.3g})", file=sys.stderr)
        return EXIT_ACCURACY


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
