"""Command-line interface.

Commands: ``distill``, ``classify``, ``hierarchy-demo``, ``sweep`` and
``solve-sdp``. Exit codes: 0 success, 1 computational failure, 2 input error.

Channel files are JSON objects::

    {"kind": "kraus" | "choi",
     "dims_in":  [[label, dim, side], ...],
     "dims_out": [[label, dim, side], ...],
     "data": [matrix, ...]}

where each matrix is a flat row-major list of ``[re, im]`` pairs (one matrix
per Kraus operator, or a single Choi matrix on output (x) input). State files
use ``{"dims": [...], "vector": [[re, im], ...]}`` or ``"matrix"`` instead of
``"vector"``.

Reports are single-line JSON objects with fields ``command``, ``parameters``,
``results``, ``certificate``, ``wall_time`` and ``version``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from typing import Any, Sequence

import numpy as np

from . import __version__
from . import channels as chn
from .classes import CLASS_TESTS, DEFAULT_TOL
from .distillation import (
    OBJECTIVES,
    OP_CLASSES,
    DistillationProblem,
    SolverFailure,
    build_example_state,
    distill,
    hierarchy_demo,
)
from .linalg import PSD_TOL, DensityOperator, LayoutError, SystemLayout, pure_state
from .sdp import OPTIMAL, ProblemFormatError, SolverOptions, load_problem, solve, verify_certificate

EXIT_OK, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2
TOL_ENV = "QIHIER_TOL"


class InputError(ValueError):
    """Bad flags or malformed input files (exit code 2)."""


class ComputationError(RuntimeError):
    """A computation ran but did not succeed (exit code 1)."""


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _parse_dims(obj, field: str) -> SystemLayout:
    if not isinstance(obj, list) or not obj:
        raise InputError(f"{field}: expected a non-empty array of [label, dim, side]")
    factors = []
    for k, item in enumerate(obj):
        where = f"{field}[{k}]"
        if not isinstance(item, list) or len(item) != 3:
            raise InputError(f"{where}: expected [label, dim, side]")
        label, dim, side = item
        if not isinstance(label, str) or not label:
            raise InputError(f"{where}: label must be a non-empty string")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise InputError(f"{where}: dimension must be a positive integer")
        if side not in ("A", "B"):
            raise InputError(f"{where}: side must be \"A\" or \"B\"")
        factors.append((label, dim, side))
    try:
        return SystemLayout(factors)
    except LayoutError as exc:
        raise InputError(f"{field}: {exc}") from None


def _parse_matrix(obj, field: str, shape: tuple[int, int]) -> np.ndarray:
    n = shape[0] * shape[1]
    if not isinstance(obj, list) or len(obj) != n:
        got = len(obj) if isinstance(obj, list) else type(obj).__name__
        raise InputError(f"{field}: expected {n} [re, im] entries for shape {shape}, got {got}")
    out = np.empty(n, complex)
    for k, pair in enumerate(obj):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pair)):
            raise InputError(f"{field}[{k}]: expected [re, im] numbers")
        out[k] = complex(pair[0], pair[1])
    if not np.all(np.isfinite(out)):
        raise InputError(f"{field}: non-finite entries")
    return out.reshape(shape)


def _encode_matrix(m: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(m, complex).ravel()]


def _encode_layout(layout: SystemLayout) -> list[list]:
    return [[f.label, f.dim, f.side] for f in layout.factors]


def channel_to_dict(ch) -> dict[str, Any]:
    if isinstance(ch, chn.KrausChannel):
        kind, data = "kraus", [_encode_matrix(k) for k in ch.kraus]
    else:
        kind, data = "choi", [_encode_matrix(ch.matrix)]
    return {"kind": kind, "dims_in": _encode_layout(ch.input_layout),
            "dims_out": _encode_layout(ch.output_layout), "data": data}


def channel_from_dict(obj) -> chn.KrausChannel | chn.ChoiOperator:
    """Parse a channel file object; errors name the first offending field."""
    if not isinstance(obj, dict):
        raise InputError("channel file: top level must be an object")
    for key in ("kind", "dims_in", "dims_out", "data"):
        if key not in obj:
            raise InputError(f"{key}: missing")
    kind = obj["kind"]
    if kind not in ("kraus", "choi"):
        raise InputError("kind: must be \"kraus\" or \"choi\"")
    lin = _parse_dims(obj["dims_in"], "dims_in")
    lout = _parse_dims(obj["dims_out"], "dims_out")
    data = obj["data"]
    if not isinstance(data, list) or not data:
        raise InputError("data: expected a non-empty array of matrices")
    try:
        if kind == "kraus":
            ks = [_parse_matrix(m, f"data[{k}]", (lout.dim, lin.dim)) for k, m in enumerate(data)]
            return chn.KrausChannel(lin, lout, tuple(ks))
        if len(data) != 1:
            raise InputError("data: a Choi file holds exactly one matrix")
        d = lin.dim * lout.dim
        return chn.ChoiOperator(lin, lout, _parse_matrix(data[0], "data[0]", (d, d)))
    except chn.ChannelError as exc:
        raise InputError(f"data: {exc}") from None


def state_from_dict(obj) -> DensityOperator:
    if not isinstance(obj, dict):
        raise InputError("state file: top level must be an object")
    if "dims" not in obj:
        raise InputError("dims: missing")
    layout = _parse_dims(obj["dims"], "dims")
    try:
        if "vector" in obj:
            v = _parse_matrix(obj["vector"], "vector", (layout.dim, 1)).ravel()
            if abs(np.linalg.norm(v) - 1) > 1e-9:
                raise InputError("vector: not normalized")
            return pure_state(v, layout)
        if "matrix" in obj:
            m = _parse_matrix(obj["matrix"], "matrix", (layout.dim, layout.dim))
            return DensityOperator(layout, m)
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"state: {exc}") from None
    raise InputError("vector: missing (or give matrix)")


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def user_tol(flag: float | None) -> float | None:
    """Tolerance from ``--tol`` or the environment, ``None`` when neither is set."""
    if flag is not None:
        if not flag > 0:
            raise InputError("--tol must be positive")
        return flag
    env = os.environ.get(TOL_ENV)
    if not env:
        return None
    try:
        tol = float(env)
    except ValueError:
        raise InputError(f"{TOL_ENV}={env!r} is not a number") from None
    if not tol > 0:
        raise InputError(f"{TOL_ENV} must be positive")
    return tol


def resolve_tol(flag: float | None, default: float = DEFAULT_TOL) -> float:
    tol = user_tol(flag)
    return default if tol is None else tol


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def make_report(command: str, parameters: dict, results: dict, certificate, started: float) -> dict:
    return _jsonable({
        "command": command,
        "parameters": parameters,
        "results": results,
        "certificate": certificate,
        "wall_time": time.perf_counter() - started,
        "version": __version__,
    })


def emit(report: dict, json_path: str | None, out=None):
    out = out or sys.stdout
    line = json.dumps(report, sort_keys=True)
    if json_path and json_path != "-":
        with open(json_path, "a") as fh:
            fh.write(line + "\n")
    else:
        out.write(line + "\n")


def _options(args) -> SolverOptions:
    max_iters = getattr(args, "max_iters", None)
    if max_iters is not None and max_iters < 0:
        raise InputError("--max-iters must be non-negative")
    return SolverOptions() if max_iters is None else SolverOptions(max_iters=max_iters)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_distill(args) -> int:
    started = time.perf_counter()
    tol = resolve_tol(args.tol)
    if (args.t is None) == (args.state is None):
        raise InputError("give exactly one of --t and --state")
    if args.t is not None:
        try:
            state = build_example_state(args.t)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    else:
        state = state_from_dict(_read_json(args.state))
    try:
        p = DistillationProblem(state, args.target_rank, args.op_class, args.objective, args.output_dim)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    params = {"t": args.t, "state": args.state, "target_rank": args.target_rank, "class": args.op_class,
              "objective": args.objective, "output_dim": p.output_dim, "tol": tol,
              "max_iters": _options(args).max_iters}
    if args.dump_sdp:
        from .distillation import build_sdp
        from .sdp import dump_problem
        with open(args.dump_sdp, "w") as fh:
            dump_problem(build_sdp(p)[0], fh)
    try:
        res = distill(p, _options(args))
    except SolverFailure as exc:
        sol = exc.solution
        results = {"status": sol.status if sol else "error", "message": str(exc)}
        emit(make_report("distill", params, results, None, started), args.json)
        return EXIT_FAILURE
    base = args.op_class.split("-")[0]
    verdicts = {base: CLASS_TESTS[base](res.choi, tol).to_dict()}
    if args.op_class.endswith("ppt"):
        verdicts["ppt"] = CLASS_TESTS["ppt"](res.choi, resolve_tol(args.tol, PSD_TOL)).to_dict()
    results = {"value": res.value, "bound": res.upper_bound, "status": res.solution.status,
               "iterations": res.solution.iterations, "relative_gap": res.solution.relative_gap,
               "verdicts": verdicts}
    emit(make_report("distill", params, results, res.certificate.summary(), started), args.json)
    ok = res.certificate.passed and all(v["member"] for v in verdicts.values())
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_classify(args) -> int:
    started = time.perf_counter()
    tol = resolve_tol(args.tol)
    names = [c.strip().lower() for c in args.classes.split(",") if c.strip()]
    unknown = [c for c in names if c not in CLASS_TESTS]
    if not names or unknown:
        raise InputError(f"--classes: unknown class {unknown[0] if unknown else ''!r}; "
                         f"choose from {','.join(CLASS_TESTS)}")
    ch = channel_from_dict(_read_json(args.channel))
    verdicts = {}
    for name in names:
        test = CLASS_TESTS[name]
        try:
            if name == "io":
                if not isinstance(ch, chn.KrausChannel):
                    raise InputError("io: needs a Kraus channel file")
                v = test(ch)
            elif name == "ppt":
                v = test(ch, resolve_tol(args.tol, PSD_TOL))
            else:
                v = test(ch, tol)
        except LayoutError as exc:
            raise InputError(f"{name}: {exc}") from None
        verdicts[name] = v.to_dict()
        if args.json != "-":
            line = f"{name}: {str(v.member).lower()}"
            if v.witness is not None:
                line += " witness=" + json.dumps(_jsonable(v.witness), sort_keys=True)
            print(line)
    if args.json:
        emit(make_report("classify", {"channel": args.channel, "classes": names, "tol": tol},
                         {"verdicts": verdicts}, None, started), args.json)
    return EXIT_OK


def cmd_hierarchy_demo(args) -> int:
    started = time.perf_counter()
    tol = resolve_tol(args.tol)
    try:
        report = hierarchy_demo(tol, options=_options(args))
    except SolverFailure as exc:
        emit(make_report("hierarchy-demo", {"tol": tol}, {"passed": False, "message": str(exc)},
                         None, started), args.json)
        return EXIT_FAILURE
    emit(make_report("hierarchy-demo", {"tol": tol}, report.to_dict(), None, started), args.json)
    return EXIT_OK if report.passed else EXIT_FAILURE


def parse_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError("--t-range: expected a:b:step")
    try:
        a, b, step = (float(x) for x in parts)
    except ValueError:
        raise InputError("--t-range: non-numeric bound") from None
    if not step > 0:
        raise InputError("--t-range: step must be positive")
    if b < a:
        raise InputError("--t-range: upper bound below lower bound")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    ts = [round(a + k * step, 12) for k in range(n)]
    if not all(0 < t < 0.5 for t in ts):
        raise InputError("--t-range: values must lie in (0, 0.5)")
    return ts


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    ts = parse_range(args.t_range)
    classes = [c.strip() for c in args.op_class.split(",") if c.strip()]
    bad = [c for c in classes if c not in OP_CLASSES]
    if not classes or bad:
        raise InputError(f"--class: unknown class {bad[0] if bad else ''!r}")
    opts = _options(args)
    rows = []
    failed = False
    for t in ts:
        state = build_example_state(t)
        for cls in classes:
            try:
                res = distill(DistillationProblem(state, args.target_rank, cls), opts)
                rows.append({"t": t, "class": cls, "M": args.target_rank, "value": res.value,
                             "gap": res.solution.relative_gap, "status": OPTIMAL})
            except SolverFailure as exc:
                failed = True
                rows.append({"t": t, "class": cls, "M": args.target_rank, "value": float("nan"),
                             "gap": float("nan"), "status": exc.solution.status if exc.solution else "error"})
    monotone = True
    by_key = {(r["t"], r["class"]): r["value"] for r in rows}
    for t in ts:
        for small, big in (("qip-ppt", "qip"), ("mio-ppt", "mio")):
            if (t, small) in by_key and (t, big) in by_key:
                if by_key[(t, small)] > by_key[(t, big)] + 2 * opts.gap_tol:
                    monotone = False
    fields = ["t", "class", "M", "value", "gap"]
    if args.csv and args.csv != "-":
        fh = open(args.csv, "w", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.json:
        emit(make_report("sweep", {"t_range": args.t_range, "classes": classes,
                                   "target_rank": args.target_rank},
                         {"rows": rows, "monotone": monotone}, None, started), args.json)
    return EXIT_OK if monotone and not failed else EXIT_FAILURE


def cmd_solve_sdp(args) -> int:
    started = time.perf_counter()
    try:
        with open(args.problem) as fh:
            problem = load_problem(fh)
    except OSError as exc:
        raise InputError(f"cannot read {args.problem}: {exc.strerror}") from None
    except (ProblemFormatError, ValueError) as exc:
        raise InputError(f"{args.problem}: {exc}") from None
    sol = solve(problem, _options(args))
    results = {"status": sol.status, "message": sol.message, "primal_objective": sol.primal_objective,
               "dual_objective": sol.dual_objective, "relative_gap": sol.relative_gap,
               "iterations": sol.iterations, "infeasibility_certificate": sol.certificate}
    cert = verify_certificate(problem, sol).summary() if sol.optimal else None
    emit(make_report("solve-sdp", {"problem": args.problem, "max_iters": sol.options.max_iters},
                     results, cert, started), args.json)
    return EXIT_OK if sol.optimal and cert["passed"] else EXIT_FAILURE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qihier", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("distill", help="solve an assisted distillation SDP")
    p.add_argument("--t", type=float, help="parameter of the example state family, in (0, 0.5)")
    p.add_argument("--state", help="JSON state file")
    p.add_argument("--target-rank", type=int, default=4)
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--class", dest="op_class", choices=OP_CLASSES, default="qip")
    p.add_argument("--objective", choices=OBJECTIVES, default="fidelity")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--dump-sdp", help="write the SDP in text form to this path")
    p.add_argument("--json", help="append the report to this file ('-' for stdout)")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("classify", help="test class membership of a channel file")
    p.add_argument("--channel", required=True)
    p.add_argument("--classes", default="io,mio,ppt,qip,cqip")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--json", help="append the report to this file ('-' for stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("hierarchy-demo", help="run the separating examples")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--json", help="append the report to this file ('-' for stdout)")
    p.set_defaults(func=cmd_hierarchy_demo)

    p = sub.add_parser("sweep", help="fidelity over a range of the example family")
    p.add_argument("--t-range", required=True, help="a:b:step, inclusive")
    p.add_argument("--class", dest="op_class", default="qip", help="comma separated classes")
    p.add_argument("--target-rank", type=int, default=4)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--csv", help="CSV output path (default stdout)")
    p.add_argument("--json", help="append a report to this file ('-' for stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("solve-sdp", help="solve an SDP from a text dump")
    p.add_argument("problem")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--json", help="append the report to this file ('-' for stdout)")
    p.set_defaults(func=cmd_solve_sdp)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"qihier: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ComputationError as exc:
        print(f"qihier: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"qihier: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
