"""Command-line front end.

Every subcommand writes a JSON report (or CSV for the experiments) that
carries ``schema_version`` and echoes its configuration. Exit codes: 0 for a
completed analysis, including negative verdicts; 1 for usage errors; 2 for
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from importlib import resources

import numpy as np

from . import __version__
from .errors import InvalidArgument, NotBoundaryNL, NotQuasiaffine, NullagError, OptimizationFailure

SCHEMA_VERSION = "v1"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- parsing helpers


def _parse_number(tok: str) -> Fraction:
    tok = tok.strip()
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidArgument(f"cannot parse number '{tok}'") from exc


def parse_vector(text: str) -> list:
    if text is None or not text.strip():
        raise InvalidArgument("empty vector")
    return [_parse_number(t) for t in text.split(",")]


def parse_matrix(text: str, m: int, n: int) -> np.ndarray:
    """'a,b;c,d' (rows separated by ';') or a flat row-major list of m*n numbers."""
    rows = [r for r in text.split(";")] if ";" in text else None
    if rows is not None:
        vals = [parse_vector(r) for r in rows]
        if len(vals) != m or any(len(r) != n for r in vals):
            raise InvalidArgument(f"matrix '{text}' is not {m} x {n}")
        flat = [x for r in vals for x in r]
    else:
        flat = parse_vector(text)
        if len(flat) != m * n:
            raise InvalidArgument(f"matrix '{text}' has {len(flat)} entries, expected {m * n}")
    return np.array(flat, dtype=object).reshape(m, n)


def _normal(args, n):
    if args.normal is None:
        return tuple([Fraction(0)] * (n - 1) + [Fraction(1)])
    vec = parse_vector(args.normal)
    if len(vec) != n:
        raise InvalidArgument(f"normal has {len(vec)} entries, expected n={n}")
    if getattr(args, "normalize", False):
        norm2 = sum(x * x for x in vec)
        if norm2 == 0:
            raise InvalidArgument("zero normal")
        if norm2 != 1:
            r = np.array([float(x) for x in vec])
            return tuple(r / np.linalg.norm(r))
    return tuple(vec)


def _poly(args):
    from .polyform import parse_poly

    f = parse_poly(args.poly, args.m, args.n)
    if (args.m is not None and f.shape[0] != args.m) or (args.n is not None and f.shape[1] != args.n):
        raise InvalidArgument(f"polynomial has shape {f.shape}, expected ({args.m}, {args.n})")
    return f


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidArgument(f"cannot parse integer list '{text}'") from exc


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidArgument(f"cannot parse list '{text}'") from exc


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# ---------------------------------------------------------------- subcommands


def cmd_decompose(args):
    from .nullag_core import decompose_boundary, decompose_minors

    f = _poly(args)
    try:
        if args.normal is None:
            exp = decompose_minors(f)
        else:
            exp = decompose_boundary(f, _normal(args, f.shape[1]))
    except NotQuasiaffine as exc:
        return {"status": "not_quasiaffine", "message": str(exc), "expansion": None}
    except NotBoundaryNL as exc:
        offending = [{"s": s, "rows": list(p), "cols": list(q), "beta": str(b)}
                     for (s, p, q), b in sorted(exc.offending.items())]
        return {"status": "not_boundary_nl", "message": str(exc), "expansion": None, "offending": offending}
    return {"status": "ok", "expansion": exp.to_json()}


def cmd_check(args):
    from .nullag_core import is_boundary_nl

    f = _poly(args)
    return is_boundary_nl(f, _normal(args, f.shape[1]), seed=args.seed).to_json()


def cmd_basis(args):
    from .nullag_core import boundary_nl_basis

    if args.m is None or args.n is None:
        raise InvalidArgument("basis needs --m and --n")
    polys = boundary_nl_basis(args.m, args.n, _normal(args, args.n))
    return {"count": len(polys), "polynomials": [p.to_json() for p in polys]}


def cmd_special_form(args):
    from .nullag_core import special_form

    f = _poly(args)
    F0 = parse_matrix(args.F, *f.shape)
    return {"polynomial": special_form(f, F0).to_json()}


def _qcb_json(report, args):
    return report.to_json(include_certificate=not args.no_certificate)


def cmd_qcb(args):
    from .qcb_num import qcb_deficit

    f = _poly(args)
    F = np.zeros(f.shape) if args.F is None else parse_matrix(args.F, *f.shape).astype(float)
    rho = np.array([float(x) for x in _normal(args, f.shape[1])])
    rep = qcb_deficit(f, F, rho, h=args.h, trials=args.trials, seed=args.seed, maxiter=args.maxiter)
    return _qcb_json(rep, args)


def cmd_envelope0(args):
    from .qcb_num import qcb_envelope0

    f = _poly(args)
    rho = np.array([float(x) for x in _normal(args, f.shape[1])])
    rep = qcb_envelope0(f, rho, h=args.h, trials=args.trials, seed=args.seed, maxiter=args.maxiter)
    return _qcb_json(rep, args)


def cmd_interior(args):
    from .qcb_num import interior_qc_deficit

    f = _poly(args)
    F = np.zeros(f.shape) if args.F is None else parse_matrix(args.F, *f.shape).astype(float)
    rep = interior_qc_deficit(f, F, h=args.h, trials=args.trials, seed=args.seed, maxiter=args.maxiter)
    return _qcb_json(rep, args)


def cmd_weakcont(args):
    from . import conc_lab
    from .polyform import det_poly, detprime_poly, parse_poly

    if args.case == "det":
        seq, n, default = conc_lab.det_concentration_sequence, 2, det_poly(2)
    else:
        seq, n, default = conc_lab.detprime_concentration_sequence, 3, detprime_poly(3)
    f = default if args.poly is None else parse_poly(args.poly, 2, n)
    if f.shape != (2, n):
        raise InvalidArgument(f"the {args.case} sequence needs a polynomial on 2 x {n} matrices")
    rep = conc_lab.weak_continuity_experiment(f, seq, conc_lab.default_test_functions(n), _ints(args.ks))
    return rep


def cmd_counterex(args):
    from .conc_lab import higher_integrability_experiment

    return higher_integrability_experiment(args.n, _ints(args.ks), args.eps, _floats(args.deltas))


def cmd_selftest(args):
    from .selftest import run_selftest

    results = run_selftest(seed=args.seed)
    return {"checks": results, "passed": all(r["passed"] for r in results)}


COMMANDS = {
    "decompose": cmd_decompose,
    "check-boundary-nl": cmd_check,
    "basis": cmd_basis,
    "special-form": cmd_special_form,
    "qcb": cmd_qcb,
    "envelope0": cmd_envelope0,
    "interior-qc": cmd_interior,
    "weakcont": cmd_weakcont,
    "counterex": cmd_counterex,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nullag", description="Boundary null Lagrangians: exact decisions and numerical experiments.")
    p.add_argument("--version", action="version", version=f"nullag {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, poly=True, normal=True):
        if poly:
            sp.add_argument("--poly", required=True, help="JSON file, JSON string or built-in (det, detprime, ...)")
        sp.add_argument("--m", type=int, default=None)
        sp.add_argument("--n", type=int, default=None)
        if normal:
            sp.add_argument("--normal", default=None, help="comma-separated unit normal (default e_n)")
            sp.add_argument("--normalize", action="store_true", help="scale the normal to unit length")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path (default stdout)")

    def optimizer(sp):
        sp.add_argument("--h", type=int, default=8)
        sp.add_argument("--trials", type=int, default=8)
        sp.add_argument("--maxiter", type=int, default=200)
        sp.add_argument("--no-certificate", action="store_true", help="omit nodal values of the best field")

    common(sub.add_parser("decompose", help="expansion in minors (of H R~ with --normal)"))
    common(sub.add_parser("check-boundary-nl", help="decide the boundary null Lagrangian property"))
    common(sub.add_parser("basis", help="spanning set of boundary null Lagrangians"), poly=False)
    sp = sub.add_parser("special-form", help="subtract the linear part at F0")
    common(sp)
    sp.add_argument("--F", required=True, help="matrix F0, rows separated by ';'")
    sp = sub.add_parser("qcb", help="boundary quasiconvexity deficit at (F, normal)")
    common(sp)
    sp.add_argument("--F", default=None)
    optimizer(sp)
    sp = sub.add_parser("envelope0", help="sign of the boundary envelope at 0")
    common(sp)
    optimizer(sp)
    sp = sub.add_parser("interior-qc", help="interior quasiconvexity deficit at F")
    common(sp, normal=False)
    sp.add_argument("--F", default=None)
    optimizer(sp)
    sp = sub.add_parser("weakcont", help="weak continuity along a concentrating sequence")
    sp.add_argument("--case", choices=("det", "detprime"), default="det")
    sp.add_argument("--poly", default=None, help="integrand (default matches --case)")
    sp.add_argument("--ks", default="8,16,32,64")
    sp.add_argument("--format", choices=("json", "csv"), default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp = sub.add_parser("counterex", help="L log L divergence along the radial sequence")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--ks", default="8,16,32,64")
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--deltas", default="1e-2,1e-3,1e-4,1e-5")
    sp.add_argument("--format", choices=("json", "csv"), default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp = sub.add_parser("selftest", help="run the built-in invariant checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    return p


def load_schema() -> dict:
    return json.loads(resources.files("nullag").joinpath("report_schema.json").read_text())


def validate_report(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema())


def render(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _config(args) -> dict:
    skip = {"out", "format", "func"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("nullag: a subcommand is required (see --help)")
        result = COMMANDS[args.command](args)
    except (UsageError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OptimizationFailure, NullagError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    fmt = getattr(args, "format", None)
    if fmt is None and getattr(args, "out", None) and str(args.out).endswith(".csv"):
        fmt = "csv"
    if hasattr(result, "to_csv") and fmt == "csv":
        _emit(result.to_csv(), args.out)
        return EXIT_OK
    if hasattr(result, "to_json"):
        result = result.to_json()
    doc = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": _config(args),
           "result": _jsonable(result)}
    validate_report(doc)
    _emit(render(doc), args.out)
    if args.command == "selftest" and not result["passed"]:
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
