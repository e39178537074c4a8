"""Command-line front end.

Subcommands: ``region`` (SPS region of a data file), ``bound`` (evaluate or
invert a tail bound), ``simulate`` (run an experiment plan) and
``selftest``. Errors print one line ``sps-scalar: error[<kind>]: <msg>``
to stderr and exit with the code of their kind.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import math
import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds, core, montecarlo, report
from .model import (
    BoundedRegressor,
    ConstantInNoise,
    DataSet,
    GaussianRegressor,
    InvalidSampleSizeError,
    SpsConfig,
    SpsError,
    Target,
    UnsupportedRegimeError,
    UserRegressorMGF,
    config_from_level,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_REGIME = 4
EXIT_INVARIANT = 5


class CliError(Exception):
    def __init__(self, kind: str, code: int, message: str):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _data_error(msg):
    return CliError("input", EXIT_DATA, msg)


def _fail(err: CliError) -> int:
    print(f"sps-scalar: error[{err.kind}]: {err}", file=sys.stderr)
    return err.code


# -- input files -------------------------------------------------------------

def read_data_csv(path) -> DataSet:
    """Two-column ``phi,y`` CSV with an optional header row."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _data_error(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if rows and rows[0] and [c.strip().lower() for c in rows[0]] == ["phi", "y"]:
        rows = rows[1:]
    if not rows:
        raise _data_error(f"{path} contains no data rows")
    phi, y = [], []
    for lineno, row in enumerate(rows, 1):
        if len(row) != 2:
            raise _data_error(f"{path}: row {lineno} has {len(row)} fields, expected 2")
        try:
            phi.append(float(row[0]))
            y.append(float(row[1]))
        except ValueError as exc:
            raise _data_error(f"{path}: row {lineno} is not numeric") from exc
    try:
        data = DataSet(np.array(phi), np.array(y))
    except SpsError as exc:
        raise _data_error(str(exc)) from exc
    if not np.any(data.phi != 0):
        raise _data_error("all regressors are zero; the least-squares estimate is undefined")
    return data


PLAN_KEYS = {"m", "q", "p", "theta_star", "noise", "regressors", "delta", "n_grid", "k",
             "master_seed", "regime", "sigma2", "fix_signs", "csv", "svg", "title"}


@dataclass
class PlanFile:
    plan: montecarlo.ExperimentPlan
    csv: str | None = None
    svg: str | None = None
    title: str = ""
    raw: dict = field(default_factory=dict)


def _parse_noise(text):
    kind, *args = text.split()
    vals = [float(Fraction(a)) for a in args]
    table = {"uniform": montecarlo.UniformNoise, "gaussian": montecarlo.GaussianNoise,
             "rademacher": montecarlo.RademacherNoise}
    if kind not in table or len(vals) != 1:
        raise ValueError(f"noise must be 'uniform C', 'gaussian STD' or 'rademacher S', got {text!r}")
    return table[kind](vals[0])


def _parse_regressors(text):
    kind, *args = text.split()
    vals = [float(Fraction(a)) for a in args]
    if kind == "constant" and len(vals) <= 1:
        return montecarlo.ConstantRegressors(*vals)
    if kind == "gaussian" and len(vals) <= 1:
        return montecarlo.GaussianRegressors(*vals)
    if kind == "bounded" and len(vals) == 2:
        return montecarlo.BoundedRegressors(*vals)
    raise ValueError("regressors must be 'constant V', 'gaussian STD' or 'bounded LOW HIGH', "
                     f"got {text!r}")


def _parse_grid(text, delta, regime, m, q):
    text = text.strip()
    if text == "auto":
        return montecarlo.default_n_grid(delta, regime, m, q)
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            return tuple(range(parts[0], parts[1] + 1))
        if len(parts) == 3:
            return tuple(range(parts[0], parts[1] + 1, parts[2]))
        raise ValueError(f"bad range {text!r}")
    return tuple(int(p) for p in text.split(","))


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_plan(text: str) -> PlanFile:
    """Parse a ``key = value`` plan. ``#`` at line start or after whitespace opens a comment.

    Unknown and repeated keys are rejected. The confidence level is given
    either as integers ``m``/``q`` or as an exact rational ``p``.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = re.split(r"(?:^|\s)#", line, maxsplit=1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _data_error(f"plan line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PLAN_KEYS:
            raise _data_error(f"plan line {lineno}: unknown key {key!r}")
        if key in raw:
            raise _data_error(f"plan line {lineno}: duplicate key {key!r}")
        raw[key] = value
    try:
        if "p" in raw:
            if "m" in raw or "q" in raw:
                raise ValueError("give either p or m/q, not both")
            cfg = config_from_level(Fraction(raw["p"]), 2)
            m, q = cfg.m, cfg.q
        else:
            m, q = int(raw.get("m", 2)), int(raw.get("q", 1))
        delta = float(Fraction(raw.get("delta", "0.1")))
        regime = raw.get("regime", "constant")
        plan = montecarlo.ExperimentPlan(
            n_grid=_parse_grid(raw.get("n_grid", "auto"), delta, regime, m, q),
            k=int(raw.get("k", 1000)),
            m=m,
            q=q,
            theta_star=float(raw.get("theta_star", 5.0)),
            noise=_parse_noise(raw.get("noise", "uniform 1")),
            regressors=_parse_regressors(raw.get("regressors", "constant 1")),
            delta=delta,
            regime=regime,
            sigma2=float(Fraction(raw["sigma2"])) if "sigma2" in raw else None,
            fix_signs=_parse_bool(raw.get("fix_signs", "true")),
            master_seed=int(raw.get("master_seed", 0)),
        )
    except (ValueError, ZeroDivisionError, SpsError) as exc:
        raise _data_error(f"invalid plan: {exc}") from exc
    return PlanFile(plan, raw.get("csv"), raw.get("svg"), raw.get("title", ""), raw)


# -- subcommands ---------------------------------------------------------------

def _g(x) -> str:
    return f"{x:.12g}"


def _signs_digest(inst) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(inst.signs, dtype=np.int8).tobytes())
    h.update(np.ascontiguousarray(inst.tie_break, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def _format_region(region) -> str:
    if region.is_empty:
        return "empty"
    return " U ".join(f"[{_g(lo)}, {_g(hi)}]" for lo, hi in region.intervals)


def cmd_region(args) -> int:
    data = read_data_csv(args.data)
    try:
        config = SpsConfig(args.m, args.q, data.n, args.fix_signs)
    except SpsError as exc:
        raise CliError("usage", EXIT_USAGE, str(exc)) from exc
    inst = core.initialize(config, np.random.default_rng(args.seed))
    region = core.exact_region(data, inst)
    lse = core.least_squares(data)
    print(f"n = {data.n}")
    print(f"m = {config.m}, q = {config.q}, p = {config.p}")
    print(f"lse = {_g(lse)}")
    print(f"region = {_format_region(region)}")
    try:
        outer = core.outer_approximation(data, inst)
        print(f"outer = [{_g(outer.lo)}, {_g(outer.hi)}] "
              f"(center {_g(outer.center)}, half_width {_g(outer.half_width)})")
    except SpsError:
        print("outer = unbounded")
    print(f"tie_break = {' '.join(str(int(v)) for v in inst.tie_break)}")
    print(f"signs_digest = {_signs_digest(inst)}")
    return EXIT_OK


def _bound_spec(args, target):
    if args.sigma2 is None or not args.sigma2 > 0:
        raise CliError("usage", EXIT_USAGE, "--sigma2 must be given and positive")
    sigma = math.sqrt(args.sigma2)
    try:
        if args.regime == "constant":
            return ConstantInNoise(sigma, target)
        if args.regime == "bounded":
            if args.phi_min is None:
                raise CliError("usage", EXIT_USAGE, "--phi-min is required for --regime bounded")
            return BoundedRegressor(sigma, args.phi_min, target)
        if args.regime == "gaussian":
            return GaussianRegressor(sigma, args.sigma_phi, target)
        if args.mgf_samples is None:
            raise CliError("usage", EXIT_USAGE, "--mgf-samples is required for --regime mgf")
        samples = np.loadtxt(args.mgf_samples, ndmin=1, comments="#")
        return UserRegressorMGF(sigma, bounds.empirical_mgf(samples), target)
    except (SpsError, ValueError, OSError) as exc:
        if isinstance(exc, CliError):
            raise
        raise _data_error(str(exc)) from exc


def cmd_bound(args) -> int:
    if (args.epsilon is None) == (args.delta is None):
        raise CliError("usage", EXIT_USAGE, "give exactly one of --epsilon or --delta")
    target = Target.OUTER if args.outer else Target.EXACT
    spec = _bound_spec(args, target)
    try:
        if args.epsilon is not None:
            query = bounds.TailQuery(args.epsilon, args.n, args.m, args.q, spec)
            raw = bounds.outer_tail_bound(query) if args.outer else bounds.tail_bound(query)
            print(f"raw = {_g(raw)}")
            print(f"probability = {_g(bounds.as_probability(raw))}")
        else:
            query = bounds.RadiusQuery(args.delta, args.n, args.m, args.q, spec)
            need = bounds.min_valid_n(args.delta, args.m, args.q, spec)
            eps = bounds.invert_radius(query)
            label = "width" if args.outer else "epsilon"
            print(f"{label} = {_g(eps)}")
            print(f"validity_threshold = {_g(bounds.validity_threshold(args.delta, args.m, args.q, spec))}")
            print(f"min_valid_n = {need}")
    except (InvalidSampleSizeError, UnsupportedRegimeError) as exc:
        raise CliError("regime", EXIT_REGIME, str(exc)) from exc
    except SpsError as exc:
        raise CliError("usage", EXIT_USAGE, str(exc)) from exc
    return EXIT_OK


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("output", EXIT_DATA, f"cannot write {path}: {exc.strerror}") from exc


def cmd_simulate(args) -> int:
    try:
        text = Path(args.plan).read_text(encoding="utf-8")
    except OSError as exc:
        raise _data_error(f"cannot read plan {args.plan}: {exc.strerror}") from exc
    pf = parse_plan(text)
    summary = montecarlo.run_experiment(pf.plan, threads=max(1, args.threads))
    csv_text = report.summary_csv(summary, deterministic=args.deterministic)
    csv_path = args.csv or pf.csv
    svg_path = args.svg or pf.svg
    if csv_path:
        _write(csv_path, csv_text)
    else:
        sys.stdout.write(csv_text)
    if svg_path:
        _write(svg_path, report.summary_svg(summary, pf.title, deterministic=args.deterministic))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest

    ok = selftest.run(inject=args.inject_fault, out=sys.stdout)
    if not ok:
        print("sps-scalar: error[invariant]: self-test failed", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"sps-scalar: error[usage]: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sps-scalar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("region", help="SPS region and outer interval of a phi,y CSV file")
    pr.add_argument("data")
    pr.add_argument("--m", type=int, default=2)
    pr.add_argument("--q", type=int, default=1)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--fix-signs", action="store_true",
                    help="force the first two perturbation signs to +1, -1")
    pr.set_defaults(func=cmd_region)

    pb = sub.add_parser("bound", help="evaluate (--epsilon) or invert (--delta) a tail bound")
    pb.add_argument("--regime", choices=("constant", "bounded", "gaussian", "mgf"), required=True)
    pb.add_argument("--epsilon", type=float)
    pb.add_argument("--delta", type=float)
    pb.add_argument("--n", type=int, required=True)
    pb.add_argument("--m", type=int, default=2)
    pb.add_argument("--q", type=int, default=1)
    pb.add_argument("--sigma2", type=float)
    pb.add_argument("--phi-min", type=float)
    pb.add_argument("--sigma-phi", type=float, default=1.0)
    pb.add_argument("--mgf-samples", help="file of regressor samples for --regime mgf")
    pb.add_argument("--outer", action="store_true", help="bound the outer approximation")
    pb.set_defaults(func=cmd_bound)

    ps = sub.add_parser("simulate", help="run an experiment plan file")
    ps.add_argument("plan")
    ps.add_argument("--threads", type=int, default=1)
    ps.add_argument("--csv")
    ps.add_argument("--svg")
    ps.add_argument("--deterministic", action="store_true",
                    help="omit timestamp comments so reruns are byte-identical")
    ps.set_defaults(func=cmd_simulate)

    pt = sub.add_parser("selftest", help="run the fast invariant checks")
    pt.add_argument("--inject-fault", choices=("signs",), help=argparse.SUPPRESS)
    pt.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        return _fail(err)


if __name__ == "__main__":
    sys.exit(main())
