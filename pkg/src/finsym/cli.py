"""Command-line interface: ``finsym classify | identities | spray``.

Exit codes: 0 success (whatever the verdicts), 2 bad input, 3 geometric
degeneracy at a required point, 4 sampling exhausted before enough admissible
points were found.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field
from typing import Sequence

import numpy as np

from . import __version__
from .classify import SamplePlan, SamplingError, classify
from .exprlang import ExprError, parse, variables
from .geometry import ClassTolerance, GeometryError, connection, tension, torsion
from .identities import identity_report
from .jets import JetDomainError
from .lifts import SlitPoint, constant_field
from .models import SpecError, field_from_spec, finsler_from_spec, parse_spec

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_INDETERMINATE = 0, 2, 3, 4


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    finsler: str
    field: str | None = None
    dim: int | None = None
    seed: int = 0
    base_points: int = 10
    fibre_points: int = 3
    box: str | None = None
    tol: float = 1e-7
    fibre_tol: float = 1e-6
    constancy_tol: float = 1e-6
    at: str | None = None
    out: str | None = None
    format: str = "json"
    extra: dict = dc_field(default_factory=dict)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


# -- argument helpers -------------------------------------------------------------------


def infer_dim(spec: str, dim: int | None) -> int:
    if dim is not None:
        if dim < 2:
            raise InputError("--dim must be at least 2")
        return dim
    kind, body, params = parse_spec(spec)
    if kind == "builtin":
        try:
            return int(params.get("n", 2))
        except ValueError:
            raise InputError(f"bad dimension n={params['n']!r}") from None
    try:
        names = variables(parse(body, 9))
    except ExprError as exc:
        raise InputError(f"cannot infer dimension from {body!r}: {exc}") from exc
    return max([2] + [int(v[1:]) for v in names])


def parse_box(text: str, n: int, x_default, y_default) -> tuple[tuple, tuple]:
    """``x=lo:hi``, ``y=lo:hi``, ``x2=lo:hi`` ... separated by commas."""
    xb = [list(iv) for iv in (x_default or [(-1.0, 1.0)] * n)]
    yb = [list(iv) for iv in (y_default or [(-1.0, 1.0)] * n)]
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, rng = item.partition("=")
        lo, sep2, hi = rng.partition(":")
        if not sep or not sep2:
            raise InputError(f"box entry {item!r} must look like x1=lo:hi")
        try:
            lo_f, hi_f = float(lo), float(hi)
        except ValueError:
            raise InputError(f"box entry {item!r} has non-numeric bounds") from None
        if not lo_f < hi_f:
            raise InputError(f"box entry {item!r} needs lo < hi")
        key = key.strip()
        if key not in ("x", "y") and not (key[:1] in "xy" and key[1:].isdigit()):
            raise InputError(f"box key {key!r} must be x, y, x<i> or y<i>")
        target = xb if key[0] == "x" else yb
        idx = range(n) if len(key) == 1 else [int(key[1:]) - 1]
        for i in idx:
            if not 0 <= i < n:
                raise InputError(f"box key {key!r} is out of range for dimension {n}")
            target[i] = [lo_f, hi_f]
    return tuple(tuple(iv) for iv in xb), tuple(tuple(iv) for iv in yb)


def parse_point(text: str, n: int) -> SlitPoint:
    """``x=2,0;y=1,1``."""
    parts = {}
    for chunk in text.split(";"):
        key, sep, vals = chunk.partition("=")
        if not sep or key.strip() not in ("x", "y"):
            raise InputError(f"--at expects 'x=..;y=..', got {text!r}")
        try:
            parts[key.strip()] = tuple(float(v) for v in vals.split(","))
        except ValueError:
            raise InputError(f"non-numeric coordinate in {chunk!r}") from None
    if set(parts) != {"x", "y"}:
        raise InputError("--at needs both x and y")
    if len(parts["x"]) != n or len(parts["y"]) != n:
        raise InputError(f"--at coordinates must have {n} entries each")
    try:
        return SlitPoint(parts["x"], parts["y"])
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _plan(cfg: RunConfig, fs) -> SamplePlan:
    xb = yb = None
    if cfg.box:
        xb, yb = parse_box(cfg.box, fs.dim, fs.x_box, fs.y_box)
    try:
        return SamplePlan(
            seed=cfg.seed,
            num_base_points=cfg.base_points,
            fibre_points_per_base=cfg.fibre_points,
            x_box=xb,
            y_box=yb,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _tolerances(cfg: RunConfig) -> ClassTolerance:
    try:
        return ClassTolerance(cfg.tol, cfg.fibre_tol, cfg.constancy_tol)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# -- rendering -------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3e}" if v != 0 and (abs(v) < 1e-3 or abs(v) >= 1e4) else f"{v:.6g}"
    return str(v)


def render_table(report: dict) -> str:
    lines = [f"finsym {report['artifact_version']}  {report['command']}"]
    cfg = report["config"]
    lines.append(f"finsler: {cfg.get('finsler')}   dim: {cfg.get('dim')}")
    if report["command"] == "classify":
        lines.append(f"field:   {cfg.get('field')}")
        lines.append("")
        lines.append(f"{'property':<20}verdict")
        for k, v in report["verdicts"].items():
            lines.append(f"{k:<20}{v}")
        f = report["factors"]
        lines.append("")
        lines.append(f"conformal factor mean: {_fmt(f['conformal']['mean'])}  "
                     f"fibre spread: {_fmt(f['conformal']['max_fibre_spread'])}")
        lines.append(f"homothety constant:    {_fmt(f['homothety_alpha'])}")
        lines.append("")
        lines.append(f"{'check':<32}{'verdict':<15}{'max residual':>14}{'tol':>11}")
        for k, c in report["checks"].items():
            lines.append(f"{k:<32}{c['verdict']:<15}{_fmt(c['max_residual']):>14}{_fmt(c['tol']):>11}")
        lines.append("")
        for t in report["theorem_checks"]:
            lines.append(f"{t['name']:<44}{t['outcome']:<16}{_fmt(t['max_residual'])}")
    elif report["command"] == "identities":
        lines.append("")
        for r in report["identities"]:
            lines.append(f"{r['name']:<30}{r['outcome']:<6}{_fmt(r['max_residual']):>12}  {r['statement']}")
        lines.append(f"all pass: {report['all_pass']}")
    else:
        lines.append(f"x = {report['point']['x']}   y = {report['point']['y']}")
        for key in ("G", "N", "tension"):
            lines.append(f"{key}: {np.array2string(np.array(report[key]), precision=10)}")
        lines.append(f"B: {np.array2string(np.array(report['B']), precision=10)}")
        for k, v in report["checks"].items():
            lines.append(f"{k}: {_fmt(v)}")
    return "\n".join(lines) + "\n"


def emit(report: dict, cfg: RunConfig, stdout) -> None:
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if cfg.format == "table":
        stdout.write(render_table(report))
    elif not cfg.out:
        stdout.write(text)


# -- commands --------------------------------------------------------------------------


def cmd_classify(cfg: RunConfig, stdout=sys.stdout) -> int:
    if not cfg.field:
        raise InputError("classify needs --field")
    n = cfg.dim = infer_dim(cfg.finsler, cfg.dim)
    fs = finsler_from_spec(cfg.finsler, n)
    X = field_from_spec(cfg.field, n)
    report = classify(fs, X, _plan(cfg, fs), _tolerances(cfg), config=cfg.echo(), clock=cfg.extra.get("clock"))
    emit(report.to_dict(), cfg, stdout)
    return EXIT_OK


def cmd_identities(cfg: RunConfig, stdout=sys.stdout) -> int:
    n = cfg.dim = infer_dim(cfg.finsler, cfg.dim)
    fs = finsler_from_spec(cfg.finsler, n)
    report = identity_report(fs, _plan(cfg, fs), cfg.extra.get("identity_tol", 1e-8), config=cfg.echo(),
                             clock=cfg.extra.get("clock"))
    emit(report, cfg, stdout)
    return EXIT_OK


def cmd_spray(cfg: RunConfig, stdout=sys.stdout) -> int:
    if not cfg.at:
        raise InputError("spray needs --at 'x=..;y=..'")
    n = cfg.dim = infer_dim(cfg.finsler, cfg.dim)
    fs = finsler_from_spec(cfg.finsler, n)
    p = parse_point(cfg.at, n)
    if fs.safe is not None and not fs.safe(np.array(p.x), np.array(p.y)):
        raise GeometryError("point lies outside the safe region of the model", p)
    data = connection(fs, p)
    e = [constant_field(np.eye(n)[j]) for j in range(n)]
    T = torsion(fs, p, e[0], e[1])
    report = {
        "report_version": 1,
        "artifact_version": __version__,
        "command": "spray",
        "config": cfg.echo(),
        "point": {"x": list(p.x), "y": list(p.y)},
        **data.to_dict(),
        "tension": tension(fs, p).tolist(),
        "torsion_e1_e2": T.tolist(),
        "checks": {
            "homogeneity_N_y_minus_2G": data.homogeneity_residual(p.y),
            "horizontal_lift_vs_N": data.horizontal_residual,
        },
    }
    emit(report, cfg, stdout)
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "identities": cmd_identities, "spray": cmd_spray}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finsym", description="Finsler sprays and symmetry classification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--finsler", required=True, help="builtin:<name>?k=v,... or expr:<F in x1..xn, y1..yn>")
        p.add_argument("--dim", type=int, default=None, help="dimension n of the base manifold")
        p.add_argument("--out", default=None, help="write the JSON report here")
        p.add_argument("--format", choices=("json", "table"), default="json")

    def sampling(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--base-points", type=int, default=10)
        p.add_argument("--fibre-points", type=int, default=3)
        p.add_argument("--box", default=None, help="e.g. 'x1=0.5:2,y=-1:1'")

    c = sub.add_parser("classify", help="classify a vector field")
    common(c)
    sampling(c)
    c.add_argument("--field", required=True, help="builtin:<name>?k=v,... or expr:[X1, ..., Xn]")
    c.add_argument("--tol", type=float, default=1e-7, help="relative residual tolerance")
    c.add_argument("--fibre-tol", type=float, default=1e-6, help="fibrewise spread tolerance")
    c.add_argument("--constancy-tol", type=float, default=1e-6, help="global constancy tolerance")

    i = sub.add_parser("identities", help="run the identity battery")
    common(i)
    sampling(i)
    i.add_argument("--tol", type=float, default=1e-8)

    s = sub.add_parser("spray", help="spray and connection data at a point")
    common(s)
    s.add_argument("--at", required=True, help="'x=2,0;y=1,1'")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command, finsler=args.finsler, dim=args.dim, out=args.out, format=args.format)
    for name in ("field", "seed", "base_points", "fibre_points", "box", "tol", "fibre_tol", "constancy_tol", "at"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if args.command == "identities":
        cfg.extra["identity_tol"] = args.tol
    return cfg


def run(cfg: RunConfig, stdout=sys.stdout, stderr=sys.stderr) -> int:
    try:
        return COMMANDS[cfg.command](cfg, stdout)
    except (InputError, SpecError, ExprError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (GeometryError, JetDomainError) as exc:
        stderr.write(f"degenerate: {exc}\n")
        return EXIT_DEGENERATE
    except SamplingError as exc:
        stderr.write(f"indeterminate: {exc}\n")
        return EXIT_INDETERMINATE
    except OSError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
