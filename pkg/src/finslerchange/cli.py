"""Command-line interface.

    finslerchange validate  --config euclid2-randers
    finslerchange tensors   --config riem3-randers --point "x=0.1,0.2,0.3;y=1,0.5,0"
    finslerchange verify    --config neg-corrupted-phi --format records
    finslerchange classify  --config quartic3
    finslerchange geodesic  --config euclid2-conformal --t-end 5 --out traj/

``--config`` takes a path, or a bare name looked up in the directory named
by ``FINSLERCHANGE_CONFIG_DIR`` and then in the packaged catalog.

Exit status: 0 when the report has no failures, 1 on a mathematical
failure, 2 on usage, parse or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import classify, finsler, geodesics, hrc, metricspec
from .jets import TangentPoint
from .metricspec import MetricSpec, SpecError

ENV_CONFIG_DIR = "FINSLERCHANGE_CONFIG_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- config resolution --------------------------------------------------------------


def catalog_dir() -> Path:
    return Path(str(resources.files("finslerchange") / "catalog"))


def catalog_names() -> list[str]:
    return sorted(p.stem for p in catalog_dir().glob("*.yaml"))


def resolve_config(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    dirs = []
    if os.environ.get(ENV_CONFIG_DIR):
        dirs.append(Path(os.environ[ENV_CONFIG_DIR]))
    dirs.append(catalog_dir())
    if not p.is_absolute():
        for d in dirs:
            for cand in (d / name, d / f"{name}.yaml", d / f"{name}.yml"):
                if cand.is_file():
                    return cand
    raise UsageError(f"config not found: {name} (searched {', '.join(str(d) for d in dirs)})")


def parse_tolerances(items: Sequence[str] | None) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or []:
        if "=" in item:
            key, val = item.split("=", 1)
            keys = [key.strip()]
        else:
            keys, val = list(metricspec.DEFAULT_TOLERANCES), item
        try:
            v = float(val)
        except ValueError:
            raise UsageError(f"bad --tol value: {item!r}") from None
        if not v > 0:
            raise UsageError(f"tolerance must be positive: {item!r}")
        for k in keys:
            if k not in metricspec.DEFAULT_TOLERANCES:
                raise UsageError(f"unknown tolerance key {k!r}")
            out[k] = v
    return out


def parse_point(text: str, n: int) -> TangentPoint:
    """``"x=0.1,0.2;y=1,0"`` to a tangent point of dimension ``n``."""
    parts: dict[str, list[float]] = {}
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        key, sep, vals = chunk.partition("=")
        key = key.strip().lower()
        if not sep or key not in ("x", "y"):
            raise UsageError(f"bad --point component {chunk!r}; expected x=... or y=...")
        try:
            parts[key] = [float(v) for v in vals.replace(" ", "").split(",") if v]
        except ValueError:
            raise UsageError(f"non-numeric coordinate in {chunk!r}") from None
    if set(parts) != {"x", "y"}:
        raise UsageError("--point needs both x=... and y=...")
    if len(parts["x"]) != n or len(parts["y"]) != n:
        raise UsageError(f"--point needs {n} coordinates for x and for y")
    try:
        return TangentPoint(parts["x"], parts["y"])
    except ValueError as exc:
        raise UsageError(f"invalid point: {exc}") from None


def load_spec(args: argparse.Namespace) -> MetricSpec:
    if not args.config:
        raise UsageError("--config is required")
    path = resolve_config(args.config)
    samples = {"count": args.samples} if args.samples else None
    if args.samples is not None and args.samples <= 0:
        raise UsageError("--samples must be positive")
    return metricspec.load(path, samples=samples, tolerances=parse_tolerances(args.tol))


# --- output -----------------------------------------------------------------------------


def _jsonable(v: Any) -> Any:
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, TangentPoint):
        return {"x": list(v.x), "y": list(v.y)}
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not serializable: {type(v).__name__}")


def dumps(payload: Any) -> str:
    return json.dumps(payload, indent=1, sort_keys=True, default=_jsonable) + "\n"


def table(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    cells = [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    return "\n".join(out)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "yes" if v else "NO"
    if isinstance(v, float):
        return f"{v:.3e}"
    return str(v)


def emit(args: argparse.Namespace, name: str, text: str, records: dict) -> None:
    body = dumps(records) if args.format == "records" else text.rstrip("\n") + "\n"
    sys.stdout.write(body)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(dumps(records), encoding="utf-8")
        (out / f"{name}.txt").write_text(text.rstrip("\n") + "\n", encoding="utf-8")


# --- commands -----------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    report = metricspec.validate(spec)
    hv = classify.verify_h_vector(spec) if spec.has_b else None
    rows = [(c.name, c.passed, c.worst, c.detail) for c in report.checks]
    if hv is not None:
        rows.append(("h_vector_a", hv.residual_a <= hv.tol, hv.residual_a, ""))
        rows.append(("h_vector_b", hv.residual_b <= hv.tol, hv.residual_b, ""))
        rows.append(("rho_x_only", hv.lemma21_residual <= hv.lemma21_tol, hv.lemma21_residual, ""))
        if not hv.holds:
            rows[-1] = (*rows[-1][:3], f"h-vector fails, worst at {hv.where}")
    ok = report.passed and (hv is None or hv.holds)
    text = f"validate {spec.name}: {'PASS' if ok else 'FAIL'}\n" + table(rows, ["check", "ok", "worst", "detail"])
    records = {
        "command": "validate",
        "spec": spec.name,
        "passed": ok,
        "checks": report.as_records(),
        "h_vector": None
        if hv is None
        else {
            "verdict": hv.verdict,
            "residual_a": hv.residual_a,
            "residual_b": hv.residual_b,
            "lemma21_residual": hv.lemma21_residual,
            "where": hv.where,
        },
    }
    emit(args, "validate", text, records)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_tensors(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    p = parse_point(args.point, spec.n) if args.point else spec.sample_points[0]
    tol = spec.tolerances["closed_form"]
    base = finsler.analyze(spec.L, p)
    base_t = {"L": base.L, "l": base.l, "g": base.g, "g_inv": base.ginv, "h": base.h, "C": base.C, "G": base.G}
    scalars = hrc.change_scalars(spec, p)
    cmp = hrc.tensor_comparison(spec, p)
    ok = all(r <= tol for *_, r in cmp)

    lines = [f"tensors {spec.name} at {p}", "", "base space:"]
    for k, v in base_t.items():
        lines.append(f"  {k} = {np.array2string(np.asarray(v), precision=10)}")
    lines += ["", "change scalars:"]
    lines += [f"  {k} = {np.array2string(np.asarray(v), precision=12)}" for k, v in scalars.items()]
    lines += ["", "changed space, closed form vs oracle:"]
    for name, closed, _oracle, _r in cmp:
        lines.append(f"  {name} = {np.array2string(closed, precision=10)}")
    lines += ["", table([(n, r <= tol, r) for n, _c, _o, r in cmp], ["tensor", "ok", "residual"])]

    records = {
        "command": "tensors",
        "spec": spec.name,
        "point": p,
        "passed": ok,
        "base": base_t,
        "scalars": scalars,
        "changed": [
            {"tensor": n, "closed_form": c, "oracle": o, "residual": r, "tol": tol} for n, c, o, r in cmp
        ],
    }
    emit(args, "tensors", "\n".join(lines), records)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    report = hrc.verify_closed_forms(spec)
    rows = [
        (r.key, r.passed, r.worst, r.tol, "gate" if r.gating else "info", r.error or r.where)
        for r in report.rows
    ]
    head = f"verify {spec.name} ({len(spec.sample_points)} points): {'PASS' if report.passed else 'FAIL'}"
    text = head + "\n" + table(rows, ["row", "ok", "worst", "tol", "kind", "worst at"])
    if report.notes:
        text += "\n\nnotes:\n" + "\n".join(f"  - {n}" for n in report.notes)
    if report.spray_localization:
        loc = "\n".join(f"  {k}: {v:.3e}" for k, v in sorted(report.spray_localization.items()))
        text += "\n\nprinted-spray localization (max abs gap per named term):\n" + loc
    records = {
        "command": "verify",
        "spec": spec.name,
        "passed": report.passed,
        "rows": report.as_records(),
        "notes": report.notes,
        "spray_localization": dict(sorted(report.spray_localization.items())),
    }
    emit(args, "verify", text, records)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_classify(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    base = classify.classify_base(spec)
    changed = classify.classify_changed(spec)
    change = classify.classify_change(spec, base, changed)
    reports = (base, changed, change)
    ok = all(r.passed for r in reports)
    parts = [f"classify {spec.name}: {'consistent' if ok else 'IMPLICATION VIOLATED'}"]
    for r in reports:
        parts.append(f"\n[{r.subject}]")
        parts.append(
            table([(p.name, p.verdict, p.residual, p.tol, p.detail) for p in r.predicates],
                  ["predicate", "verdict", "residual", "tol", "detail"])
        )
        parts.append(table([(i.name, i.consistent) for i in r.implications], ["implication", "consistent"]))
        parts += [f"  note: {n}" for n in r.notes]
    records = {
        "command": "classify",
        "spec": spec.name,
        "passed": ok,
        "records": [rec for r in reports for rec in r.as_records()],
        "notes": [n for r in reports for n in r.notes],
    }
    emit(args, "classify", "\n".join(parts), records)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_geodesic(args: argparse.Namespace) -> int:
    spec = load_spec(args)
    p = parse_point(args.point, spec.n) if args.point else spec.sample_points[0]
    tol = spec.tolerances["geodesic"]
    if args.t_end <= 0:
        raise UsageError("--t-end must be positive")
    kw = {"n_out": args.n_out}
    checks: list[tuple[str, bool, float, str]] = []
    if args.space == "base":
        traj = geodesics.base_geodesic(spec, p.x, p.y, args.t_end, **kw)
    else:
        traj = geodesics.changed_geodesic(spec, p.x, p.y, args.t_end, route=args.route, **kw)
    checks.append(("not truncated", traj.truncated is None, 0.0, traj.truncated or ""))
    checks.append(("unit speed drift", traj.speed_drift <= tol, traj.speed_drift, ""))
    reparam = None
    if args.space == "changed" and traj.truncated is None:
        other = "closed" if args.route == "oracle" else "oracle"
        alt = geodesics.changed_geodesic(spec, p.x, p.y, args.t_end, route=other, **kw)
        d = geodesics.max_deviation(traj, alt)
        checks.append((f"{args.route} vs {other} spray route", d <= tol and alt.truncated is None, d, alt.truncated or ""))
        try:
            reparam = geodesics.reparam_check(spec, p.x, p.y, args.t_end, **kw)
        except geodesics.ReparamError as exc:
            checks.append(("arc-length relation", False, math.inf, str(exc)))
        else:
            r = reparam.as_dict()
            checks.append(("arc-length accumulation", r["length_defect"] <= tol, r["length_defect"], ""))
            checks.append(("arc-length vs Lbar length", r["Lbar_length_defect"] <= tol, r["Lbar_length_defect"], ""))
            checks.append(("velocity relation", r["velocity_defect"] <= tol, r["velocity_defect"], ""))
            checks.append(("acceleration relation", r["accel_defect"] <= tol, r["accel_defect"], ""))
    ok = all(c[1] for c in checks)

    meta = traj.meta()
    text = (
        f"geodesic {spec.name} ({traj.space} space, {traj.route} spray) from {p}: {'PASS' if ok else 'FAIL'}\n"
        f"  samples={len(traj.t)} steps={traj.steps} nfev={traj.nfev} "
        f"max_local_error={traj.max_local_error:.3e} y0 scale={traj.scale:.12g}\n"
        f"  end x = {np.array2string(traj.x[-1], precision=12)}\n"
        + table(checks, ["check", "ok", "value", "detail"])
    )
    if reparam is not None:
        text += f"\n  unsquared-factor reading defect (reported only): {reparam.accel_defect_alt:.3e}"
    records = {
        "command": "geodesic",
        "spec": spec.name,
        "passed": ok,
        "start": p,
        "meta": meta,
        "checks": [{"check": c[0], "passed": c[1], "value": c[2], "detail": c[3]} for c in checks],
        "reparam": None if reparam is None else reparam.as_dict(),
        "samples": traj.as_records(),
    }
    emit(args, "geodesic", text, records)
    if args.out:
        out = Path(args.out)
        (out / "trajectory.csv").write_text(traj.to_csv(), encoding="utf-8")
        (out / "trajectory.json").write_text(traj.to_json() + "\n", encoding="utf-8")
    return EXIT_OK if ok else EXIT_FAIL


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"spec file, or a name in ${ENV_CONFIG_DIR} or the packaged catalog")
    common.add_argument(
        "--tol",
        action="append",
        metavar="X|KEY=X",
        help="tolerance override; a bare number sets every tolerance (repeatable)",
    )
    common.add_argument("--samples", type=int, help="number of sample points")
    common.add_argument("--out", help="directory for report (and trajectory) files")
    common.add_argument("--format", choices=("text", "records"), default="text")
    common.add_argument("--point", help='tangent point, e.g. "x=0.1,0.2;y=1,0"')

    parser = argparse.ArgumentParser(
        prog="finslerchange",
        description="h-Randers conformal change of Finsler metrics: closed forms, oracles, classification, geodesics.",
        epilog=f"catalog: {', '.join(catalog_names())}",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the Finsler axioms and the h-vector conditions")
    sub.add_parser("tensors", parents=[common], help="base and changed tensors at one point")
    sub.add_parser("verify", parents=[common], help="closed forms against the jet oracle on all samples")
    sub.add_parser("classify", parents=[common], help="special-space predicates and implications")
    g = sub.add_parser("geodesic", parents=[common], help="integrate a geodesic and check it")
    g.add_argument("--t-end", type=float, default=5.0)
    g.add_argument("--space", choices=("base", "changed"), default="changed")
    g.add_argument("--route", choices=("oracle", "closed"), default="oracle", help="spray used by the integrator")
    g.add_argument("--n-out", type=int, default=geodesics.N_OUT, help="number of output samples")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "tensors": cmd_tensors,
    "verify": cmd_verify,
    "classify": cmd_classify,
    "geodesic": cmd_geodesic,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, SpecError, OSError) as exc:
        print(f"finslerchange: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # parse and evaluation errors raised while building the spec
        print(f"finslerchange: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"finslerchange: failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
