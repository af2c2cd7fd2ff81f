"""Metric specifications: ``(n, L, sigma, b_i)`` plus sampling and tolerances.

A spec is normally loaded from a YAML document::

    name: randers-conformal-euclid2
    dimension: 2
    L: sqrt(y1^2 + y2^2)
    sigma: 0.1*x1            # optional, x-only, default 0
    b: ["0.3", "0.1*x1"]     # optional, default all zero
    parameters: {}           # named constants usable in the expressions
    samples:
      count: 20
      x_box: [-1, 1]         # one [lo, hi] pair, or one pair per coordinate
      y_box: [-1, 1]
      min_y_norm: 0.25
      directions_per_x: 5
      points: []             # optional explicit [[x...], [y...]] pairs
    tolerances: {closed_form: 1.0e-9}

Sample points come from the unscrambled Halton sequence in ``2n``
dimensions (first point skipped), mapped to the boxes; points with
``|y| < min_y_norm`` are dropped.  Nothing random is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml
from scipy.stats import qmc

from . import symexpr
from .jets import Jet, TangentPoint, lift
from .symexpr import Expr, parse

DEFAULT_TOLERANCES = {
    "closed_form": 1e-9,
    "inverse": 1e-9,
    "identity": 1e-9,
    "lemma21": 1e-7,
    "spray": 1e-7,
    "v_curvature": 1e-8,
    "vanish": 1e-8,
    "h_vector": 1e-8,
    "homogeneity": 1e-8,
    "geodesic": 1e-6,
}


class SpecError(ValueError):
    pass


@dataclass(eq=False)
class MetricSpec:
    n: int
    L_expr: Expr
    sigma_expr: Expr | None = None
    b_exprs: list[Expr | None] | None = None
    parameters: dict[str, float] = field(default_factory=dict)
    name: str = "metric"
    samples: dict[str, Any] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    sample_points: list[TangentPoint] | None = None
    perturb: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 2 <= self.n <= 8:
            raise SpecError(f"dimension {self.n} outside 2..8")
        if self.b_exprs is not None and len(self.b_exprs) != self.n:
            raise SpecError(f"b has {len(self.b_exprs)} components, expected {self.n}")
        for label, e in self._exprs():
            for v in symexpr.variables(e):
                if v.index > self.n:
                    raise SpecError(f"{label} references {v.name} but dimension is {self.n}")
            missing = symexpr.parameters(e) - set(self.parameters)
            if missing:
                raise SpecError(f"{label} uses undeclared parameter(s) {sorted(missing)}")
        self.tolerances = {**DEFAULT_TOLERANCES, **{k: float(v) for k, v in self.tolerances.items()}}
        bad = [k for k, v in self.tolerances.items() if not v > 0]
        if bad:
            raise SpecError(f"tolerances must be positive: {bad}")
        if self.sample_points is None:
            self.sample_points = sample_points(self.n, self.samples)

    def _exprs(self):
        yield "L", self.L_expr
        if self.sigma_expr is not None:
            yield "sigma", self.sigma_expr
        for i, e in enumerate(self.b_exprs or []):
            if e is not None:
                yield f"b{i + 1}", e

    # evaluators: f(xs, ys) over floats or Jets ------------------------------

    @cached_property
    def L(self):
        f = symexpr.compile_expr(self.L_expr, self.parameters)

        def L(xs, ys):
            return f(xs, ys)

        return L

    @cached_property
    def sigma(self):
        if self.sigma_expr is None:
            return lambda xs, ys: 0.0
        return symexpr.compile_expr(self.sigma_expr, self.parameters)

    @cached_property
    def b_funcs(self):
        zero = lambda xs, ys: 0.0  # noqa: E731
        return [
            zero if e is None else symexpr.compile_expr(e, self.parameters) for e in (self.b_exprs or [None] * self.n)
        ]

    def b(self, xs, ys) -> list:
        return [f(xs, ys) for f in self.b_funcs]

    def beta(self, xs, ys):
        total = 0.0
        for f, yi in zip(self.b_funcs, ys):
            total = total + f(xs, ys) * yi
        return total

    @cached_property
    def Lbar(self):
        """Evaluator of the changed metric ``e^sigma L + b_i y^i``."""
        L, sigma, beta = self.L, self.sigma, self.beta

        def Lbar(xs, ys):
            s = sigma(xs, ys)
            es = s.exp() if isinstance(s, Jet) else math.exp(s)
            return es * L(xs, ys) + beta(xs, ys)

        return Lbar

    @property
    def has_b(self) -> bool:
        return any(e is not None for e in (self.b_exprs or []))

    def directions_at(self, x: Sequence[float], k: int | None = None) -> list[TangentPoint]:
        """``k`` deterministic y-directions at a fixed position ``x``."""
        k = k or int(self.samples.get("directions_per_x", 5))
        lo, hi = _box(self.samples.get("y_box", [-1.0, 1.0]), self.n)
        seq = qmc.Halton(d=self.n, scramble=False).random(8 * k + 1)[1:]
        pts = []
        for u in seq:
            y = lo + (hi - lo) * u
            if np.linalg.norm(y) >= float(self.samples.get("min_y_norm", 0.25)):
                pts.append(TangentPoint(x, y))
            if len(pts) == k:
                break
        return pts

    def to_dict(self) -> dict[str, Any]:
        b = None
        if self.b_exprs is not None:
            b = ["0" if e is None else symexpr.to_text(e) for e in self.b_exprs]
        return {
            "name": self.name,
            "dimension": self.n,
            "L": symexpr.to_text(self.L_expr),
            "sigma": None if self.sigma_expr is None else symexpr.to_text(self.sigma_expr),
            "b": b,
            "parameters": dict(self.parameters),
        }


def _box(spec, n: int) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(spec, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (n, 1))
    if arr.shape != (n, 2):
        raise SpecError(f"box must be [lo, hi] or {n} such pairs")
    return arr[:, 0], arr[:, 1]


def sample_points(n: int, cfg: Mapping[str, Any]) -> list[TangentPoint]:
    if cfg.get("points"):
        return [TangentPoint(x, y) for x, y in cfg["points"]]
    count = int(cfg.get("count", 20))
    xlo, xhi = _box(cfg.get("x_box", [-1.0, 1.0]), n)
    ylo, yhi = _box(cfg.get("y_box", [-1.0, 1.0]), n)
    min_norm = float(cfg.get("min_y_norm", 0.25))
    skip = int(cfg.get("skip", 1))
    seq = qmc.Halton(d=2 * n, scramble=False).random(skip + 20 * count)[skip:]
    pts = []
    for u in seq:
        x = xlo + (xhi - xlo) * u[:n]
        y = ylo + (yhi - ylo) * u[n:]
        if np.linalg.norm(y) < min_norm:
            continue
        pts.append(TangentPoint(x, y))
        if len(pts) == count:
            break
    return pts


def _expr(text, params, label):
    if text is None:
        return None
    if isinstance(text, (int, float)):
        text = repr(float(text))
    try:
        e = parse(str(text), params)
    except symexpr.DSLSyntaxError as exc:
        raise SpecError(f"{label}: {exc}") from exc
    if isinstance(e, symexpr.Num) and e.value == 0.0:
        return None
    return e


def from_dict(doc: Mapping[str, Any]) -> MetricSpec:
    if "dimension" not in doc or "L" not in doc:
        raise SpecError("spec needs at least 'dimension' and 'L'")
    n = int(doc["dimension"])
    params = {str(k): float(v) for k, v in (doc.get("parameters") or {}).items()}
    L = _expr(doc["L"], params, "L")
    if L is None:
        raise SpecError("L must not be identically zero")
    sigma = _expr(doc.get("sigma"), params, "sigma")
    b = doc.get("b")
    b_exprs = None
    if b is not None:
        if len(b) != n:
            raise SpecError(f"b has {len(b)} components, expected {n}")
        b_exprs = [_expr(t, params, f"b{i + 1}") for i, t in enumerate(b)]
        if all(e is None for e in b_exprs):
            b_exprs = None
    samples = dict(doc.get("samples") or {})
    return MetricSpec(
        n=n,
        L_expr=L,
        sigma_expr=sigma,
        b_exprs=b_exprs,
        parameters=params,
        name=str(doc.get("name", "metric")),
        samples=samples,
        tolerances=dict(doc.get("tolerances") or {}),
        perturb={str(k): float(v) for k, v in (doc.get("perturb") or {}).items()},
    )


def load(
    path: str | Path,
    samples: Mapping[str, Any] | None = None,
    tolerances: Mapping[str, float] | None = None,
) -> MetricSpec:
    """Read a YAML spec; ``samples`` and ``tolerances`` override file values."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: top level must be a mapping")
    doc.setdefault("name", path.stem)
    if samples:
        doc["samples"] = {**(doc.get("samples") or {}), **samples}
    if tolerances:
        doc["tolerances"] = {**(doc.get("tolerances") or {}), **tolerances}
    return from_dict(doc)


# --- validation ----------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class ValidationReport:
    spec_name: str
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def as_records(self) -> list[dict[str, Any]]:
        return [
            {"check": c.name, "passed": c.passed, "worst": c.worst, "detail": c.detail} for c in self.checks
        ]


HOMOGENEITY_LAMBDAS = (0.5, 2.0, 7.3)


def validate(spec: MetricSpec) -> ValidationReport:
    """Numerical Finsler-axiom checks on the sample set."""
    tol = spec.tolerances["homogeneity"]
    pts = spec.sample_points
    checks: list[Check] = []

    def run(name, fn):
        worst, where, err = -math.inf, "", None
        for p in pts:
            try:
                v = fn(p)
            except (ValueError, ArithmeticError) as exc:
                err = f"{exc} at {p}"
                break
            if v > worst:
                worst, where = v, str(p)
        if err:
            checks.append(Check(name, False, math.inf, err))
        return (0.0 if worst == -math.inf else worst), where, err

    # (a) L > 0
    w, where, err = run("L_positive", lambda p: -spec.L(list(p.x), list(p.y)))
    if not err:
        checks.append(Check("L_positive", w < 0, -w if w < 0 else w, f"min L at {where}" if w >= 0 else ""))

    # (b) positive 1-homogeneity of L
    def hom(p):
        L0 = spec.L(list(p.x), list(p.y))
        return max(
            abs(spec.L(list(p.x), [lam * v for v in p.y]) - lam * L0) / (lam * abs(L0)) for lam in HOMOGENEITY_LAMBDAS
        )

    w, where, err = run("L_homogeneity", hom)
    if not err:
        checks.append(Check("L_homogeneity", w <= tol, w, f"worst at {where}" if w > tol else ""))

    # (c) g_ij positive definite
    def mineig(p):
        j = lift(lambda xs, ys: 0.5 * spec.L(xs, ys) ** 2, p, 0, 2)
        g = _hessian_y(j)
        ev = np.linalg.eigvalsh(g)
        return -ev.min() / max(ev.max(), 1e-300)

    w, where, err = run("g_positive_definite", mineig)
    if not err:
        checks.append(Check("g_positive_definite", w < 0, w, f"indefinite at {where}" if w >= 0 else ""))

    # (d) b_i 0-homogeneous in y
    if spec.has_b:

        def bhom(p):
            b0 = spec.b(list(p.x), list(p.y))
            scale = max(1.0, max(abs(v) for v in b0))
            return max(
                abs(bl - v) / scale
                for lam in HOMOGENEITY_LAMBDAS
                for bl, v in zip(spec.b(list(p.x), [lam * u for u in p.y]), b0)
            )

        w, where, err = run("b_homogeneity", bhom)
        if not err:
            checks.append(Check("b_homogeneity", w <= tol, w, f"worst at {where}" if w > tol else ""))

    # (e) changed metric positive
    w, where, err = run("Lbar_positive", lambda p: -spec.Lbar(list(p.x), list(p.y)))
    if not err:
        checks.append(Check("Lbar_positive", w < 0, -w if w < 0 else w, f"min Lbar at {where}" if w >= 0 else ""))

    # (f) sigma independent of y (syntactic)
    ys = [] if spec.sigma_expr is None else sorted(v.name for v in symexpr.variables(spec.sigma_expr) if v.kind == "y")
    checks.append(Check("sigma_x_only", not ys, float(len(ys)), f"sigma uses {ys}" if ys else ""))

    # abs() must not reach zero on the samples
    abs_args = [
        (label, node.arg)
        for label, e in spec._exprs()
        for node in symexpr.walk(e)
        if isinstance(node, symexpr.Call) and node.func == "abs"
    ]
    if abs_args:
        ok, detail, worst = True, "", math.inf
        for label, arg in abs_args:
            f = symexpr.compile_expr(arg, spec.parameters)
            vals = np.array([f(list(p.x), list(p.y)) for p in pts])
            scale = max(1.0, float(np.max(np.abs(vals))))
            worst = min(worst, float(np.min(np.abs(vals))) / scale)
            if np.min(np.abs(vals)) <= tol * scale or (vals.min() < 0 < vals.max()):
                ok = False
                detail = f"abs({symexpr.to_text(arg)}) in {label} can vanish on the sample set"
        checks.append(Check("abs_smooth", ok, worst, detail))

    return ValidationReport(spec.name, checks)


def _hessian_y(j: Jet) -> np.ndarray:
    n = j.space.n
    zero = (0,) * n
    g = np.empty((n, n))
    for r in range(n):
        for s in range(n):
            beta = [0] * n
            beta[r] += 1
            beta[s] += 1
            i = j.space.index[(zero, tuple(beta))]
            g[r, s] = j.coeffs[i] * j.space.factorial[i]
    return g
