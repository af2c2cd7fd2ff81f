"""Geodesics of the base and changed spaces.

The first-order system ``x' = y, y' = -2 G(x, y)`` is stepped with the
embedded 4(5) Runge-Kutta pair from scipy.  Spray values come from the
jet oracle by default; the closed-form changed spray can be swapped in to
cross-check it along whole trajectories.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import RK45, quad

from . import finsler
from .hrc import ChangePack, changed_metric
from .jets import Jet, TangentPoint
from .metricspec import MetricSpec

RTOL = 1e-9
ATOL = 1e-9
MAX_STEP = 0.1
N_OUT = 101

_DOMAIN_ERRORS = (ArithmeticError, ValueError, np.linalg.LinAlgError)


def _value(L: Callable, x, y) -> float:
    v = L(list(map(float, x)), list(map(float, y)))
    return float(v.value if isinstance(v, Jet) else v)


@dataclass
class GeodesicTrajectory:
    """Samples ``(t, x(t), y(t))`` of one geodesic on a uniform grid."""

    space: str  # "base" or "changed"
    parameter: str  # "s" or "sbar"
    route: str  # "oracle" or "closed"
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    L: np.ndarray
    scale: float  # y0 was multiplied by this to make L(x0, y0) = 1
    steps: int = 0
    nfev: int = 0
    max_local_error: float = 0.0
    quadratures: dict[str, np.ndarray] = field(default_factory=dict)
    truncated: str | None = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.L - 1.0))) if len(self.L) else 0.0

    def header(self) -> list[str]:
        n = self.n
        q = list(self.quadratures)
        return ["t", *[f"x{i + 1}" for i in range(n)], *[f"y{i + 1}" for i in range(n)], "L", *q]

    def rows(self) -> list[list[float]]:
        cols = [self.t[:, None], self.x, self.y, self.L[:, None]]
        cols += [v[:, None] for v in self.quadratures.values()]
        return np.hstack(cols).tolist()

    def to_csv(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows():
            w.writerow([repr(v) for v in r])
        return buf.getvalue()

    def as_records(self) -> list[dict[str, float]]:
        keys = self.header()
        return [dict(zip(keys, r)) for r in self.rows()]

    def meta(self) -> dict:
        return {
            "space": self.space,
            "parameter": self.parameter,
            "route": self.route,
            "scale": self.scale,
            "steps": self.steps,
            "nfev": self.nfev,
            "max_local_error": self.max_local_error,
            "speed_drift": self.speed_drift,
            "truncated": self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps({"meta": self.meta(), "samples": self.as_records()}, indent=1)


def integrate(
    L: Callable,
    x0,
    y0,
    t_end: float,
    tol: float = RTOL,
    spray: Callable | None = None,
    *,
    atol: float = ATOL,
    max_step: float = MAX_STEP,
    n_out: int = N_OUT,
    quadratures: Mapping[str, Callable] | None = None,
    space: str = "base",
    route: str = "oracle",
) -> GeodesicTrajectory:
    """Integrate the geodesic of ``L`` through ``(x0, y0)`` up to ``t_end``.

    ``y0`` is rescaled so that ``L(x0, y0) = 1``; the parameter is then arc
    length.  ``spray(x, y)`` defaults to the oracle spray of ``L``.
    ``quadratures`` maps names to integrands ``f(x, y)`` accumulated along
    the curve as extra state components.

    If the metric stops being valid along the path the trajectory is cut
    at the last good step and ``truncated`` holds the reason.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    n = len(x0)
    L0 = _value(L, x0, y0)
    if not L0 > 0:
        raise ValueError(f"L(x0, y0) = {L0} is not positive")
    scale = 1.0 / L0
    y0 = y0 * scale
    spray = spray or (lambda x, y: finsler.spray_values(L, x, y))
    quads = dict(quadratures or {})
    qfuncs = list(quads.values())

    def rhs(_t, u):
        x, y = u[:n], u[n : 2 * n]
        du = np.empty_like(u)
        du[:n] = y
        du[n : 2 * n] = -2.0 * np.asarray(spray(x, y), dtype=float)
        for k, f in enumerate(qfuncs):
            du[2 * n + k] = f(x, y)
        return du

    grid = np.linspace(0.0, t_end, n_out)
    u0 = np.concatenate([x0, y0, np.zeros(len(qfuncs))])
    out = [u0]
    reason = None
    steps = 0
    max_err = 0.0
    gi = 1
    try:
        solver = RK45(rhs, 0.0, u0, t_end, max_step=max_step, rtol=tol, atol=atol)
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                reason = f"integrator failed, metric likely degenerating: {msg}"
                break
            steps += 1
            h = solver.t - solver.t_old
            max_err = max(max_err, float(np.max(np.abs(h * (solver.K.T @ solver.E)))))
            dense = solver.dense_output()
            while gi < n_out and grid[gi] <= solver.t + 1e-14:
                out.append(dense(grid[gi]))
                gi += 1
        nfev = solver.nfev
    except _DOMAIN_ERRORS as exc:
        reason = f"metric invalid along path: {exc}"
        nfev = 0
    if gi < n_out and reason is None:
        reason = "integration stopped early"

    U = np.array(out)
    t = grid[: len(U)]
    xs, ys = U[:, :n], U[:, n : 2 * n]
    Ls = np.array([_value(L, a, b) for a, b in zip(xs, ys)])
    return GeodesicTrajectory(
        space=space,
        parameter="s" if space == "base" else "sbar",
        route=route,
        t=t,
        x=xs,
        y=ys,
        L=Ls,
        scale=scale,
        steps=steps,
        nfev=nfev,
        max_local_error=max_err,
        quadratures={k: U[:, 2 * n + i] for i, k in enumerate(quads)},
        truncated=reason,
    )


def closed_form_spray(spec: MetricSpec) -> Callable:
    """Changed spray from the closed form, as a function ``(x, y) -> G``."""

    def G(x, y):
        return ChangePack(spec, TangentPoint(x, y)).Gbar

    return G


def base_geodesic(spec: MetricSpec, x0, y0, t_end: float, **kw) -> GeodesicTrajectory:
    return integrate(spec.L, x0, y0, t_end, space="base", route="oracle", **kw)


def changed_geodesic(spec: MetricSpec, x0, y0, t_end: float, route: str = "oracle", **kw) -> GeodesicTrajectory:
    if route not in ("oracle", "closed"):
        raise ValueError(f"unknown spray route {route!r}")
    Lbar = changed_metric(spec)
    spray = closed_form_spray(spec) if route == "closed" else None
    return integrate(Lbar, x0, y0, t_end, spray=spray, space="changed", route=route, **kw)


def max_deviation(a: GeodesicTrajectory, b: GeodesicTrajectory) -> float:
    """Pointwise distance of two trajectories on their common grid."""
    m = min(len(a.t), len(b.t))
    return float(np.max(np.abs(a.x[:m] - b.x[:m]))) if m else 0.0


def line_deviation(traj: GeodesicTrajectory) -> float:
    """Distance from the straight line ``x0 + t y0``."""
    line = traj.x[0] + traj.t[:, None] * traj.y[0]
    return float(np.max(np.abs(traj.x - line)))


# --- arc-length reparametrization ------------------------------------------


class ReparamError(ArithmeticError):
    pass


@dataclass
class ReparamReport:
    """Defects of the relations between the base and changed arc lengths.

    The curve is a geodesic of the changed space parameterized by ``sbar``.
    Along it ``s`` is accumulated from ``ds/dsbar = L`` and ``sbar`` is
    re-accumulated from ``dsbar/ds = e^sigma + b_i dx^i/ds``.
    """

    length_defect: float  # re-accumulated sbar vs sbar
    Lbar_length_defect: float  # re-accumulated sbar vs direct quadrature of Lbar
    velocity_defect: float  # dx/ds = dx/dsbar (e^sigma + b.dx/ds), pointwise
    accel_defect: float  # second-derivative relation, squared factor reading
    accel_defect_alt: float  # same with the factor not squared
    min_ratio: float  # smallest dsbar/ds seen
    s: np.ndarray
    sbar: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {
            "length_defect": self.length_defect,
            "Lbar_length_defect": self.Lbar_length_defect,
            "velocity_defect": self.velocity_defect,
            "accel_defect": self.accel_defect,
            "accel_defect_alt": self.accel_defect_alt,
            "min_ratio": self.min_ratio,
        }


def _ratio(spec: MetricSpec, x, v) -> float:
    """``dsbar/ds = e^sigma + b_i v^i`` for a base unit vector ``v``."""
    es = math.exp(_value(spec.sigma, x, v))
    b = np.array([_value(f, x, v) for f in spec.b_funcs])
    return es + float(b @ v)


def reparam_check(spec: MetricSpec, x0, y0, t_end: float, **kw) -> ReparamReport:
    """Integrate a changed-space geodesic and check both arc-length relations."""
    L, Lbar = spec.L, changed_metric(spec)

    def ds(x, y):
        return _value(L, x, y)

    def sbar_acc(x, y):
        Lx = _value(L, x, y)
        k = _ratio(spec, x, y / Lx)
        if not k > 0:
            raise ReparamError(f"dsbar/ds = {k:.6g} is not positive at x={tuple(x)}")
        return k * Lx

    def lbar(x, y):
        return _value(Lbar, x, y)

    traj = changed_geodesic(
        spec, x0, y0, t_end, quadratures={"s": ds, "sbar_acc": sbar_acc, "Lbar_len": lbar}, **kw
    )
    if traj.truncated:
        raise ReparamError(traj.truncated)
    q = traj.quadratures

    vel = acc = acc_alt = 0.0
    ratios = []
    for x, xd in zip(traj.x, traj.y):
        d = _second_order(spec, x, xd)
        ratios.append(d["k"])
        vel = max(vel, float(np.max(np.abs(d["xs"] - xd * d["k"]))))
        # d2x/ds2 = d2x/dsbar2 k^2 + (dx/ds / k) dk/ds
        tail = d["xs"] / d["k"] * d["dk"]
        acc = max(acc, float(np.max(np.abs(d["xss"] - (d["xdd"] * d["k"] ** 2 + tail)))))
        acc_alt = max(acc_alt, float(np.max(np.abs(d["xss"] - (d["xdd"] * d["k"] + tail)))))
    return ReparamReport(
        length_defect=float(np.max(np.abs(q["sbar_acc"] - traj.t))),
        Lbar_length_defect=float(np.max(np.abs(q["sbar_acc"] - q["Lbar_len"]))),
        velocity_defect=vel,
        accel_defect=acc,
        accel_defect_alt=acc_alt,
        min_ratio=float(min(ratios)),
        s=q["s"],
        sbar=traj.t,
    )


def _second_order(spec: MetricSpec, x, xd) -> dict:
    """Derivatives in ``s`` of a changed geodesic at ``(x, dx/dsbar)``.

    ``x'' `` is obtained from ``x' = xd / L(x, xd)`` by differentiating
    along the curve, independently of the relation being checked.
    """
    p = TangentPoint(x, xd)
    cp = ChangePack(spec, p)
    base = cp.base
    xdd = -2.0 * finsler.spray_values(spec.Lbar, x, xd)
    Lv = base.L
    dL = base.dL_dx @ xd + base.l @ xdd  # dL/dsbar
    xs = xd / Lv
    xss = (xdd / Lv - xd * dL / Lv**2) / Lv
    # k = e^sigma + b_i x'^i; b is evaluated at y = x' (zero-homogeneous in y)
    k = cp.es + float(cp.b @ xs)
    dk = cp.es * float(cp.dsigma @ xs)
    dk += float(xs @ (cp.db_dx @ xs)) + float(xs @ (cp.db_dy @ xss)) * Lv
    dk += float(cp.b @ xss)
    return {"k": k, "dk": dk, "xs": xs, "xss": xss, "xdd": xdd}


# --- reversibility ------------------------------------------------------------


def reverse_retrace(L: Callable, traj: GeodesicTrajectory, **kw) -> float:
    """Integrate back from the end point with reversed velocity.

    Returns the largest distance between the reversed curve and the forward
    one at matching arc length.  Small only for reversible metrics.
    """
    back = integrate(L, traj.x[-1], -traj.y[-1] / traj.L[-1], traj.t[-1], n_out=len(traj.t), **kw)
    m = min(len(back.x), len(traj.x))
    return float(np.max(np.abs(back.x[:m] - traj.x[::-1][:m])))


def segment_lengths(spec: MetricSpec, x0, x1) -> dict[str, float]:
    """Changed lengths of the straight segment ``x0 -> x1`` in both directions.

    For a reversible base ``forward - backward = 2 int beta``.
    """
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(x1, dtype=float) - x0
    Lbar = spec.Lbar

    def along(f, sign):
        return quad(lambda t: _value(f, x0 + t * v, sign * v), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)[0]

    fwd = along(Lbar, 1.0)
    bwd = along(Lbar, -1.0)
    two_beta = 2.0 * along(spec.beta, 1.0) if spec.has_b else 0.0
    return {"forward": fwd, "backward": bwd, "two_beta": two_beta, "defect": abs(fwd - bwd - two_beta)}
