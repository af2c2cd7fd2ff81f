"""Special-space predicates for a Finsler space and for the changed space.

"Vanishes identically" is tested as: the worst relative residual over the
sample points is at most the ``vanish`` tolerance (default 1e-8).  A
vanishing residual is normalized by the power of ``L`` that makes it
0-homogeneous, so verdicts do not depend on the length of ``y``.

Two kinds of report exist:

* :func:`classify_space` decides intrinsic predicates of one metric
  (quasi-C-reducible, C-reducible, S3-like, S4-like, Berwald, Landsberg).
* :func:`classify_change` evaluates the sufficient conditions stated for the
  changed space (V_ijk, the C-reducibility defect, U_hijk, S_hijk of the base,
  V_ijkh, W_ijk) and checks each against the corresponding predicate of
  ``Lbar``.  A theorem condition holding while its conclusion fails is
  reported as an implication violation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.linalg

from . import finsler
from .hrc import ChangePack
from .jets import TangentPoint
from .metricspec import MetricSpec
from .tensors import pi3, rel_residual

HOLDS, FAILS, NA = "holds", "fails", "not-applicable"

# The FD route for dy_l G^i_jk is accurate to ~1e-9 relative, so it is
# judged at this looser threshold.
FD_BERWALD_TOL = 1e-6
FD_BERWALD_POINTS = 5


@dataclass
class Predicate:
    name: str
    verdict: str
    residual: float
    tol: float
    where: str = ""
    witness: dict[str, Any] = field(default_factory=dict)
    detail: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


@dataclass
class Implication:
    name: str
    condition: bool
    conclusion: bool

    @property
    def consistent(self) -> bool:
        return self.conclusion or not self.condition


@dataclass
class ClassificationReport:
    subject: str
    predicates: list[Predicate]
    implications: list[Implication] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        """True when no stated implication is contradicted."""
        return all(i.consistent for i in self.implications)

    def failures(self) -> list[Implication]:
        return [i for i in self.implications if not i.consistent]

    def as_records(self) -> list[dict[str, Any]]:
        recs = [
            {
                "kind": "predicate",
                "subject": self.subject,
                "name": p.name,
                "verdict": p.verdict,
                "residual": p.residual,
                "tol": p.tol,
                "where": p.where,
                "detail": p.detail,
            }
            for p in self.predicates
        ]
        recs += [
            {
                "kind": "implication",
                "subject": self.subject,
                "name": i.name,
                "condition": i.condition,
                "conclusion": i.conclusion,
                "consistent": i.consistent,
            }
            for i in self.implications
        ]
        return recs


class _Worst:
    def __init__(self):
        self.value, self.where = 0.0, ""

    def add(self, v: float, p) -> None:
        v = float(v) if np.isfinite(v) else math.inf
        if v > self.value or not self.where:
            self.value = max(self.value, v)
            self.where = str(p)


def _verdict(value: float, tol: float) -> str:
    return HOLDS if value <= tol else FAILS


# --- fitting helpers -------------------------------------------------------------


def indicatory_basis(y: np.ndarray, symmetric: bool = True) -> list[np.ndarray]:
    """Basis of (symmetric) rank-2 covariant tensors annihilating ``y``."""
    w = scipy.linalg.null_space(y[None, :]).T  # rows span {v : v . y = 0}
    basis = []
    k = len(w)
    for a in range(k):
        for b in range(a if symmetric else 0, k):
            t = np.outer(w[a], w[b])
            basis.append(t + t.T if symmetric and a != b else t)
    return basis


def general_basis(n: int) -> list[np.ndarray]:
    out = []
    for a in range(n):
        for b in range(a, n):
            t = np.zeros((n, n))
            t[a, b] = t[b, a] = 1.0
            out.append(t)
    return out


def linear_fit(target: np.ndarray, images: Sequence[np.ndarray], floor: float):
    """Least squares ``target ~ sum s_a images[a]``; returns (coeffs, residual)."""
    A = np.stack([im.ravel() for im in images], axis=1)
    t = target.ravel()
    coef, *_ = np.linalg.lstsq(A, t, rcond=None)
    return coef, rel_residual(A @ coef - t, t, floor)


def s3_template(h: np.ndarray) -> np.ndarray:
    """h_hj h_ik - h_hk h_ij, slots ``[h, i, j, k]``."""
    t = np.einsum("hj,ik->hijk", h, h)
    return t - t.swapaxes(2, 3)


def s4_image(h: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Theta_(jk)(h_hj K_ki + h_ik K_hj), slots ``[h, i, j, k]``."""
    t = np.einsum("hj,ki->hijk", h, K) + np.einsum("ik,hj->hijk", h, K)
    return t - t.swapaxes(2, 3)


def quasi_c_fit(C: np.ndarray, Cvec: np.ndarray, y: np.ndarray, floor: float):
    """Fit C_ijk = pi_(ijk)(Q_ij C_k) with Q symmetric indicatory."""
    basis = indicatory_basis(y)
    images = [pi3(np.einsum("ij,k->ijk", q, Cvec)) for q in basis]
    coef, res = linear_fit(C, images, floor)
    Q = sum(c * q for c, q in zip(coef, basis))
    return Q, res


def s_scalar_fit(S: np.ndarray, h: np.ndarray, L: float):
    T = s3_template(h)
    tt = float(np.sum(T * T))
    target = L**2 * S
    s = float(np.sum(target * T)) / tt if tt > 0 else 0.0
    return s, rel_residual(target - s * T, target, 1.0)


def s4_fit(S: np.ndarray, h: np.ndarray, y: np.ndarray, L: float, constrained: bool = True):
    basis = indicatory_basis(y) if constrained else general_basis(len(y))
    images = [s4_image(h, k) for k in basis]
    coef, res = linear_fit(L**2 * S, images, 1.0)
    K = sum(c * k for c, k in zip(coef, basis))
    return K, res


# --- h-vector ----------------------------------------------------------------------


@dataclass
class HVectorReport:
    verdict: str
    residual_a: float
    residual_b: float
    lemma21_residual: float
    rho_samples: list[tuple[tuple[float, ...], float]]
    where: str = ""
    tol: float = 1e-8
    lemma21_tol: float = 1e-7

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


def verify_h_vector(spec: MetricSpec) -> HVectorReport:
    """Check both h-vector conditions and that rho depends on x only.

    ``residual_a`` is ``L |dy_j b_i - b_h C^h_ij|`` and ``residual_b`` is
    ``|L C^h_ij b_h - rho h_ij|`` with the trace-extracted rho, both divided
    by ``max(1, |b|)``.
    """
    tol, tol21 = spec.tolerances["h_vector"], spec.tolerances["lemma21"]
    a, b, r21 = _Worst(), _Worst(), _Worst()
    rhos = []
    for p in spec.sample_points:
        c = ChangePack(spec, p)
        scale = max(1.0, math.sqrt(max(c.b2, 0.0)))
        a.add(c.hvector_a * c.L / scale, p)
        b.add(c.hvector_b / scale, p)
        rscale = max(1.0, abs(c.rho))
        spread = max((abs(ChangePack(spec, q).rho - c.rho) for q in spec.directions_at(p.x)), default=0.0)
        r21.add(max(c.L * float(np.linalg.norm(c.drho_dy)), spread) / rscale, p)
        rhos.append((p.x, c.rho))
    ok = a.value <= tol and b.value <= tol and r21.value <= tol21
    where = max((a, b, r21), key=lambda w: w.value).where
    return HVectorReport(HOLDS if ok else FAILS, a.value, b.value, r21.value, rhos, where, tol, tol21)


# --- intrinsic predicates ---------------------------------------------------------------


def classify_space(
    L: Callable,
    points: Sequence[TangentPoint],
    tol: float = 1e-8,
    directions: Callable[[Sequence[float]], list[TangentPoint]] | None = None,
    subject: str = "space",
    fd_points: int = FD_BERWALD_POINTS,
) -> ClassificationReport:
    """Decide intrinsic special-space predicates of ``L`` on ``points``.

    ``directions(x)`` supplies extra y-directions at a fixed ``x`` for the
    test that the S3 scalar depends on x alone.
    """
    n = points[0].n
    W = {k: _Worst() for k in ("quasi", "creduc", "s3", "s3x", "s4", "s4u", "berwald", "berwald_fd", "landsberg")}
    witness: dict[str, Any] = {"S": [], "K": None, "Q": None}
    for idx, p in enumerate(points):
        fp = finsler.analyze(L, p)
        Lp, C, Cvec, h, y = fp.L, fp.C, fp.C_vec, fp.h, fp.y
        floor = 1.0 / Lp
        if n >= 3:
            Q, res = quasi_c_fit(C, Cvec, y, floor)
            W["quasi"].add(res, p)
            if witness["Q"] is None:
                witness["Q"] = Q
            red = pi3(np.einsum("ij,k->ijk", h, Cvec)) / (n + 1)
            W["creduc"].add(rel_residual(C - red, C, floor), p)
            s, res = s_scalar_fit(fp.S, h, Lp)
            W["s3"].add(res, p)
            witness["S"].append((p.x, s))
            if directions is not None:
                others = [s_scalar_fit(finsler.analyze(L, q).S, finsler.analyze(L, q).h, finsler.analyze(L, q).L)[0]
                          for q in directions(p.x)]
                spread = max((abs(o - s) for o in others), default=0.0)
                W["s3x"].add(spread / max(1.0, abs(s)), p)
        if n >= 4:
            K, res = s4_fit(fp.S, h, y, Lp)
            W["s4"].add(res, p)
            if witness["K"] is None:
                witness["K"] = K
            W["s4u"].add(s4_fit(fp.S, h, y, Lp, constrained=False)[1], p)
        fp.check_spray()
        W["berwald"].add(float(np.linalg.norm(fp.C_h)) * Lp, p)
        W["landsberg"].add(float(np.linalg.norm(fp.P)), p)
        if idx < fd_points:
            W["berwald_fd"].add(float(np.linalg.norm(finsler.berwald_derivative(L, p))) * Lp, p)

    preds = []

    def add(name, key, applicable=True, witness_data=None, detail="", t=tol):
        w = W[key]
        verdict = _verdict(w.value, t) if applicable else NA
        preds.append(Predicate(name, verdict, w.value if applicable else 0.0, t, w.where, witness_data or {}, detail))

    add("quasi-C-reducible", "quasi", n >= 3, {"Q": witness["Q"]})
    add("C-reducible", "creduc", n >= 3)
    s3_val = max(W["s3"].value, W["s3x"].value)
    if n >= 3:
        where = W["s3"].where if W["s3"].value >= W["s3x"].value else W["s3x"].where
        preds.append(
            Predicate(
                "S3-like",
                _verdict(s3_val, tol),
                s3_val,
                tol,
                where,
                {"S": witness["S"]},
                f"form residual {W['s3'].value:.2e}, x-only residual {W['s3x'].value:.2e}",
            )
        )
    else:
        preds.append(Predicate("S3-like", NA, 0.0, tol))
    add(
        "S4-like",
        "s4",
        n >= 4,
        {"K": witness["K"]},
        f"unconstrained fit residual {W['s4u'].value:.2e}" if n >= 4 else "",
    )
    add("Berwald", "berwald", detail=f"FD dy G^i_jk residual {W['berwald_fd'].value:.2e}")
    add("Berwald (FD route)", "berwald_fd", t=max(tol, FD_BERWALD_TOL))
    add("Landsberg", "landsberg")
    rep = ClassificationReport(subject, preds)
    b, bfd, ls = rep["Berwald"], rep["Berwald (FD route)"], rep["Landsberg"]
    rep.implications.append(Implication("Berwald => Landsberg", b.holds, ls.holds))
    rep.implications.append(Implication("Berwald routes agree", True, b.holds == bfd.holds))
    if n >= 3:
        rep.implications.append(Implication("C-reducible => quasi-C-reducible", rep["C-reducible"].holds, rep["quasi-C-reducible"].holds))
    return rep


def classify_base(spec: MetricSpec, **kw) -> ClassificationReport:
    return classify_space(spec.L, spec.sample_points, spec.tolerances["vanish"], spec.directions_at, "base", **kw)


def classify_changed(spec: MetricSpec, **kw) -> ClassificationReport:
    return classify_space(spec.Lbar, spec.sample_points, spec.tolerances["vanish"], spec.directions_at, "changed", **kw)


# --- theorem conditions on the change ------------------------------------------------


def classify_change(
    spec: MetricSpec,
    base_report: ClassificationReport | None = None,
    changed_report: ClassificationReport | None = None,
) -> ClassificationReport:
    """Residuals of the sufficient conditions and their implication checks."""
    tol = spec.tolerances["vanish"]
    n = spec.n
    base_report = base_report or classify_base(spec)
    changed_report = changed_report or classify_changed(spec)
    W = {k: _Worst() for k in ("V3", "lemma41", "defect45", "U", "U_printed", "S", "V4", "V4_printed", "W", "W_printed")}
    for p in spec.sample_points:
        c = ChangePack(spec, p)
        Lb = c.Lbar
        Cbar_ref = c.bar.C
        floor3 = 1.0 / Lb
        W["V3"].add(rel_residual(c.V3, Cbar_ref, floor3), p)
        recon = pi3(np.einsum("ij,k->ijk", c.Hbar, c.bar.C_vec))
        W["lemma41"].add(rel_residual(Cbar_ref - recon - c.V3, Cbar_ref, floor3), p)
        W["defect45"].add(rel_residual(c.creducible_defect, Cbar_ref, floor3), p)
        W["U"].add(rel_residual(c.U, c.bar.S, Lb**-2), p)
        W["U_printed"].add(rel_residual(c.U_printed, c.bar.S, Lb**-2), p)
        W["S"].add(float(np.linalg.norm(c.base.S)) * c.L**2, p)
        W["V4"].add(float(np.linalg.norm(c.V4)) * Lb, p)
        W["V4_printed"].add(float(np.linalg.norm(c.V4_printed)) * Lb, p)
        W["W"].add(float(np.linalg.norm(c.W)), p)
        W["W_printed"].add(float(np.linalg.norm(c.W_printed)), p)

    preds = []

    def add(name, key, applicable=True, detail=""):
        w = W[key]
        preds.append(Predicate(name, _verdict(w.value, tol) if applicable else NA, w.value if applicable else 0.0, tol, w.where, {}, detail))

    add("V_ijk vanishes", "V3", n >= 3)
    add("quasi-C decomposition with Q = Hbar", "lemma41", n >= 3)
    add("C-reducibility defect vanishes", "defect45", n >= 3)
    add("U_hijk vanishes", "U", n >= 3, f"printed U residual {W['U_printed'].value:.2e}")
    add("S_hijk of base vanishes", "S", n >= 4)
    add("V_ijkh vanishes", "V4", True, f"printed V_ijkh residual {W['V4_printed'].value:.2e}")
    add("W_ijk vanishes", "W", True, f"printed W_ijk residual {W['W_printed'].value:.2e}")
    rep = ClassificationReport("change", preds)
    P = {p.name: p for p in preds}
    cb, bb = changed_report, base_report
    if n >= 3:
        rep.implications.append(Implication("V_ijk = 0 => Fbar quasi-C-reducible", P["V_ijk vanishes"].holds, cb["quasi-C-reducible"].holds))
        rep.implications.append(Implication("defect = 0 => Fbar C-reducible", P["C-reducibility defect vanishes"].holds, cb["C-reducible"].holds))
        rep.implications.append(Implication("Fbar C-reducible => defect = 0", cb["C-reducible"].holds, P["C-reducibility defect vanishes"].holds))
        rep.implications.append(Implication("U = 0 => Fbar S3-like", P["U_hijk vanishes"].holds, cb["S3-like"].holds))
    if n >= 4:
        rep.implications.append(Implication("S = 0 => Fbar S4-like", P["S_hijk of base vanishes"].holds, cb["S4-like"].holds))
    rep.implications.append(
        Implication("F Berwald and V_ijkh = 0 => Fbar Berwald", bb["Berwald"].holds and P["V_ijkh vanishes"].holds, cb["Berwald"].holds)
    )
    rep.implications.append(
        Implication("F Landsberg and W_ijk = 0 => Fbar Landsberg", bb["Landsberg"].holds and P["W_ijk vanishes"].holds, cb["Landsberg"].holds)
    )
    if spec.has_b and not verify_h_vector(spec).holds:
        rep.notes.append("h-vector precondition violated; theorem conditions evaluated with the extracted rho")
    return rep
