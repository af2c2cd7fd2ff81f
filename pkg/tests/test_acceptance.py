"""Acceptance suite: one PASS/FAIL line per criterion.

Run as ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
Each criterion is computed once and cached, so the pytest run and the
printed summary share the same numbers.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import numpy as np
import pytest

from finslerchange import classify, cli, geodesics, hrc, metricspec

BASES = ("euclid2", "riem3")
CHANGES = ("identity", "homothetic", "conformal", "randers", "randers-conformal")
POSITIVE = sorted(p.stem for p in cli.catalog_dir().glob("*.yaml") if not p.stem.startswith("neg-"))
ZERO = 1e-14  # "exact zero" is asserted at this level, see the decisions ledger


def load(name: str) -> metricspec.MetricSpec:
    return metricspec.load(cli.catalog_dir() / f"{name}.yaml")


@functools.lru_cache(maxsize=None)
def verify(name: str) -> hrc.VerificationReport:
    return hrc.verify_closed_forms(load(name))


@functools.lru_cache(maxsize=None)
def reports(name: str):
    spec = load(name)
    base = classify.classify_base(spec)
    changed = classify.classify_changed(spec)
    return base, changed, classify.classify_change(spec, base, changed)


def worst_rows(names, keys) -> tuple[bool, str]:
    worst, where = 0.0, ""
    ok = True
    for name in names:
        rep = verify(name)
        for key in keys:
            r = rep.row(key)
            ok &= r.passed and not r.error
            if r.worst > worst:
                worst, where = r.worst, f"{name}:{key}"
    return ok, f"worst {worst:.2e} at {where}"


def c1():
    names = [f"{b}-{c}" for b in BASES for c in CHANGES]
    keys = ("lbar", "hbar", "gbar", "gbar_inv", "Cbar", "Cbar_up", "Cbar_vec")
    ok, msg = worst_rows(names, keys)
    tols = {verify(n).row(k).tol for n in names for k in keys}
    return ok and max(tols) <= 1e-9, f"closed forms vs oracle, {len(names)} fixtures, {msg}"


def c2():
    ok, msg = worst_rows(POSITIVE, ("inverse",))
    return ok and verify(POSITIVE[0]).row("inverse").tol <= 1e-9, f"inverse identity on {len(POSITIVE)} fixtures, {msg}"


def c3():
    ok1, msg1 = worst_rows(POSITIVE, ("dphi", "m_l", "m_b", "h_m", "C_m", "lemma21_jet"))
    ok2, msg2 = worst_rows(POSITIVE, ("lemma21_spread",))
    tol = max(verify(n).row(k).tol for n in POSITIVE for k in ("dphi", "m_l", "m_b", "h_m", "C_m"))
    spread_tol = max(verify(n).row("lemma21_spread").tol for n in POSITIVE)
    ok = ok1 and ok2 and tol <= 1e-9 and spread_tol <= 1e-7
    return ok, f"identities {msg1}; rho spread {msg2}"


def c4():
    names = [f"{b}-{c}" for b in BASES for c in ("conformal", "randers-conformal")]
    ok, msg = worst_rows(names, ("spray",))
    ok &= all(verify(n).row("spray").tol <= 1e-7 for n in names)
    printed_ok = all(verify(n).row("spray_printed").passed for n in names)
    localized = all(verify(n).spray_localization and verify(n).notes for n in names if not printed_ok)
    tail = "printed reading agrees" if printed_ok else "printed reading differs, localized to named terms" if localized else "printed reading differs, NOT localized"
    return ok and (printed_ok or localized), f"spray {msg}; {tail}"


def c5():
    names3 = ["euclid3-randers", "riem3-randers", "randers3-conformal"]
    ok, msg = worst_rows(names3, ("Sbar",))
    ok &= all(verify(n).row("Sbar").tol <= 1e-8 for n in names3)
    zero = 0.0
    for name in (n for n in POSITIVE if n.startswith("euclid2")):
        spec = load(name)
        for p in spec.sample_points:
            pack = hrc.ChangePack(spec, p)
            zero = max(zero, float(np.abs(pack.Sbar).max()), float(np.abs(pack.bar.S).max()))
    return ok and zero <= ZERO, f"n=3 {msg}; n=2 max |S| {zero:.1e}"


def c6():
    # the predicate is not applicable for n = 2, so only n >= 3 Riemannian bases count
    names = [f"riem3-{c}" for c in CHANGES] + ["euclid3-randers", "euclid4-randers"]
    worst, ok = 0.0, True
    for name in names:
        pred = reports(name)[2]["V_ijk vanishes"]
        ok &= pred.holds and pred.residual <= 1e-9
        worst = max(worst, pred.residual)
    ok_r, msg = worst_rows(names, ("V3_reconstruct",))
    return ok and ok_r, f"Riemannian bases max |V|/|Cbar| {worst:.2e}; reconstruction {msg}"


def c7():
    _, changed, change = reports("randers3-conformal")
    defect = change["C-reducibility defect vanishes"]
    cred = changed["C-reducible"]
    ok = defect.holds and cred.holds and defect.tol <= 1e-8 and cred.tol <= 1e-8
    return ok, f"defect {defect.residual:.2e}, changed C-reducible residual {cred.residual:.2e}"


def c8():
    quartic = reports("quartic3")[0]
    q_ok = quartic["Berwald"].holds and quartic["Landsberg"].holds
    xdep = ["euclid2-randers-xdep", "riem3-randers-xdep"]
    neither = all(not reports(n)[1]["Berwald"].holds and not reports(n)[1]["Landsberg"].holds for n in xdep)
    bad = [
        f"{n}:{r.subject}"
        for n in POSITIVE
        for r in reports(n)[:2]
        for i in r.implications
        if i.name == "Berwald => Landsberg" and not i.consistent
    ]
    detail = f"quartic B/L {quartic['Berwald'].verdict}/{quartic['Landsberg'].verdict}; x-dependent Randers neither: {neither}; violations {bad or 'none'}"
    return q_ok and neither and not bad, detail


def c9():
    line = 0.0
    for name in ("euclid2-identity", "euclid2-homothetic"):
        spec = load(name)
        p = spec.sample_points[0]
        line = max(line, geodesics.line_deviation(geodesics.base_geodesic(spec, p.x, p.y, 5.0)))
        line = max(line, geodesics.line_deviation(geodesics.changed_geodesic(spec, p.x, p.y, 5.0)))
    routes = drift = 0.0
    for name in ("euclid2-conformal", "euclid2-randers-conformal", "riem3-randers-conformal"):
        spec = load(name)
        p = spec.sample_points[0]
        a = geodesics.changed_geodesic(spec, p.x, p.y, 5.0)
        b = geodesics.changed_geodesic(spec, p.x, p.y, 5.0, route="closed")
        if a.truncated or b.truncated:
            return False, f"{name} geodesic truncated"
        routes = max(routes, geodesics.max_deviation(a, b))
        drift = max(drift, a.speed_drift, b.speed_drift)
    reparam = 0.0
    for name in ("euclid2-conformal", "euclid2-randers", "euclid2-randers-conformal"):
        spec = load(name)
        p = spec.sample_points[0]
        reparam = max(reparam, geodesics.reparam_check(spec, p.x, p.y, 5.0).length_defect)
    ok = line <= 1e-9 and routes <= 1e-6 and drift <= 1e-6 and reparam <= 1e-8
    return ok, f"line {line:.1e}, routes {routes:.1e}, drift {drift:.1e}, reparam {reparam:.1e}"


def c10():
    corrupt = verify("neg-corrupted-phi")
    failed = sorted(r.key for r in corrupt.failures())
    sig_phi = {"hbar", "gbar", "gbar_inv", "inverse"} <= set(failed)
    spec = load("neg-b-along-l")
    hv = classify.verify_h_vector(spec)
    sig_b = not hv.holds and abs(hv.residual_a - 0.1) <= 1e-6
    ok = not corrupt.passed and sig_phi and sig_b
    return ok, f"corrupted-phi fails {failed}; b along l h-vector residual_a {hv.residual_a:.3e}"


CRITERIA = {
    1: ("closed-form/oracle agreement", c1),
    2: ("inverse-metric identity", c2),
    3: ("identity suite", c3),
    4: ("spray claim", c4),
    5: ("v-curvature", c5),
    6: ("V_ijk vanishes on Riemannian bases", c6),
    7: ("C-reducibility under a Randers base", c7),
    8: ("Berwald/Landsberg coherence", c8),
    9: ("geodesics", c9),
    10: ("negative controls", c10),
}


@functools.lru_cache(maxsize=None)
def outcome(number: int) -> tuple[bool, str]:
    title, fn = CRITERIA[number]
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure, not an error of the suite
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}: {detail}")
    return ok, detail


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, detail = outcome(number)
    assert ok, detail


def main() -> int:
    results = [outcome(n)[0] for n in sorted(CRITERIA)]
    print(f"{sum(results)}/{len(results)} criteria pass")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).parent))
    sys.exit(main())
