import numpy as np
import pytest

from finslerchange import classify
from finslerchange.classify import FAILS, HOLDS, NA

from conftest import catalog, make


def verdicts(report):
    return {p.name: p.verdict for p in report.predicates}


def test_h_vector_examples():
    riem = make(dimension=3, L="sqrt(y1^2 + (1 + x1^2)*y2^2 + 2*y3^2)", b=["0.1", "0.2", "0"])
    hv = classify.verify_h_vector(riem)
    assert hv.holds and max(abs(r) for _, r in hv.rho_samples) < 1e-12
    bad = classify.verify_h_vector(catalog("neg-b-along-l"))
    assert not bad.holds
    # residual_a = L |0.1 h_ij / L| = 0.1 |h| = 0.1 on the Euclidean plane
    assert bad.residual_a == pytest.approx(0.1, rel=1e-9)


def test_euclidean_everything_holds_or_na():
    rep = classify.classify_base(make(dimension=3, L="sqrt(y1^2 + y2^2 + y3^2)"))
    v = verdicts(rep)
    assert v["Berwald"] == v["Landsberg"] == v["C-reducible"] == HOLDS
    assert v["S4-like"] == NA


def test_dimension_bounds():
    v = verdicts(classify.classify_base(make(dimension=2, L="sqrt(y1^2 + y2^2)")))
    assert v["C-reducible"] == v["quasi-C-reducible"] == v["S3-like"] == v["S4-like"] == NA


def test_randers_base_is_c_reducible():
    spec = catalog("randers3-conformal")
    v = verdicts(classify.classify_base(spec))
    assert v["C-reducible"] == HOLDS
    assert v["Berwald"] == v["Landsberg"] == FAILS


def test_quartic_minkowski():
    spec = catalog("quartic3")
    rep = classify.classify_base(spec)
    v = verdicts(rep)
    assert v["Berwald"] == v["Berwald (FD route)"] == v["Landsberg"] == HOLDS
    assert v["C-reducible"] == FAILS
    assert rep.passed


def test_corollaries_on_change():
    spec = catalog("riem3-randers-xdep")
    base, changed = classify.classify_base(spec), classify.classify_changed(spec)
    ch = classify.classify_change(spec, base, changed)
    assert ch["V_ijk vanishes"].verdict == HOLDS
    assert verdicts(changed)["quasi-C-reducible"] == HOLDS
    assert ch.passed and changed.passed

    spec = catalog("randers3-conformal")
    base, changed = classify.classify_base(spec), classify.classify_changed(spec)
    ch = classify.classify_change(spec, base, changed)
    assert ch["C-reducibility defect vanishes"].verdict == HOLDS
    assert verdicts(changed)["C-reducible"] == HOLDS


def test_identity_change_on_euclid_all_zero():
    spec = make(dimension=3, L="sqrt(y1^2 + y2^2 + y3^2)")
    ch = classify.classify_change(spec)
    for p in ch.predicates:
        if p.verdict != NA:
            # jets of sqrt leave round-off in C, so "exactly" means 1e-14 here
            assert p.residual < 1e-14, p.name


def test_fit_helpers():
    y = np.array([0.3, 0.5, -0.7])
    basis = classify.indicatory_basis(y)
    assert len(basis) == 3  # symmetric and annihilating y: n(n-1)/2
    for b in basis:
        assert np.abs(b @ y).max() < 1e-12 and np.allclose(b, b.T)
    target = 0.4 * basis[0] - 1.2 * basis[-1]
    coef, res = classify.linear_fit(target, basis, 1.0)[:2]
    assert res < 1e-12


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_verdicts_invariant_under_scaling(lam):
    spec = catalog("randers3-conformal", count=6)
    pts = spec.sample_points
    a = classify.classify_space(spec.L, pts, 1e-8, spec.directions_at, "a", fd_points=2)
    b = classify.classify_space(spec.L, [p.scaled(lam) for p in pts], 1e-8, spec.directions_at, "b", fd_points=2)
    assert verdicts(a) == verdicts(b)


def test_records_are_flat():
    rep = classify.classify_base(catalog("euclid3-randers", count=4))
    recs = rep.as_records()
    assert {r["kind"] for r in recs} == {"predicate", "implication"}
