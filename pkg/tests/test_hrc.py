import math

import numpy as np
import pytest

from finslerchange import finsler, hrc
from finslerchange.jets import TangentPoint

from conftest import catalog, make

EUC = "sqrt(y1^2 + y2^2)"


def test_changed_metric_examples():
    p = TangentPoint([0.2, 0.1], [1.0, 0.0])
    base = make(dimension=2, L=EUC)
    assert hrc.changed_metric(base)([0.2, 0.1], [1.0, 0.0]) == base.L([0.2, 0.1], [1.0, 0.0])
    hom = make(dimension=2, L=EUC, sigma="log(2)")
    assert hrc.changed_metric(hom)(list(p.x), list(p.y)) == pytest.approx(2.0)
    ran = make(dimension=2, L=EUC, b=["0.3", "0"])
    assert hrc.changed_metric(ran)(list(p.x), list(p.y)) == pytest.approx(1.3)
    bad = make(dimension=2, L=EUC, b=["2", "0"])
    with pytest.raises(hrc.ChangeError):
        hrc.changed_metric(bad)([0, 0], [-1, 0])


def test_scalars_randers_examples():
    spec = make(dimension=2, L=EUC, b=["0.3", "0"])
    s = hrc.change_scalars(spec, TangentPoint([0, 0], [1, 0]))
    assert (s["beta"], s["Lbar"], s["phi"], s["b2"]) == pytest.approx((0.3, 1.3, 1.3, 0.09))
    np.testing.assert_allclose(s["m"], 0, atol=1e-15)
    s = hrc.change_scalars(spec, TangentPoint([0, 0], [0, 1]))
    assert (s["beta"], s["phi"], s["m2"]) == pytest.approx((0.0, 1.0, 0.09))
    np.testing.assert_allclose(s["m"], [0.3, 0.0], atol=1e-15)
    c = hrc.ChangePack(spec, TangentPoint([0, 0], [0, 1]))
    assert float(c.m @ c.bup) == pytest.approx(c.b2 - (c.beta / c.L) ** 2)


def test_identity_scalars():
    s = hrc.change_scalars(make(dimension=2, L=EUC), TangentPoint([0, 0], [1, 2]))
    assert s["phi"] == pytest.approx(1.0) and s["mu"] == pytest.approx(0.0) and s["rho"] == 0.0


def test_changed_fundamental_examples():
    p = TangentPoint([0.1, 0.2], [0.0, 1.0])
    ran = hrc.changed_fundamental(make(dimension=2, L=EUC, b=["0.3", "0"]), p)
    np.testing.assert_allclose(ran["gbar"], [[1.09, 0.3], [0.3, 1.0]], atol=1e-14)
    hom = hrc.changed_fundamental(make(dimension=2, L=EUC, sigma="0.7"), p)
    np.testing.assert_allclose(hom["gbar"], math.exp(1.4) * np.eye(2), atol=1e-12)
    ident = hrc.changed_fundamental(make(dimension=2, L=EUC), p)
    np.testing.assert_allclose(ident["gbar"], np.eye(2), atol=1e-14)


def test_cartan_riemannian_specialization():
    spec = catalog("riem3-randers-xdep")
    p = spec.sample_points[2]
    c = hrc.ChangePack(spec, p)
    hm = np.einsum("ij,k->ijk", c.base.h, c.m)
    ref = (hm + hm.transpose(1, 2, 0) + hm.transpose(2, 0, 1)) / (2 * c.Lbar)
    if spec.sigma_expr is None:
        np.testing.assert_allclose(c.Cbar, ref, atol=1e-12)
    np.testing.assert_allclose(c.Cbar, c.bar.C, atol=1e-12)


def test_spray_examples():
    p = TangentPoint([0.3, -0.2], [0.6, 0.8])
    ident = hrc.changed_spray(make(dimension=2, L=EUC), p)
    assert ident["J"] == pytest.approx(1.0)
    np.testing.assert_allclose(ident["M"], 0, atol=1e-15)
    hom = hrc.changed_spray(make(dimension=2, L=EUC, sigma="log(2)"), p)
    np.testing.assert_allclose(hom["Gbar"], 0, atol=1e-15)
    conf = hrc.changed_spray(make(dimension=2, L=EUC, sigma="0.1*x1"), p)
    assert np.linalg.norm(conf["difference"]) <= 1e-7 * max(np.linalg.norm(conf["oracle"]), 1.0)


def test_spray_is_two_homogeneous():
    spec = catalog("riem3-randers-xdep")
    p = spec.sample_points[4]
    G1 = hrc.ChangePack(spec, p).Gbar
    G2 = hrc.ChangePack(spec, p.scaled(2.0)).Gbar
    np.testing.assert_allclose(G2, 4 * G1, rtol=1e-7, atol=1e-14)


def test_v_curvature_examples():
    p = TangentPoint([0.3, -0.2], [0.6, 0.8])
    v2 = hrc.changed_v_curvature(make(dimension=2, L=EUC, sigma="0.1*x1", b=["0.3", "0"]), p)
    assert np.abs(v2["Sbar"]).max() < 1e-14
    spec = catalog("riem3-randers-xdep")
    q = spec.sample_points[1]
    v = hrc.changed_v_curvature(spec, q)
    np.testing.assert_allclose(v["Sbar"], v["oracle"], atol=1e-10)
    np.testing.assert_allclose(v["Sbar"], -v["Sbar"].swapaxes(2, 3), atol=1e-14)
    ident = catalog("randers3-conformal")
    r = ident.sample_points[0]
    c = hrc.ChangePack(ident, r)
    np.testing.assert_allclose(c.Sbar, c.bar.S, atol=1e-10)


def test_decomposition_identity_change():
    spec = make(dimension=3, L="sqrt(y1^2 + y2^2 + y3^2) + 0.2*x2*y1")
    d = hrc.decomposition_tensors(spec, spec.sample_points[0])
    assert np.abs(d["V4"]).max() < 1e-12 and np.abs(d["W"]).max() < 1e-12


def test_corollary_quasi_c_on_riemannian_base():
    spec = catalog("riem3-randers-xdep")
    for p in spec.sample_points[:5]:
        c = hrc.ChangePack(spec, p)
        assert np.linalg.norm(c.V3) <= 1e-9 * np.linalg.norm(c.Cbar)


def test_identity_change_all_residuals_tiny():
    rep = hrc.verify_closed_forms(make(dimension=2, L=EUC))
    assert rep.passed
    for r in rep.rows:
        if r.gating:
            assert r.worst < 1e-12, r.key


@pytest.mark.parametrize("name", ["euclid2-randers-conformal", "riem3-randers-xdep", "randers3-conformal", "euclid4-randers"])
def test_verify_passes_on_fixtures(name):
    rep = hrc.verify_closed_forms(catalog(name, count=8))
    assert rep.passed, [(r.key, r.worst) for r in rep.failures()]


def test_printed_readings_are_reported_not_gated():
    rep = hrc.verify_closed_forms(catalog("euclid2-randers-conformal", count=6))
    printed = rep.row("spray_printed")
    assert not printed.gating and not printed.passed
    assert any("printed spray" in n for n in rep.notes)
    assert rep.spray_localization


def test_corrupted_phi_fails():
    rep = hrc.verify_closed_forms(catalog("neg-corrupted-phi", count=6))
    assert not rep.passed
    assert {"gbar", "inverse"} <= {r.key for r in rep.failures()}


def test_degeneracy_chain():
    conf = make(dimension=3, L="sqrt(y1^2 + (1 + x1^2)*y2^2 + 2*y3^2)", sigma="0.1*x1 + 0.05*x3")
    for p in conf.sample_points[:3]:
        d = hrc.degeneracy_checks(conf, p)
        assert max(d.values()) < 1e-9, d
    ran = make(dimension=3, L="sqrt(y1^2 + (1 + x1^2)*y2^2 + 2*y3^2)", b=["0.1", "0.05*x1", "0.1*x2"])
    d = hrc.degeneracy_checks(ran, ran.sample_points[0])
    assert "randers_spray" in d and max(d.values()) < 1e-9


def test_tensor_comparison_rows():
    spec = catalog("riem3-randers")
    rows = hrc.tensor_comparison(spec, spec.sample_points[0])
    assert [r[0] for r in rows][:4] == ["lbar", "hbar", "gbar", "gbar_inv"]
    assert max(r[3] for r in rows) < 1e-9


def test_oracle_and_closed_agree_on_finsler_fundamental():
    spec = catalog("euclid2-randers-xdep")
    p = spec.sample_points[5]
    c = hrc.ChangePack(spec, p)
    np.testing.assert_allclose(c.gbar, finsler.analyze(spec.Lbar, p).g, atol=1e-12)
