import json
import math

import numpy as np
import pytest

from finslerchange import geodesics as gd

from conftest import catalog, make

EUC = "sqrt(y1^2 + y2^2)"
X0, Y0 = [0.1, 0.2], [0.6, 0.8]


def test_euclidean_straight_line():
    tr = gd.base_geodesic(make(dimension=2, L=EUC), X0, Y0, 5.0)
    assert gd.line_deviation(tr) <= 1e-10
    assert tr.truncated is None and tr.speed_drift < 1e-12
    assert tr.t[-1] == 5.0 and len(tr.t) == gd.N_OUT


def test_normalization_recorded():
    tr = gd.base_geodesic(make(dimension=2, L=EUC), X0, [3.0, 4.0], 1.0)
    assert tr.scale == pytest.approx(0.2)
    np.testing.assert_allclose(tr.y[0], [0.6, 0.8])


def test_homothetic_is_straight():
    tr = gd.changed_geodesic(make(dimension=2, L=EUC, sigma="log(2)"), X0, Y0, 5.0)
    assert gd.line_deviation(tr) <= 1e-9


@pytest.mark.parametrize("name", ["euclid2-conformal", "euclid2-randers-xdep", "riem3-randers-conformal"])
def test_two_route_agreement(name):
    spec = catalog(name)
    p = spec.sample_points[0]
    a = gd.changed_geodesic(spec, p.x, p.y, 5.0)
    b = gd.changed_geodesic(spec, p.x, p.y, 5.0, route="closed")
    assert gd.max_deviation(a, b) <= 1e-6
    assert a.speed_drift <= 1e-6 and b.speed_drift <= 1e-6


def test_velocity_is_derivative_of_position():
    spec = catalog("riem3-conformal")
    p = spec.sample_points[1]
    tr = gd.changed_geodesic(spec, p.x, p.y, 2.0, n_out=401)
    dx = np.gradient(tr.x, tr.t, axis=0, edge_order=2)
    assert np.abs(dx - tr.y).max() < 1e-4


def test_truncation_reports_reason():
    # Lbar = |y| - 0.9*x1*y1 degenerates as x1 -> 1/0.9 along this straight path
    spec = make(dimension=2, L=EUC, b=["-0.9*x1", "0"])
    tr = gd.changed_geodesic(spec, [0.5, 0.0], [1.0, 0.0], 5.0)
    assert tr.truncated and "degenerating" in tr.truncated
    assert 0 < tr.t[-1] < 5.0 and tr.x[-1, 0] < 1 / 0.9


def test_reparam_identity_and_homothetic():
    r = gd.reparam_check(make(dimension=2, L=EUC), X0, Y0, 3.0)
    np.testing.assert_allclose(r.s, r.sbar, atol=1e-12)
    r = gd.reparam_check(make(dimension=2, L=EUC, sigma="log(2)"), X0, Y0, 3.0)
    np.testing.assert_allclose(r.sbar, 2 * r.s, atol=1e-12)


def test_reparam_randers_straight_segment():
    spec = make(dimension=2, L=EUC, b=["0.3", "0"])
    r = gd.reparam_check(spec, X0, Y0, 4.0)
    assert r.length_defect <= 1e-8 and r.Lbar_length_defect <= 1e-8
    # straight segment: sbar = s (1 + b.v) with v the unit base direction
    v = np.array(Y0)
    assert r.sbar[-1] == pytest.approx(r.s[-1] * (1 + 0.3 * v[0]), rel=1e-10)


def test_reparam_squared_reading_on_curved_geodesic():
    spec = catalog("riem3-randers-xdep")
    r = gd.reparam_check(spec, [0.1, 0.2, 0.3], [0.6, 0.8, 0.3], 3.0)
    assert r.velocity_defect < 1e-6 and r.accel_defect < 1e-6
    assert r.accel_defect_alt > 1e-3
    assert r.min_ratio > 0


def test_reparam_rejects_degenerate_path():
    spec = make(dimension=2, L=EUC, b=["-0.9*x1", "0"])
    with pytest.raises(gd.ReparamError):
        gd.reparam_check(spec, [0.5, 0.0], [1.0, 0.0], 5.0)


def test_reversibility():
    riem = catalog("riem3-identity")
    tr = gd.base_geodesic(riem, [0.1, 0.2, 0.3], [0.6, 0.8, 0.3], 3.0)
    assert gd.reverse_retrace(riem.L, tr) < 1e-7
    ran = make(dimension=2, L=EUC, b=["0.3", "0"])
    tr = gd.changed_geodesic(ran, X0, Y0, 3.0)
    assert gd.reverse_retrace(ran.Lbar, tr) > 1e-3
    seg = gd.segment_lengths(ran, [0, 0], [1, 2])
    assert seg["forward"] - seg["backward"] == pytest.approx(0.6, abs=1e-12)
    assert seg["defect"] < 1e-12


def test_exports():
    tr = gd.base_geodesic(make(dimension=2, L=EUC), X0, Y0, 1.0, n_out=5)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,x1,x2,y1,y2,L" and len(lines) == 6
    assert [float(v) for v in lines[1].split(",")][:3] == [0.0, 0.1, 0.2]
    doc = json.loads(tr.to_json())
    assert doc["meta"]["space"] == "base" and len(doc["samples"]) == 5
    assert set(doc["samples"][0]) == {"t", "x1", "x2", "y1", "y2", "L"}
    assert "\t" in tr.to_csv(delimiter="\t")
    assert math.isfinite(tr.max_local_error)
