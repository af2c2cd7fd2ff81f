import numpy as np
import pytest

from finslerchange import metricspec
from finslerchange.metricspec import SpecError

from conftest import catalog, make


def test_euclidean_validates(euclid2):
    rep = metricspec.validate(euclid2)
    assert rep.passed, rep.failures()
    assert len(euclid2.sample_points) == 20


def test_two_homogeneous_fails_homogeneity():
    rep = metricspec.validate(make(dimension=2, L="y1^2 + y2^2"))
    assert [c.name for c in rep.failures()] == ["L_homogeneity"]


def test_randers_positivity():
    spec = make(dimension=2, L="sqrt(y1^2 + y2^2)", b=["0.3", "0"])
    rep = metricspec.validate(spec)
    assert rep.passed
    assert {c.name for c in rep.checks} >= {"Lbar_positive", "b_homogeneity"}


def test_strong_b_breaks_changed_positivity():
    rep = metricspec.validate(make(dimension=2, L="sqrt(y1^2 + y2^2)", b=["1.5", "0"]))
    assert "Lbar_positive" in [c.name for c in rep.failures()]


def test_sigma_must_be_x_only():
    rep = metricspec.validate(make(dimension=2, L="sqrt(y1^2 + y2^2)", sigma="0.1*y1"))
    assert "sigma_x_only" in [c.name for c in rep.failures()]


def test_abs_rejected_when_argument_vanishes():
    rep = metricspec.validate(make(dimension=2, L="sqrt(y1^2 + y2^2)", sigma="0.1*abs(x1)"))
    assert "abs_smooth" in [c.name for c in rep.failures()]
    ok = metricspec.validate(make(dimension=2, L="sqrt(y1^2 + y2^2)", sigma="0.1*abs(x1 + 5)"))
    assert ok.passed


def test_parameters_and_errors():
    spec = make(dimension=2, L="sqrt(y1^2 + y2^2) + a*y1", parameters={"a": 0.2})
    assert spec.L([0, 0], [1, 0]) == pytest.approx(1.2)
    with pytest.raises(SpecError):
        make(dimension=2, L="sqrt(y1^2 + y3^2)")
    with pytest.raises(SpecError):
        make(dimension=2, L="sqrt(y1^2 + y2^2) + a*y1")
    with pytest.raises(SpecError):
        make(dimension=2, L="sqrt(y1^2 + y2^2)", b=["0.1"])
    with pytest.raises(SpecError):
        make(dimension=9, L="y1")
    with pytest.raises(SpecError):
        make(dimension=2, L="sqrt(", b=None)
    with pytest.raises(SpecError):
        make(dimension=2, L="sqrt(y1^2 + y2^2)", tolerances={"vanish": -1})


def test_sampling_is_deterministic_and_filtered():
    cfg = {"count": 15, "x_box": [-1, 1], "y_box": [-1, 1], "min_y_norm": 0.5}
    a = metricspec.sample_points(3, cfg)
    b = metricspec.sample_points(3, cfg)
    assert a == b and len(a) == 15
    assert all(np.linalg.norm(p.ya) >= 0.5 for p in a)
    assert all(np.all(np.abs(p.xa) <= 1) for p in a)


def test_explicit_points():
    spec = make(dimension=2, L="sqrt(y1^2 + y2^2)", samples={"points": [[[0, 0], [1, 0]], [[1, 1], [0, 2]]]})
    assert [p.y for p in spec.sample_points] == [(1.0, 0.0), (0.0, 2.0)]


def test_directions_share_x(euclid2):
    x = euclid2.sample_points[3].x
    dirs = euclid2.directions_at(x)
    assert len(dirs) == 5 and all(p.x == x for p in dirs)


def test_lbar_matches_definition():
    spec = make(dimension=2, L="sqrt(y1^2 + y2^2)", sigma="log(2)", b=["0.3", "0"])
    assert spec.Lbar([0.4, 0], [1, 0]) == pytest.approx(2.3)
    assert spec.beta([0.4, 0], [1, 2]) == pytest.approx(0.3)


def test_load_with_overrides(tmp_path):
    f = tmp_path / "m.yaml"
    f.write_text("dimension: 2\nL: sqrt(y1^2 + y2^2)\nsamples: {count: 4}\n")
    spec = metricspec.load(f, samples={"count": 6}, tolerances={"vanish": 1e-6})
    assert spec.name == "m" and len(spec.sample_points) == 6 and spec.tolerances["vanish"] == 1e-6
    f.write_text("- 1\n- 2\n")
    with pytest.raises(SpecError):
        metricspec.load(f)


def test_round_trip_to_dict():
    spec = catalog("riem3-randers-xdep")
    again = metricspec.from_dict(spec.to_dict())
    p = spec.sample_points[0]
    assert again.Lbar(list(p.x), list(p.y)) == pytest.approx(spec.Lbar(list(p.x), list(p.y)), rel=1e-15)
