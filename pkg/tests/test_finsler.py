import math

import numpy as np
import pytest

from finslerchange import finsler
from finslerchange.jets import Jet, TangentPoint, fd_oracle
from finslerchange.symexpr import compile_expr, parse


def L_of(text):
    return compile_expr(parse(text))


EUCLID = L_of("sqrt(y1^2 + y2^2)")
RANDERS = L_of("sqrt(y1^2 + y2^2) + 0.3*y1")
RANDERS_X = L_of("sqrt(y1^2 + y2^2 + y3^2) + 0.2*x2*y1")
RIEM = L_of("sqrt(y1^2 + (1 + x1^2)*y2^2 + 2*y3^2)")
QUARTIC = L_of("(y1^4 + y2^4 + y3^4)^(1/4)")
P3 = TangentPoint([0.1, -0.2, 0.3], [0.5, 0.8, -0.4])


def test_euclidean_fundamental():
    pack = finsler.fundamental(EUCLID, TangentPoint([0, 0], [3, 4]))
    np.testing.assert_allclose(pack.g.components, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(pack.l.components, [0.6, 0.8], atol=1e-14)
    assert pack.C.norm() < 1e-14


def test_riemannian_cartan_vanishes():
    assert finsler.fundamental(RIEM, P3).C.norm() < 1e-10


def test_randers_metric_matches_hand_values_and_fd():
    p = TangentPoint([0, 0], [0, 1])
    g = finsler.fundamental(RANDERS, p).g.components
    np.testing.assert_allclose(g, [[1.09, 0.3], [0.3, 1.0]], atol=1e-13)

    def F(x, y):
        return 0.5 * RANDERS(x, y) ** 2

    assert fd_oracle(F, p, [0, 0], [1, 1]) == pytest.approx(g[0, 1], abs=1e-7)


@pytest.mark.parametrize("L", [RANDERS_X, RIEM, QUARTIC])
def test_pack_invariants(L):
    p = TangentPoint(P3.x, [0.5, 0.8, 0.4])
    fp = finsler.analyze(L, p)
    y = p.ya
    np.testing.assert_allclose(fp.g, fp.h + np.outer(fp.l, fp.l), atol=1e-10)
    assert np.abs(fp.h @ y).max() < 1e-12
    assert np.abs(np.einsum("ijk,k->ij", fp.C, y)).max() < 1e-12
    assert fp.l @ y == pytest.approx(fp.L, rel=1e-14)
    np.testing.assert_allclose(fp.ginv @ fp.l, y / fp.L, atol=1e-12)
    assert np.abs(np.einsum("hij,h->ij", fp.C_up, fp.l)).max() < 1e-12
    for perm in [(1, 0, 2), (2, 1, 0), (0, 2, 1)]:
        np.testing.assert_allclose(fp.C, fp.C.transpose(perm), atol=1e-13)
    assert np.linalg.det(fp.g) > 0


def test_minkowski_spray_is_zero():
    sp = finsler.spray(QUARTIC, TangentPoint([0.3, 0.1, 0], [0.5, 0.7, 0.4]))
    assert sp.G.norm() == 0.0


def test_sphere_like_spray_matches_christoffel():
    L = L_of("sqrt(y1^2 + sin(x1)^2*y2^2)")
    x1, y = 0.7, np.array([0.4, 0.9])
    G = finsler.spray(L, TangentPoint([x1, 0.2], y)).G.components
    # Gamma^1_22 = -sin cos, Gamma^2_12 = cot
    ref = 0.5 * np.array([-math.sin(x1) * math.cos(x1) * y[1] ** 2, 2 * (math.cos(x1) / math.sin(x1)) * y[0] * y[1]])
    np.testing.assert_allclose(G, ref, atol=1e-13)


def test_spray_matches_defining_formula_by_fd():
    L = L_of("exp(x1)*sqrt(y1^2 + y2^2)")
    p = TangentPoint([0.3, 0.1], [0.6, -0.8])
    G = finsler.spray(L, p).G.components

    def F(x, y):
        v = L(x, y)
        return 0.5 * v * v

    n = 2
    mixed = np.array([[fd_oracle(F, p, [int(j == a) for a in range(n)], [int(r == a) for a in range(n)]) for r in range(n)] for j in range(n)])
    dF = np.array([fd_oracle(F, p, [int(r == a) for a in range(n)], [0, 0]) for r in range(n)])
    g = finsler.analyze(L, p).g
    ref = 0.5 * np.linalg.solve(g, mixed.T @ p.ya - dF)
    np.testing.assert_allclose(G, ref, atol=1e-7)


def test_spray_euler_and_connection_consistency():
    fp = finsler.analyze(RANDERS_X, P3)
    fp.check_spray()
    np.testing.assert_allclose(fp.Gj @ P3.ya, 2 * fp.G, atol=1e-12)
    np.testing.assert_allclose(np.einsum("ijk,k->ij", fp.F, P3.ya), fp.Gj, atol=1e-10)
    np.testing.assert_allclose(finsler.spray_values(RANDERS_X, P3.x, P3.y), fp.G, atol=1e-13)


def test_h_covariant_derivative_cases():
    assert finsler.h_cov_deriv_C(RIEM, P3).norm() < 1e-10
    assert finsler.h_cov_deriv_C(QUARTIC, TangentPoint([0, 0, 0], [0.5, 0.7, 0.4])).norm() < 1e-12
    ch = finsler.h_cov_deriv_C(RANDERS_X, P3)  # runs the L_|h, l_i|h, h_ij|k post-check
    assert ch.norm() > 1e-3
    assert max(finsler.analyze(RANDERS_X, P3).connection_residuals().values()) < 1e-7


def test_p_tensor_routes():
    assert finsler.p_tensor(RIEM, P3).norm() < 1e-10
    assert finsler.p_tensor(QUARTIC, TangentPoint([0, 0, 0], [0.5, 0.7, 0.4])).norm() < 1e-12
    fp = finsler.analyze(RANDERS_X, P3)
    finsler.p_tensor(RANDERS_X, P3)
    np.testing.assert_allclose(fp.P, fp.P_delta0, atol=1e-9)


def test_v_curvature_cases():
    assert finsler.v_curvature(RANDERS, TangentPoint([0, 0], [0.3, 1])).norm() < 1e-12
    assert finsler.v_curvature(RIEM, P3).norm() < 1e-12
    S = finsler.v_curvature(RANDERS_X, P3).components
    fp = finsler.analyze(RANDERS_X, P3)
    np.testing.assert_allclose(S, -S.swapaxes(2, 3), atol=1e-13)
    np.testing.assert_allclose(S, -S.swapaxes(0, 1), atol=1e-13)
    assert np.abs(np.einsum("hijk,h->ijk", S, P3.ya)).max() < 1e-12
    # 3-dim Randers: S = s (h_hj h_ik - h_hk h_ij) / L^2
    h = fp.h
    T = (np.einsum("hj,ik->hijk", h, h) - np.einsum("hk,ij->hijk", h, h)) / fp.L**2
    s = float(np.sum(S * T) / np.sum(T * T))
    assert np.linalg.norm(S - s * T) / np.linalg.norm(S) < 1e-8


def test_berwald_two_routes_agree():
    for L, p in [(QUARTIC, TangentPoint([0, 0, 0], [0.5, 0.7, 0.4])), (RANDERS_X, P3)]:
        fp = finsler.analyze(L, p)
        a = np.linalg.norm(finsler.berwald_derivative(L, p)) * fp.L < 1e-6
        b = np.linalg.norm(fp.C_h) * fp.L < 1e-8
        assert a == b


def test_homogeneity_failure_aborts():
    with pytest.raises(finsler.HomogeneityError):
        finsler.fundamental(L_of("y1^2 + y2^2"), TangentPoint([0, 0], [1, 2]))


def test_jet_value_types():
    v = RANDERS([0.0, 0.0], [1.0, 0.0])
    assert not isinstance(v, Jet) and v == pytest.approx(1.3)
