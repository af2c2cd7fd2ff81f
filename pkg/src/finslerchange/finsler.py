"""Intrinsic quantities of a Finsler space computed directly from ``L``.

Everything here is obtained from a single jet of ``L`` at the point (order
1 in x, 4 in y) by exact differentiation and jet-valued index algebra:

* ``l_i``, ``h_ij``, ``g_ij``, ``g^ij``, ``C_ijk``, ``C^h_ij``, ``C_i``
* the spray ``G^i``, nonlinear connection ``G^i_j``, Berwald coefficients
  ``G^i_jk`` and the Cartan horizontal coefficients ``F^i_jk``
* ``C_ijk|h``, ``P_ijk`` and the v-curvature ``S_hijk``

This module is the reference against which the closed forms in
:mod:`finslerchange.hrc` are checked, so it never uses any of them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .jets import TangentPoint, lift, space
from .tensors import Tensor, invert, rel_residual

HOMOGENEITY_RTOL = 1e-8
CONNECTION_ATOL = 1e-7
ROUTE_RTOL = 1e-7


class HomogeneityError(ArithmeticError):
    """A computed quantity violates its homogeneity in y."""


class ConsistencyError(ArithmeticError):
    """An internal identity of the Cartan connection failed."""


@dataclass(frozen=True)
class FinslerPack:
    point: TangentPoint
    L: float
    l: Tensor
    h: Tensor
    g: Tensor
    ginv: Tensor
    C: Tensor
    C_up: Tensor
    C_vec: Tensor


@dataclass(frozen=True)
class SprayPack:
    point: TangentPoint
    G: Tensor
    G_j: Tensor
    G_jk: Tensor
    F: Tensor
    G_cov: Tensor


class FinslerPoint:
    """Lazily evaluated jet data of ``L`` at one tangent point.

    Use :func:`analyze` to get a cached instance.
    """

    def __init__(self, L: Callable, p: TangentPoint):
        self.L_fn = L
        self.p = p
        self.n = p.n
        self.y = p.ya
        n = self.n
        self.s14 = space(n, 1, 4)
        self.jet_L = lift(L, p, 1, 4).coeffs

    # raw jet arrays -----------------------------------------------------

    @cached_property
    def jet_F(self) -> np.ndarray:
        return 0.5 * self.s14.mul(self.jet_L, self.jet_L)

    @cached_property
    def jet_g(self) -> np.ndarray:
        """g_rs as jets of kind (1, 2)."""
        fy = self.s14.grad_y(self.jet_F)
        return space(self.n, 1, 3).grad_y(fy)

    @cached_property
    def jet_C(self) -> np.ndarray:
        """C_ijk as jets of kind (1, 1)."""
        return 0.5 * space(self.n, 1, 2).grad_y(self.jet_g)

    @cached_property
    def jet_l(self) -> np.ndarray:
        """l_i as jets of kind (1, 3)."""
        return self.s14.grad_y(self.jet_L)

    @cached_property
    def _fx(self) -> np.ndarray:
        return self.s14.grad_x(self.jet_F)  # (r, m04): d_r F

    @cached_property
    def _fxy(self) -> np.ndarray:
        return space(self.n, 0, 4).grad_y(self._fx)  # (j, r, m03): dy_r d_j F

    # base values ----------------------------------------------------------

    @cached_property
    def L(self) -> float:
        return float(self.jet_L[0])

    @cached_property
    def l(self) -> np.ndarray:
        return self.jet_l[:, 0]

    @cached_property
    def g(self) -> np.ndarray:
        g = self.jet_g[..., 0]
        return 0.5 * (g + g.T)

    @cached_property
    def ginv_t(self) -> Tensor:
        return invert(Tensor(self.g, "dd", self.p))

    @cached_property
    def ginv(self) -> np.ndarray:
        return self.ginv_t.components

    @cached_property
    def h(self) -> np.ndarray:
        return self.g - np.outer(self.l, self.l)

    @cached_property
    def C(self) -> np.ndarray:
        return self.jet_C[..., 0]

    @cached_property
    def C_up(self) -> np.ndarray:
        return np.einsum("hs,sij->hij", self.ginv, self.C)

    @cached_property
    def C_vec(self) -> np.ndarray:
        return np.einsum("ijk,jk->i", self.C, self.ginv)

    @cached_property
    def dL_dx(self) -> np.ndarray:
        """d_j L."""
        return self.s14.grad_x(self.jet_L)[:, 0]

    @cached_property
    def d2L_dydx(self) -> np.ndarray:
        """Entry ``[j, r]`` is dy_r d_j L."""
        lx = self.s14.grad_x(self.jet_L)
        return space(self.n, 0, 4).grad_y(lx)[..., 0]

    # spray and connection ---------------------------------------------------

    @cached_property
    def jet_G(self) -> np.ndarray:
        """Spray G^i as jets of kind (0, 2)."""
        n = self.n
        s02 = space(n, 0, 2)
        g02 = space(n, 1, 2).truncate(self.jet_g, 0, 2)
        ginv02 = s02.inv(0.5 * (g02 + g02.swapaxes(0, 1)))
        fxy = space(n, 0, 3).truncate(self._fxy, 0, 2)
        fx = space(n, 0, 4).truncate(self._fx, 0, 2)
        yv = s02.y_vector(self.p.y)
        two_gcov = s02.einsum("j,jr->r", yv, fxy) - fx
        return 0.5 * s02.einsum("ir,r->i", ginv02, two_gcov)

    @cached_property
    def jet_Gj(self) -> np.ndarray:
        return space(self.n, 0, 2).grad_y(self.jet_G)  # (i, j, m01)

    @cached_property
    def G(self) -> np.ndarray:
        return self.jet_G[:, 0]

    @cached_property
    def Gj(self) -> np.ndarray:
        return self.jet_Gj[..., 0]

    @cached_property
    def Gjk(self) -> np.ndarray:
        return space(self.n, 0, 1).grad_y(self.jet_Gj)[..., 0]

    @cached_property
    def dg_dx(self) -> np.ndarray:
        """Entry ``[r, s, h]`` is d_h g_rs."""
        return space(self.n, 1, 2).grad_x(self.jet_g)[..., 0]

    @cached_property
    def F(self) -> np.ndarray:
        """Cartan horizontal coefficients, entry ``[i, j, k]`` is F^i_jk."""
        # dg[a, b, c] = delta_c g_ab with delta_c = d_c - G^m_c dy_m
        dg = self.dg_dx - 2.0 * np.einsum("mc,abm->abc", self.Gj, self.C)
        t = np.einsum("rkj->rjk", dg) + np.einsum("jrk->rjk", dg) - np.einsum("jkr->rjk", dg)
        return 0.5 * np.einsum("ir,rjk->ijk", self.ginv, t)

    @cached_property
    def G_cov(self) -> np.ndarray:
        return self.g @ self.G

    # covariant derivatives ------------------------------------------------------

    @cached_property
    def dC_dx(self) -> np.ndarray:
        return space(self.n, 1, 1).grad_x(self.jet_C)[..., 0]  # [i,j,k,h]

    @cached_property
    def dC_dy(self) -> np.ndarray:
        return space(self.n, 1, 1).grad_y(self.jet_C)[..., 0]  # [i,j,k,m]

    @cached_property
    def C_h(self) -> np.ndarray:
        """C_ijk|h, entry ``[i, j, k, h]``."""
        C, F = self.C, self.F
        delta = self.dC_dx - np.einsum("mh,ijkm->ijkh", self.Gj, self.dC_dy)
        return (
            delta
            - np.einsum("rjk,rih->ijkh", C, F)
            - np.einsum("irk,rjh->ijkh", C, F)
            - np.einsum("ijr,rkh->ijkh", C, F)
        )

    @cached_property
    def P(self) -> np.ndarray:
        return np.einsum("ijkh,h->ijk", self.C_h, self.y)

    @cached_property
    def P_delta0(self) -> np.ndarray:
        C, N = self.C, self.Gj
        d0 = np.einsum("ijkh,h->ijk", self.dC_dx, self.y) - 2.0 * np.einsum("ijkr,r->ijk", self.dC_dy, self.G)
        return (
            d0
            - np.einsum("rjk,ri->ijk", C, N)
            - np.einsum("irk,rj->ijk", C, N)
            - np.einsum("ijr,rk->ijk", C, N)
        )

    @cached_property
    def S(self) -> np.ndarray:
        t = np.einsum("ijr,rhk->hijk", self.C, self.C_up)
        return t - t.swapaxes(2, 3)

    # identities -------------------------------------------------------------

    def connection_residuals(self) -> dict[str, float]:
        """Absolute residuals of L_|i = 0, l_i|j = 0 and g_ij|k = 0."""
        L, l, N, F, g = self.L, self.l, self.Gj, self.F, self.g
        L_h = self.dL_dx - N.T @ l
        dl_dx = space(self.n, 1, 3).grad_x(self.jet_l)[..., 0]  # [i, j]
        l_h = dl_dx - np.einsum("mj,im->ij", N, self.h) / L - np.einsum("r,rij->ij", l, F)
        dg = self.dg_dx - 2.0 * np.einsum("mk,ijm->ijk", N, self.C)
        g_h = dg - np.einsum("rj,rik->ijk", g, F) - np.einsum("ir,rjk->ijk", g, F)
        scale = max(1.0, L)
        return {
            "L_|i": float(np.max(np.abs(L_h))) / scale,
            "l_i|j": float(np.max(np.abs(l_h))),
            "g_ij|k": float(np.max(np.abs(g_h))),
        }

    def check_spray(self) -> None:
        euler = self.Gj @ self.y
        err = rel_residual(euler - 2.0 * self.G, 2.0 * self.G, self.L**2)
        if err > HOMOGENEITY_RTOL:
            raise HomogeneityError(f"spray is not 2-homogeneous at {self.p} (residual {err:.2e})")
        fy = np.einsum("ijk,k->ij", self.F, self.y)
        err = rel_residual(fy - self.Gj, self.Gj, self.L)
        if err > HOMOGENEITY_RTOL:
            raise ConsistencyError(f"F^i_jk y^k != G^i_j at {self.p} (residual {err:.2e})")


@lru_cache(maxsize=512)
def analyze(L: Callable, p: TangentPoint) -> FinslerPoint:
    return FinslerPoint(L, p)


def _tensors(fp: FinslerPoint) -> FinslerPack:
    p = fp.p
    return FinslerPack(
        point=p,
        L=fp.L,
        l=Tensor(fp.l, "d", p),
        h=Tensor(fp.h, "dd", p),
        g=Tensor(fp.g, "dd", p, ((0, 1),)),
        ginv=fp.ginv_t,
        C=Tensor(fp.C, "ddd", p),
        C_up=Tensor(fp.C_up, "udd", p),
        C_vec=Tensor(fp.C_vec, "d", p),
    )


def fundamental(L: Callable, p: TangentPoint) -> FinslerPack:
    """Metric data of ``L`` at ``p``; checks ``l_i y^i = L`` and Euler relations."""
    fp = analyze(L, p)
    if fp.L <= 0:
        raise HomogeneityError(f"L is not positive at {p}")
    err = abs(fp.l @ fp.y - fp.L) / fp.L
    if err > HOMOGENEITY_RTOL:
        raise HomogeneityError(f"l_i y^i != L at {p} (relative {err:.2e}); is L 1-homogeneous?")
    err = rel_residual(fp.g @ fp.y - fp.L * fp.l, fp.l, 1.0)
    if err > HOMOGENEITY_RTOL:
        raise HomogeneityError(f"g_ij y^j != L l_i at {p} (relative {err:.2e})")
    return _tensors(fp)


def spray(L: Callable, p: TangentPoint) -> SprayPack:
    fp = analyze(L, p)
    fp.check_spray()
    return SprayPack(
        point=p,
        G=Tensor(fp.G, "u", p),
        G_j=Tensor(fp.Gj, "ud", p),
        G_jk=Tensor(fp.Gjk, "udd", p),
        F=Tensor(fp.F, "udd", p),
        G_cov=Tensor(fp.G_cov, "d", p),
    )


def h_cov_deriv_C(L: Callable, p: TangentPoint) -> Tensor:
    """C_ijk|h with respect to the Cartan connection (slot order i, j, k, h)."""
    fp = analyze(L, p)
    fp.check_spray()
    res = fp.connection_residuals()
    worst = max(res.values())
    if worst > CONNECTION_ATOL:
        raise ConsistencyError(f"Cartan connection identities fail at {p}: {res}")
    return Tensor(fp.C_h, "dddd", p)


def p_tensor(L: Callable, p: TangentPoint) -> Tensor:
    """P_ijk = y^h C_ijk|h; cross-checked against the delta_0 route."""
    fp = analyze(L, p)
    fp.check_spray()
    err = rel_residual(fp.P - fp.P_delta0, fp.P, 1.0)
    if err > ROUTE_RTOL:
        raise ConsistencyError(f"P_ijk routes disagree at {p} (residual {err:.2e})")
    return Tensor(fp.P, "ddd", p)


def v_curvature(L: Callable, p: TangentPoint) -> Tensor:
    fp = analyze(L, p)
    return Tensor(fp.S, "dddd", p)


def spray_values(L: Callable, x, y) -> np.ndarray:
    """Spray coefficients G^i(x, y) from a low-order jet; used by integrators."""
    p = TangentPoint(x, y)
    n = p.n
    s12 = space(n, 1, 2)
    jl = lift(L, p, 1, 2).coeffs
    F = 0.5 * s12.mul(jl, jl)
    fx = s12.grad_x(F)  # (r, m02)
    fxy = space(n, 0, 2).grad_y(fx)[..., 0]  # [j, r]
    g = space(n, 1, 1).grad_y(s12.grad_y(F))
    g = space(n, 1, 0).truncate(g, 0, 0)[..., 0]
    rhs = fxy.T @ p.ya - fx[:, 0]
    return 0.5 * np.linalg.solve(g, rhs)


def berwald_derivative(L: Callable, p: TangentPoint, rel_step: float = 1e-3) -> np.ndarray:
    """dy_l G^i_jk by Richardson-refined central differences of the jet values.

    Entry ``[i, j, k, l]``.  A fifth y-derivative of ``L`` is beyond the jet
    cap, so this one derivative is taken numerically.
    """
    n = p.n
    h0 = rel_step * max(1.0, float(np.linalg.norm(p.y)))
    out = np.empty((n, n, n, n))
    for l in range(n):
        d = []
        for h in (h0, h0 / 2):
            yp, ym = list(p.y), list(p.y)
            yp[l] += h
            ym[l] -= h
            gp = analyze(L, p.with_y(yp)).Gjk
            gm = analyze(L, p.with_y(ym)).Gjk
            d.append((gp - gm) / (2 * h))
        out[..., l] = (4 * d[1] - d[0]) / 3
    return out
