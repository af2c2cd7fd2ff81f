"""Forward-mode truncated Taylor arithmetic ("jets") at a tangent point.

A jet holds the Taylor coefficients of a scalar function of ``(x, y)``
around a base point, truncated at total x-order ``kx`` and total y-order
``ky``.  Coefficients are stored densely over the multi-index lattice, in
the order given by :class:`JetSpace`.  Exact partial derivatives are read
back with :func:`derive`.

Besides the scalar :class:`Jet`, :class:`JetSpace` exposes vectorised
operations on raw coefficient arrays with arbitrary leading (tensor)
dimensions.  The finsler module uses these to carry tensor-valued jets such
as ``g_ij`` or the spray ``G^i`` through index algebra.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_KX = 1
MAX_KY = 4


class JetError(ValueError):
    """Invalid jet operation (order out of range, mismatched jets)."""


class JetDomainError(ValueError):
    """Function evaluated outside its smooth domain (sqrt of negative, ...)."""


class FDStepError(ArithmeticError):
    """Finite-difference step shrank below the usable limit."""


@dataclass(frozen=True)
class TangentPoint:
    """A point ``(x, y)`` of the tangent bundle, ``y`` off the zero section."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __init__(self, x: Sequence[float], y: Sequence[float]):
        x = tuple(float(v) for v in x)
        y = tuple(float(v) for v in y)
        if len(x) != len(y):
            raise ValueError(f"dimension mismatch: len(x)={len(x)}, len(y)={len(y)}")
        if not x:
            raise ValueError("empty tangent point")
        if not all(math.isfinite(v) for v in x + y):
            raise ValueError("tangent point has non-finite coordinates")
        if math.sqrt(sum(v * v for v in y)) == 0.0:
            raise ValueError("y lies on the zero section")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def xa(self) -> np.ndarray:
        return np.array(self.x)

    @property
    def ya(self) -> np.ndarray:
        return np.array(self.y)

    def with_y(self, y: Sequence[float]) -> "TangentPoint":
        return TangentPoint(self.x, y)

    def scaled(self, lam: float) -> "TangentPoint":
        return TangentPoint(self.x, [lam * v for v in self.y])

    def __str__(self) -> str:
        fx = ",".join(f"{v:.6g}" for v in self.x)
        fy = ",".join(f"{v:.6g}" for v in self.y)
        return f"(x=({fx}); y=({fy}))"


def _multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            idx = [0] * n
            for c in combo:
                idx[c] += 1
            out.append(tuple(idx))
    return out


def _add(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(u + v for u, v in zip(a, b))


def _unit(n: int, r: int) -> tuple[int, ...]:
    return tuple(1 if i == r else 0 for i in range(n))


class JetSpace:
    """Coefficient layout and product tables for jets of kind ``(n, kx, ky)``.

    Obtain instances through :func:`space`; they are cached and immutable.
    """

    def __init__(self, n: int, kx: int, ky: int):
        if not 1 <= n <= 8:
            raise JetError(f"dimension {n} outside 1..8")
        if not (0 <= kx <= MAX_KX and 0 <= ky <= MAX_KY):
            raise JetError(f"jet order (kx={kx}, ky={ky}) exceeds cap ({MAX_KX}, {MAX_KY})")
        self.n, self.kx, self.ky = n, kx, ky
        xs = _multi_indices(n, kx)
        ys = _multi_indices(n, ky)
        mons = [(a, b) for a in xs for b in ys]
        mons.sort(key=lambda ab: (sum(ab[0]) + sum(ab[1]), sum(ab[0])))
        self.monomials: list[tuple[tuple[int, ...], tuple[int, ...]]] = mons
        self.index = {m: i for i, m in enumerate(mons)}
        self.size = len(mons)
        self.factorial = np.array(
            [math.prod(math.factorial(v) for v in a + b) for a, b in mons], dtype=float
        )
        ia, ib, ic = [], [], []
        for i, (a1, b1) in enumerate(mons):
            for j, (a2, b2) in enumerate(mons):
                a, b = _add(a1, a2), _add(b1, b2)
                if sum(a) <= kx and sum(b) <= ky:
                    ia.append(i)
                    ib.append(j)
                    ic.append(self.index[(a, b)])
        order = np.argsort(ic, kind="stable")
        self._ia = np.array(ia)[order]
        self._ib = np.array(ib)[order]
        ic_sorted = np.array(ic)[order]
        self._starts = np.searchsorted(ic_sorted, np.arange(self.size))

    def __repr__(self) -> str:
        return f"JetSpace(n={self.n}, kx={self.kx}, ky={self.ky})"

    # raw coefficient-array operations (leading dims broadcast)

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        prod = a[..., self._ia] * b[..., self._ib]
        return np.add.reduceat(prod, self._starts, axis=-1)

    def einsum(self, subscripts: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Tensor contraction of two jet arrays, e.g. ``"ij,jk->ik"``."""
        lhs, out = subscripts.split("->")
        sa, sb = lhs.split(",")
        prod = np.einsum(f"{sa}z,{sb}z->{out}z", a[..., self._ia], b[..., self._ib])
        return np.add.reduceat(prod, self._starts, axis=-1)

    def constant(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape + (self.size,))
        out[..., 0] = values
        return out

    def variable(self, kind: str, r: int, value: float) -> np.ndarray:
        out = np.zeros(self.size)
        out[0] = value
        zero = (0,) * self.n
        key = (_unit(self.n, r), zero) if kind == "x" else (zero, _unit(self.n, r))
        if key in self.index:
            out[self.index[key]] = 1.0
        return out

    def y_vector(self, y: Sequence[float]) -> np.ndarray:
        """Jet array of the coordinate functions ``y^1..y^n``."""
        return np.stack([self.variable("y", r, y[r]) for r in range(self.n)])

    def inv(self, m: np.ndarray) -> np.ndarray:
        """Inverse of a square jet matrix (shape ``(k, k, size)``)."""
        m0 = m[..., 0]
        a0 = np.linalg.inv(m0)
        nil = m.copy()
        nil[..., 0] = 0.0
        step = -self.einsum("ij,jk->ik", self.constant(a0), nil)
        term = self.constant(a0)
        total = term.copy()
        for _ in range(self.kx + self.ky):
            term = self.einsum("ij,jk->ik", step, term)
            total = total + term
        return total

    def dy(self, a: np.ndarray, r: int) -> np.ndarray:
        src, fac = _dy_map(self.n, self.kx, self.ky, r)
        return a[..., src] * fac

    def dx(self, a: np.ndarray, r: int) -> np.ndarray:
        src, fac = _dx_map(self.n, self.kx, self.ky, r)
        return a[..., src] * fac

    def grad_y(self, a: np.ndarray) -> np.ndarray:
        """Stack of ``dy`` over r; the new index is appended last."""
        return np.stack([self.dy(a, r) for r in range(self.n)], axis=-2)

    def grad_x(self, a: np.ndarray) -> np.ndarray:
        return np.stack([self.dx(a, r) for r in range(self.n)], axis=-2)

    def truncate(self, a: np.ndarray, kx: int, ky: int) -> np.ndarray:
        return a[..., _truncate_map(self.n, self.kx, self.ky, kx, ky)]

    def down(self, kx: int | None = None, ky: int | None = None) -> "JetSpace":
        return space(self.n, self.kx if kx is None else kx, self.ky if ky is None else ky)


@lru_cache(maxsize=None)
def space(n: int, kx: int, ky: int) -> JetSpace:
    return JetSpace(n, kx, ky)


@lru_cache(maxsize=None)
def _dy_map(n, kx, ky, r):
    if ky < 1:
        raise JetError("no y-order left to differentiate")
    src_space, dst = space(n, kx, ky), space(n, kx, ky - 1)
    e = _unit(n, r)
    src = [src_space.index[(a, _add(b, e))] for a, b in dst.monomials]
    fac = np.array([b[r] + 1.0 for a, b in dst.monomials])
    return np.array(src), fac


@lru_cache(maxsize=None)
def _dx_map(n, kx, ky, r):
    if kx < 1:
        raise JetError("no x-order left to differentiate")
    src_space, dst = space(n, kx, ky), space(n, kx - 1, ky)
    e = _unit(n, r)
    src = [src_space.index[(_add(a, e), b)] for a, b in dst.monomials]
    fac = np.array([a[r] + 1.0 for a, b in dst.monomials])
    return np.array(src), fac


@lru_cache(maxsize=None)
def _truncate_map(n, kx, ky, kx2, ky2):
    if kx2 > kx or ky2 > ky:
        raise JetError(f"cannot raise jet order ({kx},{ky}) -> ({kx2},{ky2})")
    src, dst = space(n, kx, ky), space(n, kx2, ky2)
    return np.array([src.index[m] for m in dst.monomials])


class Jet:
    """Scalar jet: Taylor coefficients of one function at ``base``."""

    __slots__ = ("space", "base", "coeffs")
    __array_priority__ = 100

    def __init__(self, sp: JetSpace, base: TangentPoint, coeffs: np.ndarray):
        self.space = sp
        self.base = base
        self.coeffs = coeffs

    @property
    def kx(self) -> int:
        return self.space.kx

    @property
    def ky(self) -> int:
        return self.space.ky

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self) -> str:
        return f"Jet(value={self.value:.12g}, kx={self.kx}, ky={self.ky}, base={self.base})"

    def _check(self, other: "Jet") -> None:
        if other.space is not self.space:
            raise JetError(f"jet kind mismatch: {self.space} vs {other.space}")
        if other.base is not self.base and other.base != self.base:
            raise JetError(f"jets at different points: {self.base} vs {other.base}")

    def _new(self, coeffs: np.ndarray) -> "Jet":
        return Jet(self.space, self.base, coeffs)

    def _is_const(self) -> bool:
        return not self.coeffs[1:].any()

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self._new(self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0] += other
        return self._new(c)

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            if other._is_const():
                return self._new(self.coeffs * other.coeffs[0])
            if self._is_const():
                return self._new(other.coeffs * self.coeffs[0])
            return self._new(self.space.mul(self.coeffs, other.coeffs))
        return self._new(self.coeffs * other)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        a0 = self.value
        if a0 == 0.0:
            raise JetDomainError("division by zero")
        k = self.kx + self.ky
        return self._series([(-1.0) ** j * a0 ** (-j - 1) for j in range(k + 1)])

    def __truediv__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            if other._is_const():
                if other.value == 0.0:
                    raise JetDomainError("division by zero")
                return self._new(self.coeffs / other.value)
            return self * other.reciprocal()
        if other == 0:
            raise JetDomainError("division by zero")
        return self._new(self.coeffs / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        return self.power(p)

    def power(self, p) -> "Jet":
        p = Fraction(p).limit_denominator(10**6) if not isinstance(p, Fraction) else p
        if p.denominator == 1:
            e = int(p)
            if e >= 0:
                return self._ipow(e)
            return self.reciprocal()._ipow(-e)
        a0 = self.value
        if a0 <= 0.0:
            raise JetDomainError(f"non-integer power {p} of non-positive value {a0:.6g}")
        pf = float(p)
        coefs, c = [], 1.0
        for j in range(self.kx + self.ky + 1):
            coefs.append(c * a0 ** (pf - j))
            c *= (pf - j) / (j + 1)
        return self._series(coefs)

    def _ipow(self, e: int) -> "Jet":
        result = None
        base = self
        while e:
            if e & 1:
                result = base if result is None else result * base
            e >>= 1
            if e:
                base = base * base
        if result is None:
            return self._new(self.space.constant(1.0))
        return result

    def _series(self, coefs: Sequence[float]) -> "Jet":
        """Evaluate sum_k coefs[k] * h**k with h the nilpotent part."""
        h = self.coeffs.copy()
        h[0] = 0.0
        out = np.zeros_like(h)
        out[0] = coefs[-1]
        if not h.any():
            out[0] = coefs[0]
            return self._new(out)
        for c in reversed(coefs[:-1]):
            out = self.space.mul(out, h)
            out[0] += c
        return self._new(out)

    def exp(self) -> "Jet":
        e0 = math.exp(self.value)
        k = self.kx + self.ky
        return self._series([e0 / math.factorial(j) for j in range(k + 1)])

    def log(self) -> "Jet":
        a0 = self.value
        if a0 <= 0.0:
            raise JetDomainError(f"log of non-positive value {a0:.6g}")
        k = self.kx + self.ky
        return self._series([math.log(a0)] + [(-1.0) ** (j - 1) / (j * a0**j) for j in range(1, k + 1)])

    def sqrt(self) -> "Jet":
        if self.value <= 0.0:
            raise JetDomainError(f"sqrt of non-positive value {self.value:.6g}")
        return self.power(Fraction(1, 2))

    def sin(self) -> "Jet":
        s, c = math.sin(self.value), math.cos(self.value)
        cyc = [s, c, -s, -c]
        return self._series([cyc[j % 4] / math.factorial(j) for j in range(self.kx + self.ky + 1)])

    def cos(self) -> "Jet":
        s, c = math.sin(self.value), math.cos(self.value)
        cyc = [c, -s, -c, s]
        return self._series([cyc[j % 4] / math.factorial(j) for j in range(self.kx + self.ky + 1)])

    def __abs__(self) -> "Jet":
        if self.value == 0.0:
            if self.kx + self.ky == 0:
                return self
            raise JetDomainError("abs at zero is not differentiable")
        return self if self.value > 0 else -self


def lift(f: Callable, p: TangentPoint, kx: int, ky: int) -> Jet:
    """Evaluate ``f(x, y)`` on jet variables and return the resulting jet.

    ``f`` receives two lists of scalars (here Jets) and must only use
    arithmetic and the methods of :class:`Jet` (the DSL evaluator does).
    """
    sp = space(p.n, kx, ky)
    xs = [Jet(sp, p, sp.variable("x", r, p.x[r])) for r in range(p.n)]
    ys = [Jet(sp, p, sp.variable("y", r, p.y[r])) for r in range(p.n)]
    out = f(xs, ys)
    if not isinstance(out, Jet):
        out = Jet(sp, p, sp.constant(float(out)))
    if not np.all(np.isfinite(out.coeffs)):
        raise JetDomainError(f"non-finite jet coefficients at {p}")
    return out


def derive(j: Jet, alpha: Sequence[int], beta: Sequence[int]) -> float:
    """True partial derivative d^alpha_x d^beta_y of the lifted function."""
    alpha, beta = tuple(int(v) for v in alpha), tuple(int(v) for v in beta)
    if len(alpha) != j.space.n or len(beta) != j.space.n:
        raise JetError("multi-index length does not match dimension")
    if sum(alpha) > j.kx or sum(beta) > j.ky or min(alpha + beta) < 0:
        raise JetError(f"derivative order ({sum(alpha)}, {sum(beta)}) outside jet order ({j.kx}, {j.ky})")
    i = j.space.index[(alpha, beta)]
    return float(j.coeffs[i] * j.space.factorial[i])


# Central-difference stencils for the m-th derivative, O(h^2) accurate.
_STENCILS = {
    0: ([0], [1.0]),
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}

# base relative step per total derivative order; keeps truncation and
# round-off of the doubly extrapolated estimate balanced near 1e-10
FD_STEPS = {1: 1e-3, 2: 5e-3, 3: 2e-2, 4: 4e-2}
FD_MIN_STEP = 1e-7


def _fd_once(f, x, y, orders, h):
    n = len(x)
    axes = []
    for slot, m in enumerate(orders):
        if m:
            offs, ws = _STENCILS[m]
            axes.append([(slot, o, w) for o, w in zip(offs, ws)])
    total = 0.0
    for combo in itertools.product(*axes):
        xx, yy = list(x), list(y)
        w = 1.0
        for slot, o, wt in combo:
            if slot < n:
                xx[slot] += o * h[0]
            else:
                yy[slot - n] += o * h[1]
            w *= wt
        total += w * f(xx, yy)
    scale = 1.0
    for slot, m in enumerate(orders):
        scale *= (h[0] if slot < n else h[1]) ** m
    return total / scale


def fd_oracle(f: Callable, p: TangentPoint, alpha: Sequence[int], beta: Sequence[int]) -> float:
    """Finite-difference estimate of d^alpha_x d^beta_y f at ``p``.

    Tensor-product central differences (error O(h^2)) refined by two
    Richardson levels with step ratio 2, giving an O(h^6) truncation error.
    The step is ``FD_STEPS[order] * max(1, |y|)`` in y (``|x|`` in x).  When
    ``f`` fails inside the stencil (domain boundary) the step is halved; below
    ``FD_MIN_STEP`` an :class:`FDStepError` is raised.
    """
    orders = tuple(int(v) for v in alpha) + tuple(int(v) for v in beta)
    total = sum(orders)
    if total > 4:
        raise JetError("finite-difference oracle supports total order <= 4")
    if total == 0:
        return float(f(list(p.x), list(p.y)))
    rel = FD_STEPS[total]
    hx = rel * max(1.0, float(np.linalg.norm(p.x)))
    hy = rel * max(1.0, float(np.linalg.norm(p.y)))
    while True:
        try:
            d = [_fd_once(f, p.x, p.y, orders, (hx / 2**k, hy / 2**k)) for k in range(3)]
            break
        except (JetDomainError, ValueError, ZeroDivisionError, OverflowError):
            hx, hy = hx / 2, hy / 2
            if min(hx, hy) < FD_MIN_STEP:
                raise FDStepError(f"finite-difference step underflow near domain boundary at {p}")
    r1 = [(4 * d[k + 1] - d[k]) / 3 for k in range(2)]
    return (16 * r1[1] - r1[0]) / 15
