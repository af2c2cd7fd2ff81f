"""Small dense tensors with index variance and a point tag.

Components live in a plain numpy array of shape ``(n,) * rank``.  The
``variance`` string holds one letter per slot: ``"d"`` for a covariant
(lower) index, ``"u"`` for a contravariant (upper) one.  Algebra between
tensors tagged with different tangent points is refused.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .jets import TangentPoint

SYMMETRY_RTOL = 1e-12
PIVOT_TOL = 1e-12


class TensorError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class Tensor:
    components: np.ndarray
    variance: str
    point: TangentPoint | None = None
    symmetries: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        object.__setattr__(self, "components", c)
        if c.ndim != len(self.variance) or set(self.variance) - {"u", "d"}:
            raise TensorError(f"variance {self.variance!r} does not match rank {c.ndim}")
        if c.ndim and len(set(c.shape)) != 1:
            raise TensorError(f"non-square component array {c.shape}")
        if not np.all(np.isfinite(c)):
            raise TensorError("non-finite tensor components")
        scale = max(float(np.max(np.abs(c), initial=0.0)), 1e-300)
        for group in self.symmetries:
            for a, b in zip(group, group[1:]):
                if np.max(np.abs(c - np.swapaxes(c, a, b)), initial=0.0) > SYMMETRY_RTOL * scale * 10:
                    raise TensorError(f"declared symmetry in slots {group} violated")

    @property
    def rank(self) -> int:
        return self.components.ndim

    @property
    def dims(self) -> int:
        return self.components.shape[0] if self.rank else 0

    def __array__(self, dtype=None, copy=None):
        return self.components if dtype is None else self.components.astype(dtype)

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def _same_point(self, other: "Tensor") -> None:
        if self.point is not None and other.point is not None and self.point != other.point:
            raise TensorError(f"tensors from different points: {self.point} vs {other.point}")

    def _like(self, comps) -> "Tensor":
        return Tensor(comps, self.variance, self.point)

    def __add__(self, other: "Tensor") -> "Tensor":
        self._same_point(other)
        if other.variance != self.variance:
            raise TensorError("cannot add tensors of different variance")
        return self._like(self.components + other.components)

    def __sub__(self, other: "Tensor") -> "Tensor":
        self._same_point(other)
        if other.variance != self.variance:
            raise TensorError("cannot subtract tensors of different variance")
        return self._like(self.components - other.components)

    def __mul__(self, s: float) -> "Tensor":
        return self._like(self.components * float(s))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self._like(-self.components)

    def __repr__(self) -> str:
        return f"Tensor(rank={self.rank}, variance={self.variance!r}, point={self.point})"


def tensor(components, variance: str, point: TangentPoint | None = None, symmetric=()) -> Tensor:
    return Tensor(np.asarray(components, dtype=float), variance, point, tuple(tuple(g) for g in symmetric))


def invert(m: Tensor) -> Tensor:
    """Inverse of a symmetric rank-2 tensor by partially pivoted LU.

    The result has the opposite variance on both slots.
    """
    if m.rank != 2:
        raise TensorError("invert needs a rank-2 tensor")
    a = m.components
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * 10 * max(np.max(np.abs(a)), 1e-300):
        raise TensorError("invert expects a symmetric matrix")
    with warnings.catch_warnings():
        # exact singularity is reported below with the point attached
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    d = np.abs(np.diag(lu))
    if d.min() <= PIVOT_TOL * max(d.max(), 1e-300):
        where = f" at {m.point}" if m.point is not None else ""
        raise SingularMatrixError(f"matrix singular within pivot tolerance{where} (min pivot {d.min():.3e})")
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(a.shape[0]))
    inv = 0.5 * (inv + inv.T)
    flip = "".join("u" if v == "d" else "d" for v in m.variance)
    return Tensor(inv, flip, m.point, ((0, 1),))


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def contract(a: Tensor, b: Tensor, pairs: Sequence[tuple[int, int]]) -> Tensor:
    """Einstein sum over slot pairs ``(slot_in_a, slot_in_b)``.

    Free slots of ``a`` come first, then free slots of ``b``, each in
    their original order.
    """
    a._same_point(b)
    la = list(_LETTERS[: a.rank])
    lb = list(_LETTERS[a.rank : a.rank + b.rank])
    for sa, sb in pairs:
        if a.variance[sa] == b.variance[sb]:
            raise TensorError(f"slots {sa} and {sb} have the same variance {a.variance[sa]!r}")
        if a.components.shape[sa] != b.components.shape[sb]:
            raise TensorError("paired slots differ in dimension")
        lb[sb] = la[sa]
    paired_a = {sa for sa, _ in pairs}
    paired_b = {sb for _, sb in pairs}
    out = [la[i] for i in range(a.rank) if i not in paired_a] + [lb[i] for i in range(b.rank) if i not in paired_b]
    var = "".join(a.variance[i] for i in range(a.rank) if i not in paired_a) + "".join(
        b.variance[i] for i in range(b.rank) if i not in paired_b
    )
    comps = np.einsum(f"{''.join(la)},{''.join(lb)}->{''.join(out)}", a.components, b.components)
    return Tensor(comps, var, a.point or b.point)


def lower(t: Tensor, slot: int, g: Tensor) -> Tensor:
    """Lower ``slot`` of ``t`` with the metric ``g`` (covariant rank 2)."""
    if t.variance[slot] != "u":
        raise TensorError(f"slot {slot} is already covariant")
    return _move(t, slot, g)


def raise_index(t: Tensor, slot: int, ginv: Tensor) -> Tensor:
    if t.variance[slot] != "d":
        raise TensorError(f"slot {slot} is already contravariant")
    return _move(t, slot, ginv)


def _move(t: Tensor, slot: int, m: Tensor) -> Tensor:
    res = contract(m, t, [(1, slot)])
    # new index sits first; move it back into place
    comps = np.moveaxis(res.components, 0, slot)
    var = list(res.variance[1:])
    var.insert(slot, res.variance[0])
    return Tensor(comps, "".join(var), res.point)


def _rank3(t) -> tuple[np.ndarray, str, TangentPoint | None]:
    if isinstance(t, Tensor):
        return t.components, t.variance, t.point
    c = np.asarray(t, dtype=float)
    return c, "d" * c.ndim, None


def cyclic_sum_3(t: Tensor | np.ndarray | Callable, n: int | None = None) -> Tensor:
    """``T_ijk + T_jki + T_kij`` for a rank-3 tensor.

    ``t`` may also be a rule ``f(i, j, k) -> float``, tabulated over
    ``range(n)``.
    """
    if callable(t) and not isinstance(t, (Tensor, np.ndarray)):
        if n is None:
            raise TensorError("a rule needs the dimension n")
        t = np.array([[[t(i, j, k) for k in range(n)] for j in range(n)] for i in range(n)], dtype=float)
    c, var, point = _rank3(t)
    if c.ndim != 3:
        raise TensorError(f"cyclic sum needs rank 3, got rank {c.ndim}")
    out = c + np.einsum("jki->ijk", c) + np.einsum("kij->ijk", c)
    return Tensor(out, var, point)


def theta_interchange(t: Tensor | np.ndarray, j: int = 2, k: int = 3) -> Tensor:
    """Interchange slots ``j``, ``k`` and subtract: ``T(..j..k..) - T(..k..j..)``."""
    c, var, point = _rank3(t)
    if c.ndim < 2 or not (0 <= j < c.ndim and 0 <= k < c.ndim) or j == k:
        raise TensorError("invalid slots for interchange")
    return Tensor(c - np.swapaxes(c, j, k), var, point)


def pi3(c: np.ndarray) -> np.ndarray:
    """Raw-array cyclic sum used in hot paths."""
    return c + np.einsum("jki->ijk", c) + np.einsum("kij->ijk", c)


def rel_residual(delta, reference, floor: float) -> float:
    """``|delta| / max(|reference|, floor)`` in the Frobenius norm."""
    d = float(np.linalg.norm(np.asarray(delta, dtype=float)))
    r = float(np.linalg.norm(np.asarray(reference, dtype=float)))
    return d / max(r, floor, 1e-300)
