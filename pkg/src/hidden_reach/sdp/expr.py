"""Decision variables and affine matrix expressions over them.

Just enough algebra to write block LMIs: sums, scalar scaling, products with
constant matrices, transposes.  Every expression is stored as a constant
plus one coefficient tensor per variable, so instantiation and conversion to
a solver's standard form are plain tensor contractions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError

_ids = itertools.count()


@dataclass(eq=False)
class Var:
    """Matrix decision variable.

    ``kind`` is ``"full"`` (every entry free), ``"symmetric"`` (``d(d+1)/2``
    coordinates) or ``"lower"`` (lower-triangular, diagonal included).
    """

    name: str
    shape: tuple[int, int]
    kind: str = "full"
    id: int = field(default_factory=lambda: next(_ids))

    __array_ufunc__ = None

    def __post_init__(self):
        r, c = self.shape
        if r < 1 or c < 1:
            raise DimensionError(f"variable {self.name} needs positive dimensions, got {self.shape}")
        if self.kind not in ("full", "symmetric", "lower"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind != "full" and r != c:
            raise DimensionError(f"{self.kind} variable {self.name} must be square")
        self.shape = (int(r), int(c))
        self._basis = self._make_basis()

    @property
    def symmetric(self) -> bool:
        return self.kind == "symmetric"

    @property
    def size(self) -> int:
        r, c = self.shape
        return r * c if self.kind == "full" else r * (r + 1) // 2

    def _make_basis(self) -> np.ndarray:
        r, c = self.shape
        B = np.zeros((self.size, r, c))
        if self.kind != "full":
            for k, (i, j) in enumerate((i, j) for i in range(r) for j in range(i + 1)):
                B[k, i, j] = 1.0
                if self.symmetric:
                    B[k, j, i] = 1.0
        else:
            for k in range(self.size):
                B[k, k // c, k % c] = 1.0
        return B

    @property
    def basis(self) -> np.ndarray:
        return self._basis

    def from_coords(self, x) -> np.ndarray:
        return np.tensordot(np.asarray(x, dtype=float), self._basis, axes=1)

    def to_coords(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        r, c = self.shape
        if self.kind != "full":
            return np.array([X[i, j] for i in range(r) for j in range(i + 1)])
        return X.reshape(-1).copy()

    def expr(self) -> "Affine":
        return Affine((self.shape), np.zeros(self.shape), {self: self._basis})

    # arithmetic delegates to the expression form
    def __add__(self, o):
        return self.expr() + o

    __radd__ = __add__

    def __sub__(self, o):
        return self.expr() - o

    def __rsub__(self, o):
        return o - self.expr()

    def __neg__(self):
        return -self.expr()

    def __mul__(self, k):
        return self.expr() * k

    __rmul__ = __mul__

    def __matmul__(self, o):
        return self.expr() @ o

    def __rmatmul__(self, o):
        return o @ self.expr()

    @property
    def T(self) -> "Affine":
        return self.expr().T

    def __hash__(self):
        return self.id

    def __repr__(self):
        return f"Var({self.name!r}, {self.shape}, {self.kind})"


class Affine:
    """``const + sum_v <coeffs[v], x_v>`` with ``coeffs[v]`` of shape ``(v.size, rows, cols)``."""

    __array_ufunc__ = None

    def __init__(self, shape, const, coeffs=None):
        self.shape = (int(shape[0]), int(shape[1]))
        self.const = np.asarray(const, dtype=float).reshape(self.shape)
        self.coeffs: dict[Var, np.ndarray] = dict(coeffs or {})

    @staticmethod
    def lift(obj, shape=None) -> "Affine":
        if isinstance(obj, Affine):
            return obj
        if isinstance(obj, Var):
            return obj.expr()
        a = np.array(obj, dtype=float, ndmin=2)
        if a.size == 1 and shape is not None and shape != (1, 1):
            a = np.full(shape, float(a.item()))
        return Affine(a.shape, a)

    @property
    def variables(self) -> list[Var]:
        return list(self.coeffs)

    def _combine(self, other, sign: float) -> "Affine":
        other = Affine.lift(other, self.shape)
        if other.shape != self.shape:
            raise DimensionError(f"shape mismatch {self.shape} vs {other.shape}")
        coeffs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs[v] + sign * c if v in coeffs else sign * c
        return Affine(self.shape, self.const + sign * other.const, coeffs)

    def __add__(self, o):
        return self._combine(o, 1.0)

    __radd__ = __add__

    def __sub__(self, o):
        return self._combine(o, -1.0)

    def __rsub__(self, o):
        return Affine.lift(o, self.shape)._combine(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        k = float(k)
        return Affine(self.shape, k * self.const, {v: k * c for v, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __matmul__(self, M):
        if isinstance(M, (Affine, Var)):
            raise TypeError("products of two affine expressions are not affine")
        M = np.array(M, dtype=float, ndmin=2)
        if self.shape[1] != M.shape[0]:
            raise DimensionError(f"cannot multiply {self.shape} by {M.shape}")
        shape = (self.shape[0], M.shape[1])
        return Affine(shape, self.const @ M, {v: c @ M for v, c in self.coeffs.items()})

    def __rmatmul__(self, M):
        M = np.array(M, dtype=float, ndmin=2)
        if M.shape[1] != self.shape[0]:
            raise DimensionError(f"cannot multiply {M.shape} by {self.shape}")
        shape = (M.shape[0], self.shape[1])
        return Affine(shape, M @ self.const, {v: np.einsum("ij,kjl->kil", M, c) for v, c in self.coeffs.items()})

    @property
    def T(self) -> "Affine":
        return Affine(self.shape[::-1], self.const.T, {v: c.transpose(0, 2, 1) for v, c in self.coeffs.items()})

    def value(self, assignment: dict[Var, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for v, c in self.coeffs.items():
            out += np.tensordot(v.to_coords(assignment[v]), c, axes=1)
        return out

    def __repr__(self):
        return f"Affine(shape={self.shape}, vars={[v.name for v in self.coeffs]})"
