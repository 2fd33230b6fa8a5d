"""Block linear matrix inequalities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LayoutError
from .expr import Affine, Var

_SYM_TOL = 1e-12


@dataclass(eq=False)
class BlockLMI:
    """``matrix(x) >= margin * I`` where ``matrix`` is the stacked block grid.

    ``margin = 0`` is a plain PSD constraint; a positive margin encodes a
    strict inequality with slack.
    """

    matrix: Affine
    block_sizes: tuple[int, ...]
    margin: float = 0.0
    name: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def variables(self) -> list[Var]:
        return self.matrix.variables

    def instantiate(self, assignment: dict[Var, np.ndarray]) -> np.ndarray:
        X = self.matrix.value(assignment)
        return 0.5 * (X + X.T)

    def min_eig(self, assignment: dict[Var, np.ndarray]) -> float:
        """Smallest eigenvalue of ``matrix(x) - margin I``."""
        return float(np.linalg.eigvalsh(self.instantiate(assignment)).min()) - self.margin

    def standard_form(self, index: dict[Var, slice], n_coords: int) -> tuple[np.ndarray, np.ndarray]:
        """``(F0, Fk)`` with ``matrix(x) - margin I = F0 + sum_k x_k Fk[k]`` over global coordinates."""
        N = self.dim
        F0 = self.matrix.const - self.margin * np.eye(N)
        Fk = np.zeros((n_coords, N, N))
        for v, c in self.matrix.coeffs.items():
            Fk[index[v]] += c
        F0 = 0.5 * (F0 + F0.T)
        Fk = 0.5 * (Fk + Fk.transpose(0, 2, 1))
        return F0, Fk


def _block_shape(entry) -> tuple[int, int] | None:
    if entry is None:
        return None
    if isinstance(entry, (int, float)) and entry == 0:
        return None
    if isinstance(entry, (Affine, Var)):
        return entry.shape if isinstance(entry, Affine) else entry.shape
    return np.array(entry, ndmin=2).shape


def assemble(grid, margin: float = 0.0, name: str = "") -> BlockLMI:
    """Stack a square grid of blocks into a symmetric :class:`BlockLMI`.

    Entries are affine expressions, variables, constant arrays, or
    ``None``/``0`` for zero blocks.  Block ``(i, j)`` must be the transpose of
    block ``(j, i)``; anything else is a layout error.
    """
    k = len(grid)
    if k == 0 or any(len(row) != k for row in grid):
        raise LayoutError("block grid must be square and nonempty")
    rows = [None] * k
    cols = [None] * k
    for i, row in enumerate(grid):
        for j, entry in enumerate(row):
            shp = _block_shape(entry)
            if shp is None:
                continue
            for arr, idx, size in ((rows, i, shp[0]), (cols, j, shp[1])):
                if arr[idx] is None:
                    arr[idx] = size
                elif arr[idx] != size:
                    raise LayoutError(f"inconsistent block size at ({i}, {j}): {shp}")
    for i in range(k):
        if rows[i] is None and cols[i] is None:
            raise LayoutError(f"block row/column {i} is entirely zero; its size is undetermined")
        rows[i] = rows[i] if rows[i] is not None else cols[i]
        cols[i] = cols[i] if cols[i] is not None else rows[i]
        if rows[i] != cols[i]:
            raise LayoutError(f"diagonal block {i} is not square ({rows[i]}x{cols[i]})")
    offsets = np.concatenate([[0], np.cumsum(rows)])
    N = int(offsets[-1])
    const = np.zeros((N, N))
    coeffs: dict[Var, np.ndarray] = {}
    for i, row in enumerate(grid):
        for j, entry in enumerate(row):
            if _block_shape(entry) is None:
                continue
            blk = Affine.lift(entry)
            rs = slice(offsets[i], offsets[i + 1])
            cs = slice(offsets[j], offsets[j + 1])
            const[rs, cs] += blk.const
            for v, c in blk.coeffs.items():
                if v not in coeffs:
                    coeffs[v] = np.zeros((v.size, N, N))
                coeffs[v][:, rs, cs] += c
    scale = max(1.0, np.abs(const).max())
    if np.abs(const - const.T).max() > _SYM_TOL * scale:
        raise LayoutError("block grid is not symmetric (constant part)")
    for v, c in coeffs.items():
        if np.abs(c - c.transpose(0, 2, 1)).max() > _SYM_TOL * max(1.0, np.abs(c).max()):
            raise LayoutError(f"block grid is not symmetric in variable {v.name}")
    return BlockLMI(Affine((N, N), const, coeffs), tuple(int(r) for r in rows), float(margin), name)


def collect_variables(constraints, extra=()) -> tuple[list[Var], dict[Var, slice], int]:
    """Global coordinate layout over all variables appearing in ``constraints``."""
    seen: dict[Var, None] = {}
    for v in extra:
        seen.setdefault(v, None)
    for con in constraints:
        for v in con.variables:
            seen.setdefault(v, None)
    order = list(seen)
    index = {}
    pos = 0
    for v in order:
        index[v] = slice(pos, pos + v.size)
        pos += v.size
    return order, index, pos


def split_coords(x: np.ndarray, order: list[Var], index: dict[Var, slice]) -> dict[Var, np.ndarray]:
    return {v: v.from_coords(x[index[v]]) for v in order}


def block_scaling(lmi: BlockLMI) -> np.ndarray:
    """Diagonal congruence scaling giving each diagonal block unit Frobenius norm.

    Norms are taken over the constant and all coefficient slices; congruence
    preserves semidefiniteness, so this changes conditioning only.
    """
    d = np.ones(lmi.dim)
    offsets = np.concatenate([[0], np.cumsum(lmi.block_sizes)])
    for i in range(len(lmi.block_sizes)):
        s = slice(offsets[i], offsets[i + 1])
        mass = np.linalg.norm(lmi.matrix.const[s, s]) ** 2
        for c in lmi.matrix.coeffs.values():
            mass += np.linalg.norm(c[:, s, s]) ** 2
        mass = np.sqrt(mass)
        if mass > 0:
            d[s] = 1.0 / np.sqrt(mass)
    return d
