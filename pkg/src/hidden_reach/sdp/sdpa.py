"""Problem dumps in SDPA sparse format (``.dat-s``).

SDPA states the primal as ``min c^T x  s.t.  sum_i x_i F_i - F_0 >= 0``
with ``F_i`` block-diagonal.  Each :class:`BlockLMI` becomes one block, so
an LMI ``G0 + sum_i x_i G_i >= 0`` is written with ``F_0 = -G0``.  Entries
are listed for the upper triangle only, indices 1-based::

    * comment lines start with '*' or '"'
    <m>                       number of coordinates
    <nblocks>
    <size_1> <size_2> ...
    <c_1> ... <c_m>
    <mat> <block> <i> <j> <value>    (mat 0 is F_0)

Determinant maximization has no SDPA encoding; when an objective variable
is given, ``c`` is zero and a ``* logdet`` comment records the coordinate
range and dimension of the variable whose log det is to be maximized, so
an external maxdet solver can be pointed at it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .lmi import BlockLMI, collect_variables
from .expr import Var


@dataclass
class SDPAData:
    c: np.ndarray
    F0: list[np.ndarray]  # SDPA sign convention
    F: list[np.ndarray]  # per block, shape (m, size, size)
    comments: list[str]


def dumps(constraints: list[BlockLMI], objective: Var | None = None, title: str = "") -> str:
    order, index, m = collect_variables(constraints, (objective,) if objective is not None else ())
    lines = [f"* {title}" if title else "* hidden-reach LMI dump"]
    for v in order:
        sl = index[v]
        lines.append(f"* var {v.name} {v.kind} {v.shape[0]}x{v.shape[1]} coords {sl.start + 1}..{sl.stop}")
    if objective is not None:
        sl = index[objective]
        lines.append(f"* logdet {objective.name} coords {sl.start + 1}..{sl.stop} dim {objective.shape[0]}")
    lines.append(str(m))
    lines.append(str(len(constraints)))
    lines.append(" ".join(str(c.dim) for c in constraints))
    lines.append(" ".join("0" for _ in range(m)) if m else "")
    for blk, con in enumerate(constraints, start=1):
        G0, Gk = con.standard_form(index, m)
        for mat, M in [(0, -G0)] + [(k + 1, Gk[k]) for k in range(m)]:
            rows, cols = np.nonzero(np.triu(M))
            for i, j in zip(rows, cols):
                lines.append(f"{mat} {blk} {i + 1} {j + 1} {float(M[i, j])!r}")
    return "\n".join(lines) + "\n"


def dump(path, constraints: list[BlockLMI], objective: Var | None = None, title: str = "") -> Path:
    path = Path(path)
    path.write_text(dumps(constraints, objective, title))
    return path


def loads(text: str) -> SDPAData:
    comments, body = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line[0] in '*"':
            comments.append(line[1:].strip())
        else:
            body.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    if len(body) < 3:
        raise ValidationError("truncated SDPA file")
    m = int(body[0].split()[0])
    nb = int(body[1].split()[0])
    sizes = [abs(int(s)) for s in body[2].split()[:nb]]
    if m:
        c = np.array([float(s) for s in body[3].split()[:m]])
        entries = body[4:]
    else:
        c = np.zeros(0)
        entries = body[3:]
    F0 = [np.zeros((s, s)) for s in sizes]
    F = [np.zeros((m, s, s)) for s in sizes]
    for line in entries:
        parts = line.split()
        mat, blk, i, j = (int(p) for p in parts[:4])
        val = float(parts[4])
        target = F0[blk - 1] if mat == 0 else F[blk - 1][mat - 1]
        target[i - 1, j - 1] = val
        target[j - 1, i - 1] = val
    return SDPAData(c, F0, F, comments)


def load(path) -> SDPAData:
    return loads(Path(path).read_text())
