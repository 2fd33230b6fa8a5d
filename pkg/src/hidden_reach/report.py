"""Report artifacts: ellipse samples, CSV tables, hand-written SVG, report.json.

Nothing here computes a result; every number comes from an operation output
and is only formatted.  Output bytes depend on the inputs alone, so identical
runs give identical files.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import sqrt_sym

N_BOUNDARY = 256
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


# --- geometry ------------------------------------------------------------------------


def ellipse_boundary(P, n_points: int = N_BOUNDARY) -> np.ndarray:
    """``n_points`` samples of ``{e : e^T P e = 1}`` for a 2x2 PD ``P``."""
    P = np.asarray(P, dtype=float)
    if P.shape != (2, 2):
        raise ValidationError(f"boundary sampling needs a 2x2 shape matrix, got {P.shape}")
    th = 2.0 * np.pi * np.arange(n_points) / n_points
    U = np.stack([np.cos(th), np.sin(th)], axis=1)
    return U @ np.linalg.inv(sqrt_sym(P))


def projection_shape(P, i: int, j: int) -> np.ndarray:
    """Shape matrix of the projection of ``{e^T P e <= 1}`` onto coordinates ``(i, j)``."""
    Q = np.linalg.inv(np.asarray(P, dtype=float))
    return np.linalg.inv(Q[np.ix_([i, j], [i, j])])


def half_width(P) -> float:
    """Half-length of the interval ``{e : P e^2 <= 1}`` for ``n = 1``."""
    return 1.0 / math.sqrt(float(np.asarray(P, dtype=float).reshape(())))


def coordinate_pairs(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


# --- CSV -----------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def table_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def boundary_csv(shapes: list[tuple[str, np.ndarray]], n_points: int = N_BOUNDARY) -> str:
    """Boundary samples of every ellipse (and every coordinate pair when ``n > 2``).

    For ``n = 1`` the rows are intervals: ``label, lower, upper``.
    """
    if not shapes:
        return table_csv(["label", "i", "j", "k", "x", "y"], [])
    n = np.asarray(shapes[0][1]).shape[0]
    if n == 1:
        return table_csv(["label", "lower", "upper"],
                         [[lab, -half_width(P), half_width(P)] for lab, P in shapes])
    rows = []
    for lab, P in shapes:
        for i, j in coordinate_pairs(n):
            pts = ellipse_boundary(P if n == 2 else projection_shape(P, i, j), n_points)
            rows.extend([lab, i + 1, j + 1, k, x, y] for k, (x, y) in enumerate(pts))
    return table_csv(["label", "i", "j", "k", "x", "y"], rows)


# --- SVG -----------------------------------------------------------------------------


def _nice_step(span: float, target: int = 6) -> float:
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            return mult * mag
    return 10 * mag


def _num(x: float) -> str:
    return f"{x:.2f}"


def _tick(x: float) -> str:
    s = f"{x:.6g}"
    return "0" if s in ("-0", "0") else s


@dataclass
class Curve:
    label: str
    points: np.ndarray
    closed: bool = True
    dashed: bool = False


@dataclass
class Figure:
    title: str = ""
    xlabel: str = "e1"
    ylabel: str = "e2"
    curves: list[Curve] = field(default_factory=list)
    scatter: np.ndarray | None = None
    scatter_label: str = "samples"
    width: int = 560
    height: int = 480

    def svg(self) -> str:
        pts = [c.points for c in self.curves]
        if self.scatter is not None and len(self.scatter):
            pts.append(self.scatter)
        if not pts:
            raise ValidationError("nothing to plot")
        allp = np.concatenate(pts, axis=0)
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        pad = 0.05 * np.maximum(hi - lo, 1e-12)
        lo, hi = lo - pad, hi + pad
        ml, mr, mt, mb = 64, 150, 36, 48
        pw, ph = self.width - ml - mr, self.height - mt - mb

        def X(x):
            return ml + (x - lo[0]) / (hi[0] - lo[0]) * pw

        def Y(y):
            return mt + ph - (y - lo[1]) / (hi[1] - lo[1]) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
        ]
        if self.title:
            out.append(f'<text x="{ml + pw / 2:.2f}" y="20" text-anchor="middle" font-size="13">{_esc(self.title)}</text>')
        out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for axis in (0, 1):
            step = _nice_step(hi[axis] - lo[axis])
            t = math.ceil(lo[axis] / step) * step
            while t <= hi[axis] + 1e-12 * step:
                if axis == 0:
                    px = X(t)
                    out.append(f'<line x1="{_num(px)}" y1="{mt + ph}" x2="{_num(px)}" y2="{mt + ph + 5}" stroke="black"/>')
                    out.append(f'<line x1="{_num(px)}" y1="{mt}" x2="{_num(px)}" y2="{mt + ph}" stroke="#e5e5e5"/>')
                    out.append(f'<text x="{_num(px)}" y="{mt + ph + 18}" text-anchor="middle">{_tick(t)}</text>')
                else:
                    py = Y(t)
                    out.append(f'<line x1="{ml - 5}" y1="{_num(py)}" x2="{ml}" y2="{_num(py)}" stroke="black"/>')
                    out.append(f'<line x1="{ml}" y1="{_num(py)}" x2="{ml + pw}" y2="{_num(py)}" stroke="#e5e5e5"/>')
                    out.append(f'<text x="{ml - 8}" y="{_num(py + 4)}" text-anchor="end">{_tick(t)}</text>')
                t += step
        out.append(f'<text x="{ml + pw / 2:.2f}" y="{self.height - 10}" text-anchor="middle">{_esc(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{mt + ph / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {mt + ph / 2:.2f})">{_esc(self.ylabel)}</text>')
        if self.scatter is not None and len(self.scatter):
            out.append('<g fill="#888888" fill-opacity="0.5">')
            out.extend(f'<circle cx="{_num(X(x))}" cy="{_num(Y(y))}" r="1.2"/>' for x, y in self.scatter)
            out.append("</g>")
        legend = []
        for idx, c in enumerate(self.curves):
            color = PALETTE[idx % len(PALETTE)]
            d = " ".join(("M" if k == 0 else "L") + f"{_num(X(x))},{_num(Y(y))}" for k, (x, y) in enumerate(c.points))
            if c.closed:
                d += " Z"
            dash = ' stroke-dasharray="6,4"' if c.dashed else ""
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            legend.append((c.label, color, dash))
        if self.scatter is not None and len(self.scatter):
            legend.append((self.scatter_label, "#888888", None))
        lx = ml + pw + 12
        for k, (label, color, dash) in enumerate(legend):
            ly = mt + 10 + 18 * k
            if dash is None:
                out.append(f'<circle cx="{lx + 10}" cy="{ly}" r="3" fill="{color}"/>')
            else:
                out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>')
            out.append(f'<text x="{lx + 26}" y="{ly + 4}">{_esc(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def ellipse_figures(shapes: list[tuple[str, np.ndarray]], title: str, dashed: set[str] = frozenset(),
                    scatter: np.ndarray | None = None) -> dict[str, Figure]:
    """One figure for ``n = 2``; one per coordinate pair for ``n > 2``; none for ``n = 1``.

    Keys are file-name suffixes (``""`` for the planar case, ``"_e1e3"`` etc.).
    """
    if not shapes:
        return {}
    n = np.asarray(shapes[0][1]).shape[0]
    if n < 2:
        return {}
    figs = {}
    for i, j in coordinate_pairs(n):
        curves = [Curve(lab, ellipse_boundary(P if n == 2 else projection_shape(P, i, j)), dashed=lab in dashed)
                  for lab, P in shapes]
        sc = None if scatter is None else np.asarray(scatter)[:, [i, j]]
        key = "" if n == 2 else f"_e{i + 1}e{j + 1}"
        figs[key] = Figure(title=title, xlabel=f"e{i + 1}", ylabel=f"e{j + 1}", curves=curves, scatter=sc,
                           scatter_label="error samples")
    return figs


# --- JSON bundle ---------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


@dataclass
class ReportBundle:
    command: str
    scenario: str
    calibration: list[dict] = field(default_factory=list)
    bounds: list[dict] = field(default_factory=list)
    synthesis: dict | None = None
    simulation: dict | None = None
    files: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable({
            "schema": "hidden-reach/1",
            "command": self.command,
            "scenario": self.scenario,
            "calibration": self.calibration,
            "bounds": self.bounds,
            "synthesis": self.synthesis,
            "simulation": self.simulation,
            "files": self.files,
        })

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


class Writer:
    """Writes artifacts into one directory, honoring the enabled formats."""

    def __init__(self, directory, formats=("json", "csv", "svg")):
        self.dir = Path(directory)
        self.formats = set(formats)
        self.files: list[str] = []

    def write(self, name: str, text: str) -> Path | None:
        ext = name.rsplit(".", 1)[-1]
        if ext not in self.formats:
            return None
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.files.append(name)
        return path
