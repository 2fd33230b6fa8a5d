"""Log-barrier interior-point method for the max-margin LMI problem

    maximize s  subject to  F0_j + sum_k x_k Fk_j - s I >= 0  (all j),
                            ||x||^2 <= radius^2.

Dense numpy throughout; sized for programs with tens of coordinates and
LMIs of dimension up to a few dozen.  The optimal margin ``s*`` decides
feasibility: ``s* >= 0`` feasible, ``s* < 0`` infeasible with ``-s*`` as the
infeasibility measure.  Upper bounds on ``s*`` come from the barrier
duality gap, so infeasibility is certified without solving to optimality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError


@dataclass
class MarginResult:
    x: np.ndarray
    margin: float
    margin_upper: float
    status: str  # "feasible", "infeasible", "optimal"
    newton_steps: int


def _slacks(F0s, Fks, x, s):
    return [F0 + np.tensordot(x, Fk, axes=1) - s * np.eye(F0.shape[0]) for F0, Fk in zip(F0s, Fks)]


def _barrier_value(F0s, Fks, x, s, t, radius):
    """Barrier objective, ``inf`` outside the strict interior (Cholesky test)."""
    ball = radius**2 - x @ x
    if ball <= 0:
        return np.inf
    val = -t * s - np.log(ball)
    for S in _slacks(F0s, Fks, x, s):
        try:
            Lc = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return np.inf
        val -= 2.0 * np.sum(np.log(np.diag(Lc)))
    return val


def max_margin(
    F0s,
    Fks,
    x0=None,
    *,
    radius: float = 1e4,
    stop_above: float | None = None,
    stop_below: float | None = None,
    gap_tol: float = 1e-9,
    mu: float = 12.0,
    max_newton: int = 4000,
) -> MarginResult:
    """Run the barrier method; early exits make feasibility checks cheap.

    ``stop_above``: return as soon as an iterate has margin above it.
    ``stop_below``: return as soon as the certified upper bound drops below it.
    """
    K = Fks[0].shape[0] if Fks else 0
    x = np.zeros(K) if x0 is None else np.array(x0, dtype=float)
    if x @ x >= radius**2:
        raise NumericalError("starting point lies outside the search ball")
    s = min(np.linalg.eigvalsh(S).min() for S in _slacks(F0s, Fks, x, 0.0)) - 1.0
    dims = sum(F0.shape[0] for F0 in F0s) + 1
    t = 1.0
    steps = 0
    upper = np.inf
    while True:
        # centering
        for _ in range(200):
            if stop_above is not None and s > stop_above:
                return MarginResult(x, s, upper, "feasible", steps)
            steps += 1
            if steps > max_newton:
                raise NumericalError(f"barrier method hit the Newton cap (margin {s:.3e}, gap bound {dims / t:.3e})")
            g = np.zeros(K + 1)
            H = np.zeros((K + 1, K + 1))
            g[K] = -t
            for S, Fk in zip(_slacks(F0s, Fks, x, s), Fks):
                Si = np.linalg.inv(S)
                W = np.concatenate([np.einsum("ab,kbc->kac", Si, Fk), -Si[None]], axis=0)
                g -= np.einsum("kaa->k", W)
                H += np.einsum("iab,kba->ik", W, W)
            ball = radius**2 - x @ x
            g[:K] += 2.0 * x / ball
            H[:K, :K] += 2.0 * np.eye(K) / ball + 4.0 * np.outer(x, x) / ball**2
            try:
                dy = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                dy = -np.linalg.lstsq(H, g, rcond=None)[0]
            decrement = float(-g @ dy)
            if decrement < 1e-12:
                break
            f0 = _barrier_value(F0s, Fks, x, s, t, radius)
            step = 1.0
            while step > 1e-14:
                xn, sn = x + step * dy[:K], s + step * dy[K]
                fn = _barrier_value(F0s, Fks, xn, sn, t, radius)
                if np.isfinite(fn) and fn <= f0 - 0.25 * step * decrement:
                    break
                step *= 0.5
            else:
                break
            x, s = xn, sn
            if decrement < 1e-9:
                break
        upper = s + dims / t
        if stop_above is not None and s > stop_above:
            return MarginResult(x, s, upper, "feasible", steps)
        if stop_below is not None and upper < stop_below:
            return MarginResult(x, s, upper, "infeasible", steps)
        if dims / t < gap_tol:
            return MarginResult(x, s, upper, "optimal", steps)
        t *= mu
