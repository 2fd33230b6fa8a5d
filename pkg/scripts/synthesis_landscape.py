"""Explore the observer-redesign programs on the two-state example.

    python3 scripts/synthesis_landscape.py [--gamma 1.86]

1. Feasibility of the joint program in ``(P, M = P L)`` over the b grid.
2. The -log det landscape of the slack-variable program over ``(b, kappa)``.
3. H-infinity gains of the original, published and redesigned gains.
"""

from __future__ import annotations

import argparse

import numpy as np

from hidden_reach import ObserverDesign, SystemModel, case1_budget, hinf_gain_estimate, steady_state
from hidden_reach.calibration import QuantileMethod
from hidden_reach.errors import InfeasibleError, NumericalError
from hidden_reach.reach import (
    _solve_extended,
    _solve_literal,
    default_kappa_grid,
    min_synthesis_gamma,
    synthesize_observer,
)

F = np.array([[0.84, 0.23], [-0.47, 0.12]])
C = np.array([[1.0, 0.0]])
L = np.array([[1.16], [-0.69]])
R1 = np.array([[0.45, -0.11], [-0.11, 0.45]])
R2 = np.array([[1.0]])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gamma", type=float, default=1.86)
    ap.add_argument("--A", type=float, default=0.01)
    args = ap.parse_args()
    model = SystemModel(F, C, R1, R2)
    steady = steady_state(model, ObserverDesign(L))
    S = steady.Sigma_sqrt
    budget = case1_budget(args.A, 1, R1, QuantileMethod.GAMMA)
    b_grid = 0.05 * np.arange(1, 20)

    print(f"smallest achievable H-inf level over all gains: {min_synthesis_gamma(F, C):.4f}")
    print("\njoint program (P, M = P L): status per b")
    for b in b_grid:
        try:
            out = _solve_literal(F, C, S, b, budget.omega_bar, args.gamma, "conic")
        except NumericalError:
            out = None
        print(f"  b={b:.2f}  {'infeasible' if out is None else f'-logdet {out[0]:.4f}'}")

    print("\nslack-variable program: -log det over (b, log10 kappa)")
    kappas = default_kappa_grid()
    print("  b \\ lk " + " ".join(f"{np.log10(k):>6.1f}" for k in kappas))
    for b in b_grid[6:]:
        cells = []
        for k in kappas:
            try:
                out = _solve_extended(F, C, S, b, budget.omega_bar, args.gamma, k, "conic")
            except NumericalError:
                out = None
            cells.append("     -" if out is None else f"{out[0]:6.2f}")
        print(f"  {b:.2f}    " + " ".join(cells))

    print("\ngains")
    paper_L = np.array([[0.1272], [-0.0160]])
    print(f"  original L  {L.ravel()}  H-inf {hinf_gain_estimate(F, C, L):.4f}")
    print(f"  published L {paper_L.ravel()}  H-inf {hinf_gain_estimate(F, C, paper_L):.4f}")
    try:
        res = synthesize_observer(model, steady, args.A, args.gamma, quantile_method=QuantileMethod.GAMMA)
        print(f"  redesigned  {res.L_new.ravel()}  H-inf {res.gain_estimate:.4f}  -logdet {res.bound.neg_logdet:.4f}")
    except InfeasibleError as exc:
        print(f"  redesign infeasible: {exc}")


if __name__ == "__main__":
    main()
