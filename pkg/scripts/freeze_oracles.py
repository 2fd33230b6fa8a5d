"""Compute the external reference values used by the test suite.

Everything here is computed independently of ``hidden_reach.sdp``: the LMIs
are written directly in cvxpy.  Optimal values use cvxpy's own ``log_det``
reformulation solved by Clarabel; feasibility uses CVXOPT on a margin
problem (Clarabel's margin is stored alongside).  Monte Carlo references use numpy's PCG64.  Output: ``tests/fixtures/oracles.json``.

Run once after changing the reference problems:

    python3 scripts/freeze_oracles.py
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import cvxpy as cp
import numpy as np
from scipy import linalg, stats

ROOT = Path(__file__).resolve().parents[1]

F = np.array([[0.84, 0.23], [-0.47, 0.12]])
C = np.array([[1.0, 0.0]])
L = np.array([[1.16], [-0.69]])
R1 = np.array([[0.45, -0.11], [-0.11, 0.45]])
R2 = np.array([[1.0]])


def sigma_sqrt() -> float:
    A = F - L @ C
    P = linalg.solve_discrete_lyapunov(A, R1 + L @ R2 @ L.T)
    return float(np.sqrt((C @ P @ C.T + R2)[0, 0]))


def bound_program(b: float, omega_bar: float, S: float):
    """Min -log det P subject to the six-block bound LMI, formulated from scratch."""
    n, m = 2, 1
    P = cp.Variable((n, n), symmetric=True)
    c = (1.0 - b) / omega_bar
    Z = np.zeros
    PLS = P @ L * S
    rows = [
        [b * P, (P @ F).T, Z((n, n)), Z((n, m)), Z((n, n)), Z((n, m))],
        [P @ F, P, P, -PLS, Z((n, n)), Z((n, m))],
        [Z((n, n)), P, c * np.eye(n), Z((n, m)), Z((n, n)), Z((n, m))],
        [Z((m, n)), -PLS.T, Z((m, n)), c * np.eye(m), Z((m, n)), Z((m, m))],
        [Z((n, n)), Z((n, n)), Z((n, n)), Z((n, m)), np.eye(n), Z((n, m))],
        [Z((m, n)), Z((m, n)), Z((m, n)), Z((m, m)), Z((m, n)), np.eye(m)],
    ]
    M = cp.bmat(rows)
    return P, [(M + M.T) / 2 >> 0, P >> 1e-8 * np.eye(n)]


def solve_bound(b: float, omega_bar: float, S: float) -> dict:
    P, cons = bound_program(b, omega_bar, S)
    prob = cp.Problem(cp.Maximize(cp.log_det(P)), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    out = {"b": b, "omega_bar": omega_bar, "status": prob.status}
    if prob.status == "optimal":
        out["neg_logdet"] = float(-prob.value)
        out["P"] = P.value.tolist()
    return out


def feasibility(b: float, omega_bar: float, S: float) -> dict:
    """Largest ``t`` with ``P >= t I``, ``tr P <= 1`` and the bound LMI; feasible iff ``t > 0``."""
    P, cons = bound_program(b, omega_bar, S)
    t = cp.Variable()
    prob = cp.Problem(cp.Maximize(t), cons[:1] + [P >> t * np.eye(2), cp.trace(P) <= 1])
    prob.solve(solver="CVXOPT")
    margin = float(t.value)
    prob.solve(solver="CLARABEL")
    return {"margin": margin, "margin_clarabel": float(t.value),
            "status": "feasible" if margin > 1e-7 else "infeasible"}


def hinf_sweep(Lg, n_freq: int = 10_000) -> float:
    A = F - Lg @ C
    B = np.hstack([-Lg, np.eye(2)])
    D = np.hstack([np.eye(1), np.zeros((1, 2))])
    best = 0.0
    for th in np.linspace(0.0, np.pi, n_freq):
        G = C @ np.linalg.solve(np.exp(1j * th) * np.eye(2) - A, B) + D
        best = max(best, float(np.linalg.svd(G, compute_uv=False)[0]))
    return best


def noise_quantile_mc(p_values, n: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    lam = np.linalg.eigvalsh(R1)
    acc = []
    left = n
    while left:
        k = min(left, 2_000_000)
        z = rng.standard_normal((k, 2))
        acc.append((z * z) @ lam)
        left -= k
    q = np.concatenate(acc)
    return {f"{p:.2f}": float(np.quantile(q, p)) for p in p_values}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mc-samples", type=int, default=10_000_000)
    ap.add_argument("--out", default=str(ROOT / "tests" / "fixtures" / "oracles.json"))
    args = ap.parse_args()

    S = sigma_sqrt()
    alpha = float(stats.chi2.ppf(0.99, 1))
    v_bar = float(-0.9 * np.log(0.01))  # gamma(1, 0.9) quantile at 0.99
    omega = alpha + v_bar
    data = {
        "sigma_sqrt": S,
        "case1_A001_gamma": {"alpha": alpha, "v_bar": v_bar, "omega_bar": omega},
        "feasibility": {f"{b}": feasibility(b, omega, S) for b in (0.3, 0.5, 0.95, 0.999)},
        "bound_solves": [solve_bound(b, omega, S) for b in (0.5, 0.6, 0.7, 0.95)],
        "hinf_gain_sweep_original_L": hinf_sweep(L),
        "hinf_gain_sweep_paper_L": hinf_sweep(np.array([[0.1272], [-0.0160]])),
        "noise_quantile_mc": {"samples": args.mc_samples, "seed": 12345,
                              "quantiles": noise_quantile_mc((0.8, 0.9, 0.95, 0.99), args.mc_samples, 12345)},
        "chi2_half_df_cdf": float(stats.chi2.cdf(2 * 3.3174, 1)),
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(data, indent=2) + "\n")
    print(json.dumps({k: v for k, v in data.items() if k != "bound_solves"}, indent=2))
    for row in data["bound_solves"]:
        print(row["b"], row["status"], row.get("neg_logdet"))


if __name__ == "__main__":
    main()
