"""Recompute every number of the two-state example and compare with the published values.

    python3 scripts/reproduce_sec4.py [--backend conic|bisection] [--quick]

Prints one table per stage (calibration, steady state, bounds, synthesis,
simulation).  ``--quick`` shortens the Monte Carlo runs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hidden_reach import (
    DetectorCalibration,
    ObserverDesign,
    SimConfig,
    SystemModel,
    case1_budget,
    case2_budget,
    chi2_threshold,
    clipped_containment_test,
    hinf_gain_estimate,
    markov_epsilon,
    min_volume_bound,
    noise_norm_quantile,
    run_hidden_attack,
    simulate_attack_free,
    steady_state,
    synthesize_observer,
)
from hidden_reach.calibration import AttackMoments, QuantileMethod

F = np.array([[0.84, 0.23], [-0.47, 0.12]])
C = np.array([[1.0, 0.0]])
L = np.array([[1.16], [-0.69]])
R1 = np.array([[0.45, -0.11], [-0.11, 0.45]])
R2 = np.array([[1.0]])

PUBLISHED = {
    "alpha": [6.63, 3.84, 2.70, 1.64],
    "v_bar": [4.14, 2.69, 2.07, 1.44],
    "Sigma": 3.26,
    "eps": [21.16, 46.16],
    "v_bar_case2": [2.8970, 3.5208],
    "gamma": 1.86,
    "L_new": [0.1272, -0.0160],
}
RATES = [0.01, 0.05, 0.10, 0.20]


def row(name, got, want, tol):
    ok = abs(got - want) <= tol
    print(f"  {name:<28} {got:>12.5f}   published {want:>9.4f}   {'ok' if ok else 'DIFFERS'}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--backend", default="conic", choices=["conic", "bisection"])
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    t0 = time.time()
    model = SystemModel(F, C, R1, R2)
    obs = ObserverDesign(L)
    gam = QuantileMethod.GAMMA

    print("calibration")
    for A, a_pub, v_pub in zip(RATES, PUBLISHED["alpha"], PUBLISHED["v_bar"]):
        row(f"alpha(A={A})", chi2_threshold(1, A), a_pub, 0.01)
        row(f"v_bar gamma(p={1 - A:.2f})", noise_norm_quantile(R1, 1 - A, gam).v_bar, v_pub, 0.01)
        print(f"  {'v_bar exact':<28} {noise_norm_quantile(R1, 1 - A).v_bar:>12.5f}")
    alpha05 = chi2_threshold(1, 0.05)
    for a_p, e_pub, v_pub in zip((0.01, 0.03), PUBLISHED["eps"], PUBLISHED["v_bar_case2"]):
        row(f"eps(a_p={a_p})", markov_epsilon(AttackMoments.attack_free(1), 0.05, a_p, alpha05), e_pub, 0.01)
        p = 1 - 0.05 + a_p
        row(f"v_bar gamma(p={p:.2f})", noise_norm_quantile(R1, p, gam).v_bar, v_pub, 0.01)
        print(f"  {'v_bar exact':<28} {noise_norm_quantile(R1, p).v_bar:>12.5f}")

    print("steady state")
    steady = steady_state(model, obs)
    row("Sigma", float(steady.Sigma[0, 0]), PUBLISHED["Sigma"], 0.01)
    row("H-inf gain of L", hinf_gain_estimate(F, C, L), PUBLISHED["gamma"], 1e-3)

    print("bounds (-log det P, b)")
    for A in RATES:
        bd = min_volume_bound(model, obs, steady, case1_budget(A, 1, R1, gam), backend=args.backend)
        print(f"  CASE1 A={A:<5} {bd.neg_logdet:10.4f}  b={bd.b:.4f}  certified={bd.certified}")
    for a_p in (0.01, 0.03):
        bd = min_volume_bound(model, obs, steady, case2_budget(0.05, a_p, 1, R1, gam), backend=args.backend)
        print(f"  CASE2 a_p={a_p:<4} {bd.neg_logdet:10.4f}  b={bd.b:.4f}  certified={bd.certified}")

    print("synthesis (A=0.01, gamma=1.86)")
    before = min_volume_bound(model, obs, steady, case1_budget(0.01, 1, R1, gam), backend=args.backend)
    res = synthesize_observer(model, steady, 0.01, 1.86, quantile_method=gam, backend=args.backend)
    for i, want in enumerate(PUBLISHED["L_new"]):
        row(f"L_new[{i}]", float(res.L_new[i, 0]), want, 0.1 * abs(want))
    print(f"  one-shot L  {res.one_shot.L.ravel()}   iterations {len(res.iterations)}")
    print(f"  -log det before {before.neg_logdet:.4f}  after {res.bound.neg_logdet:.4f}  "
          f"gain {res.gain_estimate:.4f}  published L gain {hinf_gain_estimate(F, C, np.array([[0.1272], [-0.0160]])):.4f}")

    print("simulation (A=0.05)")
    K, N = (2000, 50) if args.quick else (10_000, 100)
    calib = DetectorCalibration.from_rate(0.05, 1)
    bd = min_volume_bound(model, obs, steady, case1_budget(0.05, 1, R1, gam), backend=args.backend)
    free = simulate_attack_free(model, obs, steady, calib, SimConfig(K, N, seed=1), bd)
    att = run_hidden_attack(model, obs, steady, calib, bd, SimConfig(K, N, seed=1, attack="GREEDY_HIDDEN"))
    for name, r in (("attack-free", free.alarm_rate), ("greedy hidden", att.alarm_rate)):
        print(f"  {name:<14} rate {r.rate:.5f}  99% CI [{r.low:.5f}, {r.high:.5f}]")
    print(f"  KS p-value {att.extra['ks_pvalue']:.3f}   mean |e| attacked/free "
          f"{att.extra['mean_error_norm'] / np.linalg.norm(free.trace.e[:, 1:], axis=2).mean():.2f}")
    rep = clipped_containment_test(bd, model, obs, steady, SimConfig(300 if args.quick else 1000, 100, seed=2))
    print(f"  containment max V {rep.max_V:.6f}  passed={rep.passed}")
    print(f"done in {time.time() - t0:.1f} s")


if __name__ == "__main__":
    main()
