"""``hidden-reach`` command line: calibrate, bound, synthesize, simulate.

Exit codes: 0 success, 2 configuration error, 3 infeasible program,
4 numerical failure, 5 containment violation.  ``HIDDEN_REACH_LOG`` sets the
log level (DEBUG, INFO, WARNING, ...); logs go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .calibration import DetectorCalibration, chi2_threshold, noise_norm_quantile
from .errors import ConfigError, ContainmentViolation, HiddenReachError, InfeasibleError
from .model import steady_state
from .reach import EllipsoidBound, case1_budget, case2_budget, min_volume_bound, synthesize_observer
from .report import ReportBundle, Writer, boundary_csv, ellipse_figures, table_csv
from .sim import SimConfig, clipped_containment_test, run_hidden_attack, simulate_attack_free, trace_csv

log = logging.getLogger("hidden_reach")

SCATTER_POINTS = 2000


def _setup_logging() -> None:
    level = os.environ.get("HIDDEN_REACH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _label(budget) -> str:
    if budget.a_p is None:
        return f"A={budget.A:g}"
    return f"A={budget.A:g}, a_p={budget.a_p:g}"


def bound_summary(bound: EllipsoidBound, label: str) -> dict:
    bg = bound.budget
    return {
        "label": label,
        "case": bg.case.value,
        "A": bg.A,
        "p": bg.p,
        "a_p": bg.a_p,
        "alpha": bg.alpha,
        "eps_p": bg.eps_p,
        "zeta_cap": bg.zeta_cap,
        "v_bar": bg.v_bar,
        "omega_bar": bg.omega_bar,
        "quantile_method": bg.quantile_method,
        "b": bg.b,
        "P": bound.P_shape,
        "neg_logdet": bound.neg_logdet,
        "volume": bound.volume,
        "semi_axes": bound.semi_axes(),
        "certified": bound.certified,
        "min_eig": bound.min_eig,
    }


# --- commands ------------------------------------------------------------------------


def cmd_calibrate(cfg, args, out: Writer) -> ReportBundle:
    model = cfg.model()
    method = cfg.quantile_method
    rows = []
    for A in cfg.detector.A:
        alpha = chi2_threshold(model.m, A)
        nb = noise_norm_quantile(model.R1, 1.0 - A, method, n_samples=cfg.detector.mc_samples, seed=args.seed or 0)
        rows.append({"case": "CASE1", "A": A, "alpha": alpha, "p": 1.0 - A, "v_bar": nb.v_bar, "method": method.value})
    c2 = cfg.detector.case2
    if c2 is not None:
        for a_p in c2.a_p:
            bg = case2_budget(c2.A, a_p, model.m, model.R1, method, cfg.moments())
            rows.append({"case": "CASE2", "A": c2.A, "alpha": bg.alpha, "a_p": a_p, "p": bg.p, "eps_raw": bg.eps_raw,
                         "eps_p": bg.eps_p, "v_bar": bg.v_bar, "method": method.value})
    keys = ["case", "A", "alpha", "p", "v_bar", "a_p", "eps_raw", "eps_p", "method"]
    out.write("calibration.csv", table_csv(keys, [[r.get(k, "") for k in keys] for r in rows]))
    for r in rows:
        extra = f"  a_p={r['a_p']:<6g} eps={r['eps_raw']:.4f}" if r["case"] == "CASE2" else ""
        print(f"{r['case']}  A={r['A']:<6g} alpha={r['alpha']:.4f}  v_bar={r['v_bar']:.4f}{extra}")
    return ReportBundle("calibrate", cfg.name, calibration=rows)


def _all_bounds(cfg, model, obs, steady) -> list[tuple[str, EllipsoidBound]]:
    method, backend = cfg.quantile_method, cfg.backend
    kw = dict(b_grid=cfg.b_grid(), refine=cfg.solver.refine, backend=backend, workers=cfg.solver.workers,
              tol_cert=cfg.solver.tol_cert)
    budgets = [case1_budget(A, model.m, model.R1, method) for A in cfg.detector.A]
    c2 = cfg.detector.case2
    if c2 is not None:
        budgets += [case2_budget(c2.A, a_p, model.m, model.R1, method, cfg.moments()) for a_p in c2.a_p]
    return [(_label(bg), min_volume_bound(model, obs, steady, bg, **kw)) for bg in budgets]


def cmd_bound(cfg, args, out: Writer) -> ReportBundle:
    model = cfg.model()
    obs = cfg.observer_design()
    steady = steady_state(model, obs)
    bounds = _all_bounds(cfg, model, obs, steady)
    summaries = [bound_summary(bd, lab) for lab, bd in bounds]
    for case in ("CASE1", "CASE2"):
        shapes = [(lab, bd.P_shape) for lab, bd in bounds if bd.budget.case.value == case]
        if not shapes:
            continue
        tag = case.lower()
        out.write(f"bounds_{tag}.csv", boundary_csv(shapes))
        title = "Hidden reachable set bounds, " + ("false alarm rates" if case == "CASE1" else "excess probabilities")
        for key, fig in ellipse_figures(shapes, title).items():
            out.write(f"bounds_{tag}{key}.svg", fig.svg())
    keys = ["label", "case", "b", "omega_bar", "neg_logdet", "volume", "certified", "min_eig"]
    out.write("bounds_summary.csv", table_csv(keys, [[s[k] for k in keys] for s in summaries]))
    for s in summaries:
        print(f"{s['case']}  {s['label']:<18} b={s['b']:.4f}  omega_bar={s['omega_bar']:.4f}  "
              f"-logdet={s['neg_logdet']:.4f}  certified={s['certified']}")
    return ReportBundle("bound", cfg.name, bounds=summaries)


def cmd_synthesize(cfg, args, out: Writer) -> ReportBundle:
    sb = cfg.observer.synthesize
    if sb is None:
        raise ConfigError("observer.synthesize block with gamma is required", path="observer.synthesize")
    model = cfg.model()
    obs = cfg.observer_design()
    steady = steady_state(model, obs)
    A = sb.A if sb.A is not None else cfg.sim_rate()
    method = cfg.quantile_method
    budget = case1_budget(A, model.m, model.R1, method)
    before = min_volume_bound(model, obs, steady, budget, cfg.b_grid(), refine=cfg.solver.refine,
                              backend=cfg.backend, workers=cfg.solver.workers, tol_cert=cfg.solver.tol_cert)
    res = synthesize_observer(model, steady, A, sb.gamma, sb.b_grid, budget=budget, method=sb.method,
                              kappa_grid=sb.kappa_grid, sigma_iterations=sb.sigma_iterations, backend=cfg.backend,
                              tol_cert=cfg.solver.tol_cert)
    after = res.bound
    ratio = after.volume / before.volume
    synth = {
        "gamma": sb.gamma,
        "A": A,
        "method": res.method,
        "L_original": obs.L,
        "L_new": res.L_new,
        "L_one_shot": res.one_shot.L,
        "program_neg_logdet": res.neg_logdet,
        "program_neg_logdet_one_shot": res.one_shot.neg_logdet,
        "b": res.b,
        "kappa": res.kappa,
        "P_certificate": res.P_shape,
        "sigma_iterations": len(res.iterations),
        "sigma_converged": res.converged,
        "Sigma_new": res.steady.Sigma,
        "hinf_gain_estimate": res.gain_estimate,
        "bound_original": bound_summary(before, "original L"),
        "bound_new": bound_summary(after, "redesigned L"),
        "volume_ratio": ratio,
    }
    shapes = [("original L", before.P_shape), ("redesigned L", after.P_shape)]
    out.write("synthesis_bounds.csv", boundary_csv(shapes))
    for key, fig in ellipse_figures(shapes, f"Observer redesign, A={A:g}, gamma={sb.gamma:g}").items():
        out.write(f"synthesis{key}.svg", fig.svg())
    print(f"L_new = {np.array2string(res.L_new.ravel(), precision=4)}  (one-shot "
          f"{np.array2string(res.one_shot.L.ravel(), precision=4)})")
    print(f"-logdet original = {before.neg_logdet:.4f}, redesigned = {after.neg_logdet:.4f}, "
          f"volume ratio = {ratio:.4f}, H-inf gain = {res.gain_estimate:.4f} (gamma {sb.gamma:g})")
    return ReportBundle("synthesize", cfg.name, bounds=[synth["bound_original"], synth["bound_new"]], synthesis=synth)


def _rate_row(label: str, r) -> dict:
    return {"run": label, "rate": r.rate, "ci_low": r.low, "ci_high": r.high, "alarms": r.alarms, "steps": r.steps,
            "level": r.level}


def cmd_simulate(cfg, args, out: Writer) -> ReportBundle:
    model = cfg.model()
    obs = cfg.observer_design()
    steady = steady_state(model, obs)
    A = cfg.sim_rate()
    seed = args.seed if args.seed is not None else cfg.sim.seed
    if seed is None:
        log.warning("no seed given; using seed 0")
        seed = 0
    sim_cfg = cfg.sim_config(seed)
    calib = DetectorCalibration.from_rate(A, model.m)
    budget = case1_budget(A, model.m, model.R1, cfg.quantile_method)
    bound = min_volume_bound(model, obs, steady, budget, cfg.b_grid(), refine=cfg.solver.refine,
                             backend=cfg.backend, workers=cfg.solver.workers, tol_cert=cfg.solver.tol_cert)
    free = simulate_attack_free(model, obs, steady, calib, sim_cfg, bound)
    att = run_hidden_attack(model, obs, steady, calib, bound, sim_cfg)
    rates = [_rate_row("attack-free", free.alarm_rate), _rate_row(sim_cfg.attack.value, att.alarm_rate)]
    keys = ["run", "rate", "ci_low", "ci_high", "alarms", "steps", "level"]
    out.write("alarm_rates.csv", table_csv(keys, [[r[k] for k in keys] for r in rates]))
    out.write("trace_attack_free.csv", trace_csv(free.trace))
    out.write("trace_attacked.csv", trace_csv(att.trace))
    E = att.trace.e[:, 1:].reshape(-1, model.n)
    stride = max(1, E.shape[0] // SCATTER_POINTS)
    for key, fig in ellipse_figures([(_label(budget), bound.P_shape)], f"{sim_cfg.attack.value} errors, A={A:g}",
                                    scatter=E[::stride]).items():
        out.write(f"simulation{key}.svg", fig.svg())
    sim = {
        "A": A,
        "seed": seed,
        "strategy": sim_cfg.attack.value,
        "clip_mode": sim_cfg.clip_mode.value,
        "horizon": sim_cfg.horizon,
        "trials": sim_cfg.trials,
        "warmup": sim_cfg.warmup,
        "alarm_rates": rates,
        "ks": {"statistic": att.extra["ks_statistic"], "pvalue": att.extra["ks_pvalue"]},
        "mean_error_norm_attack_free": float(np.linalg.norm(free.trace.e[:, 1:], axis=2).mean()),
        "mean_error_norm_attacked": att.extra["mean_error_norm"],
        "max_V_attack_free": free.max_V,
        "max_V_attacked": att.max_V,
        "bound": bound_summary(bound, _label(budget)),
    }
    for r in rates:
        print(f"{r['run']:<14} rate={r['rate']:.5f}  99% CI=[{r['ci_low']:.5f}, {r['ci_high']:.5f}]")
    violation = None
    cb = cfg.sim.containment
    if cb is not None:
        rep = clipped_containment_test(bound, model, obs, steady, SimConfig(cb.horizon, cb.trials, seed),
                                       n_candidates=cb.candidates)
        sim["containment"] = rep.summary()
        print(f"containment: {sim['containment']['verdict']}  max V = {rep.max_V:.6f}")
        if not rep.passed:
            sim["containment"]["offending"] = rep.offending
            violation = ContainmentViolation(f"containment violated: max V = {rep.max_V:.6g}", report=rep)
    bundle = ReportBundle("simulate", cfg.name, bounds=[sim["bound"]], simulation=sim)
    if violation is not None:
        bundle.files = list(out.files)
        out.write("report.json", bundle.dumps())
        raise violation
    return bundle


COMMANDS = {"calibrate": cmd_calibrate, "bound": cmd_bound, "synthesize": cmd_synthesize, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hidden-reach", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="scenario JSON (schema hidden-reach/1)")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="simulation seed (overrides sim.seed)")
    p.add_argument("--backend", choices=["a", "b"], help="maxdet backend: a = conic (default), b = bisection")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config)
        if args.backend is not None:
            cfg.solver.backend = args.backend
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be nonnegative", path="--seed")
        out = Writer(args.out or cfg.output.directory, cfg.output.formats)
        bundle = COMMANDS[args.command](cfg, args, out)
        bundle.files = list(out.files)
        out.write("report.json", bundle.dumps())
        return 0
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        for row in exc.report[:20]:
            print(f"  {row}", file=sys.stderr)
        return exc.exit_code
    except HiddenReachError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def main(argv=None) -> None:
    _setup_logging()
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
