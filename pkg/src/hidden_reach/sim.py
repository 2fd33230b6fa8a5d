"""Monte Carlo simulation of the estimation-error loop under sensor attacks.

The simulator propagates the estimation error directly,

    e+ = (F - L C) e - L eta - L delta + v,
    r  = C e + eta + delta,     z = r^T Sigma^-1 r,

which is all the detector sees; plant state and control input cancel.  An
attack is described through the normalized residual ``zeta = S^-1 r`` with
``S = Sigma^(1/2)``; the injection is recovered as ``delta = S zeta - C e - eta``.

Randomness: every trial owns one Philox generator per stream, keyed by
``(seed, trial)`` with the stream id in the high counter word, so the draws of
a trial do not depend on how many other trials run or in which order.
Within a stream the draws are consumed step by step.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special, stats

from .calibration import DetectorCalibration
from .errors import ConfigError, ContainmentViolation, ValidationError
from .model import ObserverDesign, SteadyState, SystemModel, sqrt_sym
from .reach import EllipsoidBound

log = logging.getLogger(__name__)

STREAM_V, STREAM_ETA, STREAM_ATTACK, STREAM_AUX = 0, 1, 2, 3
CI_LEVEL = 0.99
CONTAINMENT_TOL = 1e-6


class Strategy(str, Enum):
    NONE = "NONE"
    GREEDY_HIDDEN = "GREEDY_HIDDEN"
    ZERO_ALARM = "ZERO_ALARM"
    CUSTOM = "CUSTOM"


class ClipMode(str, Enum):
    NONE = "none"
    BUDGET = "budget-clip"


# A custom policy maps (k, e, eta, rng) to zeta with shapes (N, n), (N, m) -> (N, m).
Policy = Callable[[int, np.ndarray, np.ndarray, list], np.ndarray]


@dataclass
class SimConfig:
    horizon: int = 1000
    trials: int = 1
    seed: int = 0
    clip_mode: ClipMode = ClipMode.NONE
    attack: Strategy = Strategy.NONE
    warmup: int = 100
    policy: Policy | None = None

    def __post_init__(self):
        self.clip_mode = ClipMode(self.clip_mode)
        self.attack = Strategy(self.attack)
        if self.horizon < 1 or self.trials < 1:
            raise ConfigError("horizon and trials must be at least 1", path="sim")
        if self.warmup < 0:
            raise ConfigError("warmup must be nonnegative", path="sim.warmup")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative", path="sim.seed")
        if self.attack is Strategy.CUSTOM and self.policy is None:
            raise ConfigError("CUSTOM strategy needs a policy callable", path="sim.strategy")


@dataclass
class AttackTrace:
    """Per-trial, per-step record.  Arrays are indexed ``[trial, k, ...]``.

    ``e`` holds ``K + 1`` states (``e[:, 0] = 0``); the other arrays hold ``K``
    steps.  ``V`` is ``e_k^T P e_k`` for ``k = 0..K`` when a shape matrix is
    attached, else NaN.
    """

    e: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    alarm: np.ndarray
    V: np.ndarray
    alpha: float
    strategy: Strategy
    seed: int

    @property
    def trials(self) -> int:
        return self.e.shape[0]

    @property
    def horizon(self) -> int:
        return self.z.shape[1]

    def residuals(self, C) -> np.ndarray:
        return np.einsum("ij,tkj->tki", C, self.e[:, :-1]) + self.eta + self.delta


@dataclass(frozen=True)
class AlarmRate:
    rate: float
    low: float
    high: float
    alarms: int
    steps: int
    level: float = CI_LEVEL

    def contains(self, A: float) -> bool:
        return self.low <= A <= self.high


@dataclass
class SimResult:
    trace: AttackTrace
    alarm_rate: AlarmRate
    max_V: float = float("nan")
    extra: dict = field(default_factory=dict)


# --- random streams ------------------------------------------------------------------


def stream(seed: int, trial: int, stream_id: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=np.array([seed, trial], dtype=np.uint64), counter=[0, 0, 0, stream_id])
    return np.random.Generator(bitgen)


def _normals(seed: int, trials: int, stream_id: int, shape: tuple) -> np.ndarray:
    return np.stack([stream(seed, t, stream_id).standard_normal(shape) for t in range(trials)])


def _uniforms(seed: int, trials: int, stream_id: int, shape: tuple) -> np.ndarray:
    return np.stack([stream(seed, t, stream_id).random(shape) for t in range(trials)])


# --- trust-region step ---------------------------------------------------------------


def sphere_quadratic_max(H, g, s):
    """Maximize ``x^T H x - 2 g^T x`` over ``||x|| = s`` (batched, exact).

    ``H`` is ``(d, d)`` or ``(N, d, d)`` symmetric, ``g`` is ``(N, d)``, ``s`` is
    ``(N,)``.  The optimal multiplier ``lam >= lambda_max(H)`` is the rightmost
    eigenvalue of ``[[H, g g^T / s^2], [I, H]]``, and the maximizer is read off
    its eigenvector.  When ``g`` is orthogonal to the top eigenspace (the hard
    case) the two stationary points ``x0 +/- tau q`` are both evaluated.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    N, d = g.shape
    H = np.broadcast_to(np.asarray(H, dtype=float), (N, d, d))
    s = np.broadcast_to(np.asarray(s, dtype=float), (N,))
    x = np.zeros((N, d))
    live = s > 0
    if not np.any(live):
        return x
    Hl, gl, sl = H[live], g[live], s[live]
    M = np.zeros((Hl.shape[0], 2 * d, 2 * d))
    M[:, :d, :d] = Hl
    M[:, :d, d:] = np.einsum("ni,nj->nij", gl, gl) / (sl**2)[:, None, None]
    M[:, d:, :d] = np.eye(d)
    M[:, d:, d:] = Hl
    lam, W = np.linalg.eig(M)
    top = np.argmax(lam.real, axis=1)
    w = np.take_along_axis(W, top[:, None, None], axis=2)[:, :, 0]
    w1, w2 = w[:, :d], w[:, d:]
    c = np.einsum("ni,ni->n", gl, w2) / sl**2
    scale = np.linalg.norm(gl, axis=1) * np.linalg.norm(w2, axis=1) / sl**2
    easy = np.abs(c) > 1e-9 * np.maximum(scale, 1e-300)
    xl = np.zeros_like(gl)
    xl[easy] = (-w1[easy] / c[easy, None]).real
    for i in np.flatnonzero(~easy):
        xl[i] = _hard_case(Hl[i], gl[i], sl[i])
    norms = np.linalg.norm(xl, axis=1)
    xl *= (sl / np.where(norms > 0, norms, 1.0))[:, None]
    x[live] = xl
    return x


def _hard_case(H, g, s):
    d, Q = np.linalg.eigh(H)
    lam = d[-1]
    A = H - lam * np.eye(H.shape[0])
    x0 = np.linalg.lstsq(A, g, rcond=1e-12)[0]
    rest = s**2 - x0 @ x0
    if rest < 0:
        return x0 * (s / np.linalg.norm(x0))
    q = Q[:, -1]
    cands = [x0 + math.sqrt(rest) * q, x0 - math.sqrt(rest) * q]
    vals = [c @ H @ c - 2 * g @ c for c in cands]
    return cands[int(np.argmax(vals))]


def greedy_hidden_step(e, P_shape, F, L, Sigma_sqrt, magnitude):
    """Normalized residual of norm ``magnitude`` that maximizes the next ``V``.

    Accepts a single error vector or a batch ``(N, n)`` with ``(N,)`` magnitudes.
    """
    e = np.asarray(e, dtype=float)
    single = e.ndim == 1
    E = np.atleast_2d(e)
    B = np.asarray(L, dtype=float) @ np.asarray(Sigma_sqrt, dtype=float)
    P = np.asarray(P_shape, dtype=float)
    a = E @ np.asarray(F, dtype=float).T
    H = B.T @ P @ B
    g = a @ P @ B
    s = np.broadcast_to(np.asarray(magnitude, dtype=float), (E.shape[0],))
    if np.any(s < 0):
        raise ValidationError("attack magnitude must be nonnegative")
    zeta = sphere_quadratic_max(H, g, s)
    return zeta[0] if single else zeta


# --- engine --------------------------------------------------------------------------


def _clip_rows(X, cap):
    norms2 = np.einsum("ni,ni->n", X, X)
    over = norms2 > cap
    if np.any(over):
        X = X.copy()
        X[over] *= np.sqrt(cap / norms2[over])[:, None]
    return X


def _simulate(model, observer, steady, alpha, config: SimConfig, bound: EllipsoidBound | None):
    F, C, L = model.F, model.C, observer.L
    n, m = model.n, model.m
    N, K = config.trials, config.horizon
    S, Sinv, Sigma_inv = steady.Sigma_sqrt, steady.Sigma_inv_sqrt, steady.Sigma_inv
    Acl = F - L @ C
    R1h, R2h = sqrt_sym(model.R1), sqrt_sym(model.R2)
    P = None if bound is None else bound.P_shape
    strat = config.attack
    if strat is Strategy.GREEDY_HIDDEN and P is None:
        raise ConfigError("GREEDY_HIDDEN needs an ellipsoid bound for its shape matrix", path="sim.strategy")
    if config.clip_mode is ClipMode.BUDGET and bound is None:
        raise ConfigError("budget-clip needs an attached bound", path="sim.clip_mode")

    v_all = _normals(config.seed, N, STREAM_V, (K, n)) @ R1h.T
    eta_all = _normals(config.seed, N, STREAM_ETA, (K, m)) @ R2h.T
    rngs = None
    if strat is Strategy.GREEDY_HIDDEN:
        s2_all = np.sum(_normals(config.seed, N, STREAM_ATTACK, (K, m)) ** 2, axis=2)
    elif strat is Strategy.ZERO_ALARM:
        # chi-squared(m) conditioned on not exceeding alpha, by inverse CDF
        u = _uniforms(config.seed, N, STREAM_ATTACK, (K,))
        s2_all = np.minimum(2.0 * special.gammaincinv(m / 2.0, u * special.gammainc(m / 2.0, alpha / 2.0)), alpha)
    elif strat is Strategy.CUSTOM:
        rngs = [stream(config.seed, t, STREAM_ATTACK) for t in range(N)]
    clip = config.clip_mode is ClipMode.BUDGET
    if clip:
        v_all = np.stack([_clip_rows(v_all[:, k], bound.budget.v_bar) for k in range(K)], axis=1)

    e = np.zeros((N, K + 1, n))
    delta = np.zeros((N, K, m))
    for k in range(K):
        ek, eta = e[:, k], eta_all[:, k]
        if strat is Strategy.NONE:
            dk = np.zeros((N, m))
        else:
            if strat is Strategy.CUSTOM:
                zk = np.asarray(config.policy(k, ek, eta, rngs), dtype=float).reshape(N, m)
            else:
                zk = greedy_hidden_step(ek, P, F, L, S, np.sqrt(s2_all[:, k]))
            if clip:
                zk = _clip_rows(zk, bound.budget.zeta_cap)
            dk = zk @ S.T - ek @ C.T - eta
        delta[:, k] = dk
        e[:, k + 1] = ek @ Acl.T - (eta + dk) @ L.T + v_all[:, k]
    r = np.einsum("ij,tkj->tki", C, e[:, :-1]) + eta_all + delta
    zeta = r @ Sinv.T
    z = np.einsum("tki,ij,tkj->tk", r, Sigma_inv, r)
    V = np.full((N, K + 1), np.nan) if P is None else np.einsum("tki,ij,tkj->tk", e, P, e)
    return AttackTrace(e, zeta, delta, v_all, eta_all, z, z > alpha, V, alpha, strat, config.seed)


def wilson_interval(successes: int, total: int, level: float = CI_LEVEL) -> tuple[float, float]:
    if total <= 0:
        raise ValidationError("Wilson interval needs at least one trial")
    zq = stats.norm.ppf(0.5 + level / 2.0)
    p = successes / total
    den = 1.0 + zq**2 / total
    mid = (p + zq**2 / (2 * total)) / den
    half = zq * math.sqrt(p * (1 - p) / total + zq**2 / (4 * total**2)) / den
    return float(max(0.0, mid - half)), float(min(1.0, mid + half))


def empirical_alarm_rate(trace, warmup: int = 100, level: float = CI_LEVEL) -> AlarmRate:
    """Fraction of post-warmup steps with an alarm, with a Wilson interval.

    ``trace`` is an :class:`AttackTrace` or a boolean array ``(trials, K)`` / ``(K,)``.
    """
    alarms = np.atleast_2d(trace.alarm if isinstance(trace, AttackTrace) else np.asarray(trace, dtype=bool))
    window = alarms[:, warmup:]
    if window.size == 0:
        raise ValidationError(f"no steps left after a warmup of {warmup}")
    count, total = int(window.sum()), int(window.size)
    lo, hi = wilson_interval(count, total, level)
    return AlarmRate(count / total, lo, hi, count, total, level)


def simulate_attack_free(model: SystemModel, observer: ObserverDesign, steady: SteadyState,
                         calib: DetectorCalibration, config: SimConfig, bound: EllipsoidBound | None = None) -> SimResult:
    cfg = SimConfig(config.horizon, config.trials, config.seed, ClipMode.NONE, Strategy.NONE, config.warmup)
    trace = _simulate(model, observer, steady, calib.alpha, cfg, bound)
    return SimResult(trace, empirical_alarm_rate(trace, cfg.warmup), float(np.nanmax(trace.V)) if bound else float("nan"))


def run_hidden_attack(model: SystemModel, observer: ObserverDesign, steady: SteadyState,
                      calib: DetectorCalibration, bound: EllipsoidBound | None, config: SimConfig) -> SimResult:
    """Attack from ``e = 0`` with the configured strategy and report the alarm rate.

    Under GREEDY_HIDDEN the squared magnitude is drawn from chi-squared(m), so
    ``z_k`` keeps its attack-free law whatever direction the attacker picks.
    """
    trace = _simulate(model, observer, steady, calib.alpha, config, bound)
    rate = empirical_alarm_rate(trace, config.warmup)
    ks = stats.kstest(trace.z[:, config.warmup:].ravel(), "chi2", args=(model.m,))
    extra = {"ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
             "mean_error_norm": float(np.linalg.norm(trace.e[:, 1:], axis=2).mean())}
    max_V = float(np.nanmax(trace.V)) if bound is not None else float("nan")
    return SimResult(trace, rate, max_V, extra)


# --- containment ---------------------------------------------------------------------


@dataclass
class ContainmentReport:
    passed: bool
    max_V: float
    worst_trial: int
    worst_step: int
    trials: int
    horizon: int
    tol: float
    per_trial_max: np.ndarray
    offending: dict | None = None

    def summary(self) -> dict:
        return {"verdict": "CONTAINED" if self.passed else "VIOLATED", "max_V": self.max_V,
                "worst_trial": self.worst_trial, "worst_step": self.worst_step,
                "trials": self.trials, "horizon": self.horizon, "tol": self.tol}


def clipped_containment_test(bound: EllipsoidBound, model: SystemModel, observer: ObserverDesign,
                             steady: SteadyState, config: SimConfig, *, P_test=None, n_candidates: int = 8,
                             exact_v: bool = True, tol: float = CONTAINMENT_TOL, raise_on_fail: bool = False):
    """Drive the error with budget-capped adversarial disturbances and track ``V``.

    Each step the attack takes the greedy direction at the full cap
    ``||zeta||^2 = zeta_cap``; the process noise is the worst (largest next
    ``V``) among ``n_candidates`` Gaussian draws pushed onto the sphere
    ``||v||^2 = v_bar``, plus the exact worst point of that sphere when
    ``exact_v``.  ``P_test`` replaces the tested shape (for falsification runs).
    """
    P = bound.P_shape if P_test is None else np.asarray(P_test, dtype=float)
    F, L, S = model.F, observer.L, bound.Sigma_sqrt
    zc, vb = bound.budget.zeta_cap, bound.budget.v_bar
    N, K, n = config.trials, config.horizon, model.n
    R1h = sqrt_sym(model.R1)
    B = L @ S
    Hz = B.T @ P @ B
    cand_all = _normals(config.seed, N, STREAM_V, (K, n_candidates, n)) @ R1h.T
    e = np.zeros((N, n))
    vmax = np.zeros(N)
    vstep = np.zeros(N, dtype=int)
    rec = {"e": [e.copy()], "zeta": [], "v": []}
    for k in range(K):
        a = e @ F.T
        zk = sphere_quadratic_max(Hz, a @ P @ B, np.full(N, math.sqrt(zc)))
        a = a - zk @ B.T
        cands = cand_all[:, k].reshape(-1, n)
        norms = np.linalg.norm(cands, axis=1)
        cands = (cands * (math.sqrt(vb) / np.where(norms > 0, norms, 1.0))[:, None]).reshape(N, n_candidates, n)
        if exact_v:
            vx = sphere_quadratic_max(P, -(a @ P), np.full(N, math.sqrt(vb)))
            cands = np.concatenate([cands, vx[:, None]], axis=1)
        nxt = a[:, None, :] + cands
        vals = np.einsum("tci,ij,tcj->tc", nxt, P, nxt)
        pick = np.argmax(vals, axis=1)
        vk = cands[np.arange(N), pick]
        e = a + vk
        Vk = vals[np.arange(N), pick]
        better = Vk > vmax
        vmax[better], vstep[better] = Vk[better], k + 1
        rec["e"].append(e.copy())
        rec["zeta"].append(zk)
        rec["v"].append(vk)
    worst = int(np.argmax(vmax))
    passed = bool(vmax.max() <= 1.0 + tol)
    offending = None
    if not passed:
        offending = {key: np.stack([x[worst] for x in vals_], axis=0).tolist() for key, vals_ in rec.items()}
    report = ContainmentReport(passed, float(vmax.max()), worst, int(vstep[worst]), N, K, tol, vmax, offending)
    if raise_on_fail and not passed:
        raise ContainmentViolation(
            f"trajectory {worst} left the ellipsoid at step {report.worst_step} (V = {report.max_V:.6g})", report=report
        )
    return report


# --- serialization -------------------------------------------------------------------


def trace_csv(trace: AttackTrace) -> str:
    """CSV with one row per (trial, step): ``k, trial, e_1..e_n, z, alarm, V``."""
    n = trace.e.shape[2]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "trial"] + [f"e_{i + 1}" for i in range(n)] + ["z", "alarm", "V"])
    for t in range(trace.trials):
        for k in range(trace.horizon):
            w.writerow([k + 1, t] + [repr(float(x)) for x in trace.e[t, k]]
                       + [repr(float(trace.z[t, k])), int(trace.alarm[t, k]), repr(float(trace.V[t, k]))])
    return buf.getvalue()


def write_trace_csv(trace: AttackTrace, path) -> Path:
    path = Path(path)
    path.write_text(trace_csv(trace))
    return path
