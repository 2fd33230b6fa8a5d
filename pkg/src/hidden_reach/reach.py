"""Ellipsoidal outer bounds on hidden reachable sets and observer redesign.

Conventions: ``e+ = F e - L S zeta + v`` with ``S = Sigma^(1/2)``, disturbance
budget ``||zeta||^2 + ||v||^2 <= omega_bar``, certificate ``V = e^T P e`` with
``V+ - b V - ((1 - b)/omega_bar) (||zeta||^2 + ||v||^2) <= 0``.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import optimize

from .calibration import (
    AttackMoments,
    QuantileMethod,
    chi2_threshold,
    clamp_epsilon,
    markov_epsilon,
    noise_norm_quantile,
)
from .errors import DimensionError, InfeasibleError, InstabilityError, NumericalError, ValidationError
from .model import ObserverDesign, SteadyState, SystemModel, spectral_radius, sqrt_sym, steady_state, symmetrize
from .sdp import MaxDetProblem, Var, assemble, solve_feasibility, solve_maxdet

log = logging.getLogger(__name__)

CERT_TOL = 1e-7
PENALTY = 1e6  # stands in for an infeasible point inside scalar searches


class Case(str, Enum):
    CASE1 = "CASE1"
    CASE2 = "CASE2"


@dataclass(frozen=True)
class HiddenBudget:
    """Disturbance caps certified by one ellipsoid.

    ``zeta_cap = alpha`` for CASE1 and ``alpha + eps_p`` for CASE2;
    ``omega_bar = zeta_cap + v_bar``.  ``b`` is filled in once a bound is solved.
    """

    case: Case
    p: float
    A: float
    alpha: float
    zeta_cap: float
    v_bar: float
    a_p: float | None = None
    eps_p: float | None = None
    eps_raw: float | None = None
    quantile_method: str = QuantileMethod.EXACT.value
    b: float | None = None

    @property
    def omega_bar(self) -> float:
        return self.zeta_cap + self.v_bar

    def __post_init__(self):
        if self.omega_bar <= 0:
            raise ValidationError(f"omega_bar must be positive, got {self.omega_bar}")
        if self.b is not None and not 0.0 < self.b < 1.0:
            raise ValidationError(f"b must lie in (0, 1), got {self.b}")
        if self.case is Case.CASE1 and abs(self.p - (1.0 - self.A)) > 1e-12:
            raise ValidationError("CASE1 budgets need p = 1 - A")
        if self.case is Case.CASE2 and not (self.a_p is not None and 0.0 < self.a_p < self.A):
            raise ValidationError(f"CASE2 budgets need 0 < a_p < A, got a_p={self.a_p}")


def case1_budget(A: float, m: int, R1, method=QuantileMethod.EXACT) -> HiddenBudget:
    alpha = chi2_threshold(m, A)
    nb = noise_norm_quantile(R1, 1.0 - A, method)
    return HiddenBudget(Case.CASE1, 1.0 - A, A, alpha, alpha, nb.v_bar, quantile_method=nb.method.value)


def case2_budget(A: float, a_p: float, m: int, R1, method=QuantileMethod.EXACT, moments=None) -> HiddenBudget:
    """Budget at ``p = 1 - A + a_p`` with the Markov excess; defaults to attack-free moments."""
    alpha = chi2_threshold(m, A)
    moments = AttackMoments.attack_free(m) if moments is None else moments
    raw = markov_epsilon(moments, A, a_p, alpha)
    eps = clamp_epsilon(raw)
    p = 1.0 - A + a_p
    nb = noise_norm_quantile(R1, p, method)
    return HiddenBudget(
        Case.CASE2, p, A, alpha, alpha + eps, nb.v_bar, a_p=a_p, eps_p=eps, eps_raw=raw, quantile_method=nb.method.value
    )


# --- LMI builders -----------------------------------------------------------------


def _check_b(b: float) -> None:
    if not 0.0 < b < 1.0:
        raise ValidationError(f"contraction rate b must lie in (0, 1), got {b}")


def build_bound_lmi(F, L, Sigma_sqrt, b: float, omega_bar: float, P: Var | None = None, margin: float = 0.0):
    """Six-block LMI certifying ``{e : e^T P e <= 1}`` for fixed ``(F, L, b)``.

    Block order: ``e``, successor, ``v``, ``zeta``, and two decoupled identity
    blocks.  Returns ``(lmi, P)``.
    """
    _check_b(b)
    if omega_bar <= 0:
        raise ValidationError(f"omega_bar must be positive, got {omega_bar}")
    F, L, S = (np.array(a, dtype=float, ndmin=2) for a in (F, L, Sigma_sqrt))
    n, m = L.shape
    if F.shape != (n, n) or S.shape != (m, m):
        raise DimensionError("F, L, Sigma_sqrt dimensions disagree")
    P = Var("P", (n, n), "symmetric") if P is None else P
    PF = P @ F
    coupling = -(P @ (L @ S))
    c = (1.0 - b) / omega_bar
    grid = [
        [b * P, PF.T, None, None, None, None],
        [PF, P, P, coupling, None, None],
        [None, P, c * np.eye(n), None, None, None],
        [None, coupling.T, None, c * np.eye(m), None, None],
        [None, None, None, None, np.eye(n), None],
        [None, None, None, None, None, np.eye(m)],
    ]
    return assemble(grid, margin=margin, name="bound"), P


def compact_qe(P, F, L, Sigma_sqrt, b: float, omega_bar: float) -> np.ndarray:
    """Three-block matrix ``Q_e`` in ``(e, zeta, v)`` whose PSD-ness is the certificate decrease."""
    P, F, L, S = (np.array(a, dtype=float, ndmin=2) for a in (P, F, L, Sigma_sqrt))
    n, m = L.shape
    c = (1.0 - b) / omega_bar
    B = L @ S
    return symmetrize(
        np.block(
            [
                [b * P - F.T @ P @ F, F.T @ P @ B, -F.T @ P],
                [B.T @ P @ F, c * np.eye(m) - B.T @ P @ B, B.T @ P],
                [-P @ F, P @ B, c * np.eye(n) - P],
            ]
        )
    )


def decrease_residual(P, F, L, Sigma_sqrt, b, omega_bar, e, zeta, v) -> np.ndarray:
    """``V+ - b V - ((1-b)/omega_bar)(|zeta|^2 + |v|^2)`` for batches of rows."""
    e, zeta, v = (np.atleast_2d(a) for a in (e, zeta, v))
    nxt = e @ F.T - zeta @ (L @ Sigma_sqrt).T + v
    V = np.einsum("ij,jk,ik->i", e, P, e)
    Vn = np.einsum("ij,jk,ik->i", nxt, P, nxt)
    w = np.sum(zeta**2, axis=1) + np.sum(v**2, axis=1)
    return Vn - b * V - (1.0 - b) / omega_bar * w


def build_hinf_lmi(F, C, L, gamma: float, P: Var | None = None, margin: float = 0.0):
    """Bounded-real LMI: feasibility certifies an H-infinity gain ``<= gamma`` from
    ``(eta, v)`` to ``r = C e + eta``.  Returns ``(lmi, P)``."""
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    F, C, L = (np.array(a, dtype=float, ndmin=2) for a in (F, C, L))
    n, m = L.shape
    if F.shape != (n, n) or C.shape != (m, n):
        raise DimensionError("F, C, L dimensions disagree")
    P = Var("P_H", (n, n), "symmetric") if P is None else P
    PA = P @ (F - L @ C)
    PL = P @ L
    g2 = gamma**2
    grid = [
        [P, None, None, PA.T, C.T],
        [None, g2 * np.eye(m), None, -PL.T, np.eye(m)],
        [None, None, g2 * np.eye(n), P, None],
        [PA, -PL, P, P, None],
        [C, np.eye(m), None, None, np.eye(m)],
    ]
    return assemble(grid, margin=margin, name="hinf"), P


def _scaled_hinf(X, A, N, G, corner, C, gamma: float, name: str):
    """Bounded-real LMI after congruence with ``diag(I, I/gamma, I/gamma, I, I)``.

    Equivalent to the printed layout with ``gamma^2 I`` diagonal blocks, but
    keeps every entry O(1) when ``gamma`` is large.  ``A`` plays ``P(F - LC)``,
    ``N`` plays ``P L``, ``G`` the coupling of ``v`` and ``corner`` the (4,4) block.
    """
    m, n = C.shape
    s = 1.0 / gamma
    Ne, Ge = N if not isinstance(N, Var) else N.expr(), G if not isinstance(G, Var) else G.expr()
    return assemble(
        [
            [X, None, None, A.T, C.T],
            [None, np.eye(m), None, -s * Ne.T, s * np.eye(m)],
            [None, None, np.eye(n), s * Ge.T, None],
            [A, -s * Ne, s * Ge, corner, None],
            [C, s * np.eye(m), None, None, np.eye(m)],
        ],
        name=name,
    )


def build_joint_synthesis_lmis(F, C, Sigma_sqrt, b, omega_bar, gamma, P: Var | None = None, M: Var | None = None):
    """Joint program in ``(P, M)`` with ``M = P L``.  Returns ``(lmi_bound, lmi_hinf, P, M)``."""
    _check_b(b)
    F, C, S = (np.array(a, dtype=float, ndmin=2) for a in (F, C, Sigma_sqrt))
    m, n = C.shape
    P = Var("P", (n, n), "symmetric") if P is None else P
    M = Var("M", (n, m)) if M is None else M
    c = (1.0 - b) / omega_bar
    PF = P @ F
    MS = -(M @ S)
    bound = assemble(
        [
            [b * P, PF.T, None, None, None, None],
            [PF, P, P, MS, None, None],
            [None, P, c * np.eye(n), None, None, None],
            [None, MS.T, None, c * np.eye(m), None, None],
            [None, None, None, None, np.eye(n), None],
            [None, None, None, None, None, np.eye(m)],
        ],
        name="bound[M]",
    )
    hinf = _scaled_hinf(P, PF - M @ C, M, P, P.expr(), C, gamma, "hinf[M]")
    return bound, hinf, P, M


def build_extended_lmis(F, C, Sigma_sqrt, b, omega_bar, gamma, kappa):
    """Slack-variable form of the joint program.

    A common slack ``G`` (nonsingular) and ``N = G L`` replace ``P`` in the
    products ``P F`` and ``P L``; the bound LMI keeps ``P`` as its
    certificate, while the gain LMI gets its own certificate ``X`` and the
    slack pair scaled to ``(kappa G, kappa N)``.  Since ``G + G^T - P <= G P^-1 G^T``,
    feasibility implies both original LMIs at ``L = G^-1 N`` (with ``P`` and ``X``
    respectively).  Returns ``(lmi_bound, lmi_hinf, vars)``.
    """
    _check_b(b)
    if kappa <= 0:
        raise ValidationError(f"kappa must be positive, got {kappa}")
    F, C, S = (np.array(a, dtype=float, ndmin=2) for a in (F, C, Sigma_sqrt))
    m, n = C.shape
    P = Var("P", (n, n), "symmetric")
    X = Var("X", (n, n), "symmetric")
    G = Var("G", (n, n))
    N = Var("N", (n, m))
    c = (1.0 - b) / omega_bar
    GF = G @ F
    NS = -(N @ S)
    corner = G + G.T - P
    bound = assemble(
        [
            [b * P, GF.T, None, None, None, None],
            [GF, corner, G, NS, None, None],
            [None, G.T, c * np.eye(n), None, None, None],
            [None, NS.T, None, c * np.eye(m), None, None],
            [None, None, None, None, np.eye(n), None],
            [None, None, None, None, None, np.eye(m)],
        ],
        name="bound[G]",
    )
    Gk = kappa * G.expr()
    Nk = kappa * N.expr()
    hinf = _scaled_hinf(X, kappa * (GF - N @ C), Nk, Gk, Gk + Gk.T - X, C, gamma, "hinf[G]")
    return bound, hinf, {"P": P, "X": X, "G": G, "N": N}


# --- H-infinity gain --------------------------------------------------------------


def _sigma_max(A, B, C, D, theta: float) -> float:
    n = A.shape[0]
    H = C @ np.linalg.solve(np.exp(1j * theta) * np.eye(n) - A, B) + D
    return float(np.linalg.svd(H, compute_uv=False)[0])


def hinf_gain_estimate(F, C, L, n_freq: int = 2048) -> float:
    """Peak of the largest singular value of ``(eta, v) -> r`` on the unit circle.

    Uniform grid over ``[0, pi]`` followed by bounded scalar refinement on the
    two cells around the grid maximum.
    """
    F, C, L = (np.array(a, dtype=float, ndmin=2) for a in (F, C, L))
    A = F - L @ C
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise InstabilityError(f"F - LC is not Schur stable (spectral radius {rho:.6g})")
    if 1.0 - rho < 1e-6:
        warnings.warn(f"pole within {1.0 - rho:.1e} of the unit circle; gain estimate is ill-conditioned", stacklevel=2)
    n, m = L.shape
    B = np.hstack([-L, np.eye(n)])
    D = np.hstack([np.eye(m), np.zeros((m, n))])
    grid = np.linspace(0.0, np.pi, max(int(n_freq), 3))
    vals = np.array([_sigma_max(A, B, C, D, t) for t in grid])
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda t: -_sigma_max(A, B, C, D, t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    return float(max(vals[k], -res.fun))


def hinf_feasible(F, C, L, gamma: float, tol_feas: float = 1e-9) -> bool:
    lmi, P = build_hinf_lmi(F, C, L, gamma, margin=0.0)
    pd = assemble([[P]], margin=1e-10)
    return solve_feasibility([lmi, pd], tol_feas=tol_feas).feasible


def min_hinf_gamma(F, C, L, rtol: float = 1e-6) -> float:
    """Smallest ``gamma`` for which the bounded-real LMI is feasible (bisection)."""
    hi = 1.0
    for _ in range(60):
        if hinf_feasible(F, C, L, hi):
            break
        hi *= 2.0
    else:
        raise NumericalError("bounded-real LMI stayed infeasible up to gamma = 2^60")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if hinf_feasible(F, C, L, mid):
            hi = mid
        else:
            lo = mid
    return hi


def build_gain_synthesis_lmi(F, C, gamma: float):
    """Bounded-real LMI in ``(P, M = P L)``; feasible iff some gain reaches ``gamma``."""
    F, C = np.asarray(F, float), np.asarray(C, float)
    m, n = C.shape
    P = Var("P", (n, n), "symmetric")
    M = Var("M", (n, m))
    lmi = _scaled_hinf(P, P @ F - M @ C, M, P, P.expr(), C, gamma, "hinf[M]")
    return lmi, P, M


def gain_achievable(F, C, gamma: float) -> bool:
    lmi, P, _ = build_gain_synthesis_lmi(F, C, gamma)
    return solve_feasibility([lmi, assemble([[P]], margin=1e-10)], tol_feas=1e-9).feasible


def min_synthesis_gamma(F, C, rtol: float = 1e-4) -> float:
    """Smallest ``gamma`` achievable by any observer gain (bisection on :func:`gain_achievable`)."""
    hi = 1.0
    while not gain_achievable(F, C, hi):
        hi *= 2.0
        if hi > 2.0**60:
            raise NumericalError("no gain achieves a finite H-infinity level")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if gain_achievable(F, C, mid) else (mid, hi)
    return hi


# --- minimum-volume bounds --------------------------------------------------------


def default_b_grid() -> np.ndarray:
    coarse = 0.01 * np.arange(1, 100)
    fine = np.array([0.90, 0.925, 0.95, 0.975, 0.99, 0.995])
    return np.unique(np.round(np.concatenate([coarse, fine]), 6))


@dataclass
class EllipsoidBound:
    """``{e : e^T P e <= 1}`` with the data that certifies it."""

    P_shape: np.ndarray
    budget: HiddenBudget
    neg_logdet: float
    certified: bool
    min_eig: float
    L: np.ndarray
    Sigma_sqrt: np.ndarray
    F: np.ndarray
    per_b: list[dict] = field(default_factory=list)

    @property
    def b(self) -> float:
        return self.budget.b

    @property
    def n(self) -> int:
        return self.P_shape.shape[0]

    @property
    def volume(self) -> float:
        """Lebesgue volume of the ellipsoid (display only)."""
        n = self.n
        unit = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return unit * math.exp(0.5 * self.neg_logdet)

    def recertify(self) -> float:
        lmi, P = build_bound_lmi(self.F, self.L, self.Sigma_sqrt, self.budget.b, self.budget.omega_bar)
        return lmi.min_eig({P: self.P_shape})

    def semi_axes(self) -> np.ndarray:
        return 1.0 / np.sqrt(np.linalg.eigvalsh(self.P_shape))


def solve_bound_at(F, L, Sigma_sqrt, b, omega_bar, backend: str = "conic"):
    """``(neg_logdet, P)`` of the min-volume certificate at fixed ``b``; ``None`` if infeasible.

    The leading block needs ``b P - F^T P F >= 0`` with ``P > 0``, impossible for
    ``b <= rho(F)^2``; such ``b`` are rejected without a solve.
    """
    if b <= spectral_radius(np.asarray(F, dtype=float)) ** 2:
        return None
    lmi, P = build_bound_lmi(F, L, Sigma_sqrt, b, omega_bar)
    try:
        res = solve_maxdet(MaxDetProblem(P, [lmi]), backend)
    except InfeasibleError:
        return None
    return -res.logdet, res[P]


def _b_search(objective, grid, refine: bool, workers: int | None):
    """Grid then bounded Brent refinement of a scalar objective on ``(0, 1)``."""
    grid = [float(b) for b in grid]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(objective, grid))
    else:
        vals = [objective(b) for b in grid]
    best = int(np.argmin(vals))
    b_best, v_best = grid[best], vals[best]
    if v_best >= PENALTY or not refine:
        return b_best, v_best
    left = grid[best - 1] if best > 0 else 0.5 * b_best
    right = grid[best + 1] if best + 1 < len(grid) else 0.5 * (1.0 + b_best)
    res = optimize.minimize_scalar(objective, bounds=(left, right), method="bounded", options={"xatol": 1e-5})
    if res.fun < v_best:
        return float(res.x), float(res.fun)
    return b_best, v_best


def min_volume_bound(
    model: SystemModel,
    observer: ObserverDesign,
    steady: SteadyState,
    budget: HiddenBudget,
    b_grid=None,
    *,
    refine: bool = True,
    backend: str = "conic",
    workers: int | None = None,
    tol_cert: float = CERT_TOL,
) -> EllipsoidBound:
    """Smallest certified ellipsoid over the contraction rate ``b``."""
    model.require_open_loop_stable()
    observer.require_schur(model)
    F, L, S = model.F, observer.L, steady.Sigma_sqrt
    grid = default_b_grid() if b_grid is None else np.asarray(b_grid, dtype=float)
    if grid.size == 0 or np.any((grid <= 0) | (grid >= 1)):
        raise ValidationError("b grid must be nonempty and inside (0, 1)")
    cache: dict[float, tuple | None] = {}
    per_b: list[dict] = []

    def objective(b: float) -> float:
        if b not in cache:
            try:
                cache[b] = solve_bound_at(F, L, S, b, budget.omega_bar, backend)
            except NumericalError as exc:
                log.debug("b=%.4f numerical failure: %s", b, exc)
                cache[b] = None
        out = cache[b]
        return PENALTY if out is None else out[0]

    b_best, val = _b_search(objective, grid, refine, workers)
    for b in sorted(cache):
        out = cache[b]
        per_b.append({"b": b, "status": "infeasible" if out is None else "optimal",
                      "neg_logdet": None if out is None else out[0]})
    if val >= PENALTY:
        raise InfeasibleError("bound program infeasible for every b", report=per_b)
    P_best = cache[b_best][1]
    bound_budget = replace(budget, b=b_best)
    bound = EllipsoidBound(symmetrize(P_best), bound_budget, float(val), False, float("nan"), L, S, F, per_b)
    bound.min_eig = bound.recertify()
    bound.certified = bound.min_eig >= -tol_cert
    if not bound.certified:
        log.warning("bound at b=%.4f fails recertification (min eigenvalue %.3e)", b_best, bound.min_eig)
    return bound


# --- observer synthesis -----------------------------------------------------------


@dataclass
class SynthesisStep:
    L: np.ndarray
    P: np.ndarray
    b: float
    kappa: float | None
    neg_logdet: float
    Sigma: np.ndarray
    aux: dict = field(default_factory=dict)


@dataclass
class SynthesisResult:
    L_new: np.ndarray
    P_shape: np.ndarray
    gamma: float
    budget: HiddenBudget
    neg_logdet: float
    method: str
    one_shot: SynthesisStep
    iterations: list[SynthesisStep]
    converged: bool
    bound: EllipsoidBound
    gain_estimate: float
    steady: SteadyState

    @property
    def b(self) -> float:
        return self.iterations[-1].b

    @property
    def kappa(self) -> float | None:
        return self.iterations[-1].kappa


def _solve_literal(F, C, S, b, omega_bar, gamma, backend):
    bound, hinf, P, M = build_joint_synthesis_lmis(F, C, S, b, omega_bar, gamma)
    try:
        res = solve_maxdet(MaxDetProblem(P, [bound, hinf]), backend)
    except InfeasibleError:
        return None
    Pv, Mv = res[P], res[M]
    return -res.logdet, Pv, np.linalg.solve(Pv, Mv), {"M": Mv}


def _solve_extended(F, C, S, b, omega_bar, gamma, kappa, backend):
    bound, hinf, v = build_extended_lmis(F, C, S, b, omega_bar, gamma, kappa)
    try:
        res = solve_maxdet(MaxDetProblem(v["P"], [bound, hinf]), backend)
    except InfeasibleError:
        return None
    G = res[v["G"]]
    if np.linalg.cond(G) > 1e12:
        return None
    return -res.logdet, res[v["P"]], np.linalg.solve(G, res[v["N"]]), {"G": G, "N": res[v["N"]], "X": res[v["X"]]}


def default_kappa_grid() -> np.ndarray:
    return 10.0 ** np.arange(-1.0, 4.01, 0.5)


def _search_program(F, C, S, omega_bar, gamma, method, b_grid, kappa_grid, backend, start=None):
    """Minimize the program's -log det over ``b`` (and ``log10 kappa`` for the extended form)."""
    cache: dict[tuple, tuple | None] = {}

    def run(b, lk):
        key = (round(b, 12), None if lk is None else round(lk, 12))
        if key not in cache:
            try:
                if method == "literal":
                    cache[key] = _solve_literal(F, C, S, b, omega_bar, gamma, backend)
                else:
                    cache[key] = _solve_extended(F, C, S, b, omega_bar, gamma, 10.0**lk, backend)
            except NumericalError as exc:
                log.debug("synthesis solve failed at b=%.4f: %s", b, exc)
                cache[key] = None
        out = cache[key]
        return PENALTY if out is None else out[0]

    if method == "literal":
        grid = np.asarray(b_grid, dtype=float)
        b, val = _b_search(lambda b: run(b, None), grid, True, None)
        if val >= PENALTY:
            return None, cache
        return (b, None, cache[(round(b, 12), None)]), cache

    if start is None:
        pts = [(float(b), float(np.log10(k))) for b in b_grid for k in kappa_grid]
        b_step = float(np.min(np.diff(np.unique(b_grid)))) if len(b_grid) > 1 else 0.05
        k_step = float(np.min(np.diff(np.log10(np.unique(kappa_grid))))) if len(kappa_grid) > 1 else 0.5
    else:
        b0, lk0 = start
        b_step, k_step = 0.025, 0.25
        pts = [
            (b0 + i * b_step, lk0 + j * k_step)
            for i in range(-3, 4)
            for j in range(-3, 4)
            if 0.0 < b0 + i * b_step < 1.0
        ]
    vals = [run(b, lk) for b, lk in pts]
    k = int(np.argmin(vals))
    if vals[k] >= PENALTY:
        return None, cache
    b, lk = pts[k]
    # coordinate-wise bounded refinement, two sweeps
    for _ in range(2):
        lo, hi = max(b - b_step, 1e-4), min(b + b_step, 1.0 - 1e-4)
        rb = optimize.minimize_scalar(lambda x: run(x, lk), bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
        if rb.fun <= run(b, lk):
            b = float(rb.x)
        rk = optimize.minimize_scalar(
            lambda x: run(b, x), bounds=(lk - k_step, lk + k_step), method="bounded", options={"xatol": 1e-3}
        )
        if rk.fun <= run(b, lk):
            lk = float(rk.x)
    return (b, lk, cache[(round(b, 12), round(lk, 12))]), cache


def synthesize_observer(
    model: SystemModel,
    steady: SteadyState,
    A: float,
    gamma: float,
    b_grid=None,
    *,
    budget: HiddenBudget | None = None,
    method: str = "extended",
    kappa_grid=None,
    sigma_iterations: int = 10,
    sigma_tol: float = 1e-6,
    backend: str = "conic",
    quantile_method=QuantileMethod.EXACT,
    tol_cert: float = CERT_TOL,
) -> SynthesisResult:
    """Redesign ``L`` to shrink the CASE1 bound while keeping the H-infinity gain ``<= gamma``.

    ``steady`` supplies the residual covariance of the current observer; the
    program treats it as data, so the solve is repeated with the covariance of
    each new gain until it settles.  ``method="literal"`` solves the joint
    program in ``(P, M = P L)``; ``"extended"`` uses the slack-variable form
    (see :func:`build_extended_lmis`) with a search over the scaling ``kappa``.
    """
    if method not in ("extended", "literal"):
        raise ValidationError(f"unknown synthesis method {method!r}")
    model.require_open_loop_stable()
    F, C = model.F, model.C
    budget = case1_budget(A, model.m, model.R1, quantile_method) if budget is None else budget
    if budget.case is not Case.CASE1:
        raise ValidationError("observer synthesis is defined for CASE1 budgets")
    b_grid = (0.05 * np.arange(1, 20)) if b_grid is None else np.asarray(b_grid, dtype=float)
    kappa_grid = default_kappa_grid() if kappa_grid is None else np.asarray(kappa_grid, dtype=float)

    if not gain_achievable(F, C, gamma):
        g_min = min_synthesis_gamma(F, C)
        raise InfeasibleError(
            f"no observer gain reaches H-infinity level {gamma:g}; the smallest achievable level is about "
            f"{g_min:.4g}, retry with gamma >= that",
            report=[{"gamma": gamma, "gamma_min": g_min}],
        )

    steps: list[SynthesisStep] = []
    Sigma = steady.Sigma
    S = steady.Sigma_sqrt
    start = None
    converged = False
    for it in range(max(1, sigma_iterations)):
        found, cache = _search_program(F, C, S, budget.omega_bar, gamma, method, b_grid, kappa_grid, backend, start)
        if found is None:
            report = [{"b": k[0], "log10_kappa": k[1], "status": "infeasible" if v is None else "optimal"}
                      for k, v in sorted(cache.items(), key=lambda kv: kv[0])]
            raise InfeasibleError(
                f"{method} synthesis program infeasible over the whole search grid at gamma={gamma:g} "
                f"(iteration {it}); try a larger gamma" + ("" if method == "extended" else " or method='extended'"),
                report=report,
            )
        b, lk, (val, P, L_new, aux) = found
        kappa = None if lk is None else 10.0**lk
        steps.append(SynthesisStep(L_new, symmetrize(P), b, kappa, float(val), Sigma, aux))
        obs = ObserverDesign(L_new)
        try:
            new_steady = steady_state(model, obs)
        except InstabilityError as exc:
            raise NumericalError(f"recovered gain is not stabilizing: {exc}") from exc
        if np.linalg.norm(new_steady.Sigma - Sigma) <= sigma_tol:
            converged = True
            steady_new = new_steady
            break
        Sigma, S, steady_new = new_steady.Sigma, new_steady.Sigma_sqrt, new_steady
        start = None if lk is None else (b, lk)
    last = steps[-1]
    obs = ObserverDesign(last.L)
    obs.require_schur(model)
    bound = min_volume_bound(model, obs, steady_new, budget, default_b_grid(), backend=backend, tol_cert=tol_cert)
    gain = hinf_gain_estimate(F, C, last.L)
    return SynthesisResult(
        L_new=last.L,
        P_shape=last.P,
        gamma=gamma,
        budget=replace(budget, b=last.b),
        neg_logdet=last.neg_logdet,
        method=method,
        one_shot=steps[0],
        iterations=steps,
        converged=converged,
        bound=bound,
        gain_estimate=gain,
        steady=steady_new,
    )


def certify_synthesis(result: SynthesisResult, model: SystemModel, tol: float = CERT_TOL) -> dict:
    """Re-instantiate the bound LMI at ``(P_shape, L_new)`` and re-check the gain LMI."""
    last = result.iterations[-1]
    S = sqrt_sym(last.Sigma)
    lmi, P = build_bound_lmi(model.F, result.L_new, S, last.b, result.budget.omega_bar)
    bound_eig = lmi.min_eig({P: result.P_shape})
    hinf_ok = hinf_feasible(model.F, model.C, result.L_new, result.gamma * (1.0 + 1e-9))
    schur = spectral_radius(model.F - result.L_new @ model.C)
    return {
        "bound_min_eig": bound_eig,
        "bound_ok": bound_eig >= -tol,
        "hinf_ok": hinf_ok,
        "spectral_radius": schur,
        "ok": bound_eig >= -tol and hinf_ok and schur < 1.0,
    }
