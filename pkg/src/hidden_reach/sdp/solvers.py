"""Feasibility and determinant-maximization solves over block LMIs.

Two interchangeable maxdet backends:

``"conic"``
    log det through a triangular-factor epigraph: ``[[P, Z], [Z^T, diag(Z)]] >= 0``
    with ``Z`` lower triangular gives ``det P >= prod Z_ii``, and each
    ``t_i <= log Z_ii`` is an exponential-cone constraint.  Handed to Clarabel
    through cvxpy.
``"bisection"``
    Outer bisection on the determinant root ``tau``: the same epigraph, with
    ``prod Z_ii >= tau^n`` encoded as a tree of 2x2 PSD geometric-mean
    constraints, and each level decided by the in-house barrier method.

The bisection backend never calls an external solver, so agreement between
the two is a genuine cross-check.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleError, NumericalError, UnboundedError, ValidationError
from .barrier import max_margin
from .expr import Affine, Var
from .lmi import BlockLMI, assemble, block_scaling, collect_variables, split_coords

log = logging.getLogger(__name__)

BACKENDS = ("conic", "bisection")
_BACKEND_ALIASES = {"a": "conic", "b": "bisection"}
UNBOUNDED_SIZE = 1e10  # a conic optimizer this large means Clarabel stopped on an unbounded ray


def normalize_backend(name: str) -> str:
    name = _BACKEND_ALIASES.get(name, name)
    if name not in BACKENDS:
        raise ValidationError(f"unknown maxdet backend {name!r}; expected one of {BACKENDS} or a/b")
    return name


@dataclass
class MaxDetProblem:
    """Maximize ``log det objective`` subject to ``constraints``.

    ``eps_slack`` is the margin in ``objective >= eps_slack * I``, which is
    appended automatically so the optimizer is positive definite.
    """

    objective: Var
    constraints: list[BlockLMI]
    tol_feas: float = 1e-7
    tol_gap: float = 1e-7
    eps_slack: float = 1e-8

    def __post_init__(self):
        if self.objective.kind != "symmetric":
            raise ValidationError("the log-det objective must be a symmetric variable")
        if not any(self.objective in c.variables for c in self.constraints):
            raise ValidationError(f"objective variable {self.objective.name} appears in no constraint")
        if self.tol_feas <= 0 or self.tol_gap <= 0 or self.eps_slack < 0:
            raise ValidationError("solver tolerances must be positive")

    def all_constraints(self) -> list[BlockLMI]:
        pd = assemble([[self.objective]], margin=self.eps_slack, name=f"{self.objective.name} > 0")
        return [*self.constraints, pd]


@dataclass
class SDPResult:
    status: str  # "optimal", "feasible", "infeasible"
    values: dict[Var, np.ndarray]
    min_eigs: list[float]
    backend: str
    logdet: float | None = None
    bracket: tuple[float, float] | None = None
    margin: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "feasible")

    def __getitem__(self, v: Var) -> np.ndarray:
        return self.values[v]


# --- standard form with block scaling -------------------------------------------------


@dataclass
class _Standard:
    order: list[Var]
    index: dict[Var, slice]
    n_coords: int
    F0s: list[np.ndarray]
    Fks: list[np.ndarray]


def _standardize(constraints, extra=(), scale: bool = True) -> _Standard:
    order, index, K = collect_variables(constraints, extra)
    F0s, Fks = [], []
    for con in constraints:
        F0, Fk = con.standard_form(index, K)
        if scale:
            d = block_scaling(con)
            F0 = d[:, None] * F0 * d[None, :]
            Fk = d[None, :, None] * Fk * d[None, None, :]
        F0s.append(F0)
        Fks.append(Fk)
    return _Standard(order, index, K, F0s, Fks)


def _min_eigs(constraints, values) -> list[float]:
    return [con.min_eig(values) for con in constraints]


# --- feasibility ------------------------------------------------------------------


def solve_feasibility(
    constraints: list[BlockLMI],
    *,
    tol_feas: float = 1e-7,
    radius: float = 1e4,
    backend: str = "barrier",
) -> SDPResult:
    """Find a point satisfying every LMI, or report infeasibility.

    The barrier backend maximizes the common eigenvalue margin of the
    block-scaled LMIs; a certified negative margin upper bound proves
    infeasibility inside the search ball ``||x|| <= radius``.  The
    ``"conic"`` backend solves the same margin problem with Clarabel.
    """
    if not constraints:
        raise ValidationError("no constraints given")
    std = _standardize(constraints)
    if std.n_coords == 0:
        raise ValidationError("feasibility problem has no decision variables")
    if backend == "barrier":
        res = max_margin(std.F0s, std.Fks, radius=radius, stop_above=0.0, stop_below=-tol_feas)
        x, margin, upper = res.x, res.margin, res.margin_upper
    elif backend == "conic":
        x, margin = _conic_margin(std, radius)
        upper = margin
    else:
        raise ValidationError(f"unknown feasibility backend {backend!r}")
    values = split_coords(x, std.order, std.index)
    eigs = _min_eigs(constraints, values)
    ok = min(eigs) >= -tol_feas
    if not ok and upper >= -tol_feas and backend == "barrier":
        # margin sits inside the tolerance band: polish to optimality before deciding
        res = max_margin(std.F0s, std.Fks, x0=x, radius=radius, gap_tol=tol_feas * 1e-2)
        values = split_coords(res.x, std.order, std.index)
        eigs = _min_eigs(constraints, values)
        ok, margin, upper = min(eigs) >= -tol_feas, res.margin, res.margin_upper
    status = "feasible" if ok else "infeasible"
    return SDPResult(status, values, eigs, backend, margin=margin, info={"margin_upper": upper})


# --- conic backend ----------------------------------------------------------------


def _cvxpy():
    import cvxpy as cp  # deferred: the bisection backend works without it

    return cp


def _cp_lmi(cp, x, F0, Fk):
    N = F0.shape[0]
    A = Fk.reshape(Fk.shape[0], N * N).T
    E = cp.reshape(A @ x, (N, N), order="C") + F0
    return 0.5 * (E + E.T)


def _cp_solve(cp, prob, tol_gap: float) -> str:
    """Solve with Clarabel; returns the cvxpy status, ``"solver_error"`` on a crash."""
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            prob.solve(solver="CLARABEL", tol_gap_abs=min(tol_gap, 1e-8), tol_gap_rel=min(tol_gap, 1e-8))
    except cp.error.SolverError as exc:
        log.debug("Clarabel failed: %s", exc)
        return "solver_error"
    return prob.status


def _conic_margin(std: _Standard, radius: float):
    cp = _cvxpy()
    x = cp.Variable(std.n_coords)
    s = cp.Variable()
    cons = [_cp_lmi(cp, x, F0, Fk) - s * np.eye(F0.shape[0]) >> 0 for F0, Fk in zip(std.F0s, std.Fks)]
    cons.append(cp.norm(x) <= radius)
    cons.append(s <= 1.0)
    prob = cp.Problem(cp.Maximize(s), cons)
    status = _cp_solve(cp, prob, 1e-9)
    if x.value is None:
        if status.startswith("infeasible"):
            return np.zeros(std.n_coords), -np.inf
        raise NumericalError(f"conic margin solve returned status {prob.status}")
    return np.asarray(x.value, dtype=float), float(s.value)


def _coordinate_scale(values: dict, std: _Standard) -> np.ndarray:
    """Per-variable coordinate scale taken from a feasible point."""
    scale = np.ones(std.n_coords)
    for v in std.order:
        if v in values:
            mag = float(np.abs(v.to_coords(values[v])).max(initial=0.0))
            if mag > 0.0:
                scale[std.index[v]] = mag
    return scale


def _conic_attempt(cp, problem, constraints, xscale):
    P = problem.objective
    n = P.shape[0]
    # Clarabel does its own equilibration; block scaling only hurts it here
    std = _standardize(constraints, extra=(P,), scale=False)
    if xscale is None:
        xscale = np.ones(std.n_coords)
    x = cp.Variable(std.n_coords)
    cons = [_cp_lmi(cp, x, F0, Fk * xscale[:, None, None]) >> 0 for F0, Fk in zip(std.F0s, std.Fks)]
    sl = std.index[P]
    Pbasis = P.basis.reshape(P.size, n * n).T * xscale[sl][None, :]
    Pexpr = cp.reshape(Pbasis @ x[sl], (n, n), order="C")
    Z = cp.Variable((n, n))
    if n > 1:
        cons.append(cp.upper_tri(Z) == 0)
    cons.append(cp.bmat([[Pexpr, Z], [Z.T, cp.diag(cp.diag(Z))]]) >> 0)
    prob = cp.Problem(cp.Maximize(cp.sum(cp.log(cp.diag(Z)))), cons)
    status = _cp_solve(cp, prob, problem.tol_gap)
    if status == "unbounded":
        raise UnboundedError("log det is unbounded above on the feasible set")
    values = None
    if x.value is not None and status.startswith("optimal"):
        values = split_coords(xscale * np.asarray(x.value, dtype=float), std.order, std.index)
    return values, status, std


def _maxdet_conic(problem: MaxDetProblem, retries: int = 3) -> SDPResult:
    """Conic solve with two safeguards.

    An infeasible or constraint-violating answer is checked with the barrier
    method; if that finds a feasible point, coordinates are rescaled to its
    magnitude and the conic solve is repeated.  Small residual violations are
    removed by tightening every LMI margin.
    """
    cp = _cvxpy()
    P = problem.objective
    base = problem.all_constraints()
    extra_margin = 0.0
    xscale = None
    checked = False
    check = None
    worst = -np.inf
    for _ in range(retries + 2):
        constraints = base
        if extra_margin > 0:
            constraints = [BlockLMI(c.matrix, c.block_sizes, c.margin + extra_margin, c.name) for c in base]
        values, status, std = _conic_attempt(cp, problem, constraints, xscale)
        worst = min(_min_eigs(base, values)) if values is not None else -np.inf
        if worst < -problem.tol_feas and not checked:
            checked = True
            check = solve_feasibility(base, tol_feas=problem.tol_feas)
            if not check.feasible:
                raise InfeasibleError(
                    f"maxdet program infeasible (conic status {status}, margin bound "
                    f"{check.info['margin_upper']:.3e})"
                )
            xscale = _coordinate_scale(check.values, std)
            continue
        if worst >= -problem.tol_feas:
            if np.abs(values[P]).max() > UNBOUNDED_SIZE:
                raise UnboundedError(f"log det appears unbounded: optimizer has |P| ~ {np.abs(values[P]).max():.3e}")
            sign, ld = np.linalg.slogdet(values[P])
            if sign <= 0:
                raise NumericalError("maxdet solution is not positive definite")
            return SDPResult(
                "optimal",
                values,
                _min_eigs(base, values),
                "conic",
                logdet=float(ld),
                info={"solver": "CLARABEL", "solver_status": status, "extra_margin": extra_margin, "rescaled": checked},
            )
        if not np.isfinite(worst):
            break
        extra_margin = max(10.0 * extra_margin, 10.0 * -worst)
        log.debug("conic maxdet violated constraints by %.3e; retrying with margin %.3e", -worst, extra_margin)
    if check is not None and check.margin is not None and check.margin <= problem.tol_feas:
        # feasible only within tolerance: no interior, so no finite log det optimum
        raise InfeasibleError(
            f"maxdet program has no strictly feasible point (best margin {check.margin:.3e}, conic status {status})"
        )
    raise NumericalError(f"conic maxdet failed to reach a feasible optimum (worst violation {-worst:.3e})")


# --- bisection backend ------------------------------------------------------------


def _geo_mean_tree(leaves: list, tau: float) -> list[BlockLMI]:
    """LMIs forcing ``prod(leaves) >= tau^len(leaves)`` for nonnegative leaves.

    Leaves are padded with the constant ``tau`` to a power of two; each level
    replaces a pair ``(a, b)`` by a new scalar ``w`` with ``[[a, w], [w, b]] >= 0``,
    i.e. ``w <= sqrt(a b)``; the last pair is compared against ``tau`` itself.
    """
    nodes = list(leaves)
    if len(nodes) == 1:
        return [assemble([[nodes[0] - tau]], name="root")]
    width = 1 << (len(nodes) - 1).bit_length()
    nodes += [Affine.lift(tau)] * (width - len(nodes))
    cons = []
    while len(nodes) > 2:
        nxt = []
        for a, b in zip(nodes[::2], nodes[1::2]):
            w = Var(f"w{len(cons)}", (1, 1), "symmetric")
            cons.append(assemble([[a, w], [w, b]], name="geo"))
            nxt.append(w.expr())
        nodes = nxt
    cons.append(assemble([[nodes[0], tau], [tau, nodes[1]]], name="root"))
    return cons


def _epigraph(P: Var, tau: float):
    n = P.shape[0]
    Z = Var("Z", (n, n), "lower")
    ZE = Z.expr()
    diag = Affine((n, n), np.zeros((n, n)), {Z: np.einsum("kij,ij->kij", Z.basis, np.eye(n))})
    head = assemble([[P, ZE], [ZE.T, diag]], name="det-epigraph")
    leaves = [ZE @ np.eye(n)[:, [i]] for i in range(n)]
    leaves = [np.eye(n)[[i], :] @ leaf for i, leaf in enumerate(leaves)]
    return [head, *_geo_mean_tree(leaves, tau)]


def _maxdet_bisection(problem: MaxDetProblem, radius: float = 1e4, max_doublings: int = 60) -> SDPResult:
    P = problem.objective
    n = P.shape[0]
    base = problem.all_constraints()
    start = solve_feasibility(base, tol_feas=0.0 if problem.eps_slack > 0 else problem.tol_feas, radius=radius)
    if not start.feasible:
        raise InfeasibleError(
            f"maxdet program infeasible (margin upper bound {start.info['margin_upper']:.3e})",
            report=[{"margin": start.margin, "margin_upper": start.info["margin_upper"]}],
        )
    P0 = start.values[P]
    sign, ld0 = np.linalg.slogdet(P0)
    if sign <= 0:
        raise NumericalError("initial feasible point is not positive definite")
    steps = 0

    def decide(tau, x0=None):
        nonlocal steps
        cons = base + _epigraph(P, tau)
        std = _standardize(cons)
        res = max_margin(std.F0s, std.Fks, x0=x0, radius=radius, stop_above=0.0, stop_below=0.0)
        steps += res.newton_steps
        values = split_coords(res.x, std.order, std.index)
        ok = res.margin > 0.0 and min(c.min_eig(values) for c in base) >= -problem.tol_feas
        return ok, values

    lo = math.exp(ld0 / n) * (1.0 - 1e-9)
    best = start.values
    hi = lo
    for _ in range(max_doublings):
        hi *= 2.0
        ok, vals = decide(hi)
        if not ok:
            break
        lo, best = hi, vals
    else:
        raise UnboundedError("log det grows without bound (determinant root kept doubling)")
    log_tol = problem.tol_gap / n
    while math.log(hi) - math.log(lo) > log_tol:
        mid = math.sqrt(lo * hi)
        ok, vals = decide(mid)
        if ok:
            lo, best = mid, vals
        else:
            hi = mid
    values = {v: best[v] for v in collect_variables(problem.constraints, (P,))[0]}
    if np.linalg.norm(np.concatenate([v.to_coords(x) for v, x in values.items()])) > 0.5 * radius:
        raise UnboundedError(f"maxdet optimizer reaches the search radius {radius:g}; log det is unbounded")
    eigs = _min_eigs(problem.all_constraints(), values)
    sign, ld = np.linalg.slogdet(values[P])
    return SDPResult(
        "optimal",
        values,
        eigs,
        "bisection",
        logdet=float(ld),
        bracket=(n * math.log(lo), n * math.log(hi)),
        info={"newton_steps": steps},
    )


def solve_maxdet(problem: MaxDetProblem, backend: str = "conic") -> SDPResult:
    """Maximize ``log det`` of the objective variable.

    Raises :class:`InfeasibleError` when no feasible point exists and
    :class:`UnboundedError` when the determinant is unbounded.
    """
    backend = normalize_backend(backend)
    if backend == "conic":
        return _maxdet_conic(problem)
    return _maxdet_bisection(problem)
