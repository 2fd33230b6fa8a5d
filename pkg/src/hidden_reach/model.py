"""LTI plant / Luenberger observer model and its attack-free steady state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, DimensionError, InstabilityError, UnboundedSetError, ValidationError

# Lyapunov solves switch from the Kronecker system to doubling iteration above this size.
KRONECKER_MAX_N = 20


@dataclass(frozen=True)
class Tolerances:
    psd: float = 1e-9
    lyap: float = 1e-8
    schur: float = 1e-9


DEFAULT_TOL = Tolerances()


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, ndmin=2)
    out.setflags(write=False)
    return out


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def _check_square(M: np.ndarray, name: str = "matrix") -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")


def check_psd(S: np.ndarray, name: str, tol: float = DEFAULT_TOL.psd) -> np.ndarray:
    """Validate a covariance-like matrix and return its symmetrized copy."""
    S = np.asarray(S, dtype=float)
    _check_square(S, name)
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if np.abs(S - S.T).max(initial=0.0) > tol * scale:
        raise ValidationError(f"{name} is not symmetric")
    S = symmetrize(S)
    lo = float(np.linalg.eigvalsh(S).min()) if S.size else 0.0
    if lo < -tol * scale:
        raise ValidationError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")
    return S


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    _check_square(M)
    if M.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(M)).max())


@dataclass(frozen=True)
class SystemModel:
    """Plant matrices and Gaussian noise covariances.

    ``G`` and the control input cancel out of the estimation-error dynamics;
    they are carried so scenario files describe the full loop.
    """

    F: np.ndarray
    C: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    G: np.ndarray | None = None
    R0: np.ndarray | None = None
    tol: Tolerances = field(default=DEFAULT_TOL, compare=False)

    def __post_init__(self):
        F = _frozen(self.F)
        C = _frozen(self.C)
        _check_square(F, "F")
        n = F.shape[0]
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got shape {C.shape}")
        m = C.shape[0]
        G = _frozen(np.zeros((n, 1)) if self.G is None else self.G)
        if G.shape[0] != n:
            raise DimensionError(f"G must have {n} rows, got shape {G.shape}")
        R0 = np.eye(n) if self.R0 is None else self.R0
        covs = {}
        for name, S, d in (("R0", R0, n), ("R1", self.R1, n), ("R2", self.R2, m)):
            S = np.array(S, dtype=float, ndmin=2)
            if S.shape != (d, d):
                raise DimensionError(f"{name} must be {d}x{d}, got shape {S.shape}")
            covs[name] = _frozen(check_psd(S, name, self.tol.psd))
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "G", G)
        for name, S in covs.items():
            object.__setattr__(self, name, S)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def require_open_loop_stable(self) -> None:
        rho = spectral_radius(self.F)
        if rho >= 1.0:
            raise UnboundedSetError(
                f"rho(F) = {rho:.6g} >= 1: hidden reachable sets are unbounded for open-loop unstable plants"
            )


@dataclass(frozen=True)
class ObserverDesign:
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L", _frozen(self.L))

    def error_matrix(self, model: SystemModel) -> np.ndarray:
        """Closed-loop error matrix F - L C, after dimension checks."""
        if self.L.shape != (model.n, model.m):
            raise DimensionError(f"L must be {model.n}x{model.m}, got shape {self.L.shape}")
        return model.F - self.L @ model.C

    def require_schur(self, model: SystemModel) -> np.ndarray:
        A = self.error_matrix(model)
        rho = spectral_radius(A)
        if rho >= 1.0 - model.tol.schur:
            raise InstabilityError(f"F - LC is not Schur stable (spectral radius {rho:.6g})")
        return A


@dataclass(frozen=True)
class SteadyState:
    P_err: np.ndarray
    Sigma: np.ndarray
    Sigma_sqrt: np.ndarray
    Sigma_inv: np.ndarray
    Sigma_inv_sqrt: np.ndarray


def solve_discrete_lyapunov(A, Q, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Solve ``A X A^T - X + Q = 0`` for a Schur-stable ``A``.

    Small problems use the vectorized Kronecker system; larger ones use
    Smith's doubling iteration.
    """
    A = np.asarray(A, dtype=float)
    _check_square(A, "A")
    Q = check_psd(np.array(Q, dtype=float, ndmin=2), "Q", tol.psd)
    n = A.shape[0]
    if Q.shape != (n, n):
        raise DimensionError(f"Q must be {n}x{n}, got shape {Q.shape}")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise InstabilityError(f"Lyapunov solve needs spectral radius < 1, got {rho:.6g}")
    if n <= KRONECKER_MAX_N:
        K = np.eye(n * n) - np.kron(A, A)
        X = np.linalg.solve(K, Q.reshape(-1)).reshape(n, n)
    else:
        X, Ak = Q.copy(), A.copy()
        for _ in range(200):
            step = Ak @ X @ Ak.T
            X = X + step
            Ak = Ak @ Ak
            if np.linalg.norm(step) <= 1e-16 * max(1.0, np.linalg.norm(X)):
                break
    X = symmetrize(X)
    res = np.linalg.norm(A @ X @ A.T - X + Q)
    if res > tol.lyap * max(1.0, np.linalg.norm(Q)):
        raise InstabilityError(f"Lyapunov residual {res:.3e} above tolerance (ill-conditioned A)")
    return X


def sqrt_sym(S, tol: float = DEFAULT_TOL.psd) -> np.ndarray:
    S = check_psd(np.array(S, dtype=float, ndmin=2), "S", tol)
    w, U = np.linalg.eigh(S)
    W = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    return symmetrize(W)


def steady_state(model: SystemModel, obs: ObserverDesign) -> SteadyState:
    A = obs.require_schur(model)
    L = obs.L
    P = solve_discrete_lyapunov(A, symmetrize(model.R1 + L @ model.R2 @ L.T), model.tol)
    Sigma = symmetrize(model.C @ P @ model.C.T + model.R2)
    w, U = np.linalg.eigh(Sigma)
    if w.min() <= model.tol.psd * max(1.0, w.max()):
        raise DegeneracyError(f"residual covariance is singular (min eigenvalue {w.min():.3e})")
    Sigma_sqrt = symmetrize((U * np.sqrt(w)) @ U.T)
    Sigma_inv = symmetrize((U / w) @ U.T)
    Sigma_inv_sqrt = symmetrize((U / np.sqrt(w)) @ U.T)
    return SteadyState(*(_frozen(x) for x in (P, Sigma, Sigma_sqrt, Sigma_inv, Sigma_inv_sqrt)))
