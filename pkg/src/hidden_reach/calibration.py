"""Detector thresholds and probabilistic disturbance caps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate

from .errors import DegeneracyError, NumericalError, ValidationError
from .model import check_psd

log = logging.getLogger(__name__)

_EPS = 1e-16
_MAX_TERMS = 10_000
_ROOT_ITERS = 200


def reg_lower_incomplete_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x).

    Power series below ``x = a + 1``, Lentz continued fraction for the upper
    function above it.
    """
    if not a > 0:
        raise ValidationError(f"shape a must be positive, got {a}")
    if x < 0:
        raise ValidationError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    log_prefix = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(_MAX_TERMS):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                return min(1.0, total * math.exp(log_prefix))
        raise NumericalError(f"incomplete gamma series did not converge (a={a}, x={x})")
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return max(0.0, 1.0 - math.exp(log_prefix) * h)
    raise NumericalError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _invert_cdf(cdf, target: float, start: float, what: str, rtol: float = 1e-13) -> float:
    """Bisection for ``cdf(x) = target`` on ``[0, upper]``, doubling ``upper`` to bracket."""
    hi = max(start, 1e-12)
    for _ in range(_ROOT_ITERS):
        if cdf(hi) >= target:
            break
        hi *= 2.0
    else:
        raise NumericalError(f"{what}: could not bracket quantile {target}")
    lo = 0.0
    for _ in range(_ROOT_ITERS):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            return 0.5 * (lo + hi)
    raise NumericalError(f"{what}: bisection stalled, bracket [{lo}, {hi}]")


def chi2_threshold(m: int, A: float) -> float:
    """Chi-squared detector threshold giving false-alarm rate ``A`` with ``m`` dof."""
    if int(m) != m or m < 1:
        raise ValidationError(f"degrees of freedom must be a positive integer, got {m}")
    if not 0.0 < A < 1.0:
        raise ValidationError(f"false-alarm rate must lie in (0, 1), got {A}")
    target = 1.0 - A
    alpha = _invert_cdf(lambda x: reg_lower_incomplete_gamma(m / 2.0, x / 2.0), target, float(m), "chi2_threshold")
    residual = abs(reg_lower_incomplete_gamma(m / 2.0, alpha / 2.0) - target)
    if residual > 1e-8:
        raise NumericalError(f"chi2_threshold residual {residual:.3e} after bisection")
    return alpha


@dataclass(frozen=True)
class DetectorCalibration:
    A: float
    m: int
    alpha: float

    @classmethod
    def from_rate(cls, A: float, m: int) -> "DetectorCalibration":
        return cls(A=A, m=m, alpha=chi2_threshold(m, A))

    def check(self) -> None:
        if not 0.0 < self.A < 1.0:
            raise ValidationError(f"false-alarm rate must lie in (0, 1), got {self.A}")
        p = reg_lower_incomplete_gamma(self.m / 2.0, self.alpha / 2.0)
        if abs(p - (1.0 - self.A)) > 1e-6:
            raise ValidationError(f"threshold {self.alpha} is inconsistent with rate {self.A}")


# --- generalized chi-squared ------------------------------------------------------


def gen_chi2_cdf(x: float, weights) -> float:
    """CDF of ``sum_i w_i * chi2_1`` (positive weights) by Imhof's inversion integral.

    The oscillatory tail is written as amplitude times ``cos``/``sin`` of
    ``x u / 2`` and integrated with QUADPACK's Fourier-integral routine.
    """
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    if w.size == 0:
        raise DegeneracyError("generalized chi-squared needs at least one positive weight")
    if x <= 0:
        return 0.0
    omega = 0.5 * x

    def phase(u):
        return 0.5 * np.sum(np.arctan(w * u))

    def rho(u):
        return np.prod((1.0 + (w * u) ** 2) ** 0.25)

    def integrand(u: float) -> float:
        if u == 0.0:
            return 0.5 * (w.sum() - x)
        return math.sin(phase(u) - omega * u) / (u * rho(u))

    split = 40.0 * math.pi / omega
    head, _ = integrate.quad(integrand, 0.0, split, limit=500, epsabs=1e-13, epsrel=1e-12)
    # sin(phi - omega u) = sin(phi) cos(omega u) - cos(phi) sin(omega u)
    tail_c, _ = integrate.quad(
        lambda u: math.sin(phase(u)) / (u * rho(u)), split, np.inf, weight="cos", wvar=omega, limlst=100
    )
    tail_s, _ = integrate.quad(
        lambda u: math.cos(phase(u)) / (u * rho(u)), split, np.inf, weight="sin", wvar=omega, limlst=100
    )
    total = head + tail_c - tail_s
    return float(min(1.0, max(0.0, 0.5 - total / math.pi)))


class QuantileMethod(str, Enum):
    EXACT = "exact"
    GAMMA = "gamma"
    MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class NoiseBound:
    p: float
    v_bar: float
    method: QuantileMethod


def gamma_approx_params(R1) -> tuple[float, float]:
    """Shape/scale of the gamma law that ``||v||^2`` follows when ``R1 = s*I``.

    For ``R1 = s*I_n`` the norm is ``s * chi2_n``, i.e. Gamma(n/2, 2s); the
    approximation plugs ``s = tr(R1)/n``.  Off-diagonal terms are ignored,
    which is what makes this a replication recipe rather than an exact law.
    """
    R1 = np.asarray(R1, dtype=float)
    n = R1.shape[0]
    return n / 2.0, 2.0 * float(np.trace(R1)) / n


def noise_norm_quantile(
    R1,
    p: float,
    method: QuantileMethod | str = QuantileMethod.EXACT,
    n_samples: int = 1_000_000,
    seed: int = 0,
) -> NoiseBound:
    """Cap ``v_bar`` with ``pr[||v||^2 <= v_bar] = p`` for ``v ~ N(0, R1)``."""
    method = QuantileMethod(method)
    if not 0.0 < p < 1.0:
        raise ValidationError(f"probability must lie in (0, 1), got {p}")
    R1 = check_psd(np.array(R1, dtype=float, ndmin=2), "R1")
    lam = np.clip(np.linalg.eigvalsh(R1), 0.0, None)
    if lam.max(initial=0.0) <= 0.0:
        raise DegeneracyError("R1 is identically zero; the noise norm has no spread")
    if method is QuantileMethod.GAMMA:
        shape, scale = gamma_approx_params(R1)
        v_bar = scale * _invert_cdf(lambda t: reg_lower_incomplete_gamma(shape, t), p, shape, "gamma quantile")
    elif method is QuantileMethod.EXACT:
        lam = lam[lam > 1e-14 * lam.max()]
        if np.allclose(lam, lam[0], rtol=1e-12):
            # scaled chi-squared: use the incomplete gamma directly
            v_bar = lam[0] * _invert_cdf(
                lambda t: reg_lower_incomplete_gamma(lam.size / 2.0, t / 2.0), p, float(lam.size), "chi2 quantile"
            )
        else:
            v_bar = _invert_cdf(lambda t: gen_chi2_cdf(t, lam), p, float(lam.sum()), "generalized chi2 quantile", 1e-11)
    else:
        rng = np.random.default_rng(seed)
        chunks = []
        left = int(n_samples)
        while left > 0:
            size = min(left, 1_000_000)
            z = rng.standard_normal((size, lam.size))
            chunks.append((z * z) @ lam)
            left -= size
        v_bar = float(np.quantile(np.concatenate(chunks), p))
    return NoiseBound(p=p, v_bar=float(v_bar), method=method)


# --- Markov bound on the attack excess --------------------------------------------


@dataclass(frozen=True)
class AttackMoments:
    mean: np.ndarray
    second_moment: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mean, dtype=float).reshape(-1)
        M = check_psd(np.array(self.second_moment, dtype=float, ndmin=2), "second_moment")
        if M.shape != (mu.size, mu.size):
            raise ValidationError("second moment and mean dimensions differ")
        check_psd(M - np.outer(mu, mu), "second_moment - mean mean^T")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "second_moment", M)

    @classmethod
    def attack_free(cls, m: int) -> "AttackMoments":
        """Moments of the normalized residual without attack: zero mean, identity."""
        return cls(mean=np.zeros(m), second_moment=np.eye(m))


def markov_epsilon(moments: AttackMoments, A: float, a_p: float, alpha: float) -> float:
    """Smallest excess ``eps`` such that Markov gives ``pr[||zeta||^2 > alpha + eps] <= A - a_p``.

    Can be negative when the attack energy is small; see :func:`clamp_epsilon`.
    """
    if not 0.0 < a_p < A:
        raise ValidationError(f"need 0 < a_p < A, got a_p={a_p}, A={A}")
    energy = float(np.trace(moments.second_moment) + moments.mean @ moments.mean)
    return energy / (A - a_p) - alpha


def clamp_epsilon(eps: float) -> float:
    if eps < 0.0:
        log.warning("Markov excess %.6g is negative; clamping to 0", eps)
        return 0.0
    return eps
