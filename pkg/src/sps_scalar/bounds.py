"""Tail bounds on the size of SPS intervals and their inversions.

All bounds have the shape ``4 (m - q) * base(eps) ** power(n)`` with the
base in ``(1/2, 1]``. They are evaluated in the log domain and returned
unclamped; :func:`as_probability` clamps at the reporting boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import (
    BoundedRegressor,
    BoundSpec,
    ConstantInNoise,
    GaussianRegressor,
    InvalidSampleSizeError,
    SpsError,
    Target,
    UnsupportedRegimeError,
    UserRegressorMGF,
)

LOG_HALF = math.log(0.5)


def as_probability(raw: float) -> float:
    return min(1.0, max(0.0, raw))


def _log_half_plus_half(x: float) -> float:
    """``log(1/2 + x/2)`` for ``x`` in ``[0, 1]``."""
    return math.log1p(x) + LOG_HALF


def _log_base_exp(exponent: float) -> float:
    """``log(1/2 + exp(-exponent)/2)`` for ``exponent >= 0``."""
    return math.log1p(math.exp(-exponent)) + LOG_HALF


def lemma_tail(epsilon: float, n: int, sigma: float) -> float:
    """Tail bound ``2 (1/2 + exp(-eps^2 / (2 sigma^2)) / 2) ** (n - 1)``.

    Raw value; at ``epsilon = 0`` it equals 2.
    """
    if epsilon < 0:
        raise SpsError(f"epsilon must be nonnegative, got {epsilon}")
    if n <= 2:
        raise SpsError(f"the intersection tail bound needs n > 2, got {n}")
    if not sigma > 0:
        raise SpsError(f"sigma must be positive, got {sigma}")
    log_base = _log_base_exp(epsilon**2 / (2 * sigma**2))
    return math.exp(math.log(2.0) + (n - 1) * log_base)


@dataclass(frozen=True)
class TailQuery:
    epsilon: float
    n: int
    m: int
    q: int
    spec: BoundSpec

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise SpsError(f"epsilon must be finite and nonnegative, got {self.epsilon}")
        if self.n < 2:
            raise SpsError(f"n must be at least 2, got {self.n}")
        if not 0 < self.q < self.m:
            raise SpsError(f"need 0 < q < m, got m={self.m}, q={self.q}")


@dataclass(frozen=True)
class RadiusQuery:
    delta: float
    n: int
    m: int
    q: int
    spec: BoundSpec

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise SpsError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n < 2:
            raise SpsError(f"n must be at least 2, got {self.n}")
        if not 0 < self.q < self.m:
            raise SpsError(f"need 0 < q < m, got m={self.m}, q={self.q}")


def log_base(epsilon: float, spec: BoundSpec) -> float:
    """Log of the per-sample base of the exact-region bound for ``spec``."""
    if isinstance(spec, ConstantInNoise):
        return _log_base_exp(epsilon**2 / (2 * spec.sigma**2))
    if isinstance(spec, BoundedRegressor):
        return _log_base_exp(epsilon**2 * spec.phi_min**2 / (2 * spec.sigma**2))
    if isinstance(spec, GaussianRegressor):
        ratio = 2 * epsilon**2 * spec.sigma_phi**2 / spec.sigma**2
        return _log_half_plus_half(math.exp(-0.5 * math.log1p(ratio)))
    if isinstance(spec, UserRegressorMGF):
        return _log_half_plus_half(spec.evaluate(-(epsilon**2) / spec.sigma**2))
    raise SpsError(f"unknown bound regime {spec!r}")


def _power(n: int, spec: BoundSpec) -> float:
    if isinstance(spec, (GaussianRegressor, UserRegressorMGF)):
        return (n - 1) / 4
    return n - 1


def tail_bound(query: TailQuery) -> float:
    """Bound on ``P(sup over the exact region of |theta - theta*| >= eps)``.

    The constant and bounded-regressor regimes presuppose that the first
    two perturbation signs are fixed to ``+1, -1``.
    """
    spec = query.spec
    if getattr(spec, "target", Target.EXACT) is not Target.EXACT:
        raise SpsError("tail_bound is for the exact region; use outer_tail_bound")
    log_value = (math.log(4 * (query.m - query.q))
                 + _power(query.n, spec) * log_base(query.epsilon, spec))
    return math.exp(log_value)


def outer_tail_bound(query: TailQuery) -> float:
    """Bound on ``P(sup over the outer interval of |theta - lse| >= eps)``."""
    spec = query.spec
    if isinstance(spec, ConstantInNoise):
        scale = 1.0
    elif isinstance(spec, BoundedRegressor):
        scale = spec.phi_min
    else:
        raise UnsupportedRegimeError(
            f"no outer-approximation bound is available for {type(spec).__name__}"
        )
    lb = _log_base_exp(query.epsilon**2 * scale**2 / (8 * spec.sigma**2))
    return math.exp(math.log(4 * (query.m - query.q)) + (query.n - 1) * lb)


def validity_threshold(delta: float, m: int, q: int, spec: BoundSpec) -> float:
    """The inversion is defined only for ``n`` strictly above this value."""
    log_d = math.log(delta / (4 * (m - q)))
    factor = 4.0 if isinstance(spec, (GaussianRegressor, UserRegressorMGF)) else 1.0
    return factor * log_d / LOG_HALF + 1


def min_valid_n(delta: float, m: int, q: int, spec: BoundSpec) -> int:
    return math.floor(validity_threshold(delta, m, q, spec)) + 1


def _inner_log(delta, n, m, q, exponent_scale):
    """``log(2 d**(exponent_scale/(n-1)) - 1)`` with ``d = delta / (4 (m - q))``."""
    log_root = exponent_scale * math.log(delta / (4 * (m - q))) / (n - 1)
    # 2 e**x - 1 = 1 + 2 expm1(x), accurate for x near 0
    return math.log1p(2 * math.expm1(log_root))


def invert_radius(query: RadiusQuery) -> float:
    """Radius ``eps`` with ``bound(eps) = delta``.

    For an exact-region spec this is a ``1 - delta`` bound on
    ``sup |theta - theta*|``. For an outer-approximation spec it is the full
    width of the outer interval, ``2 * half_width``.
    """
    spec, n, m, q, delta = query.spec, query.n, query.m, query.q, query.delta
    target = getattr(spec, "target", Target.EXACT)
    threshold = validity_threshold(delta, m, q, spec)
    if not n > threshold:
        need = min_valid_n(delta, m, q, spec)
        raise InvalidSampleSizeError(
            f"n={n} is below the validity threshold {threshold:.6g}; need n >= {need}", need
        )
    if target is Target.OUTER and not isinstance(spec, (ConstantInNoise, BoundedRegressor)):
        raise UnsupportedRegimeError(
            f"no outer-approximation bound is available for {type(spec).__name__}"
        )

    if isinstance(spec, (ConstantInNoise, BoundedRegressor)):
        inner = -_inner_log(delta, n, m, q, 1.0)
        coeff = 32.0 if target is Target.OUTER else 2.0
        eps = math.sqrt(coeff * spec.sigma**2 * inner)
        if isinstance(spec, BoundedRegressor):
            eps /= spec.phi_min
        return eps
    if isinstance(spec, GaussianRegressor):
        u = 2 * math.expm1(4 * math.log(delta / (4 * (m - q))) / (n - 1))  # 2 d**(4/(n-1)) - 2
        # (1/(1+u))**2 - 1 = -u (2 + u) / (1 + u)**2
        ratio = -u * (2 + u) / (1 + u) ** 2
        return math.sqrt(spec.sigma**2 * ratio / (2 * spec.sigma_phi**2))
    if isinstance(spec, UserRegressorMGF):
        return _invert_numerically(query)
    raise SpsError(f"unknown bound regime {spec!r}")


def _invert_numerically(query: RadiusQuery) -> float:
    target_log = math.log(query.delta)

    def excess(eps):
        q = TailQuery(eps, query.n, query.m, query.q, query.spec)
        return math.log(tail_bound(q)) - target_log

    hi = query.spec.sigma
    for _ in range(200):
        if excess(hi) < 0:
            break
        hi *= 2.0
    else:
        raise SpsError("could not bracket the radius; the mgf may not decay to zero")
    return optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def gaussian_mgf(sigma_phi: float):
    """``t -> E[exp(t X**2)]`` for ``X ~ N(0, sigma_phi**2)``, ``t < 1/(2 sigma_phi**2)``."""

    def mgf(t: float) -> float:
        return 1.0 / math.sqrt(1.0 - 2.0 * t * sigma_phi**2)

    return mgf


def empirical_mgf(samples):
    """Plug-in ``t -> mean(exp(t * x**2))`` over observed regressor samples."""
    sq = np.asarray(samples, float) ** 2
    if sq.size == 0:
        raise SpsError("need at least one regressor sample")

    def mgf(t: float) -> float:
        return float(np.mean(np.exp(t * sq)))

    return mgf
