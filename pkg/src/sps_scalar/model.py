"""Domain types shared by the SPS routines.

Everything here is immutable after construction. Arrays held by the
dataclasses are copied and flagged read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence, Union

import numpy as np


class SpsError(ValueError):
    """Base class for invalid inputs to the SPS routines."""


class DegenerateRegressorsError(SpsError):
    """All regressors are zero, so the least-squares estimate is undefined."""


class UnboundedRegionError(SpsError):
    """A per-sum feasible set of the outer approximation is unbounded."""


class InvalidSampleSizeError(SpsError):
    """The sample size is below the validity threshold of an inversion formula."""

    def __init__(self, message: str, min_n: int):
        super().__init__(message)
        self.min_n = min_n


class UnsupportedRegimeError(SpsError):
    """No bound is available for the requested regime/target combination."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpsConfig:
    """Confidence parameters of one SPS construction.

    The confidence level is ``p = 1 - q/m``, kept as an exact fraction.
    """

    m: int
    q: int
    n: int
    fix_first_two_signs: bool = True

    def __post_init__(self):
        for name in ("m", "q", "n"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise SpsError(f"{name} must be an integer, got {value!r}")
        if not 0 < self.q < self.m:
            raise SpsError(f"need 0 < q < m, got m={self.m}, q={self.q}")
        if self.n < 1:
            raise SpsError(f"n must be positive, got {self.n}")
        if self.fix_first_two_signs and self.n < 2:
            raise SpsError("fixing the first two signs requires n >= 2")

    @property
    def p(self) -> Fraction:
        return 1 - Fraction(self.q, self.m)


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, bool):
        raise SpsError(f"confidence level must be rational, got {p!r}")
    if isinstance(p, (int, np.integer)):
        return Fraction(int(p))
    if isinstance(p, (float, np.floating)):
        if not math.isfinite(p):
            raise SpsError(f"confidence level must be finite, got {p!r}")
        # the shortest decimal repr is what the caller typed: 0.8 -> 4/5
        return Fraction(repr(float(p)))
    if isinstance(p, str):
        try:
            return Fraction(p.strip())
        except ValueError as exc:
            raise SpsError(f"cannot parse confidence level {p!r}") from exc
    if isinstance(p, tuple) and len(p) == 2:
        return Fraction(int(p[0]), int(p[1]))
    raise SpsError(f"unsupported confidence level {p!r}")


def config_from_level(p, n: int, fix_signs: bool = True) -> SpsConfig:
    """Build the config with the smallest ``(m, q)`` such that ``p = 1 - q/m``.

    ``p`` may be a :class:`~fractions.Fraction`, a decimal float or string
    (``0.8``, ``"19/20"``) or a ``(numerator, denominator)`` pair.

    >>> cfg = config_from_level(0.95, 100)
    >>> (cfg.m, cfg.q)
    (20, 1)
    """
    frac = _as_fraction(p)
    if not 0 < frac < 1:
        raise SpsError(f"confidence level must lie in (0, 1), got {frac}")
    m = frac.denominator
    q = m - frac.numerator
    return SpsConfig(m=m, q=q, n=n, fix_first_two_signs=fix_signs)


@dataclass(frozen=True)
class SpsInstance:
    """Realized randomness of one SPS run.

    ``signs[i, t]`` is the sign of perturbed sum ``i + 1`` at sample ``t``;
    ``tie_break[j]`` is the label used to break ties of sum ``j`` (sum 0 is
    the reference sum).
    """

    config: SpsConfig
    signs: np.ndarray
    tie_break: np.ndarray

    def __post_init__(self):
        cfg = self.config
        signs = _frozen_array(self.signs, np.int8)
        perm = _frozen_array(self.tie_break, np.int64)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "tie_break", perm)
        if signs.shape != (cfg.m - 1, cfg.n):
            raise SpsError(f"signs must have shape {(cfg.m - 1, cfg.n)}, got {signs.shape}")
        if not np.all(np.abs(signs) == 1):
            raise SpsError("every sign must be +1 or -1")
        if perm.shape != (cfg.m,) or not np.array_equal(np.sort(perm), np.arange(cfg.m)):
            raise SpsError("tie_break must be a permutation of 0..m-1")
        if cfg.fix_first_two_signs and not (
            np.all(signs[:, 0] == 1) and np.all(signs[:, 1] == -1)
        ):
            raise SpsError("fixed-sign instance needs signs (+1, -1) at positions 1 and 2")

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def q(self) -> int:
        return self.config.q


@dataclass(frozen=True)
class DataSet:
    """Regressors ``phi`` and outputs ``y`` of the scalar model ``y = phi * theta + w``."""

    phi: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        phi = _frozen_array(self.phi, float).ravel()
        y = _frozen_array(self.y, float).ravel()
        phi.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "y", y)
        if phi.size == 0:
            raise SpsError("data set is empty")
        if phi.size != y.size:
            raise SpsError(f"phi has {phi.size} entries but y has {y.size}")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(y))):
            raise SpsError("data contains non-finite values")

    @property
    def n(self) -> int:
        return self.phi.size

    @property
    def r_n(self) -> float:
        """Mean squared regressor, ``(1/n) * sum(phi**2)``."""
        return float(np.dot(self.phi, self.phi)) / self.n


@dataclass(frozen=True)
class ConfidenceRegion:
    """Union of disjoint closed intervals, sorted left to right.

    Half-infinite components carry ``-inf``/``inf`` endpoints and set the
    matching ``unbounded_*`` flag.
    """

    intervals: tuple[tuple[float, float], ...] = ()
    unbounded_low: bool = False
    unbounded_high: bool = False

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        for lo, hi in ivs:
            if not lo <= hi:
                raise SpsError(f"interval [{lo}, {hi}] has lo > hi")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if not hi < lo:
                raise SpsError("intervals must be sorted and pairwise disjoint")
        if self.unbounded_low != bool(ivs and ivs[0][0] == -math.inf):
            raise SpsError("unbounded_low flag disagrees with the intervals")
        if self.unbounded_high != bool(ivs and ivs[-1][1] == math.inf):
            raise SpsError("unbounded_high flag disagrees with the intervals")

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def is_bounded(self) -> bool:
        return not (self.unbounded_low or self.unbounded_high)

    @property
    def hull(self) -> tuple[float, float]:
        if self.is_empty:
            raise SpsError("empty region has no hull")
        return self.intervals[0][0], self.intervals[-1][1]

    def contains(self, theta: float) -> bool:
        return any(lo <= theta <= hi for lo, hi in self.intervals)

    def sup_distance(self, point: float) -> float:
        """``sup |theta - point|`` over the region (0 for an empty region)."""
        if self.is_empty:
            return 0.0
        lo, hi = self.hull
        return max(abs(lo - point), abs(hi - point))


@dataclass(frozen=True)
class OuterInterval:
    """Symmetric interval around the least-squares estimate."""

    center: float
    half_width: float
    r_n: float

    def __post_init__(self):
        if not self.half_width >= 0:
            raise SpsError(f"half_width must be nonnegative, got {self.half_width}")
        if not self.r_n > 0:
            raise SpsError(f"r_n must be positive, got {self.r_n}")

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    @property
    def radius(self) -> float:
        """The ``r`` of the ellipsoid form ``(theta - center)**2 * r_n <= r``."""
        return self.half_width**2 * self.r_n

    def contains(self, theta: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= theta <= self.hi + slack


class Target(enum.Enum):
    EXACT = "exact"
    OUTER = "outer"


def _positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and value > 0
            and math.isfinite(value)):
        raise SpsError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class ConstantInNoise:
    """Subgaussian noise with proxy ``sigma**2``, unit regressors."""

    sigma: float
    target: Target = Target.EXACT

    def __post_init__(self):
        _positive("sigma", self.sigma)


@dataclass(frozen=True)
class BoundedRegressor:
    """Regressors bounded away from zero by ``phi_min``."""

    sigma: float
    phi_min: float
    target: Target = Target.EXACT

    def __post_init__(self):
        _positive("sigma", self.sigma)
        _positive("phi_min", self.phi_min)


@dataclass(frozen=True)
class GaussianRegressor:
    """I.i.d. ``N(0, sigma_phi**2)`` regressors."""

    sigma: float
    sigma_phi: float
    target: Target = Target.EXACT

    def __post_init__(self):
        _positive("sigma", self.sigma)
        _positive("sigma_phi", self.sigma_phi)


@dataclass(frozen=True)
class UserRegressorMGF:
    """Identically distributed regressors described by ``t -> E[exp(t * phi**2)]``.

    The evaluator is only called with ``t <= 0``.
    """

    sigma: float
    mgf: Callable[[float], float] = field(compare=False)
    target: Target = Target.EXACT

    def __post_init__(self):
        _positive("sigma", self.sigma)
        if not callable(self.mgf):
            raise SpsError("mgf must be callable")

    def evaluate(self, t: float) -> float:
        if t > 0:
            raise SpsError(f"mgf is only defined here for t <= 0, got {t}")
        value = float(self.mgf(t))
        if t == 0 and value != 1.0:
            raise SpsError(f"mgf(0) must equal 1, got {value}")
        if not 0 < value <= 1:
            raise SpsError(f"mgf({t}) = {value} lies outside (0, 1]")
        return value


BoundSpec = Union[ConstantInNoise, BoundedRegressor, GaussianRegressor, UserRegressorMGF]


def as_dataset(phi: Sequence[float], y: Sequence[float]) -> DataSet:
    return DataSet(np.asarray(phi, float), np.asarray(y, float))
