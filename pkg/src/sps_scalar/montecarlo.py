"""Seeded Monte Carlo harness comparing SPS interval sizes with the tail bounds.

Each trial owns a random stream keyed by ``(master_seed, n, trial)``, so
results never depend on how trials are scheduled. Within a trial the
stream is consumed in a fixed order: regressors, noise, signs, tie-break
permutation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special

from . import bounds
from .core import (
    MERGE_RTOL,
    DEGENERACY_RTOL,
    _as_generator,
    draw_signs,
    exact_region,
    initialize,
    least_squares,
    outer_approximation,
    quadratic_coefficients,
    stable_roots,
)
from .model import (
    BoundedRegressor,
    ConfidenceRegion,
    ConstantInNoise,
    DataSet,
    GaussianRegressor,
    SpsConfig,
    SpsError,
    Target,
    UnboundedRegionError,
    UserRegressorMGF,
)

CHUNK = 250


# -- noise models -----------------------------------------------------------

@dataclass(frozen=True)
class UniformNoise:
    """``w ~ Unif(-half_width, half_width)``; optimal proxy ``half_width**2 / 3``."""

    half_width: float = 1.0

    def __post_init__(self):
        if not self.half_width >= 0:
            raise SpsError("half_width must be nonnegative")

    @property
    def variance_proxy(self) -> float:
        return self.half_width**2 / 3

    def sample(self, gen: np.random.Generator, size) -> np.ndarray:
        return gen.uniform(-self.half_width, self.half_width, size)


@dataclass(frozen=True)
class GaussianNoise:
    std: float = 1.0

    def __post_init__(self):
        if not self.std >= 0:
            raise SpsError("std must be nonnegative")

    @property
    def variance_proxy(self) -> float:
        return self.std**2

    def sample(self, gen, size):
        return gen.normal(0.0, self.std, size)


@dataclass(frozen=True)
class RademacherNoise:
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale >= 0:
            raise SpsError("scale must be nonnegative")

    @property
    def variance_proxy(self) -> float:
        return self.scale**2

    def sample(self, gen, size):
        return self.scale * (2.0 * gen.integers(0, 2, size) - 1.0)


NoiseModel = Union[UniformNoise, GaussianNoise, RademacherNoise]


# -- regressor models -------------------------------------------------------

@dataclass(frozen=True)
class ConstantRegressors:
    value: float = 1.0

    def __post_init__(self):
        if self.value == 0:
            raise SpsError("constant regressor must be nonzero")

    @property
    def phi_min(self) -> float:
        return abs(self.value)

    def sample(self, gen, n):
        return np.full(n, float(self.value))

    def mgf(self, t: float) -> float:
        return math.exp(t * self.value**2)


@dataclass(frozen=True)
class GaussianRegressors:
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise SpsError("std must be positive")

    def sample(self, gen, n):
        return gen.normal(0.0, self.std, n)

    def mgf(self, t: float) -> float:
        return bounds.gaussian_mgf(self.std)(t)


@dataclass(frozen=True)
class BoundedRegressors:
    """``phi = s * u`` with a random sign ``s`` and ``u ~ Unif(low, high)``, ``low > 0``."""

    low: float = 0.5
    high: float = 1.5

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise SpsError("need 0 < low <= high")

    @property
    def phi_min(self) -> float:
        return self.low

    def sample(self, gen, n):
        mag = gen.uniform(self.low, self.high, n)
        return mag * (2.0 * gen.integers(0, 2, n) - 1.0)

    def mgf(self, t: float) -> float:
        if t == 0:
            return 1.0
        if self.low == self.high:
            return math.exp(t * self.low**2)
        s = math.sqrt(-t)
        width = self.high - self.low
        return (math.sqrt(math.pi) / (2 * s)
                * (special.erf(self.high * s) - special.erf(self.low * s)) / width)


RegressorModel = Union[ConstantRegressors, GaussianRegressors, BoundedRegressors]


def generate_dataset(n: int, theta_star: float, noise: NoiseModel,
                     regressors: RegressorModel, rng) -> tuple[DataSet, np.ndarray]:
    """Draw ``(phi, y)`` from ``y_t = phi_t * theta_star + w_t``; also returns ``w``."""
    if n < 1:
        raise SpsError("n must be positive")
    gen = _as_generator(rng)
    phi = regressors.sample(gen, n)
    w = noise.sample(gen, n)
    return DataSet(phi, phi * theta_star + w), w


def trial_generator(master_seed: int, n: int, trial: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(n, trial))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class TrialResult:
    max_dist_true: float
    outer_half_width: float
    covers_true: bool
    lse: float
    region: ConfidenceRegion
    w: np.ndarray = field(repr=False)
    outer_bounded: bool = True


def run_trial(config: SpsConfig, theta_star: float, noise: NoiseModel,
              regressors: RegressorModel, rng) -> TrialResult:
    rng = _as_generator(rng)
    data, w = generate_dataset(config.n, theta_star, noise, regressors, rng)
    inst = initialize(config, rng)
    region = exact_region(data, inst)
    try:
        outer = outer_approximation(data, inst).half_width
        bounded = True
    except UnboundedRegionError:
        outer, bounded = math.inf, False
    w = w.copy()
    w.setflags(write=False)
    return TrialResult(
        max_dist_true=region.sup_distance(theta_star),
        outer_half_width=outer,
        covers_true=region.contains(theta_star),
        lse=least_squares(data),
        region=region,
        w=w,
        outer_bounded=bounded,
    )


@dataclass(frozen=True)
class TrialStats:
    """Column-wise statistics of a block of trials."""

    max_dist_true: np.ndarray
    outer_half_width: np.ndarray
    covers_true: np.ndarray
    lse: np.ndarray


def _scalar_block(config, theta_star, noise, regressors, master_seed, trials):
    results = [run_trial(config, theta_star, noise, regressors,
                         trial_generator(master_seed, config.n, t)) for t in trials]
    return (np.array([r.max_dist_true for r in results]),
            np.array([r.outer_half_width for r in results]),
            np.array([r.covers_true for r in results], dtype=bool),
            np.array([r.lse for r in results]))


def simulate_trials(config: SpsConfig, theta_star: float, noise: NoiseModel,
                    regressors: RegressorModel, master_seed: int,
                    trials: Sequence[int]) -> TrialStats:
    """Vectorized equivalent of calling :func:`run_trial` for each trial index.

    Trials whose breakpoints are degenerate or coincide are routed through
    :func:`run_trial` itself, so the two paths agree on every input.
    """
    trials = list(trials)
    n, m, q = config.n, config.m, config.q
    k = len(trials)
    phi = np.empty((k, n))
    w = np.empty((k, n))
    signs = np.empty((k, m - 1, n), dtype=np.int8)
    for row, t in enumerate(trials):
        gen = trial_generator(master_seed, n, t)
        phi[row] = regressors.sample(gen, n)
        w[row] = noise.sample(gen, n)
        signs[row] = draw_signs(config, gen)
        gen.permutation(m)  # tie-break; unused by the vectorized path, see below
    y = phi * theta_star + w
    phi2 = phi * phi
    phiy = phi * y
    plus = 1.0 + signs
    minus = 1.0 - signs
    p0 = phi2.sum(axis=1)
    q0 = phiy.sum(axis=1)
    pp = np.einsum("kin,kn->ki", plus, phi2)
    pm = np.einsum("kin,kn->ki", minus, phi2)
    qp = np.einsum("kin,kn->ki", plus, phiy)
    qm = np.einsum("kin,kn->ki", minus, phiy)
    a2, b, c, sd = quadratic_coefficients(pp, pm, qp, qm)
    degenerate = np.any(np.abs(a2) <= DEGENERACY_RTOL * (p0 * p0)[:, None], axis=1)
    degenerate |= p0 <= 0
    safe_a2 = np.where(np.abs(a2) > 0, a2, 1.0)
    lo, hi = stable_roots(safe_a2, b, sd, c)

    bps = np.sort(np.concatenate([lo, hi], axis=1), axis=1)
    gaps = np.diff(bps, axis=1)
    degenerate |= np.any(gaps <= MERGE_RTOL * np.maximum(1.0, np.abs(bps[:, 1:])), axis=1)

    # probes strictly inside each of the K+1 pieces of the line
    reach = np.max(np.abs(bps), axis=1, keepdims=True) + 1.0
    probes = np.concatenate([-reach, 0.5 * (bps[:, :-1] + bps[:, 1:]), reach], axis=1)
    f_minus = qm[:, :, None] - pm[:, :, None] * probes[:, None, :]
    f_plus = qp[:, :, None] - pp[:, :, None] * probes[:, None, :]
    # ties have probability zero at interior probes, so the permutation is
    # never consulted here; degenerate trials fall back to run_trial
    rank = 1 + np.sum(f_minus * f_plus > 0, axis=1)
    seg_ok = rank <= m - q

    n_pieces = seg_ok.shape[1]
    any_ok = seg_ok.any(axis=1)
    first = np.argmax(seg_ok, axis=1)
    last = n_pieces - 1 - np.argmax(seg_ok[:, ::-1], axis=1)
    padded = np.concatenate([np.full((k, 1), -np.inf), bps, np.full((k, 1), np.inf)], axis=1)
    rows = np.arange(k)
    left = padded[rows, first]
    right = padded[rows, last + 1]
    with np.errstate(invalid="ignore"):
        max_dist = np.where(any_ok, np.maximum(np.abs(left - theta_star),
                                               np.abs(right - theta_star)), 0.0)

    idx_l = np.sum(bps < theta_star, axis=1)
    idx_r = np.sum(bps <= theta_star, axis=1)
    covers = seg_ok[rows, idx_l] | seg_ok[rows, idx_r]

    lse = q0 / np.where(p0 > 0, p0, 1.0)
    dist = np.maximum(np.abs(lo - lse[:, None]), np.abs(hi - lse[:, None]))
    outer = -np.sort(-dist, axis=1)[:, q - 1]

    if degenerate.any():
        bad = np.flatnonzero(degenerate)
        md, oh, cv, ls = _scalar_block(config, theta_star, noise, regressors, master_seed,
                                       [trials[j] for j in bad])
        max_dist[bad], outer[bad], covers[bad], lse[bad] = md, oh, cv, ls
    return TrialStats(max_dist, outer, covers, lse)


def empirical_quantile(samples, level: float) -> float:
    """Smallest sample ``x`` with ``#{s <= x} / k >= level``."""
    values = np.sort(np.asarray(samples, float).ravel())
    if values.size == 0:
        raise SpsError("empirical_quantile of an empty sample")
    if not 0 < level <= 1:
        raise SpsError(f"level must lie in (0, 1], got {level}")
    target = level * values.size
    nearest = round(target)
    # 0.9 * 10 must count as exactly 9, not 9.000000000000002
    rank = nearest if abs(target - nearest) <= 1e-9 * values.size else math.ceil(target)
    return float(values[max(rank, 1) - 1])


# -- experiment plans ------------------------------------------------------

REGIMES = ("constant", "bounded", "gaussian", "mgf")


@dataclass(frozen=True)
class ExperimentPlan:
    n_grid: tuple[int, ...]
    k: int
    m: int = 2
    q: int = 1
    theta_star: float = 5.0
    noise: NoiseModel = UniformNoise(1.0)
    regressors: RegressorModel = ConstantRegressors(1.0)
    delta: float = 0.1
    regime: str = "constant"
    sigma2: float | None = None
    fix_signs: bool = True
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        if not self.n_grid:
            raise SpsError("n_grid is empty")
        if min(self.n_grid) < (2 if self.fix_signs else 1):
            raise SpsError("every grid size must allow the fixed signs (n >= 2)")
        if len(set(self.n_grid)) != len(self.n_grid):
            raise SpsError("n_grid contains duplicates")
        if self.k < 1:
            raise SpsError("k must be at least 1")
        if not 0 < self.q < self.m:
            raise SpsError("need 0 < q < m")
        if not 0 < self.delta < 1:
            raise SpsError("delta must lie in (0, 1)")
        if self.regime not in REGIMES:
            raise SpsError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.regime == "gaussian" and not isinstance(self.regressors, GaussianRegressors):
            raise SpsError("the gaussian regime needs gaussian regressors")
        if self.regime == "bounded" and isinstance(self.regressors, GaussianRegressors):
            raise SpsError("the bounded regime needs regressors bounded away from zero")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise SpsError("sigma2 must be positive")

    @property
    def variance_proxy(self) -> float:
        if self.sigma2 is not None:
            return self.sigma2
        return self.noise.variance_proxy

    def bound_spec(self, target: Target = Target.EXACT):
        """The bound regime and target used for the theoretical curves."""
        sigma = math.sqrt(self.variance_proxy)
        if self.regime == "constant":
            return ConstantInNoise(sigma, target)
        if self.regime == "bounded":
            return BoundedRegressor(sigma, self.regressors.phi_min, target)
        if self.regime == "gaussian":
            return GaussianRegressor(sigma, self.regressors.std, target)
        return UserRegressorMGF(sigma, self.regressors.mgf, target)


def default_n_grid(delta: float, regime: str, m: int = 2, q: int = 1, n_max: int = 400):
    factor = 4 if regime in ("gaussian", "mgf") else 1
    spec = GaussianRegressor(1.0, 1.0) if factor == 4 else ConstantInNoise(1.0)
    return tuple(range(bounds.min_valid_n(delta, m, q, spec), n_max + 1))


@dataclass(frozen=True)
class SummaryRow:
    n: int
    emp_exact: float
    emp_outer: float
    theo_exact: float
    theo_outer: float
    coverage: float
    k: int
    seed: int
    valid: bool
    median_exact: float


@dataclass(frozen=True)
class ExperimentSummary:
    rows: tuple[SummaryRow, ...]
    k: int
    master_seed: int
    level: float

    def row(self, n: int) -> SummaryRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)


def _theoretical(plan: ExperimentPlan, n: int, target: Target) -> float:
    spec = plan.bound_spec(target)
    try:
        return bounds.invert_radius(bounds.RadiusQuery(plan.delta, n, plan.m, plan.q, spec))
    except (bounds.InvalidSampleSizeError, bounds.UnsupportedRegimeError):
        return math.nan


def _block_task(args):
    plan, n, seed, trials = args
    config = SpsConfig(plan.m, plan.q, n, plan.fix_signs)
    return simulate_trials(config, plan.theta_star, plan.noise, plan.regressors, seed, trials)


def run_experiment(plan: ExperimentPlan, master_seed: int | None = None,
                   threads: int = 1) -> ExperimentSummary:
    """Run ``plan.k`` trials per grid size and aggregate them.

    Sizes below the validity threshold of the plan's regime get ``nan``
    theoretical values and ``valid = False``. ``threads`` only changes the
    schedule; the summary is identical for any value.
    """
    seed = plan.master_seed if master_seed is None else master_seed
    level = 1 - plan.delta
    tasks = [(plan, n, seed, range(start, min(start + CHUNK, plan.k)))
             for n in plan.n_grid for start in range(0, plan.k, CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(_block_task, tasks))
    else:
        blocks = [_block_task(t) for t in tasks]

    per_n: dict[int, list[TrialStats]] = {}
    for (_, n, _, _), block in zip(tasks, blocks):
        per_n.setdefault(n, []).append(block)

    exact_spec = plan.bound_spec(Target.EXACT)
    rows = []
    for n in plan.n_grid:
        parts = per_n[n]
        dist = np.concatenate([p.max_dist_true for p in parts])
        width = 2 * np.concatenate([p.outer_half_width for p in parts])
        covers = np.concatenate([p.covers_true for p in parts])
        rows.append(SummaryRow(
            n=n,
            emp_exact=empirical_quantile(dist, level),
            emp_outer=empirical_quantile(width, level),
            theo_exact=_theoretical(plan, n, Target.EXACT),
            theo_outer=_theoretical(plan, n, Target.OUTER),
            coverage=float(np.mean(covers)),
            k=plan.k,
            seed=seed,
            valid=n > bounds.validity_threshold(plan.delta, plan.m, plan.q, exact_spec),
            median_exact=float(np.median(dist)),
        ))
    return ExperimentSummary(tuple(rows), plan.k, seed, level)


def lemma_tail_experiment(n: int, noise: NoiseModel, eps_grid: Sequence[float], k: int,
                          master_seed: int) -> np.ndarray:
    """Empirical ``P(|X_plus| >= eps)`` for the sign-weighted noise average.

    ``X_plus = sum (1 + a_t) w_t / sum (1 + a_t)`` with ``a_1 = 1``,
    ``a_2 = -1`` and the remaining ``a_t`` Rademacher.
    """
    if n <= 2:
        raise SpsError("need n > 2")
    gen = np.random.default_rng(np.random.SeedSequence(master_seed))
    values = np.empty(k)
    for start in range(0, k, 10000):
        size = min(10000, k - start)
        alpha = 2.0 * gen.integers(0, 2, size=(size, n)) - 1.0
        alpha[:, 0] = 1.0
        alpha[:, 1] = -1.0
        w = noise.sample(gen, (size, n))
        weights = 1.0 + alpha
        values[start:start + size] = np.abs((weights * w).sum(axis=1) / weights.sum(axis=1))
    eps = np.asarray(eps_grid, float)
    return (values[None, :] >= eps[:, None]).mean(axis=1)
