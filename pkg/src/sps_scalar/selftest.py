"""Fast invariant checks behind ``sps-scalar selftest``."""

from __future__ import annotations

import math
import sys

import numpy as np

from . import bounds, core, montecarlo
from .model import (
    BoundedRegressor,
    ConstantInNoise,
    GaussianRegressor,
    SpsConfig,
    SpsInstance,
    Target,
)

SEED = 20240607


def regions_match(exact, grid, step: float) -> bool:
    """Same component count and every endpoint within one grid step."""
    if len(exact.intervals) != len(grid.intervals):
        return False
    tol = step * (1 + 1e-6)
    for (a_lo, a_hi), (b_lo, b_hi) in zip(exact.intervals, grid.intervals):
        if abs(a_lo - b_lo) > tol or abs(a_hi - b_hi) > tol:
            return False
    return True


def random_instance(rng: np.random.Generator, n_range=(3, 50), m_range=(2, 8)):
    """A random (data, instance, theta_star) triple over mixed noise and regressor models."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    q = int(rng.integers(1, m))
    noise = [montecarlo.UniformNoise(1.0), montecarlo.GaussianNoise(0.5),
             montecarlo.RademacherNoise(0.3)][int(rng.integers(3))]
    regs = [montecarlo.ConstantRegressors(1.0), montecarlo.GaussianRegressors(1.0),
            montecarlo.BoundedRegressors(0.5, 2.0)][int(rng.integers(3))]
    theta_star = float(rng.uniform(-5, 5))
    config = SpsConfig(m, q, n, True)
    data, _ = montecarlo.generate_dataset(n, theta_star, noise, regs, rng)
    inst = core.initialize(config, rng)
    return data, inst, theta_star


def scan_window(data, inst):
    bps = [b for b, _ in core.pairwise_intersections(data, inst).breakpoints()]
    return min(bps) - 1.0, max(bps) + 1.0


def _corrupt(inst: SpsInstance) -> SpsInstance:
    signs = inst.signs.copy()
    signs[:, -1] *= -1
    return SpsInstance(inst.config, signs, inst.tie_break)


def check_oracle(count=20, step=1e-4, inject=None):
    rng = np.random.default_rng(SEED)
    failures = 0
    for _ in range(count):
        data, inst, _ = random_instance(rng, n_range=(3, 30))
        lo, hi = scan_window(data, inst)
        grid = core.grid_scan_region(data, inst, lo, hi, step)
        used = _corrupt(inst) if inject == "signs" else inst
        if not regions_match(core.exact_region(data, used), grid, step):
            failures += 1
    return failures == 0, f"{count - failures}/{count} instances agree"


def check_round_trips(count=200):
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(count):
        delta = float(rng.uniform(0.01, 0.5))
        m = int(rng.integers(2, 6))
        q = int(rng.integers(1, m))
        sigma = float(rng.uniform(0.1, 3))
        kind = int(rng.integers(3))
        spec = [ConstantInNoise(sigma), BoundedRegressor(sigma, float(rng.uniform(0.2, 2))),
                GaussianRegressor(sigma, float(rng.uniform(0.2, 2)))][kind]
        n = bounds.min_valid_n(delta, m, q, spec) + int(rng.integers(0, 500))
        eps = bounds.invert_radius(bounds.RadiusQuery(delta, n, m, q, spec))
        back = bounds.tail_bound(bounds.TailQuery(eps, n, m, q, spec))
        worst = max(worst, abs(back - delta))
        outer = ConstantInNoise(sigma, Target.OUTER)
        width = bounds.invert_radius(bounds.RadiusQuery(delta, n, m, q, outer))
        back = bounds.outer_tail_bound(bounds.TailQuery(width / 2, n, m, q, outer))
        worst = max(worst, abs(back - delta))
    return worst <= 1e-10, f"max |bound(radius(delta)) - delta| = {worst:.3g}"


def check_coverage(k=2000):
    config = SpsConfig(2, 1, 25, True)
    stats = montecarlo.simulate_trials(config, 5.0, montecarlo.UniformNoise(1.0),
                                       montecarlo.ConstantRegressors(1.0), SEED, range(k))
    cov = float(np.mean(stats.covers_true))
    tol = 3 * math.sqrt(0.25 / k)
    return abs(cov - 0.5) <= tol, f"coverage {cov:.4f}, allowed 0.5 +/- {tol:.4f}"


def run(inject=None, out=sys.stdout) -> bool:
    checks = [
        ("oracle-equivalence", lambda: check_oracle(inject=inject)),
        ("inversion-round-trip", check_round_trips),
        ("coverage", check_coverage),
    ]
    all_ok = True
    for name, fn in checks:
        ok, detail = fn()
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
    return all_ok
