"""Sign-Perturbed Sums for the scalar regression ``y_t = phi_t * theta + w_t``.

Every perturbed sum ``S_i`` and the reference sum ``S_0`` are affine in
``theta``, so ``S_0**2 - S_i**2`` is a quadratic whose roots are the only
places where the rank of ``S_0**2`` can change. The exact region is
assembled by probing the rank once per piece of the line cut out by those
roots.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ConfidenceRegion,
    DataSet,
    DegenerateRegressorsError,
    OuterInterval,
    SpsConfig,
    SpsError,
    SpsInstance,
    UnboundedRegionError,
)

# relative threshold under which a quadratic/linear coefficient counts as zero
DEGENERACY_RTOL = 1e-12
# relative distance under which two breakpoints are treated as one
MERGE_RTOL = 1e-12
EPS = float(np.finfo(float).eps)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def draw_signs(config: SpsConfig, rng) -> np.ndarray:
    """Random ``(m-1) x n`` sign matrix, honouring the fixed first two signs.

    The full matrix is always drawn before the first two columns are
    overwritten, so stream consumption does not depend on that flag.
    """
    gen = _as_generator(rng)
    signs = 2 * gen.integers(0, 2, size=(config.m - 1, config.n), dtype=np.int8) - 1
    if config.fix_first_two_signs:
        signs[:, 0] = 1
        signs[:, 1] = -1
    return signs


def initialize(config: SpsConfig, rng=None) -> SpsInstance:
    """Draw the random signs, then the tie-break permutation, from ``rng``."""
    gen = _as_generator(rng)
    signs = draw_signs(config, gen)
    perm = gen.permutation(config.m)
    return SpsInstance(config=config, signs=signs, tie_break=perm)


@dataclass(frozen=True)
class SumsAtTheta:
    theta: float
    s0: float
    si: np.ndarray


def _check_lengths(data: DataSet, inst: SpsInstance):
    if data.n != inst.config.n:
        raise SpsError(f"data has {data.n} samples but the instance expects {inst.config.n}")


def sums_at(theta: float, data: DataSet, inst: SpsInstance) -> SumsAtTheta:
    """Reference and perturbed sums of the prediction errors at ``theta``."""
    _check_lengths(data, inst)
    weighted = data.phi * (data.y - data.phi * theta)
    s0 = float(weighted.sum())
    si = inst.signs @ weighted
    si.setflags(write=False)
    return SumsAtTheta(theta=float(theta), s0=s0, si=si)


def _rank_from_flags(greater: np.ndarray, tied: np.ndarray, tie_break: np.ndarray) -> np.ndarray:
    """Rank of ``S_0**2`` given per-sum comparison flags.

    ``greater``/``tied`` have shape ``(m-1, ...)``; a tie counts against
    ``S_0`` when its tie-break label is larger.
    """
    wins_tie = (tie_break[0] > tie_break[1:]).reshape((-1,) + (1,) * (greater.ndim - 1))
    beats = greater | (tied & wins_tie)
    return 1 + beats.sum(axis=0)


def _compare(s0, si, scale, n):
    """``(greater, tied)`` flags for ``S_0**2`` against each ``S_i**2``.

    Magnitudes closer than the rounding error of the sums count as tied.
    ``scale`` bounds the summands, ``sum |phi_t| (|y_t| + |phi_t theta|)``.
    """
    tol = 2 * (n + 2) * EPS * scale
    diff = np.abs(s0) - np.abs(si)
    return diff > tol, np.abs(diff) <= tol


def rank_of(theta: float, data: DataSet, inst: SpsInstance) -> int:
    sums = sums_at(theta, data, inst)
    scale = float(np.sum(np.abs(data.phi) * (np.abs(data.y) + np.abs(data.phi * theta))))
    greater, tied = _compare(sums.s0, sums.si, scale, data.n)
    return int(_rank_from_flags(greater, tied, inst.tie_break))


def indicator(theta: float, data: DataSet, inst: SpsInstance) -> bool:
    """True when ``theta`` belongs to the SPS confidence region."""
    return rank_of(theta, data, inst) <= inst.m - inst.q


def least_squares(data: DataSet) -> float:
    denom = float(np.dot(data.phi, data.phi))
    if denom <= 0:
        raise DegenerateRegressorsError("all regressors are zero")
    return float(np.dot(data.phi, data.y)) / denom


class RootKind(enum.Enum):
    ROOTS = "roots"
    NO_ROOT = "no_root"
    ALL_REALS = "all_reals"
    HALF_LINE = "half_line"


@dataclass(frozen=True)
class Intersection:
    """Solution set of ``S_0**2(theta) = S_i**2(theta)`` for one perturbed sum.

    For ``ROOTS`` the feasible set ``{S_0**2 <= S_i**2}`` is
    ``[roots[0], roots[1]]``. For ``HALF_LINE`` it is ``theta <= roots[0]``
    when ``direction == -1`` and ``theta >= roots[0]`` when ``+1``.
    ``ALL_REALS`` means the two parabolas coincide.
    """

    kind: RootKind
    roots: tuple[float, ...] = ()
    direction: int = 0


@dataclass(frozen=True)
class PairwiseIntersections:
    items: tuple[Intersection, ...]

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def breakpoints(self) -> list[tuple[float, int]]:
        """All finite roots as ``(value, sum_index)`` pairs, sorted by value."""
        out = [(r, i) for i, it in enumerate(self.items) for r in it.roots]
        return sorted(out)


@dataclass(frozen=True)
class SplitSums:
    """Sums over the samples where a perturbed sign agrees/disagrees with +1.

    ``p_plus[i] = sum (1 + alpha_it) phi_t**2`` and so on. The reference and
    perturbed sums are ``S_0 = (q_plus + q_minus)/2 - theta (p_plus + p_minus)/2``
    and ``S_i = (q_plus - q_minus)/2 - theta (p_plus - p_minus)/2``.
    """

    p0: float
    q0: float
    p_plus: np.ndarray
    p_minus: np.ndarray
    q_plus: np.ndarray
    q_minus: np.ndarray


def split_sums(data: DataSet, inst: SpsInstance) -> SplitSums:
    _check_lengths(data, inst)
    phi2 = data.phi * data.phi
    phiy = data.phi * data.y
    plus = 1.0 + inst.signs
    minus = 1.0 - inst.signs
    return SplitSums(
        p0=float(phi2.sum()),
        q0=float(phiy.sum()),
        p_plus=plus @ phi2,
        p_minus=minus @ phi2,
        q_plus=plus @ phiy,
        q_minus=minus @ phiy,
    )


def quadratic_coefficients(p_plus, p_minus, q_plus, q_minus):
    """Coefficients of ``S_0**2 - S_i**2 = a2 theta**2 + 2 b theta + c``.

    Also returns ``sqrt(b**2 - a2 c)``, which is computed as the absolute
    value of a 2x2 determinant instead of by subtraction, so near-double
    roots do not lose their discriminant to cancellation.
    """
    a2 = p_plus * p_minus
    b = -0.5 * (p_plus * q_minus + p_minus * q_plus)
    c = q_plus * q_minus
    sqrt_disc = 0.5 * np.abs(p_minus * q_plus - p_plus * q_minus)
    return a2, b, c, sqrt_disc


def stable_roots(a2, b, sqrt_disc, c):
    """Roots of ``a2 x**2 + 2 b x + c`` without catastrophic cancellation.

    Assumes ``a2 != 0``. Returns ``(low, high)`` elementwise.
    """
    a2, b, sqrt_disc, c = np.broadcast_arrays(*map(np.asarray, (a2, b, sqrt_disc, c)))
    t = -(b + np.copysign(sqrt_disc, b))
    nonzero = t != 0
    safe_t = np.where(nonzero, t, 1.0)
    r1 = np.where(nonzero, t / a2, -b / a2)
    r2 = np.where(nonzero, c / safe_t, -b / a2)
    return np.minimum(r1, r2), np.maximum(r1, r2)


def classify_intersection(p0, q0, pp, pm, qp, qm) -> Intersection:
    """Solve one pair from its split sums, tagging degenerate cases."""
    a2, b, c, sd = quadratic_coefficients(pp, pm, qp, qm)
    if abs(a2) > DEGENERACY_RTOL * p0 * p0:
        lo, hi = stable_roots(a2, b, sd, c)
        return Intersection(RootKind.ROOTS, (float(lo), float(hi)))
    qi = 0.5 * (qp - qm)
    if abs(b) > DEGENERACY_RTOL * p0 * (abs(q0) + abs(qi)):
        root = -c / (2.0 * b)
        return Intersection(RootKind.HALF_LINE, (float(root),), -1 if b > 0 else 1)
    if c > DEGENERACY_RTOL * (q0 * q0 + qi * qi):
        return Intersection(RootKind.NO_ROOT)
    return Intersection(RootKind.ALL_REALS)


def pairwise_intersections(data: DataSet, inst: SpsInstance) -> PairwiseIntersections:
    s = split_sums(data, inst)
    items = tuple(
        classify_intersection(s.p0, s.q0, s.p_plus[i], s.p_minus[i], s.q_plus[i], s.q_minus[i])
        for i in range(inst.m - 1)
    )
    return PairwiseIntersections(items)


def _merge_breakpoints(points: list[tuple[float, int]]) -> list[tuple[float, float, set[int]]]:
    """Group sorted breakpoints closer than ``MERGE_RTOL``; each group keeps its span."""
    clusters: list[tuple[list[float], set[int]]] = []
    for value, i in points:
        if clusters:
            vals, idx = clusters[-1]
            if abs(value - vals[-1]) <= MERGE_RTOL * max(1.0, abs(value)):
                vals.append(value)
                idx.add(i)
                continue
        clusters.append(([value], {i}))
    return [(float(min(vals)), float(max(vals)), idx) for vals, idx in clusters]


def _greater_at(thetas: np.ndarray, s: SplitSums) -> np.ndarray:
    """``S_0**2 > S_i**2`` at each theta, shape ``(m-1, len(thetas))``.

    Uses ``S_0**2 - S_i**2 = (S_0 - S_i)(S_0 + S_i)``, whose factors are
    exactly the minus/plus split sums.
    """
    th = thetas[None, :]
    minus = s.q_minus[:, None] - s.p_minus[:, None] * th
    plus = s.q_plus[:, None] - s.p_plus[:, None] * th
    return minus * plus > 0


def exact_region(data: DataSet, inst: SpsInstance) -> ConfidenceRegion:
    """The set ``{theta : indicator(theta)}`` as sorted closed intervals.

    Components are closures of the accepted set. Breakpoints are evaluated
    with the sums of the pairs meeting there treated as exactly tied, so
    the tie-break permutation decides isolated points such as the
    noiseless single-point region.
    """
    s = split_sums(data, inst)
    inter = pairwise_intersections(data, inst)
    always_tied = np.array([it.kind is RootKind.ALL_REALS for it in inter.items])
    points = inter.breakpoints()
    accept_max = inst.m - inst.q
    tb = inst.tie_break

    if not points:
        probe = np.array([least_squares(data) if s.p0 > 0 else 0.0])
        greater = _greater_at(probe, s) & ~always_tied[:, None]
        ok = _rank_from_flags(greater, always_tied[:, None], tb)[0] <= accept_max
        if ok:
            return ConfidenceRegion(((-math.inf, math.inf),), True, True)
        return ConfidenceRegion()

    if s.p0 > 0:
        # S_0 vanishes at the LSE; roots that round to it must share its cluster
        points = sorted(points + [(least_squares(data), -1)])
    clusters = [(lo, hi, idx - {-1}) for lo, hi, idx in _merge_breakpoints(points)]
    lows = np.array([lo for lo, _, _ in clusters])
    highs = np.array([hi for _, hi, _ in clusters])
    bps = 0.5 * (lows + highs)
    reach = float(max(np.max(np.abs(lows)), np.max(np.abs(highs)))) + 1.0
    seg_probe = np.concatenate(([-reach], 0.5 * (highs[:-1] + lows[1:]), [reach]))
    greater = _greater_at(seg_probe, s) & ~always_tied[:, None]
    seg_ok = _rank_from_flags(greater, np.repeat(always_tied[:, None], seg_probe.size, 1), tb)
    seg_ok = seg_ok <= accept_max

    pt_ok = np.empty(bps.size, dtype=bool)
    pt_greater = _greater_at(bps, s)
    for j, (_, _, idx) in enumerate(clusters):
        tied = always_tied.copy()
        tied[list(idx)] = True
        g = pt_greater[:, j] & ~tied
        pt_ok[j] = _rank_from_flags(g, tied, tb) <= accept_max

    # pieces alternate: segment 0, point 0, segment 1, ..., point K-1, segment K
    k = bps.size
    pieces = []
    for j in range(k + 1):
        lo_edge = -math.inf if j == 0 else float(highs[j - 1])
        hi_edge = math.inf if j == k else float(lows[j])
        pieces.append((lo_edge, hi_edge, bool(seg_ok[j])))
        if j < k:
            covered = bool(pt_ok[j] or seg_ok[j] or seg_ok[j + 1])
            pieces.append((float(lows[j]), float(highs[j]), covered))

    intervals = []
    run_lo = None
    run_hi = None
    for lo_edge, hi_edge, covered in pieces:
        if covered:
            if run_lo is None:
                run_lo = lo_edge
            run_hi = hi_edge
        elif run_lo is not None:
            intervals.append((run_lo, run_hi))
            run_lo = None
    if run_lo is not None:
        intervals.append((run_lo, run_hi))

    return ConfidenceRegion(
        tuple(intervals),
        unbounded_low=bool(intervals and intervals[0][0] == -math.inf),
        unbounded_high=bool(intervals and intervals[-1][1] == math.inf),
    )


def outer_approximation(data: DataSet, inst: SpsInstance) -> OuterInterval:
    """Symmetric interval around the LSE containing the exact region.

    Program ``i`` maximizes ``S_0**2`` (a parabola centred at the LSE) over
    ``{S_0**2 <= S_i**2}``; its optimum sits at the feasible root farthest
    from the LSE. A point of the region is feasible for at least ``q``
    programs, so the ``q``-th largest of those distances is a valid
    half-width.
    """
    center = least_squares(data)
    inter = pairwise_intersections(data, inst)
    dists = []
    for it in inter.items:
        if it.kind is RootKind.ROOTS:
            dists.append(max(abs(r - center) for r in it.roots))
        elif it.kind is RootKind.NO_ROOT:
            dists.append(0.0)
        else:
            dists.append(math.inf)
    dists.sort(reverse=True)
    half_width = dists[inst.q - 1]
    if math.isinf(half_width):
        raise UnboundedRegionError(
            "outer approximation is unbounded: too many perturbed sums with unbounded feasible sets"
        )
    return OuterInterval(center=center, half_width=float(half_width), r_n=data.r_n)


def _ranks_on_grid(grid: np.ndarray, data: DataSet, inst: SpsInstance, chunk: int = 20000):
    out = np.empty(grid.size, dtype=np.int64)
    signs = inst.signs.astype(float)
    for start in range(0, grid.size, chunk):
        th = grid[start:start + chunk]
        weighted = data.phi[None, :] * (data.y[None, :] - th[:, None] * data.phi[None, :])
        scale = (np.abs(data.phi)[None, :]
                 * (np.abs(data.y)[None, :] + np.abs(th[:, None] * data.phi[None, :]))).sum(axis=1)
        greater, tied = _compare(weighted.sum(axis=1), (weighted @ signs.T).T, scale, data.n)
        out[start:start + chunk] = _rank_from_flags(greater, tied, inst.tie_break)
    return out


def grid_scan_region(data: DataSet, inst: SpsInstance, lo: float, hi: float,
                     step: float) -> ConfidenceRegion:
    """Brute-force region: evaluate the indicator on ``lo, lo+step, ..., <= hi``.

    Each run of accepted grid points becomes the interval between its first
    and last point. Meant as a test oracle for :func:`exact_region`.
    """
    if not lo < hi:
        raise SpsError("need lo < hi")
    if not step > 0:
        raise SpsError("step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    grid = lo + step * np.arange(count)
    ok = _ranks_on_grid(grid, data, inst) <= inst.m - inst.q
    if not ok.any():
        return ConfidenceRegion()
    edges = np.diff(ok.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    stops = list(np.flatnonzero(edges == -1))
    if ok[0]:
        starts.insert(0, 0)
    if ok[-1]:
        stops.append(grid.size - 1)
    return ConfidenceRegion(tuple((float(grid[a]), float(grid[b])) for a, b in zip(starts, stops)))
