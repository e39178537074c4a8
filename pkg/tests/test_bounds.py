import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from sps_scalar import bounds
from sps_scalar.bounds import RadiusQuery, TailQuery
from sps_scalar.model import (
    BoundedRegressor,
    ConstantInNoise,
    GaussianRegressor,
    InvalidSampleSizeError,
    SpsError,
    Target,
    UnsupportedRegimeError,
    UserRegressorMGF,
)

mpmath.mp.dps = 40
SIGMA_U = math.sqrt(1 / 3)  # variance proxy of Uniform(-1, 1)


def mp_constant_eps(delta, n, sigma2, m=2, q=1, coeff=2):
    d = mpmath.mpf(delta) / (4 * (m - q))
    return mpmath.sqrt(-coeff * mpmath.mpf(sigma2) * mpmath.log(2 * d ** (mpmath.mpf(1) / (n - 1)) - 1))


def mp_gaussian_eps(delta, n, sigma2, sigma_phi2, m=2, q=1):
    d = mpmath.mpf(delta) / (4 * (m - q))
    u = 2 * d ** (mpmath.mpf(4) / (n - 1)) - 1
    return mpmath.sqrt(mpmath.mpf(sigma2) * (1 / u**2 - 1) / (2 * mpmath.mpf(sigma_phi2)))


# -- golden values -----------------------------------------------------------

def test_lemma_tail_golden():
    expected = 2 * (mpmath.mpf(1) / 2 + mpmath.exp(mpmath.mpf(-1) / 2) / 2) ** 10
    assert bounds.lemma_tail(1.0, 11, 1.0) == pytest.approx(float(expected), rel=1e-14)
    assert bounds.lemma_tail(1.0, 11, 1.0) == pytest.approx(0.22367642935716440, rel=1e-14)


def test_constant_inversion_golden():
    eps = bounds.invert_radius(RadiusQuery(0.1, 400, 2, 1, ConstantInNoise(SIGMA_U)))
    assert eps == pytest.approx(float(mp_constant_eps(0.1, 400, mpmath.mpf(1) / 3)), rel=1e-13)
    assert eps == pytest.approx(0.1112861113624131, rel=1e-13)


def test_outer_inversion_golden():
    spec = ConstantInNoise(SIGMA_U, Target.OUTER)
    width = bounds.invert_radius(RadiusQuery(0.1, 400, 2, 1, spec))
    assert width == pytest.approx(float(mp_constant_eps(0.1, 400, mpmath.mpf(1) / 3, coeff=32)),
                                  rel=1e-13)
    assert width == pytest.approx(0.4451444454496525, rel=1e-13)


def test_gaussian_inversion_golden():
    eps = bounds.invert_radius(RadiusQuery(0.1, 400, 2, 1, GaussianRegressor(SIGMA_U, 1.0)))
    assert eps == pytest.approx(float(mp_gaussian_eps(0.1, 400, mpmath.mpf(1) / 3, 1)), rel=1e-12)
    assert eps == pytest.approx(0.1646835780779848, rel=1e-12)


@pytest.mark.parametrize("n, delta", [(8, 0.1), (50, 0.01), (1000, 0.3), (10**6, 0.05)])
def test_constant_inversion_matches_high_precision(n, delta):
    eps = bounds.invert_radius(RadiusQuery(delta, n, 3, 1, ConstantInNoise(0.7)))
    expected = mp_constant_eps(delta, n, mpmath.mpf(0.7) ** 2, m=3, q=1)
    assert eps == pytest.approx(float(expected), rel=1e-11)


def test_validity_thresholds():
    assert bounds.validity_threshold(0.1, 2, 1, ConstantInNoise(1.0)) == pytest.approx(
        6.321928094887362, rel=1e-14)
    assert bounds.min_valid_n(0.1, 2, 1, ConstantInNoise(1.0)) == 7
    assert bounds.validity_threshold(0.1, 2, 1, GaussianRegressor(1.0, 1.0)) == pytest.approx(
        22.28771237954945, rel=1e-14)
    assert bounds.min_valid_n(0.1, 2, 1, GaussianRegressor(1.0, 1.0)) == 23


def test_below_threshold_names_min_n():
    with pytest.raises(InvalidSampleSizeError) as info:
        bounds.invert_radius(RadiusQuery(0.1, 5, 2, 1, ConstantInNoise(1.0)))
    assert info.value.min_n == 7
    assert "7" in str(info.value)
    with pytest.raises(InvalidSampleSizeError):
        bounds.invert_radius(RadiusQuery(0.1, 22, 2, 1, GaussianRegressor(1.0, 1.0)))
    # the first valid size inverts cleanly
    assert bounds.invert_radius(RadiusQuery(0.1, 7, 2, 1, ConstantInNoise(1.0))) > 0


# -- epsilon = 0 and limits --------------------------------------------------

SPECS = [
    ConstantInNoise(0.5),
    BoundedRegressor(0.5, 0.8),
    GaussianRegressor(0.5, 1.3),
    UserRegressorMGF(0.5, bounds.gaussian_mgf(1.3)),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: type(s).__name__)
def test_zero_epsilon_gives_raw_prefactor(spec):
    raw = bounds.tail_bound(TailQuery(0.0, 30, 5, 2, spec))
    assert raw == pytest.approx(12.0)
    assert bounds.as_probability(raw) == 1.0


def test_lemma_tail_at_zero_is_two():
    assert bounds.lemma_tail(0.0, 11, SIGMA_U) == pytest.approx(2.0)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: type(s).__name__)
def test_bound_vanishes_for_large_n(spec):
    assert bounds.tail_bound(TailQuery(0.5, 10**6, 2, 1, spec)) < 1e-100


@pytest.mark.parametrize("spec", SPECS[:3], ids=lambda s: type(s).__name__)
def test_large_epsilon_approaches_geometric_floor(spec):
    raw = bounds.tail_bound(TailQuery(1e9, 41, 2, 1, spec))
    assert raw == pytest.approx(4 * 0.5 ** bounds._power(41, spec), rel=1e-6)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: type(s).__name__)
def test_bound_monotone(spec):
    eps = np.linspace(0, 3, 31)
    vals = [bounds.tail_bound(TailQuery(e, 40, 2, 1, spec)) for e in eps]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    ns = [3, 10, 40, 160]
    vals = [bounds.tail_bound(TailQuery(0.4, n, 2, 1, spec)) for n in ns]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_huge_n_does_not_underflow_to_error():
    assert bounds.tail_bound(TailQuery(1.0, 10**9, 2, 1, ConstantInNoise(1.0))) == 0.0


def test_log_tail_is_linear_in_n():
    spec = ConstantInNoise(SIGMA_U)
    ns = np.array([25, 100, 400])
    logs = np.array([math.log(bounds.tail_bound(TailQuery(0.2, int(n), 2, 1, spec))) for n in ns])
    slope1 = (logs[1] - logs[0]) / (ns[1] - ns[0])
    slope2 = (logs[2] - logs[1]) / (ns[2] - ns[1])
    assert abs(slope1 - slope2) <= 1e-9 * abs(slope1)


# -- cross-regime consistency ------------------------------------------------

@given(st.floats(0, 10), st.integers(3, 500), st.floats(0.05, 5))
def test_unit_floor_matches_constant(eps, n, sigma):
    a = bounds.tail_bound(TailQuery(eps, n, 2, 1, ConstantInNoise(sigma)))
    b = bounds.tail_bound(TailQuery(eps, n, 2, 1, BoundedRegressor(sigma, 1.0)))
    assert a == pytest.approx(b, rel=1e-14)


@given(st.floats(0, 10), st.integers(3, 500), st.floats(0.05, 5), st.floats(0.1, 4))
def test_floor_rescales_epsilon(eps, n, sigma, floor):
    a = bounds.tail_bound(TailQuery(eps * floor, n, 2, 1, ConstantInNoise(sigma)))
    b = bounds.tail_bound(TailQuery(eps, n, 2, 1, BoundedRegressor(sigma, floor)))
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("eps", np.round(np.arange(0.01, 10.005, 0.01), 2))
def test_normal_mgf_matches_gaussian_regime(eps):
    user = UserRegressorMGF(SIGMA_U, bounds.gaussian_mgf(1.0))
    a = bounds.tail_bound(TailQuery(float(eps), 400, 2, 1, user))
    b = bounds.tail_bound(TailQuery(float(eps), 400, 2, 1, GaussianRegressor(SIGMA_U, 1.0)))
    assert abs(a - b) <= 1e-12 * b


def test_normal_mgf_inversion_matches_closed_form():
    user = UserRegressorMGF(SIGMA_U, bounds.gaussian_mgf(1.0))
    for n in (23, 50, 400, 5000):
        a = bounds.invert_radius(RadiusQuery(0.1, n, 2, 1, user))
        b = bounds.invert_radius(RadiusQuery(0.1, n, 2, 1, GaussianRegressor(SIGMA_U, 1.0)))
        assert a == pytest.approx(b, rel=1e-10)


def test_empirical_mgf_of_constant_regressors():
    mgf = bounds.empirical_mgf(np.ones(10))
    assert mgf(0.0) == 1.0
    assert mgf(-2.0) == pytest.approx(math.exp(-2.0))
    with pytest.raises(SpsError):
        bounds.empirical_mgf([])


def test_exact_bound_is_union_of_intersection_tails():
    # 2 (m - q) intersection tails at the same epsilon
    for m, q in [(2, 1), (5, 1), (7, 3)]:
        for eps in (0.0, 0.3, 1.2):
            exact = bounds.tail_bound(TailQuery(eps, 21, m, q, ConstantInNoise(SIGMA_U)))
            lemma = bounds.lemma_tail(eps, 21, SIGMA_U)
            assert exact == pytest.approx(2 * (m - q) * lemma, rel=1e-14)


@given(st.floats(0, 20), st.integers(3, 2000), st.floats(0.05, 5), st.integers(2, 9))
def test_outer_is_exact_at_half_epsilon(eps, n, sigma, m):
    q = max(1, m // 2)
    outer = bounds.outer_tail_bound(TailQuery(eps, n, m, q, ConstantInNoise(sigma, Target.OUTER)))
    exact = bounds.tail_bound(TailQuery(eps / 2, n, m, q, ConstantInNoise(sigma)))
    assert outer == pytest.approx(exact, rel=1e-13)


def test_outer_unsupported_for_distributional_regimes():
    for spec in (GaussianRegressor(1.0, 1.0, Target.OUTER),
                 UserRegressorMGF(1.0, bounds.gaussian_mgf(1.0), Target.OUTER)):
        with pytest.raises(UnsupportedRegimeError):
            bounds.outer_tail_bound(TailQuery(0.1, 30, 2, 1, spec))
        with pytest.raises(UnsupportedRegimeError):
            bounds.invert_radius(RadiusQuery(0.1, 400, 2, 1, spec))


def test_tail_bound_rejects_outer_target():
    with pytest.raises(SpsError):
        bounds.tail_bound(TailQuery(0.1, 30, 2, 1, ConstantInNoise(1.0, Target.OUTER)))


# -- round trips -------------------------------------------------------------

@st.composite
def radius_queries(draw, target=Target.EXACT):
    delta = draw(st.floats(0.001, 0.9))
    m = draw(st.integers(2, 8))
    q = draw(st.integers(1, m - 1))
    sigma = draw(st.floats(0.05, 5))
    kind = draw(st.sampled_from(["constant", "bounded", "gaussian", "mgf"]
                                if target is Target.EXACT else ["constant", "bounded"]))
    if kind == "constant":
        spec = ConstantInNoise(sigma, target)
    elif kind == "bounded":
        spec = BoundedRegressor(sigma, draw(st.floats(0.1, 3)), target)
    elif kind == "gaussian":
        spec = GaussianRegressor(sigma, draw(st.floats(0.1, 3)))
    else:
        spec = UserRegressorMGF(sigma, bounds.gaussian_mgf(draw(st.floats(0.1, 3))))
    n = bounds.min_valid_n(delta, m, q, spec) + draw(st.integers(0, 5000))
    return RadiusQuery(delta, n, m, q, spec)


@given(radius_queries())
def test_inversion_round_trip(query):
    eps = bounds.invert_radius(query)
    back = bounds.tail_bound(TailQuery(eps, query.n, query.m, query.q, query.spec))
    assert abs(back - query.delta) <= 1e-10


@given(radius_queries(Target.OUTER))
def test_outer_inversion_round_trip(query):
    width = bounds.invert_radius(query)
    back = bounds.outer_tail_bound(TailQuery(width / 2, query.n, query.m, query.q, query.spec))
    assert abs(back - query.delta) <= 1e-10


def test_outer_width_is_four_exact_radii():
    # outer half-width at bound delta is twice the exact radius
    exact = bounds.invert_radius(RadiusQuery(0.1, 400, 2, 1, ConstantInNoise(SIGMA_U)))
    width = bounds.invert_radius(RadiusQuery(0.1, 400, 2, 1, ConstantInNoise(SIGMA_U, Target.OUTER)))
    assert width == pytest.approx(4 * exact, rel=1e-14)


# -- validation --------------------------------------------------------------

def test_query_validation():
    with pytest.raises(SpsError):
        TailQuery(-0.1, 10, 2, 1, ConstantInNoise(1.0))
    with pytest.raises(SpsError):
        TailQuery(math.inf, 10, 2, 1, ConstantInNoise(1.0))
    with pytest.raises(SpsError):
        TailQuery(0.1, 10, 2, 2, ConstantInNoise(1.0))
    for delta in (0.0, 1.0, -0.5):
        with pytest.raises(SpsError):
            RadiusQuery(delta, 10, 2, 1, ConstantInNoise(1.0))


def test_lemma_tail_validation():
    with pytest.raises(SpsError):
        bounds.lemma_tail(-1.0, 11, 1.0)
    with pytest.raises(SpsError):
        bounds.lemma_tail(1.0, 2, 1.0)
    with pytest.raises(SpsError):
        bounds.lemma_tail(1.0, 11, 0.0)
