import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sps_scalar import bounds, montecarlo as mc
from sps_scalar.model import SpsConfig, SpsError, Target


def test_generate_dataset_noiseless():
    data, w = mc.generate_dataset(5, 2.0, mc.UniformNoise(0.0), mc.ConstantRegressors(1.0), 0)
    assert np.array_equal(data.y, np.full(5, 2.0))
    assert np.array_equal(w, np.zeros(5))


def test_generate_dataset_model_equation():
    gen = np.random.default_rng(4)
    data, w = mc.generate_dataset(50, -1.5, mc.GaussianNoise(0.3), mc.GaussianRegressors(2.0), gen)
    np.testing.assert_allclose(data.y, data.phi * -1.5 + w)


def test_noise_models():
    gen = np.random.default_rng(0)
    u = mc.UniformNoise(2.0).sample(gen, 20000)
    assert np.all(np.abs(u) <= 2.0)
    assert mc.UniformNoise(1.0).variance_proxy == pytest.approx(1 / 3)
    r = mc.RademacherNoise(0.5).sample(gen, 100)
    assert set(np.unique(r)) <= {-0.5, 0.5}
    assert mc.GaussianNoise(2.0).sample(gen, (3, 4)).shape == (3, 4)
    with pytest.raises(SpsError):
        mc.UniformNoise(-1.0)


def test_bounded_regressors_respect_floor():
    regs = mc.BoundedRegressors(0.5, 2.0)
    phi = regs.sample(np.random.default_rng(1), 5000)
    assert np.all(np.abs(phi) >= 0.5) and np.all(np.abs(phi) <= 2.0)
    assert regs.phi_min == 0.5
    assert (phi > 0).mean() == pytest.approx(0.5, abs=0.05)


@pytest.mark.parametrize("regs", [mc.ConstantRegressors(1.5), mc.GaussianRegressors(0.7),
                                  mc.BoundedRegressors(0.5, 2.0)], ids=repr)
def test_regressor_mgf_matches_sampling(regs):
    phi = regs.sample(np.random.default_rng(2), 200000)
    for t in (0.0, -0.3, -2.0):
        assert regs.mgf(t) == pytest.approx(np.mean(np.exp(t * phi**2)), rel=5e-3)
    assert regs.mgf(0.0) == 1.0


def test_trial_generator_is_keyed():
    a = mc.trial_generator(7, 25, 3).random(4)
    b = mc.trial_generator(7, 25, 3).random(4)
    c = mc.trial_generator(7, 25, 4).random(4)
    d = mc.trial_generator(7, 26, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_run_trial_noiseless():
    res = mc.run_trial(SpsConfig(2, 1, 10), 5.0, mc.UniformNoise(0.0), mc.ConstantRegressors(1.0),
                       mc.trial_generator(0, 10, 0))
    assert res.max_dist_true == pytest.approx(0.0, abs=1e-12)
    assert res.outer_half_width == pytest.approx(0.0, abs=1e-12)
    assert res.lse == pytest.approx(5.0)


def test_run_trial_is_deterministic():
    args = (SpsConfig(3, 1, 20), 5.0, mc.UniformNoise(1.0), mc.GaussianRegressors(1.0))
    a = mc.run_trial(*args, mc.trial_generator(11, 20, 2))
    b = mc.run_trial(*args, mc.trial_generator(11, 20, 2))
    assert a.max_dist_true == b.max_dist_true and a.region == b.region
    assert np.array_equal(a.w, b.w)


def test_run_trial_dist_is_sup_over_region():
    res = mc.run_trial(SpsConfig(2, 1, 25), 5.0, mc.UniformNoise(1.0), mc.ConstantRegressors(1.0),
                       mc.trial_generator(3, 25, 0))
    lo, hi = res.region.hull
    assert res.max_dist_true == pytest.approx(max(abs(lo - 5.0), abs(hi - 5.0)))


# -- empirical quantile ------------------------------------------------------

def test_empirical_quantile_examples():
    assert mc.empirical_quantile(np.arange(1, 11), 0.9) == 9
    assert mc.empirical_quantile(np.arange(1, 11), 1.0) == 10
    assert mc.empirical_quantile(np.arange(1, 11), 1 - 1e-16) == 10
    assert mc.empirical_quantile(np.arange(1, 11), 0.91) == 10
    assert mc.empirical_quantile([3.0], 0.9) == 3.0
    assert mc.empirical_quantile([2, 2, 2, 5], 0.5) == 2
    assert mc.empirical_quantile(np.arange(1000, 0, -1), 0.9) == 900


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.floats(0.01, 1.0))
def test_empirical_quantile_definition(values, level):
    x = mc.empirical_quantile(values, level)
    arr = np.asarray(values)
    assert x in arr
    assert np.mean(arr <= x) >= level - 1e-9
    smaller = arr[arr < x]
    if smaller.size:
        assert np.mean(arr <= smaller.max()) < level + 1e-9


def test_empirical_quantile_validation():
    with pytest.raises(SpsError):
        mc.empirical_quantile([], 0.5)
    with pytest.raises(SpsError):
        mc.empirical_quantile([1.0], 0.0)


# -- batch kernel ------------------------------------------------------------

@settings(max_examples=20)
@given(st.integers(0, 2**31), st.integers(2, 40), st.integers(2, 7),
       st.sampled_from(["uniform", "gauss", "rad"]), st.sampled_from(["const", "gauss", "bounded"]))
def test_batch_matches_scalar(seed, n, m, noise_kind, reg_kind):
    noise = {"uniform": mc.UniformNoise(1.0), "gauss": mc.GaussianNoise(0.5),
             "rad": mc.RademacherNoise(1.0)}[noise_kind]
    regs = {"const": mc.ConstantRegressors(1.0), "gauss": mc.GaussianRegressors(1.0),
            "bounded": mc.BoundedRegressors(0.5, 1.5)}[reg_kind]
    config = SpsConfig(m, max(1, m // 2), n)
    trials = range(15)
    stats = mc.simulate_trials(config, 2.0, noise, regs, seed, trials)
    for j, t in enumerate(trials):
        res = mc.run_trial(config, 2.0, noise, regs, mc.trial_generator(seed, n, t))
        assert stats.max_dist_true[j] == pytest.approx(res.max_dist_true, rel=1e-9, abs=1e-12)
        assert stats.outer_half_width[j] == pytest.approx(res.outer_half_width, rel=1e-9, abs=1e-12)
        assert stats.covers_true[j] == res.covers_true
        assert stats.lse[j] == pytest.approx(res.lse, rel=1e-12)


def test_batch_handles_noiseless_trials():
    config = SpsConfig(3, 1, 6)
    stats = mc.simulate_trials(config, 1.0, mc.UniformNoise(0.0), mc.ConstantRegressors(1.0), 0,
                               range(5))
    np.testing.assert_allclose(stats.max_dist_true, 0.0, atol=1e-12)


def test_fixed_signs_keep_outer_bounded():
    config = SpsConfig(4, 1, 3)
    stats = mc.simulate_trials(config, 0.0, mc.RademacherNoise(1.0), mc.ConstantRegressors(1.0), 9,
                               range(2000))
    assert np.all(np.isfinite(stats.outer_half_width))


def test_free_signs_can_be_unbounded():
    # with n = 2 and free signs, a row of equal signs gives identical sums
    config = SpsConfig(2, 1, 2, False)
    stats = mc.simulate_trials(config, 0.0, mc.UniformNoise(1.0), mc.ConstantRegressors(1.0), 1,
                               range(200))
    assert np.any(np.isinf(stats.outer_half_width))


# -- experiments -------------------------------------------------------------

def small_plan(**kw):
    base = dict(n_grid=(7, 20, 60), k=200, master_seed=5)
    base.update(kw)
    return mc.ExperimentPlan(**base)


def test_plan_validation():
    with pytest.raises(SpsError):
        small_plan(n_grid=())
    with pytest.raises(SpsError):
        small_plan(n_grid=(7, 7))
    with pytest.raises(SpsError):
        small_plan(k=0)
    with pytest.raises(SpsError):
        small_plan(regime="nonsense")
    with pytest.raises(SpsError):
        small_plan(regime="gaussian")


def test_plan_variance_proxy():
    assert small_plan().variance_proxy == pytest.approx(1 / 3)
    assert small_plan(sigma2=0.5).variance_proxy == 0.5
    assert small_plan().bound_spec(Target.OUTER).target is Target.OUTER


def test_default_grid():
    assert mc.default_n_grid(0.1, "constant")[:2] == (7, 8)
    assert mc.default_n_grid(0.1, "gaussian")[0] == 23
    assert mc.default_n_grid(0.1, "constant")[-1] == 400


def test_single_trial_summary():
    summary = mc.run_experiment(small_plan(k=1))
    assert [r.n for r in summary.rows] == [7, 20, 60]
    for r in summary.rows:
        assert r.k == 1 and r.coverage in (0.0, 1.0)


def test_summary_theoretical_columns():
    summary = mc.run_experiment(small_plan(n_grid=(5, 7, 100)))
    low = summary.row(5)
    assert math.isnan(low.theo_exact) and not low.valid
    row = summary.row(100)
    spec = small_plan().bound_spec()
    assert row.theo_exact == bounds.invert_radius(bounds.RadiusQuery(0.1, 100, 2, 1, spec))
    assert row.valid
    with pytest.raises(KeyError):
        summary.row(8)


def test_gaussian_summary_has_no_outer_curve():
    plan = small_plan(n_grid=(30,), regime="gaussian", regressors=mc.GaussianRegressors(1.0))
    row = mc.run_experiment(plan).rows[0]
    assert math.isnan(row.theo_outer) and math.isfinite(row.theo_exact)


def test_thread_count_does_not_change_summary():
    plan = small_plan(k=600)
    assert mc.run_experiment(plan, threads=1) == mc.run_experiment(plan, threads=3)


def test_seed_override():
    plan = small_plan(k=50)
    a = mc.run_experiment(plan, master_seed=99)
    assert a.master_seed == 99 and a.rows[0].seed == 99
    assert a != mc.run_experiment(plan)


def test_lemma_experiment_shape_and_monotone():
    freq = mc.lemma_tail_experiment(11, mc.UniformNoise(1.0), np.linspace(0, 1, 11), 5000, 0)
    assert freq.shape == (11,)
    assert freq[0] == 1.0
    assert np.all(np.diff(freq) <= 0)


def test_lemma_experiment_validation():
    with pytest.raises(SpsError):
        mc.lemma_tail_experiment(2, mc.UniformNoise(1.0), [0.1], 10, 0)
