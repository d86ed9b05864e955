"""Synthetic families, closed-form truths, and the brute-force oracle."""
import numpy as np
import pytest

from stayerfx import (
    AdditiveLinearDgp,
    ConfigError,
    DataError,
    LocationScaleDgp,
    RandomCoefficientDgp,
    RegressorLaw,
    cross_section_slope_bias,
    dgp_from_dict,
    dgp_to_dict,
    simulate,
    time_homogeneity_check,
    true_effect,
    true_scale,
    true_shift,
    true_transform_effect,
)


def test_simulate_is_reproducible_and_seed_sensitive():
    dgp = AdditiveLinearDgp()
    a = simulate(dgp, 500, seed=7)
    b = simulate(dgp, 500, seed=7)
    c = simulate(dgp, 500, seed=8)
    np.testing.assert_array_equal(a.y1, b.y1)
    np.testing.assert_array_equal(a.x2, b.x2)
    assert not np.array_equal(a.y1, c.y1)


def test_simulate_stayer_atom():
    dgp = AdditiveLinearDgp(regressors=RegressorLaw(stayer_prob=0.15))
    data = simulate(dgp, 20000, seed=0)
    frac = data.stayer_mask.mean()
    assert abs(frac - 0.15) < 0.012  # ~4.7 binomial sds
    # movers never collide exactly with their period-1 value
    movers = ~data.stayer_mask
    assert np.all(data.x1[movers] != data.x2[movers])


def test_simulate_mover_correlation():
    dgp = AdditiveLinearDgp(regressors=RegressorLaw(corr=0.6, stayer_prob=0.0))
    data = simulate(dgp, 60000, seed=1)
    r = np.corrcoef(data.x1, data.x2)[0, 1]
    assert abs(r - 0.6) < 0.02


def test_simulate_needs_two_units():
    with pytest.raises(ConfigError):
        simulate(AdditiveLinearDgp(), 1, seed=0)


def test_regressor_law_validation():
    with pytest.raises(ConfigError):
        RegressorLaw(sd=0.0)
    with pytest.raises(ConfigError):
        RegressorLaw(stayer_prob=1.0)
    with pytest.raises(ConfigError):
        RegressorLaw(corr=1.0)


def test_unknown_noise_law_rejected():
    with pytest.raises(ConfigError):
        simulate(AdditiveLinearDgp(noise_law="cauchy"), 10, seed=0)


# ---------------------------------------------------------------------------
# closed forms


def test_additive_linear_every_effect_is_theta():
    dgp = AdditiveLinearDgp(theta=1.7, rho=0.9)
    for kind, tau in (("mean", None), ("quantile", 0.3),
                      ("time-averaged-mean", None), ("time-averaged-quantile", 0.8)):
        res = true_effect(dgp, 0.4, kind, tau=tau)
        assert res.value == 1.7
        assert res.standard_error > 0


def test_cross_section_bias_formula_against_simulation():
    # pooled-per-period OLS slope should come out theta + rho/2 * (1+p+(1-p)c)
    for corr in (0.0, 0.5):
        law = RegressorLaw(corr=corr, stayer_prob=0.2)
        dgp = AdditiveLinearDgp(theta=1.0, rho=0.8, het_sd=0.1, noise_sd=0.1,
                                regressors=law)
        data = simulate(dgp, 200000, seed=5)
        slopes = []
        for x, y in ((data.x1, data.y1), (data.x2, data.y2)):
            X = np.column_stack([np.ones(x.size), x])
            slopes.append(np.linalg.lstsq(X, y, rcond=None)[0][1])
        bias = cross_section_slope_bias(dgp)
        assert bias == pytest.approx(0.4 * (1.2 + 0.8 * corr))
        assert np.mean(slopes) == pytest.approx(1.0 + bias, abs=0.02)


def test_cross_section_bias_wrong_family():
    with pytest.raises(ConfigError):
        cross_section_slope_bias(RandomCoefficientDgp())


def test_transform_effects_closed_forms():
    dgp = AdditiveLinearDgp(theta=2.0, rho=0.6)
    assert true_transform_effect(dgp, "difference") == 2.0
    assert true_transform_effect(dgp, "period2") == pytest.approx(2.3)
    assert true_transform_effect(dgp, "linear-combo", lam=0.0, pi=1.0) == pytest.approx(2.3)
    assert true_transform_effect(dgp, "linear-combo", lam=-1.0, pi=1.0) == 2.0
    assert true_transform_effect(dgp, "linear-combo", lam=0.5, pi=2.0) \
        == pytest.approx(2 * 2.0 + 2.5 * 0.3)
    with pytest.raises(ConfigError):
        true_transform_effect(dgp, "log-ratio")


def test_location_scale_truths():
    dgp = LocationScaleDgp(mu1=(0.0, 1.0), mu2=(3.0, 2.0), sigma1=(1.0,),
                           sigma2=(2.0, 0.0, 0.1),
                           core=AdditiveLinearDgp(theta=1.0, rho=0.3))
    xs = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(true_scale(dgp, xs), (2.0 + 0.1 * xs ** 2) / 1.0)
    np.testing.assert_allclose(true_shift(dgp, xs),
                               (3.0 + 2.0 * xs) - true_scale(dgp, xs) * xs)
    # homogeneous families have trivial time effects
    flat = AdditiveLinearDgp()
    np.testing.assert_array_equal(true_scale(flat, xs), np.ones(3))
    np.testing.assert_array_equal(true_shift(flat, xs), np.zeros(3))


def test_location_scale_time_averaged_mean_hand_check():
    # constant scales c1=1, c2=3; mu1' = 1, mu2' = 2  ->  mubar' + sigbar*theta
    dgp = LocationScaleDgp(mu1=(0.0, 1.0), mu2=(0.0, 2.0), sigma1=(1.0,), sigma2=(3.0,),
                           core=AdditiveLinearDgp(theta=0.5, rho=0.4))
    res = true_effect(dgp, 0.7, "time-averaged-mean")
    assert res.value == pytest.approx(1.5 + 2.0 * 0.5)


def test_location_scale_time_averaged_quantile_gaussian():
    from scipy.stats import norm

    core = AdditiveLinearDgp(theta=1.0, rho=0.2, het_sd=0.3, noise_sd=0.4)
    dgp = LocationScaleDgp(mu1=(0.0,), mu2=(1.0, 1.0), sigma1=(1.0,), sigma2=(1.0, 0.5),
                           core=core)
    x, tau = 0.25, 0.7
    res = true_effect(dgp, x, "time-averaged-quantile", tau=tau)
    sig_bar = 0.5 * (1.0 + 1.0 + 0.5 * x)
    sig_bar_d = 0.25
    mu_bar_d = 0.5
    level = 1.2 * x + np.hypot(0.3, 0.4) * norm.ppf(tau)
    assert res.value == pytest.approx(mu_bar_d + sig_bar_d * level + sig_bar * 1.0)


def test_location_scale_plain_kind_rejected():
    dgp = LocationScaleDgp()
    with pytest.raises(ConfigError, match="time-averaged"):
        true_effect(dgp, 0.0, "mean")


def test_true_effect_argument_validation():
    dgp = AdditiveLinearDgp()
    with pytest.raises(ConfigError):
        true_effect(dgp, 0.0, "variance")
    with pytest.raises(ConfigError):
        true_effect(dgp, 0.0, "quantile")       # tau missing
    with pytest.raises(ConfigError):
        true_effect(dgp, 0.0, "quantile", tau=1.5)


def test_nonpositive_scale_polynomial_rejected():
    dgp = LocationScaleDgp(sigma2=(0.1, 1.0))  # goes negative for x < -0.1
    with pytest.raises(ConfigError, match="nonpositive"):
        simulate(dgp, 5000, seed=0)


# ---------------------------------------------------------------------------
# brute-force oracle (random-coefficient family)


RC = RandomCoefficientDgp(intercept_mean=0.0, intercept_sd=0.5, slope_mean=1.0,
                          slope_x_loading=0.5, slope_sd=0.5, noise_sd=0.5,
                          regressors=RegressorLaw(stayer_prob=0.15))


def test_rc_oracle_mean_tracks_analytic_slope():
    for x in (-0.5, 0.5):
        res = true_effect(RC, x, "mean", n_oracle=300000, seed=0)
        analytic = 1.0 + 0.5 * x
        assert abs(res.value - analytic) <= 4 * res.standard_error
        assert res.config["retained"] >= 500
        assert res.standard_error > 0


def test_rc_oracle_is_deterministic():
    a = true_effect(RC, 0.0, "mean", n_oracle=100000, seed=3)
    b = true_effect(RC, 0.0, "mean", n_oracle=100000, seed=3)
    assert a.value == b.value and a.standard_error == b.standard_error


def test_rc_oracle_bandwidth_override():
    res = true_effect(RC, 0.0, "mean", n_oracle=200000, seed=0, h=0.2)
    assert res.config["h"] == 0.2
    default = true_effect(RC, 0.0, "mean", n_oracle=200000, seed=0)
    assert default.config["retained"] < res.config["retained"]


def test_rc_oracle_insufficient_retention():
    with pytest.raises(DataError, match="retained only"):
        true_effect(RC, 0.0, "mean", n_oracle=2000, seed=0)


def test_rc_oracle_quantile_degenerate_slope():
    # with a constant slope the tau-quantile effect is that constant
    dgp = RandomCoefficientDgp(intercept_sd=0.5, slope_mean=2.0, slope_x_loading=0.0,
                               slope_sd=0.0, noise_sd=0.5)
    res = true_effect(dgp, 0.0, "quantile", tau=0.3, n_oracle=150000, seed=1)
    assert res.value == pytest.approx(2.0, abs=1e-12)


def test_rc_oracle_quantile_monotone_in_tau():
    # positive slope_sd: higher tau of phi picks units with larger slopes at x > 0
    lo = true_effect(RC, 0.8, "quantile", tau=0.2, n_oracle=400000, seed=2)
    hi = true_effect(RC, 0.8, "quantile", tau=0.8, n_oracle=400000, seed=2)
    assert hi.value - lo.value > 3 * np.hypot(hi.standard_error, lo.standard_error)


# ---------------------------------------------------------------------------
# serialization


@pytest.mark.parametrize("dgp", [
    AdditiveLinearDgp(theta=1.2, rho=0.4, het_law="laplace"),
    RandomCoefficientDgp(slope_x_loading=0.3),
    LocationScaleDgp(mu2=(3.0,), sigma2=(2.0,),
                     core=AdditiveLinearDgp(rho=0.3, regressors=RegressorLaw(corr=0.2))),
])
def test_dgp_dict_round_trip(dgp):
    clone = dgp_from_dict(dgp_to_dict(dgp))
    assert clone == dgp
    a = simulate(dgp, 50, seed=0)
    b = simulate(clone, 50, seed=0)
    np.testing.assert_array_equal(a.y2, b.y2)


def test_dgp_from_dict_unknown_family():
    with pytest.raises(ConfigError):
        dgp_from_dict({"family": "mixture"})


# ---------------------------------------------------------------------------
# time-homogeneity diagnostic


def test_homogeneity_check_passes_on_homogeneous_family():
    data = simulate(AdditiveLinearDgp(rho=0.5), 8000, seed=4)
    rep = time_homogeneity_check(data)
    assert rep.pass_fraction >= 0.9
    assert rep.n_stayers == int(data.stayer_mask.sum())


def test_homogeneity_check_detects_scale_shift():
    dgp = LocationScaleDgp(mu2=(3.0,), sigma2=(2.0,),
                           core=AdditiveLinearDgp(het_sd=0.5, noise_sd=0.5))
    data = simulate(dgp, 8000, seed=4)
    rep = time_homogeneity_check(data)
    assert rep.pass_fraction <= 0.2
    # undoing the known affine time effect restores homogeneity
    fixed = time_homogeneity_check(
        data,
        correction=(lambda y, x: y, lambda y, x: (y - 3.0) / 2.0),
    )
    assert fixed.pass_fraction >= 0.9


def test_homogeneity_check_needs_stayers():
    dgp = AdditiveLinearDgp(regressors=RegressorLaw(stayer_prob=0.0))
    data = simulate(dgp, 500, seed=0)
    with pytest.raises(DataError, match="stayers"):
        time_homogeneity_check(data)


def test_homogeneity_report_serializes():
    data = simulate(AdditiveLinearDgp(), 3000, seed=9)
    rep = time_homogeneity_check(data, n_bins=4, alpha=0.05)
    d = rep.to_dict()
    assert d["n_bins"] == len(d["statistics"]) == len(d["critical_values"])
    assert d["alpha"] == 0.05
