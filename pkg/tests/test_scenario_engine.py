"""Return-dynamics fitting and scenario simulation.

Fitting is checked by simulate-then-refit oracles (known GARCH and ARMA
generators), the simulators by closed-form conditional moments, CLT
bounds, and exact determinism contracts.
"""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esgport.arma_garch import (
    ArmaGarchFit,
    advance,
    fit_arma_garch,
    one_step_conditional,
    standardized_residuals,
)
from esgport.errors import DomainError, FitError, SampleTooSmallError, ShapeError, SimulationError
from esgport.esg_transform import EsgBlendParams
from esgport.nig import NigParams
from esgport.scenario_engine import (
    OVERFLOW_BOUND,
    ScenarioMatrix,
    TrajectoryEnsemble,
    simulate_one_step,
    simulate_trajectories,
)

STD_NIG = NigParams.standardized(shape=2.0, rho=-0.1)


def make_fit(**overrides) -> ArmaGarchFit:
    base = dict(
        p=1, q=1, mu=3e-4,
        phi=np.array([0.1]), theta=np.array([-0.05]),
        omega=1e-6, a1=0.08, b1=0.90, garch_active=True, bic=0.0,
        resid_scale=float(np.sqrt(1e-6 / 0.02)), innovation=STD_NIG,
        recent_returns=np.array([0.002]), recent_residuals=np.array([0.001]),
        last_sigma2=5e-5,
    )
    base.update(overrides)
    return ArmaGarchFit(**base)


def simulate_garch_series(omega, a1, b1, n, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    eps = np.empty(n)
    s2 = omega / (1.0 - a1 - b1)
    z = rng.standard_normal(n)
    for t in range(n):
        eps[t] = np.sqrt(s2) * z[t]
        s2 = omega + a1 * eps[t] ** 2 + b1 * s2
    return eps


class TestFitArmaGarch:
    def test_iid_gaussian_selects_white_noise(self):
        """Over 50 seeds, i.i.d. Gaussian windows pick p = q = 0 with no
        variance dynamics at least 90% of the time."""
        good = 0
        for seed in range(50):
            rng = np.random.Generator(np.random.Philox(seed))
            z = rng.standard_normal(1000) * 0.01
            try:
                fit = fit_arma_garch(z)
            except FitError:
                continue
            if fit.p == 0 and fit.q == 0 and not fit.garch_active:
                good += 1
        assert good >= 45

    def test_garch_recovery(self):
        eps = simulate_garch_series(1e-6, 0.08, 0.90, n=4000, seed=21)
        fit = fit_arma_garch(eps)
        assert fit.garch_active
        assert fit.a1 + fit.b1 == pytest.approx(0.98, abs=0.05)

    def test_constant_series_rejected(self):
        with pytest.raises(FitError, match="zero variance"):
            fit_arma_garch(np.full(500, 0.01))

    def test_short_window_rejected(self):
        with pytest.raises(SampleTooSmallError):
            fit_arma_garch(np.random.default_rng(0).standard_normal(99))

    def test_non_finite_rejected(self):
        y = np.random.default_rng(0).standard_normal(500)
        y[100] = np.inf
        with pytest.raises(DomainError):
            fit_arma_garch(y)

    def test_ar1_coefficients_recovered(self):
        rng = np.random.Generator(np.random.Philox(3))
        y = np.empty(3000)
        y[0] = 5.0
        for t in range(1, y.size):
            y[t] = 5.0 + 0.6 * (y[t - 1] - 5.0) + 0.1 * rng.standard_normal()
        fit = fit_arma_garch(y)
        assert fit.p == 1 and fit.q == 0
        assert fit.mu == pytest.approx(5.0, abs=0.05)
        assert fit.phi[0] == pytest.approx(0.6, abs=0.05)

    def test_ma1_coefficients_recovered(self):
        rng = np.random.Generator(np.random.Philox(4))
        e = 0.1 * rng.standard_normal(3001)
        y = 1.0 + e[1:] + 0.5 * e[:-1]
        fit = fit_arma_garch(y)
        assert fit.q == 1 and fit.p == 0
        assert fit.theta[0] == pytest.approx(0.5, abs=0.05)

    def test_per_candidate_diagnostics_reported(self):
        rng = np.random.Generator(np.random.Philox(8))
        fit = fit_arma_garch(rng.standard_normal(300) * 0.01)
        assert len(fit.diagnostics["candidates"]) == 9
        assert fit.diagnostics["candidates"]["(0,0)"] == pytest.approx(fit.bic) or isinstance(
            fit.diagnostics["candidates"]["(0,0)"], float
        )

    def test_standardized_residuals_near_unit_variance(self):
        eps = simulate_garch_series(1e-6, 0.08, 0.90, n=4000, seed=22)
        fit = fit_arma_garch(eps)
        z = standardized_residuals(fit, eps)
        assert z.std() == pytest.approx(1.0, abs=0.1)

    def test_dict_round_trip(self):
        eps = simulate_garch_series(1e-6, 0.05, 0.85, n=1200, seed=9)
        fit = fit_arma_garch(eps)
        back = ArmaGarchFit.from_dict(fit.to_dict())
        assert back.p == fit.p and back.q == fit.q
        assert back.mu == fit.mu
        assert np.array_equal(back.phi, fit.phi)
        assert back.garch_active == fit.garch_active
        assert back.last_state == fit.last_state
        assert back.innovation.shape == fit.innovation.shape


class TestFitInvariants:
    def test_stationarity_enforced_on_construction(self):
        with pytest.raises(DomainError, match="stationarity"):
            make_fit(a1=0.3, b1=0.75)

    def test_explosive_ar_rejected(self):
        with pytest.raises(DomainError, match="unit circle"):
            make_fit(phi=np.array([1.05]))

    def test_non_invertible_ma_rejected(self):
        with pytest.raises(DomainError, match="unit circle"):
            make_fit(theta=np.array([-1.2]))

    def test_buffer_lengths_enforced(self):
        with pytest.raises(DomainError, match="buffers"):
            make_fit(recent_returns=np.array([0.1, 0.2]))

    def test_last_state_exposes_final_pair(self):
        fit = make_fit()
        assert fit.last_state == (0.001, 5e-5)

    def test_one_step_conditional_hand_value(self):
        fit = make_fit()
        m, s2 = one_step_conditional(fit)
        assert m == pytest.approx(3e-4 + 0.1 * (0.002 - 3e-4) - 0.05 * 0.001, abs=1e-18)
        assert s2 == pytest.approx(1e-6 + 0.08 * 0.001**2 + 0.90 * 5e-5, abs=1e-18)

    def test_advance_rolls_state(self):
        fit = make_fit()
        m, s2 = one_step_conditional(fit)
        stepped = advance(fit, 0.004)
        assert stepped.recent_returns[-1] == 0.004
        assert stepped.recent_residuals[-1] == pytest.approx(0.004 - m)
        assert stepped.last_sigma2 == pytest.approx(s2)


class TestSimulateOneStep:
    def make_pair(self):
        f1 = make_fit()
        f2 = make_fit(
            p=0, q=0, phi=np.array([]), theta=np.array([]), garch_active=False,
            omega=1e-4, a1=0.0, b1=0.0, resid_scale=0.01,
            recent_returns=np.array([0.0]), recent_residuals=np.array([0.0]),
            last_sigma2=1e-4,
        )
        joint = NigParams(
            location=np.array([0.0, 0.0]),
            skewness=np.array([0.1, 0.0]),
            scale=np.array([[0.99, 0.2], [0.2, 1.0]]),
            shape=2.0,
        )
        return [f1, f2], joint

    def test_same_seed_bitwise_identical(self):
        fits, joint = self.make_pair()
        a = simulate_one_step(fits, joint, 2000, seed=99)
        b = simulate_one_step(fits, joint, 2000, seed=99)
        assert np.array_equal(a.values, b.values)
        assert a.seed == 99 and a.kind == "raw"

    def test_sample_mean_within_clt_bound(self):
        fits, joint = self.make_pair()
        s = 10000
        scen = simulate_one_step(fits, joint, s, seed=11)
        for i, fit in enumerate(fits):
            m, s2 = one_step_conditional(fit)
            model_mean = m + np.sqrt(s2) * joint.mean()[i]
            sigma = np.sqrt(s2 * joint.cov()[i, i])
            assert abs(scen.values[:, i].mean() - model_mean) < 3.0 * sigma / np.sqrt(s)

    def test_inactive_asset_variance_matches_residual_scale(self):
        fits, joint = self.make_pair()
        scen = simulate_one_step(fits, joint, 10000, seed=12)
        # second asset: constant scale 0.01, joint marginal variance exactly 1
        assert scen.values[:, 1].var() == pytest.approx(1e-4, rel=0.05)

    def test_dimension_mismatch_rejected(self):
        fits, _ = self.make_pair()
        with pytest.raises(ShapeError):
            simulate_one_step(fits, STD_NIG, 100, seed=1)

    def test_scenario_count_validated(self):
        fits, joint = self.make_pair()
        with pytest.raises(DomainError):
            simulate_one_step(fits, joint, 0, seed=1)

    def test_matrix_constructor_validates(self):
        with pytest.raises(ShapeError):
            ScenarioMatrix(values=np.zeros(5), seed=0)
        with pytest.raises(DomainError):
            ScenarioMatrix(values=np.array([[np.nan, 0.0]]), seed=0)
        with pytest.raises(ShapeError):
            ScenarioMatrix(values=np.zeros((2, 2)), seed=0, tickers=("A",))


class TestSimulateTrajectories:
    def test_deterministic_and_positive_at_paper_scale(self):
        ens = simulate_trajectories(make_fit(), STD_NIG, t_max=252, n_scenarios=20000, seed=7)
        again = simulate_trajectories(make_fit(), STD_NIG, t_max=252, n_scenarios=20000, seed=7)
        assert np.array_equal(ens.prices, again.prices)
        assert np.all(ens.prices > 0.0)
        assert ens.paths.shape == (20000, 252)

    def test_prices_are_exp_cumsum_of_blended_steps(self):
        blend = EsgBlendParams(lam=0.5)
        ens = simulate_trajectories(
            make_fit(), STD_NIG, t_max=40, n_scenarios=300, seed=13,
            blend=blend, score=0.6, spot=3.0,
        )
        assert np.array_equal(ens.prices, 3.0 * np.exp(np.cumsum(ens.zeta, axis=1)))
        expected = 0.5 * 0.6 / 255.0 + 0.5 * ens.paths
        assert np.allclose(ens.zeta, expected, rtol=0, atol=1e-18)

    def test_lambda_zero_paths_scale_by_spot(self):
        raw = simulate_trajectories(make_fit(), STD_NIG, t_max=30, n_scenarios=500, seed=3)
        blended = simulate_trajectories(
            make_fit(), STD_NIG, t_max=30, n_scenarios=500, seed=3,
            blend=EsgBlendParams(lam=0.0), score=0.8, spot=2.5,
        )
        assert np.array_equal(blended.zeta, raw.paths)
        assert np.array_equal(blended.prices, 2.5 * raw.prices)

    def test_blend_then_cumulate_differs_from_cumulate_then_blend(self):
        """The two orders agree only at lambda = 0; for lambda > 0 they differ
        by (t - 1) * lambda * score / c at horizon t."""
        blend = EsgBlendParams(lam=0.5)
        score = 0.8
        ens = simulate_trajectories(
            make_fit(), STD_NIG, t_max=20, n_scenarios=50, seed=17,
            blend=blend, score=score,
        )
        cum_blend_first = np.cumsum(ens.zeta, axis=1)
        blend_cum_last = blend.lam * score / blend.c + (1.0 - blend.lam) * np.cumsum(ens.paths, axis=1)
        gap = cum_blend_first - blend_cum_last
        t = np.arange(1, 21)
        expected_gap = (t - 1) * blend.lam * score / blend.c
        assert np.allclose(gap, expected_gap[None, :], atol=1e-12)
        assert np.allclose(gap[:, 0], 0.0, atol=1e-18)

    def test_zero_volatility_collapses_to_drift_path(self):
        fit = make_fit(
            garch_active=False, resid_scale=0.0, omega=1e-12, a1=0.0, b1=0.0,
            last_sigma2=0.0,
        )
        ens = simulate_trajectories(fit, STD_NIG, t_max=10, n_scenarios=50, seed=1, t_min=1)
        assert np.all(ens.paths == ens.paths[0])
        # AR(1)+MA(1) drift from the stored state, then pure AR decay
        r1 = fit.mu + 0.1 * (0.002 - fit.mu) - 0.05 * 0.001
        assert ens.paths[0, 0] == pytest.approx(r1, abs=1e-18)
        assert ens.paths[0, 1] == pytest.approx(fit.mu + 0.1 * (r1 - fit.mu), abs=1e-18)

    def test_overflow_paths_redrawn_and_counted(self):
        fit = make_fit(
            mu=0.0, garch_active=False, resid_scale=3.2, omega=10.24, a1=0.0, b1=0.0,
            last_sigma2=10.24, phi=np.array([0.0]), theta=np.array([0.0]),
        )
        ens = simulate_trajectories(fit, STD_NIG, t_max=100, n_scenarios=200, seed=5, t_min=1)
        assert ens.diagnostics["redrawn_paths"] > 0
        assert np.abs(np.cumsum(ens.paths, axis=1)).max() <= OVERFLOW_BOUND

    def test_hopeless_drift_raises_after_capped_redraws(self):
        fit = make_fit(
            mu=5.0, garch_active=False, resid_scale=0.5, omega=0.25, a1=0.0, b1=0.0,
            last_sigma2=0.25, phi=np.array([0.0]), theta=np.array([0.0]),
        )
        with pytest.raises(SimulationError, match="redraw"):
            simulate_trajectories(fit, STD_NIG, t_max=100, n_scenarios=20, seed=2, t_min=1)

    def test_multivariate_innovation_rejected(self):
        joint = NigParams(
            location=np.zeros(2), skewness=np.zeros(2), scale=np.eye(2), shape=1.0
        )
        with pytest.raises(DomainError, match="single-asset"):
            simulate_trajectories(make_fit(), joint, t_max=30, n_scenarios=10, seed=0)

    def test_horizon_validation(self):
        with pytest.raises(DomainError):
            simulate_trajectories(make_fit(), STD_NIG, t_max=10, n_scenarios=10, seed=0)
        with pytest.raises(DomainError):
            simulate_trajectories(make_fit(), STD_NIG, t_max=30, n_scenarios=10, seed=0, t_min=0)

    def test_prices_at_respects_horizon_band(self):
        ens = simulate_trajectories(make_fit(), STD_NIG, t_max=30, n_scenarios=10, seed=0, t_min=15)
        assert ens.prices_at(15).shape == (10,)
        assert np.array_equal(ens.prices_at(30), ens.prices[:, -1])
        with pytest.raises(DomainError):
            ens.prices_at(14)

    @given(lam=st.floats(0.0, 1.0), score=st.floats(-1.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_blend_scaling_property(self, lam, score):
        ens = simulate_trajectories(
            make_fit(), STD_NIG, t_max=5, n_scenarios=8, seed=23, t_min=1,
            blend=EsgBlendParams(lam=lam), score=score,
        )
        manual = lam * score / 255.0 + (1.0 - lam) * ens.paths
        assert np.array_equal(ens.zeta, manual) or np.allclose(ens.zeta, manual, atol=1e-18)
