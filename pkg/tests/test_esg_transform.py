import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from esgport.errors import DomainError, ShapeError
from esgport.esg_transform import (
    EsgBlendParams,
    blend_scenarios,
    esg_valued_return,
    esg_valued_riskless,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


class TestEsgValuedReturn:
    def test_lambda_zero_returns_input(self):
        assert esg_valued_return(0.003, 0.7, EsgBlendParams(0.0)) == 0.003

    def test_lambda_one_hand_value(self):
        out = esg_valued_return(0.123, 0.86, EsgBlendParams(1.0))
        assert out == pytest.approx(0.86 / 255.0, abs=1e-15)
        assert out == pytest.approx(0.0033725, abs=5e-8)

    def test_half_blend_hand_value(self):
        out = esg_valued_return(0.001, 0.86, EsgBlendParams(0.5))
        assert out == pytest.approx(0.0021863, abs=5e-8)

    def test_score_domain_enforced(self):
        with pytest.raises(DomainError):
            esg_valued_return(0.0, 1.5, EsgBlendParams(0.5))

    def test_lambda_domain_enforced(self):
        with pytest.raises(DomainError):
            EsgBlendParams(-0.1)
        with pytest.raises(DomainError):
            EsgBlendParams(1.1)
        with pytest.raises(DomainError):
            EsgBlendParams(0.5, c=0.0)

    @given(
        st.floats(min_value=-0.5, max_value=0.5),
        st.floats(min_value=-1.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    def test_affine_in_lambda(self, r, sigma, lam1, lam2):
        z1 = esg_valued_return(r, sigma, EsgBlendParams(lam1))
        z2 = esg_valued_return(r, sigma, EsgBlendParams(lam2))
        zm = esg_valued_return(r, sigma, EsgBlendParams((lam1 + lam2) / 2.0))
        assert z1 + z2 == pytest.approx(2.0 * zm, abs=1e-14)


class TestRisklessBlend:
    def test_lambda_zero(self):
        assert esg_valued_riskless(0.00037, EsgBlendParams(0.0)) == 0.00037

    def test_lambda_one(self):
        assert esg_valued_riskless(0.5, EsgBlendParams(1.0)) == pytest.approx(1 / 255, abs=1e-15)

    def test_half_blend_hand_value(self):
        out = esg_valued_riskless(0.0001, EsgBlendParams(0.5))
        assert out == pytest.approx(0.0020108, abs=5e-8)

    def test_vectorized(self):
        rates = np.array([0.0, 0.0001])
        out = esg_valued_riskless(rates, EsgBlendParams(0.5))
        assert out.shape == (2,)
        assert out[1] == pytest.approx(0.0020108, abs=5e-8)


class TestBlendScenarios:
    def test_lambda_zero_is_identity(self, rng):
        scen = rng.normal(size=(50, 3))
        out = blend_scenarios(scen, np.array([0.2, -0.4, 0.9]), EsgBlendParams(0.0))
        assert np.array_equal(out, scen)

    def test_single_cell_matches_scalar_op(self):
        p = EsgBlendParams(0.3)
        out = blend_scenarios(np.array([[0.01]]), np.array([0.5]), p)
        assert out[0, 0] == esg_valued_return(0.01, 0.5, p)

    def test_two_by_two_hand_check(self):
        p = EsgBlendParams(0.5, c=100.0)
        scen = np.array([[0.02, -0.01], [0.00, 0.03]])
        scores = np.array([1.0, -1.0])
        out = blend_scenarios(scen, scores, p)
        expected = np.array([[0.015, -0.01], [0.005, 0.01]])
        assert np.allclose(out, expected, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            blend_scenarios(np.zeros((4, 3)), np.zeros(2), EsgBlendParams(0.5))

    def test_affine_map_moves_sample_moments(self, rng):
        p = EsgBlendParams(0.7)
        scen = rng.normal(0.001, 0.02, size=(2000, 3))
        scores = np.array([0.9, -0.3, 0.1])
        out = blend_scenarios(scen, scores, p)
        want_mean = p.lam * scores / p.c + (1 - p.lam) * scen.mean(axis=0)
        assert np.allclose(out.mean(axis=0), want_mean, atol=1e-10)
        assert np.allclose(out.var(axis=0), (1 - p.lam) ** 2 * scen.var(axis=0), atol=1e-10)
