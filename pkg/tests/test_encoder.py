import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcheck import all_combinations, max_relative_error
from hdc_hwcal.encoder import (
    SPARSITY_WEIGHT,
    Activation,
    EncoderParams,
    encode,
    encode_hw,
    evaluate_objective,
    loss_gradient,
    random_projection_params,
    regularizer_value,
)
from hdc_hwcal.errors import IncompatibleError, InvalidDimensionError, NumericOverflowError
from hdc_hwcal.hardware import IDEAL, DistortionSpec, Family
from hdc_hwcal.hv import Repr, TWO_PI, cosine_sim


@pytest.mark.parametrize("activation,family,mode,encode_distorted", all_combinations(),
                         ids=lambda v: getattr(v, "value", str(v)))
def test_gradient_matches_central_differences(activation, family, mode, encode_distorted):
    assert max_relative_error(activation, family, mode, encode_distorted) <= 1e-4


def test_identity_weights_reproduce_input():
    x = np.array([0.3, -1.2, 2.0])
    assert np.array_equal(encode(x, EncoderParams(np.eye(3))).data, x)


@pytest.mark.parametrize("activation", list(Activation))
def test_zero_input(activation):
    v = encode(np.zeros(4), random_projection_params(4, 8, 0, activation))
    assert np.all(v.data == 0.0)
    assert v.kind is (Repr.PHASE if activation is Activation.PHASE_MAP else Repr.DENSE_REAL)


def test_phase_map_wraps():
    W = np.array([[1.0, 10.0]])
    v = encode(np.array([1.0]), EncoderParams(W, Activation.PHASE_MAP))
    np.testing.assert_allclose(v.data, [1.0, 10.0 - TWO_PI])


def test_shape_mismatch():
    with pytest.raises(IncompatibleError):
        encode(np.zeros(3), random_projection_params(4, 8, 0))


def test_nearby_inputs_stay_closer_than_far_ones():
    rng = np.random.default_rng(0)
    wins = 0
    for t in range(50):
        p = random_projection_params(30, 512, t)
        x = rng.uniform(-1, 1, 30)
        near = x + rng.normal(0, 0.05, 30)
        far = rng.uniform(-1, 1, 30)
        wins += cosine_sim(encode(x, p), encode(near, p)) >= cosine_sim(encode(x, p), encode(far, p))
    assert wins == 50


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_positive_homogeneity(seed, c):
    p = random_projection_params(5, 16, seed)
    x = np.random.default_rng(seed).normal(size=5)
    np.testing.assert_allclose(encode(c * x, p).data, c * encode(x, p).data, rtol=1e-12, atol=1e-12)


def test_encode_hw():
    p = random_projection_params(6, 32, 1)
    x = np.random.default_rng(1).normal(size=6) * 50
    assert np.array_equal(encode_hw(x, p, IDEAL).data, encode(x, p).data)
    big = encode_hw(x, p, DistortionSpec(family=Family.TANH))
    assert np.all(np.abs(big.data) <= 1.0)
    for fam in Family:
        assert np.all(encode_hw(np.zeros(6), p, DistortionSpec(family=fam)).data == 0.0)


def test_random_projection_statistics():
    W = random_projection_params(1000, 1000, 3).weights
    assert abs(W.mean()) < 0.01
    assert W.var() == pytest.approx(1 / 1000, rel=0.02)
    cols = np.linalg.norm(random_projection_params(30, 4000, 4).weights, axis=0)
    # chi with 30 dof scaled by 1/sqrt(30): mean ~0.992, sd ~0.129
    assert cols.mean() == pytest.approx(0.992, abs=0.01)
    assert cols.std() == pytest.approx(0.129, abs=0.01)
    assert np.array_equal(random_projection_params(5, 7, 9).weights, random_projection_params(5, 7, 9).weights)
    with pytest.raises(InvalidDimensionError):
        random_projection_params(0, 4, 0)


def test_params_bytes_round_trip():
    p = random_projection_params(3, 5, 2, Activation.TANH)
    assert EncoderParams.from_bytes(p.to_bytes()) == p


def test_zero_weights_give_zero_gradient():
    rng = np.random.default_rng(0)
    p = random_projection_params(3, 8, 0)
    X = rng.normal(size=(4, 3))
    T = np.eye(4)
    g = loss_gradient(p, X, T, DistortionSpec(family=Family.TANH), 0.0, 0.0, 0)
    assert np.all(g == 0.0)


def test_gradient_vanishes_at_attained_target():
    p = random_projection_params(3, 8, 5)
    X = np.random.default_rng(5).normal(size=(2, 3))
    K = evaluate_objective(p, X, np.eye(2), IDEAL, alpha=1.0, beta=0.0).kernel
    g = loss_gradient(p, X, K, IDEAL, 1.0, 0.0, 0)
    assert np.linalg.norm(g) < 1e-6


def test_regularizer_values():
    D = 4
    E = np.full((3, D), 1.0)  # norm^2 / D = 1
    assert regularizer_value(E, D) == pytest.approx(SPARSITY_WEIGHT * 1.0)
    assert regularizer_value(np.zeros((2, D)), D) == 1.0


def test_overflow_reports_index():
    p = EncoderParams(np.zeros((2, 4)))
    with pytest.raises(NumericOverflowError, match="index"):
        evaluate_objective(p, np.ones((3, 2)), np.eye(3), IDEAL, alpha=1.0, beta=0.0)
