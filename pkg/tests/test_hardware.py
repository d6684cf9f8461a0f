import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdc_hwcal.errors import (
    IncompatibleError,
    InvalidEnsembleError,
    InvalidParameterError,
    NumericInputError,
    UnsupportedReprError,
)
from hdc_hwcal.hardware import (
    IDEAL,
    DistortionSpec,
    Family,
    HardwareEnsemble,
    Mode,
    OutputCalibration,
    compare,
    distort,
    hamming_scores,
    hw_similarity,
    sample_hardware,
    similarity_matrix,
    store,
    transfer,
    transfer_grad,
)
from hdc_hwcal.hv import BinaryHypervector, Hypervector, cosine_sim, random_bipolar, random_phase

FAMILIES = list(Family)
NONLINEAR = [Family.TANH, Family.EXP, Family.LOG]


def spec(family, **kw):
    return DistortionSpec(family=family, **kw)


# -- transfer curves ---------------------------------------------------------


@pytest.mark.parametrize("family", FAMILIES)
def test_distort_fixes_zero(family):
    assert np.all(distort(Hypervector.dense(np.zeros(5)), spec(family)).data == 0.0)


def test_distort_tanh_example():
    out = distort(Hypervector.bipolar([1, -1]), spec(Family.TANH))
    np.testing.assert_allclose(out.data, [0.7615941559557649, -0.7615941559557649], rtol=0, atol=1e-15)


@pytest.mark.parametrize("family", [Family.EXP, Family.LOG])
@pytest.mark.parametrize("gain", [0.5, 1.0, 3.0])
def test_exp_log_hit_unit_at_saturation(family, gain):
    np.testing.assert_allclose(transfer(family, gain, np.array([1.0, -1.0])), [1.0, -1.0], atol=1e-15)


def test_closed_forms_against_math_module():
    import math

    x = 0.37
    assert transfer(Family.TANH, 2.0, x) == pytest.approx(math.tanh(0.74))
    assert transfer(Family.EXP, 2.0, x) == pytest.approx((math.exp(0.74) - 1) / (math.exp(2) - 1))
    assert transfer(Family.LOG, 2.0, -x) == pytest.approx(-math.log(1.74) / math.log(3))


@pytest.mark.parametrize("family", NONLINEAR)
@pytest.mark.parametrize("gain", [0.3, 1.0, 5.0])
def test_odd_monotone_bounded(family, gain):
    grid = np.linspace(-1, 1, 2001)
    y = transfer(family, gain, grid)
    np.testing.assert_allclose(y, -transfer(family, gain, -grid), atol=1e-15)
    assert np.all(np.diff(y) > 0)
    bound = np.tanh(gain) if family is Family.TANH else 1.0
    assert np.all(np.abs(y) <= bound + 1e-15)
    assert y[-1] == pytest.approx(bound)


@pytest.mark.parametrize("family", FAMILIES)
def test_transfer_grad_matches_finite_difference(family):
    x = np.linspace(-1.2, 1.2, 25) + 1e-3
    h = 1e-6
    fd = (transfer(family, 1.7, x + h) - transfer(family, 1.7, x - h)) / (2 * h)
    np.testing.assert_allclose(transfer_grad(family, 1.7, x), fd, rtol=1e-6, atol=1e-8)


def test_store_rejects_non_finite_and_phase():
    with pytest.raises(NumericInputError):
        store(np.array([1.0, np.nan]), IDEAL)
    with pytest.raises(UnsupportedReprError):
        distort(random_phase(4, 0), IDEAL)


def test_store_offset_and_noise():
    s = spec(Family.TANH, gain=5.0, offset=0.7, input_noise_std=0.1)
    x = np.zeros(100000)
    out = store(x, s, np.random.default_rng(0))
    assert out.mean() == pytest.approx(0.7, abs=0.002)
    assert out.std() == pytest.approx(0.1, abs=0.002)


# -- specs -------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        DistortionSpec(gain=0.0)
    with pytest.raises(InvalidParameterError):
        DistortionSpec(input_noise_std=-1)
    with pytest.raises(InvalidParameterError, match="family"):
        DistortionSpec(family="sigmoid")
    assert DistortionSpec(family="tanh", mode="accumulate").mode is Mode.ACCUMULATE


def test_spec_round_trip():
    s = DistortionSpec(family=Family.LOG, gain=2.0, output_noise_std=0.1, mode=Mode.ACCUMULATE, seed=5)
    assert DistortionSpec.from_mapping(s.to_dict()) == s


# -- similarity --------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**31), st.sampled_from(list(Mode)))
def test_identity_similarity_equals_cosine(d, seed, mode):
    rng = np.random.default_rng(seed)
    a, b = Hypervector.dense(rng.normal(size=d)), Hypervector.dense(rng.normal(size=d))
    s = DistortionSpec(mode=mode)
    assert hw_similarity(a, b, s, 0) == pytest.approx(cosine_sim(a, b), abs=1e-12)


def test_self_similarity_under_tanh():
    a = random_bipolar(64, 1)
    assert hw_similarity(a, a, spec(Family.TANH), 0) == pytest.approx(np.tanh(1.0))


@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("family", NONLINEAR)
def test_similarity_symmetric(mode, family):
    rng = np.random.default_rng(4)
    a, b = Hypervector.dense(rng.normal(size=32)), Hypervector.dense(rng.normal(size=32))
    s = spec(family, mode=mode, output_noise_std=0.1, input_noise_std=0.0)
    assert hw_similarity(a, b, s, 9) == hw_similarity(b, a, s, 9)


def test_similarity_deterministic_with_seed():
    rng = np.random.default_rng(2)
    a, b = Hypervector.dense(rng.normal(size=32)), Hypervector.dense(rng.normal(size=32))
    s = spec(Family.EXP, input_noise_std=0.2, output_noise_std=0.1)
    assert hw_similarity(a, b, s, 3) == hw_similarity(a, b, s, 3)


def test_accumulate_mode_definition():
    # g applied to each product of the sqrt(m)-scaled unit vectors, averaged
    rng = np.random.default_rng(0)
    P, Q = rng.normal(size=(3, 16)), rng.normal(size=(2, 16))
    s = spec(Family.TANH, mode=Mode.ACCUMULATE)
    U = P / np.linalg.norm(P, axis=1, keepdims=True) * 4
    V = Q / np.linalg.norm(Q, axis=1, keepdims=True) * 4
    expected = np.array([[np.mean(np.tanh(u * v)) for v in V] for u in U])
    np.testing.assert_allclose(compare(P, Q, s), expected, atol=1e-14)


def test_output_calibration_enters_inside_g():
    rng = np.random.default_rng(1)
    P = rng.normal(size=(4, 8))
    c = OutputCalibration(0.5, -0.2)
    C = (P / np.linalg.norm(P, axis=1, keepdims=True)) @ (P / np.linalg.norm(P, axis=1, keepdims=True)).T
    np.testing.assert_allclose(compare(P, P, spec(Family.TANH), c), np.tanh(0.5 * C - 0.2), atol=1e-14)


def test_similarity_matrix_symmetric_with_noise():
    rng = np.random.default_rng(5)
    S = similarity_matrix(rng.normal(size=(6, 20)), None, spec(Family.LOG, output_noise_std=0.3,
                                                              input_noise_std=0.1), rng)
    assert np.array_equal(S, S.T)


def test_similarity_mismatches():
    with pytest.raises(IncompatibleError):
        hw_similarity(random_bipolar(4, 0), random_bipolar(5, 0), IDEAL)
    with pytest.raises(IncompatibleError):
        hw_similarity(random_bipolar(4, 0), BinaryHypervector(np.ones(4)), IDEAL)


def test_binary_pairs_route_through_hamming():
    a = BinaryHypervector(np.array([1, 0, 1, 0]))
    b = BinaryHypervector(np.array([1, 0, 0, 0]))
    assert hw_similarity(a, b, spec(Family.TANH)) == pytest.approx(np.tanh(0.5))
    S = hamming_scores(a.bits[None], b.bits[None], spec(Family.TANH))
    assert S[0, 0] == pytest.approx(np.tanh(0.5))


# -- ensembles ---------------------------------------------------------------


def test_degenerate_ensemble_gives_exact_spec():
    ens = HardwareEnsemble((Family.LOG,), (2.0, 2.0), (0.1, 0.1), seed=1)
    s = sample_hardware(ens, 0)
    assert (s.family, s.gain, s.input_noise_std, s.output_noise_std) == (Family.LOG, 2.0, 0.1, 0.1)


def test_ensemble_family_frequencies_and_ranges():
    ens = HardwareEnsemble((Family.TANH, Family.EXP), (0.5, 2.0), (0.0, 0.1))
    rng = np.random.default_rng(0)
    draws = [sample_hardware(ens, rng) for _ in range(1000)]
    freq = np.mean([d.family is Family.TANH for d in draws])
    assert abs(freq - 0.5) < 0.05
    assert all(0.5 <= d.gain <= 2.0 for d in draws)
    assert len({d.seed for d in draws}) == 1000


def test_ensemble_validation():
    with pytest.raises(InvalidEnsembleError):
        HardwareEnsemble(())
    with pytest.raises(InvalidEnsembleError):
        HardwareEnsemble((Family.TANH,), gain_range=(2.0, 1.0))
