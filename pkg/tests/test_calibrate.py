import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdc_hwcal.calibrate import (
    KernelExperimentConfig,
    KernelMatrix,
    OptimizeConfig,
    fit_output_calibration,
    frobenius_error,
    hw_kernel,
    joint_objective,
    kernel_experiment,
    optimize,
    optimize_joint,
    rbf_kernel,
    regularizer,
    sim_loss,
)
from hdc_hwcal.data import gen_kernel_dataset
from hdc_hwcal.encoder import EncoderParams, random_projection_params
from hdc_hwcal.errors import DivergenceError, IncompatibleError, InvalidParameterError
from hdc_hwcal.hardware import IDEAL, DistortionSpec, Family, HardwareEnsemble, Mode, OutputCalibration


def test_kernel_matrix_validation():
    with pytest.raises(InvalidParameterError):
        KernelMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(IncompatibleError):
        KernelMatrix(np.ones((2, 3)))
    K = KernelMatrix(np.eye(3))
    assert K.n == 3 and K.off_diagonal_mean() == 0.0
    with pytest.raises(ValueError):
        K.values[0, 0] = 2.0


def test_rbf_examples():
    s = 0.3
    X = np.array([[0.0, 0.0], [s * np.sqrt(2), 0.0]])
    K = rbf_kernel(X, s)
    np.testing.assert_allclose(np.diag(K.values), 1.0)
    assert K.values[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)
    with pytest.raises(InvalidParameterError):
        rbf_kernel(X, 0.0)


def test_rbf_default_setting_is_nearly_identity():
    X = gen_kernel_dataset(0)
    K = rbf_kernel(X, 1 / 20)
    assert K.off_diagonal_mean() < 1e-6


def test_sim_loss_examples():
    A = np.array([[1.0, 0.2], [0.2, 1.0]])
    assert sim_loss(A, A) == 0.0
    assert sim_loss(A, A + 0.1) == pytest.approx(0.04)
    assert frobenius_error(A, A + 0.1) == pytest.approx(0.2)
    with pytest.raises(IncompatibleError):
        sim_loss(A, np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_sim_loss_properties(n, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    assert sim_loss(A, B) >= 0
    assert sim_loss(A, B) == sim_loss(B, A)
    assert sim_loss(A, A) == 0


def test_regularizer_examples():
    # encodings of norm sqrt(D): the norm term vanishes, sparsity term remains
    p = EncoderParams(np.eye(4) * 2.0)
    x = np.array([[1.0, 0.0, 0.0, 0.0]])
    assert regularizer(p, x) == pytest.approx(0.1 * 0.5)
    assert regularizer(p, np.zeros((2, 4))) == 1.0


@pytest.mark.parametrize("family", list(Family))
@pytest.mark.parametrize("distorted", [False, True])
def test_hw_kernel_symmetric(family, distorted):
    X = gen_kernel_dataset(1)
    p = random_projection_params(30, 128, 1)
    s = DistortionSpec(family=family, input_noise_std=0.05, output_noise_std=0.05)
    K = hw_kernel(X, p, s, distorted, 3)
    assert np.array_equal(K.values, K.values.T)


def test_hw_kernel_examples():
    X = gen_kernel_dataset(2)
    p = random_projection_params(30, 64, 2)
    E = X @ p.weights
    U = E / np.linalg.norm(E, axis=1, keepdims=True)
    np.testing.assert_allclose(hw_kernel(X, p, IDEAL, False).values, U @ U.T, atol=1e-12)
    K = hw_kernel(X, p, DistortionSpec(family=Family.TANH), False)
    np.testing.assert_allclose(np.diag(K.values), np.tanh(1.0), atol=1e-12)


def test_joint_objective_examples():
    X = gen_kernel_dataset(3)
    p = random_projection_params(30, 64, 3)
    T = rbf_kernel(X, 0.05)
    s = DistortionSpec(family=Family.EXP)
    assert joint_objective(p, X, T, s, None, OptimizeConfig(alpha=0.0, beta=0.0)) == 0.0
    K = hw_kernel(X, p, s, True)
    assert joint_objective(p, X, T, s, None, OptimizeConfig(beta=0.0)) == pytest.approx(sim_loss(K, T))
    assert joint_objective(p, X, T, s, 2.5, OptimizeConfig(alpha=0.0, beta=0.0)) == 2.5


def test_joint_objective_ensemble_average():
    X = gen_kernel_dataset(4)
    p = random_projection_params(30, 64, 4)
    T = rbf_kernel(X, 0.05)
    ens = HardwareEnsemble((Family.TANH, Family.LOG), (0.5, 2.0))
    v = joint_objective(p, X, T, IDEAL, None, OptimizeConfig(beta=0.0, ensemble=ens, ensemble_draws=8))
    assert np.isfinite(v) and v > 0


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        OptimizeConfig(iterations=0)
    with pytest.raises(InvalidParameterError):
        OptimizeConfig(step_size=-1.0)
    with pytest.raises(InvalidParameterError):
        OptimizeConfig(optimizer="lbfgs")


def test_one_iteration_trace():
    X = gen_kernel_dataset(0)
    _, trace = optimize(random_projection_params(30, 32, 0), X, rbf_kernel(X, 0.05), IDEAL,
                        OptimizeConfig(iterations=1))
    assert len(trace) == 1


def test_convex_toy_converges():
    # three points whose cosine Gram matrix is attainable by a linear map
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 3))
    Y = rng.normal(size=(3, 3))
    U = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    T = U @ U.T
    p = random_projection_params(3, 3, 1)
    cfg = OptimizeConfig(iterations=2000, beta=0.0)
    trained, trace = optimize(p, X, T, IDEAL, cfg, encode_distorted=False)
    assert sim_loss(hw_kernel(X, trained, IDEAL, False), T) < 1e-6
    assert trace[-1] < trace[0]


@pytest.mark.parametrize("optimizer", ["adam", "gd"])
def test_optimize_deterministic(optimizer):
    X = gen_kernel_dataset(5)
    T = rbf_kernel(X, 0.05)
    p = random_projection_params(30, 32, 5)
    s = DistortionSpec(family=Family.TANH, input_noise_std=0.05, output_noise_std=0.05)
    cfg = OptimizeConfig(iterations=20, optimizer=optimizer, seed=11)
    a = optimize_joint(p, X, T, s, cfg, learn_calibration=True)
    b = optimize_joint(p, X, T, s, cfg, learn_calibration=True)
    assert a.trace == b.trace
    assert np.array_equal(a.params.weights, b.params.weights)


def test_divergence_names_step():
    X = gen_kernel_dataset(6)
    p = random_projection_params(30, 32, 6)
    cfg = OptimizeConfig(iterations=50, step_size=1e9, optimizer="gd", schedule="constant")
    with pytest.raises(DivergenceError) as exc:
        optimize(p, X, rbf_kernel(X, 0.05), IDEAL, cfg)
    assert exc.value.step >= 1


def test_fit_output_calibration_recovers_affine():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 200)
    s = DistortionSpec(family=Family.TANH)
    target = np.tanh(2.0 * x - 0.3)
    cal = fit_output_calibration(x, target, s, OptimizeConfig(iterations=2000, step_size=0.05))
    assert cal.gain == pytest.approx(2.0, abs=0.02)
    assert cal.bias == pytest.approx(-0.3, abs=0.02)
    acc = DistortionSpec(family=Family.TANH, mode=Mode.ACCUMULATE)
    assert fit_output_calibration(x, target, acc, OptimizeConfig()) == OutputCalibration()


def test_gen_dataset_drift():
    # 19 steps of U(0, 0.1) in 30 coordinates: expected distance ~ 0.95 * sqrt(30) ~ 5.2
    dists = [np.linalg.norm(gen_kernel_dataset(s)[19] - gen_kernel_dataset(s)[0]) for s in range(10)]
    assert np.mean(dists) == pytest.approx(5.2, rel=0.2)


@pytest.mark.parametrize("distorted", [False, True])
def test_kernel_experiment_ordering(distorted):
    cfg = KernelExperimentConfig(encode_distorted=distorted, seed=1)
    res = kernel_experiment(cfg)
    e = res.frobenius_errors
    assert e["D"] < e["C"] < e["B"]
    assert np.all(np.diag(res.A.values) == 1.0)
    for t in res.traces.values():
        assert np.all(np.isfinite(t)) and t[-1] <= t[0]
