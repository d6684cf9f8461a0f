"""Central-difference oracle for the joint-objective gradients."""

import itertools

import numpy as np

from hdc_hwcal.encoder import Activation, EncoderParams, Noise, draw_noise, evaluate_objective
from hdc_hwcal.hardware import DistortionSpec, Family, Mode, OutputCalibration

H = 1e-5


def _instance(activation, family, mode, encode_distorted, seed):
    rng = np.random.default_rng(seed)
    n, f, d = 5, 3, 16
    X = rng.uniform(-1, 1, size=(n, f))
    params = EncoderParams(rng.normal(0, 0.6, size=(f, d)), activation)
    T = rng.uniform(0, 1, size=(n, n))
    T = (T + T.T) / 2
    spec = DistortionSpec(family=family, gain=1.3, mode=mode, offset=0.2 if encode_distorted else 0.0,
                          input_noise_std=0.05, output_noise_std=0.05)
    m = d * (2 if activation is Activation.PHASE_MAP else 1)
    noise = draw_noise(spec, n, m, rng)
    cal = OutputCalibration(0.9, 0.1)
    return params, X, T, spec, noise, cal


def max_relative_error(activation, family, mode, encode_distorted, seed=0):
    """Worst relative error over every weight and both calibration entries."""
    params, X, T, spec, noise, cal = _instance(activation, family, mode, encode_distorted, seed)
    kw = dict(alpha=1.0, beta=0.05, noise=noise, encode_distorted=encode_distorted)

    def value(W, c):
        return evaluate_objective(params.with_weights(W), X, T, spec, calibration=OutputCalibration(*c),
                                  **kw).value

    ev = evaluate_objective(params, X, T, spec, calibration=cal, **kw)
    W0, c0 = params.weights, np.array([cal.gain, cal.bias])
    analytic = np.concatenate([ev.grad_weights.ravel(), ev.grad_calibration])
    numeric = np.empty_like(analytic)
    for k in range(W0.size):
        Wp, Wm = W0.copy().ravel(), W0.copy().ravel()
        Wp[k] += H
        Wm[k] -= H
        numeric[k] = (value(Wp.reshape(W0.shape), c0) - value(Wm.reshape(W0.shape), c0)) / (2 * H)
    for j in range(2):
        cp, cm = c0.copy(), c0.copy()
        cp[j] += H
        cm[j] -= H
        numeric[W0.size + j] = (value(W0, cp) - value(W0, cm)) / (2 * H)
    scale = np.maximum(np.abs(numeric), np.abs(analytic)).max()
    return float(np.max(np.abs(analytic - numeric)) / scale)


def all_combinations():
    return list(itertools.product(list(Activation), list(Family), list(Mode), [False, True]))
