"""Target kernels, the similarity loss and the calibration optimizer.

``kernel_experiment`` reproduces the four-way comparison on the synthetic
20 x 30 drift dataset:

    A  RBF target kernel
    B  hardware kernel of a fixed random-projection encoder
    C  B plus a learned output calibration (encoder frozen)
    D  encoder weights and output calibration learned jointly
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import (
    DivergenceError,
    IncompatibleError,
    InvalidParameterError,
    NumericOverflowError,
)
from .encoder import (
    Activation,
    EncoderParams,
    Noise,
    draw_noise,
    encode_real,
    evaluate_objective,
    random_projection_params,
    regularizer_value,
)
from .hardware import (
    DistortionSpec,
    Family,
    HardwareEnsemble,
    Mode,
    OutputCalibration,
    sample_hardware,
    similarity_matrix,
    transfer,
    transfer_grad,
)
from .hv import SeedLike, as_rng

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray

    def __post_init__(self):
        V = np.array(self.values, dtype=np.float64, copy=True)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise IncompatibleError(f"kernel must be square, got shape {V.shape}")
        if not np.all(np.isfinite(np.diag(V))):
            raise InvalidParameterError("kernel diagonal must be finite")
        if not np.allclose(V, V.T, rtol=0.0, atol=1e-9):
            raise InvalidParameterError("kernel must be symmetric within 1e-9")
        V.setflags(write=False)
        object.__setattr__(self, "values", V)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def off_diagonal_mean(self) -> float:
        mask = ~np.eye(self.n, dtype=bool)
        return float(self.values[mask].mean())

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _values(K) -> np.ndarray:
    return K.values if isinstance(K, KernelMatrix) else np.asarray(K, dtype=np.float64)


@dataclass(frozen=True)
class OptimizeConfig:
    step_size: float = 0.03
    iterations: int = 2000
    alpha: float = 1.0
    beta: float = 0.01
    ensemble: Optional[HardwareEnsemble] = None
    seed: int = 0
    optimizer: str = "adam"
    ensemble_draws: int = 4
    schedule: str = "cosine"

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidParameterError(f"step_size must be > 0, got {self.step_size}")
        if int(self.iterations) < 1:
            raise InvalidParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidParameterError("alpha and beta must be >= 0")
        if self.optimizer not in ("adam", "gd"):
            raise InvalidParameterError(f"optimizer must be 'adam' or 'gd', got {self.optimizer!r}")
        if self.schedule not in ("cosine", "constant"):
            raise InvalidParameterError(f"schedule must be 'cosine' or 'constant', got {self.schedule!r}")
        if int(self.ensemble_draws) < 1:
            raise InvalidParameterError("ensemble_draws must be >= 1")


def rbf_kernel(X, sigma: float) -> KernelMatrix:
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    K = np.exp(-d2 / (2.0 * sigma * sigma))
    return KernelMatrix((K + K.T) / 2.0)


def hw_kernel(
    X,
    params: EncoderParams,
    spec: DistortionSpec,
    encode_distorted: bool,
    rng: Optional[SeedLike] = None,
    calibration: Optional[OutputCalibration] = None,
) -> KernelMatrix:
    E = encode_real(X, params)
    S = similarity_matrix(E, None, spec, as_rng(rng if rng is not None else spec.seed),
                          distort_inputs=encode_distorted, calibration=calibration)
    return KernelMatrix(S)


def sim_loss(K_hw, K_target) -> float:
    A, B = _values(K_hw), _values(K_target)
    if A.shape != B.shape:
        raise IncompatibleError(f"kernel size mismatch: {A.shape} vs {B.shape}")
    return float(np.sum((A - B) ** 2))


def frobenius_error(K, K_target) -> float:
    return float(np.sqrt(sim_loss(K, K_target)))


def regularizer(params: EncoderParams, batch) -> float:
    return regularizer_value(encode_real(batch, params), params.dim)


def _real_width(params: EncoderParams) -> int:
    return params.dim * (2 if params.activation is Activation.PHASE_MAP else 1)


def _hardware_draws(spec, cfg: OptimizeConfig, rng):
    if cfg.ensemble is None:
        return [spec]
    return [sample_hardware(cfg.ensemble, rng) for _ in range(cfg.ensemble_draws)]


def _step_eval(params, X, T, spec, cfg, rng, encode_distorted, calibration, task_loss):
    """Objective and gradients averaged over this step's hardware draws."""
    specs = _hardware_draws(spec, cfg, rng)
    m = _real_width(params)
    value, gW, gC = 0.0, 0.0, 0.0
    for s in specs:
        ev = evaluate_objective(params, X, T, s, alpha=cfg.alpha, beta=cfg.beta,
                                noise=draw_noise(s, X.shape[0], m, rng),
                                encode_distorted=encode_distorted, calibration=calibration,
                                task_loss=task_loss)
        value += ev.value
        gW = gW + ev.grad_weights
        gC = gC + ev.grad_calibration
    k = len(specs)
    return value / k, gW / k, gC / k


def joint_objective(
    params: EncoderParams,
    X,
    K_target,
    spec: DistortionSpec,
    task_loss: Optional[float],
    cfg: OptimizeConfig,
    *,
    encode_distorted: bool = True,
    calibration: Optional[OutputCalibration] = None,
) -> float:
    """``task + alpha*sim_loss + beta*R``; averaged over hardware draws when
    the config carries an ensemble."""
    rng = as_rng(cfg.seed)
    value, _, _ = _step_eval(params, np.atleast_2d(X), _values(K_target), spec, cfg, rng,
                             encode_distorted, calibration, task_loss or 0.0)
    return value


class OptimizeResult(NamedTuple):
    params: EncoderParams
    calibration: OutputCalibration
    trace: List[float]


Sampler = Callable[[np.random.Generator], Tuple[np.ndarray, np.ndarray]]


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, g, scale=1.0):
        if self.m is None:
            self.m, self.v = np.zeros_like(g), np.zeros_like(g)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return scale * self.lr * mh / (np.sqrt(vh) + self.eps)


class _GD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, g, scale=1.0):
        return scale * self.lr * g


def _schedule(cfg: OptimizeConfig, step: int) -> float:
    if cfg.schedule == "constant":
        return 1.0
    return 0.5 * (1.0 + np.cos(np.pi * step / int(cfg.iterations)))


def optimize_joint(
    params: EncoderParams,
    X,
    K_target,
    spec: DistortionSpec,
    cfg: OptimizeConfig,
    *,
    encode_distorted: bool = True,
    calibration: Optional[OutputCalibration] = None,
    learn_weights: bool = True,
    learn_calibration: bool = False,
    sampler: Optional[Sampler] = None,
) -> OptimizeResult:
    """Full-batch (or sampled mini-batch) descent on the joint objective.

    ``sampler(rng) -> (X_batch, target_batch)`` replaces the fixed
    ``(X, K_target)`` pair when given.  Returns the objective value
    recorded before every update.
    """
    rng = as_rng(cfg.seed)
    make = _Adam if cfg.optimizer == "adam" else _GD
    opt_w, opt_c = make(cfg.step_size), make(cfg.step_size)
    W = np.array(params.weights, copy=True)
    cal = np.array([1.0, 0.0]) if calibration is None else np.array([calibration.gain, calibration.bias])
    if sampler is None:
        Xf = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Tf = _values(K_target)
        if Tf.shape != (Xf.shape[0], Xf.shape[0]):
            raise IncompatibleError(f"target must be {Xf.shape[0]}x{Xf.shape[0]}, got {Tf.shape}")
    trace: List[float] = []
    for step in range(int(cfg.iterations)):
        Xb, Tb = sampler(rng) if sampler is not None else (Xf, Tf)
        current = params.with_weights(W)
        try:
            value, gW, gC = _step_eval(current, Xb, Tb, spec, cfg, rng, encode_distorted,
                                       OutputCalibration(*cal), 0.0)
        except NumericOverflowError:
            raise DivergenceError(step, float("nan")) from None
        if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
            raise DivergenceError(step, value)
        trace.append(value)
        scale = _schedule(cfg, step)
        if learn_weights:
            W = W - opt_w.step(gW, scale)
        if learn_calibration:
            cal = cal - opt_c.step(gC, scale)
            cal[0] = max(cal[0], 1e-6)  # keeps the calibration monotone
    return OptimizeResult(params.with_weights(W), OutputCalibration(*cal), trace)


def optimize(params: EncoderParams, X, K_target, spec: DistortionSpec, cfg: OptimizeConfig,
             **kwargs) -> Tuple[EncoderParams, List[float]]:
    res = optimize_joint(params, X, K_target, spec, cfg, **kwargs)
    return res.params, res.trace


# -- the four-variant kernel experiment --------------------------------------


@dataclass(frozen=True)
class KernelExperimentConfig:
    spec: DistortionSpec = DistortionSpec(family=Family.TANH)
    encode_distorted: bool = False
    seed: int = 0
    dim: int = 512
    n_points: int = 20
    n_features: int = 30
    sigma: Optional[float] = None
    opt: OptimizeConfig = field(default_factory=OptimizeConfig)


@dataclass
class KernelResult:
    A: KernelMatrix
    B: KernelMatrix
    C: KernelMatrix
    D: KernelMatrix
    frobenius_errors: Dict[str, float]
    calibration_C: OutputCalibration
    calibration_D: OutputCalibration
    traces: Dict[str, List[float]]


def kernel_experiment(cfg: KernelExperimentConfig) -> KernelResult:
    from .data import gen_kernel_dataset

    seeds = np.random.SeedSequence(cfg.seed).generate_state(4, dtype=np.uint64)
    X = gen_kernel_dataset(int(seeds[0]), n_points=cfg.n_points, n_features=cfg.n_features)
    sigma = cfg.sigma if cfg.sigma is not None else 1.0 / cfg.n_points
    A = rbf_kernel(X, sigma)
    params0 = random_projection_params(cfg.n_features, cfg.dim, int(seeds[1]))
    spec = cfg.spec
    eval_seed = int(seeds[2])

    def kernel(params, cal):
        return hw_kernel(X, params, spec, cfg.encode_distorted, eval_seed, cal)

    B = kernel(params0, None)
    # C: output calibration only, on the similarity loss alone
    c_cfg = replace(cfg.opt, beta=0.0, seed=int(seeds[3]))
    resC = optimize_joint(params0, X, A, spec, c_cfg, encode_distorted=cfg.encode_distorted,
                          learn_weights=False, learn_calibration=True)
    C = kernel(params0, resC.calibration)
    # D: encoder and calibration together, with the regularizer, starting
    # from C's calibration
    d_cfg = replace(cfg.opt, seed=int(seeds[3]))
    resD = optimize_joint(params0, X, A, spec, d_cfg, encode_distorted=cfg.encode_distorted,
                          calibration=resC.calibration, learn_weights=True, learn_calibration=True)
    D = kernel(resD.params, resD.calibration)
    errors = {name: frobenius_error(K, A) for name, K in (("B", B), ("C", C), ("D", D))}
    return KernelResult(A, B, C, D, errors, resC.calibration, resD.calibration,
                        {"C": resC.trace, "D": resD.trace})


def fit_output_calibration(pre, target, spec: DistortionSpec, cfg: OptimizeConfig) -> OutputCalibration:
    """Least-squares fit of ``g(a*x + b)`` to a target on precomputed
    comparison values x (cosines or rescaled Hamming similarities).

    Only meaningful for output-mode comparisons; accumulate mode returns the
    identity calibration.
    """
    if spec.mode is not Mode.OUTPUT:
        return OutputCalibration()
    x = np.asarray(pre, dtype=np.float64).ravel()
    T = _values(target).ravel()
    if x.shape != T.shape:
        raise IncompatibleError(f"target has {T.size} entries, expected {x.size}")
    make = _Adam if cfg.optimizer == "adam" else _GD
    opt = make(cfg.step_size)
    cal = np.array([1.0, 0.0])
    for step in range(int(cfg.iterations)):
        u = cal[0] * x + cal[1]
        r = transfer(spec.family, spec.gain, u) - T
        if not np.all(np.isfinite(r)):
            raise DivergenceError(step, float("nan"))
        d = 2.0 * r * transfer_grad(spec.family, spec.gain, u) / x.size
        cal = cal - opt.step(np.array([np.sum(d * x), np.sum(d)]), _schedule(cfg, step))
        cal[0] = max(cal[0], 1e-6)
    return OutputCalibration(*cal)
