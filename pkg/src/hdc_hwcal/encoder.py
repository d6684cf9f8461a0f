"""Learnable encoder phi_theta and the gradient of the calibration objective.

The encoder is a single linear projection ``z = W^T x`` followed by an
optional activation:

    none   DenseReal(z)
    tanh   DenseReal(tanh z)
    phase  Phase(z mod 2pi)

The objective whose gradient is computed here is

    J(W) = alpha * sum_ij (K_ij - T_ij)^2 + beta * R(W)

where K is the hardware kernel of the encoded batch (see
``hardware.similarity_matrix``) and R the norm/sparsity regularizer.
Gradients are derived by hand and checked against central differences in
the test-suite.  Noise is drawn once per call and held fixed, so the
gradient is exact for the sampled hardware instance.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import IncompatibleError, InvalidDimensionError, NumericOverflowError
from .hardware import (
    DistortionSpec,
    Family,
    Mode,
    OutputCalibration,
    store,
    transfer,
    transfer_grad,
)
from .hv import Hypervector, Repr, SeedLike, as_rng, phase_to_real, wrap_phase

SPARSITY_WEIGHT = 0.1


class Activation(str, enum.Enum):
    NONE = "none"
    TANH = "tanh"
    PHASE_MAP = "phase"


@dataclass(frozen=True, eq=False)
class EncoderParams:
    weights: np.ndarray
    activation: Activation = Activation.NONE

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64, copy=True)
        if W.ndim != 2 or 0 in W.shape:
            raise InvalidDimensionError(f"weights must be a non-empty 2-D matrix, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise NumericOverflowError("encoder weights contain non-finite entries",
                                       tuple(np.argwhere(~np.isfinite(W))[0]))
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_repr(self) -> Repr:
        return Repr.PHASE if self.activation is Activation.PHASE_MAP else Repr.DENSE_REAL

    def with_weights(self, W: np.ndarray) -> "EncoderParams":
        return EncoderParams(W, self.activation)

    def __eq__(self, other):
        if not isinstance(other, EncoderParams):
            return NotImplemented
        return self.activation is other.activation and np.array_equal(self.weights, other.weights)

    _HEADER = struct.Struct("<BII")
    _ACT_TAGS = {Activation.NONE: 0, Activation.TANH: 1, Activation.PHASE_MAP: 2}

    def to_bytes(self) -> bytes:
        """Shape header (u8 activation, u32 rows, u32 cols) + row-major f64."""
        rows, cols = self.weights.shape
        return self._HEADER.pack(self._ACT_TAGS[self.activation], rows, cols) + self.weights.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "EncoderParams":
        tag, rows, cols = cls._HEADER.unpack_from(buf)
        payload = buf[cls._HEADER.size:]
        if len(payload) != 8 * rows * cols:
            raise ValueError(f"expected {8 * rows * cols} payload bytes, got {len(payload)}")
        act = {v: k for k, v in cls._ACT_TAGS.items()}[tag]
        W = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
        return cls(W, act)


def random_projection_params(n_features: int, dim: int, seed: SeedLike,
                             activation: Activation = Activation.NONE) -> EncoderParams:
    """W with i.i.d. N(0, 1/n_features) entries."""
    if int(n_features) < 1 or int(dim) < 1:
        raise InvalidDimensionError(f"dimensions must be >= 1, got ({n_features}, {dim})")
    rng = as_rng(seed)
    W = rng.standard_normal((int(n_features), int(dim))) / np.sqrt(n_features)
    return EncoderParams(W, activation)


def _as_batch(X, params: EncoderParams) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.n_features:
        raise IncompatibleError(f"input has {X.shape[1]} features, encoder expects {params.n_features}")
    return X


def encode_real(X, params: EncoderParams) -> np.ndarray:
    """Real views of the encodings of every row of X (n x m).

    m = D for DenseReal outputs and 2D (interleaved cos/sin) for Phase.
    """
    Z = _as_batch(X, params) @ params.weights
    if params.activation is Activation.TANH:
        return np.tanh(Z)
    if params.activation is Activation.PHASE_MAP:
        return phase_to_real(Z)
    return Z


def encode(x, params: EncoderParams) -> Hypervector:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise IncompatibleError("encode expects a single feature vector")
    z = _as_batch(x, params)[0] @ params.weights
    if params.activation is Activation.TANH:
        return Hypervector.dense(np.tanh(z))
    if params.activation is Activation.PHASE_MAP:
        return Hypervector.phase(wrap_phase(z))
    return Hypervector.dense(z)


def encode_hw(x, params: EncoderParams, spec: DistortionSpec, rng: Optional[SeedLike] = None) -> Hypervector:
    """Encoding as stored in CIM: the distortion applied to the real view."""
    enc = encode_real(np.asarray(x, dtype=np.float64)[None, :], params)[0]
    return Hypervector.dense(store(enc, spec, None if rng is None else as_rng(rng)))


# -- objective ------------------------------------------------------------------


class Noise(NamedTuple):
    inputs: Optional[np.ndarray]
    outputs: Optional[np.ndarray]


def draw_noise(spec: DistortionSpec, n: int, m: int, rng: np.random.Generator) -> Noise:
    """Per-step noise sample; output noise is symmetric across pairs."""
    inputs = outputs = None
    if spec.input_noise_std > 0:
        inputs = rng.normal(0.0, spec.input_noise_std, size=(n, m))
    if spec.output_noise_std > 0:
        upper = np.triu(rng.normal(0.0, spec.output_noise_std, size=(n, n)))
        outputs = upper + np.triu(upper, 1).T
    return Noise(inputs, outputs)


def regularizer_value(E: np.ndarray, dim: int) -> float:
    norm_term = np.mean((np.sum(E * E, axis=1) / dim - 1.0) ** 2)
    return float(norm_term + SPARSITY_WEIGHT * np.mean(np.abs(E)))


def _regularizer_grad(E: np.ndarray, dim: int) -> np.ndarray:
    n, m = E.shape
    dev = np.sum(E * E, axis=1, keepdims=True) / dim - 1.0
    return (4.0 / (n * dim)) * dev * E + SPARSITY_WEIGHT * np.sign(E) / (n * m)


@dataclass
class _Cache:
    X: np.ndarray
    E: np.ndarray
    S: np.ndarray
    norms: np.ndarray
    Sh: np.ndarray
    pre: np.ndarray          # argument of the comparison nonlinearity
    base: np.ndarray         # cosine (output mode) or elementwise products (accumulate mode)


def _forward(W, X, activation, spec, encode_distorted, calibration, noise):
    a, b = (1.0, 0.0) if calibration is None else (calibration.gain, calibration.bias)
    Z = X @ W
    if activation is Activation.TANH:
        E = np.tanh(Z)
    elif activation is Activation.PHASE_MAP:
        E = phase_to_real(Z)
    else:
        E = Z
    if encode_distorted:
        S = transfer(spec.family, spec.gain, E) + spec.offset
        if noise.inputs is not None:
            S = S + noise.inputs
    else:
        S = E
    norms = np.linalg.norm(S, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        i = int(np.flatnonzero(norms[:, 0] == 0.0)[0])
        raise NumericOverflowError("stored encoding has zero norm", i)
    Sh = S / norms
    m = S.shape[1]
    if spec.mode is Mode.OUTPUT:
        base = Sh @ Sh.T
        pre = a * base + b
        K = transfer(spec.family, spec.gain, pre)
    else:
        U = Sh * np.sqrt(m)
        base = U[:, None, :] * U[None, :, :]
        pre = a * base + b
        K = transfer(spec.family, spec.gain, pre).mean(axis=-1)
    if noise.outputs is not None:
        K = K + noise.outputs
    bad = ~np.isfinite(K)
    if bad.any():
        raise NumericOverflowError("hardware kernel overflowed", tuple(int(v) for v in np.argwhere(bad)[0]))
    return K, _Cache(X, E, S, norms, Sh, pre, base)


def _backward(W, cache: _Cache, G_K, activation, spec, encode_distorted, calibration,
              beta: float, dim: int):
    a = 1.0 if calibration is None else calibration.gain
    Sh, m = cache.Sh, cache.S.shape[1]
    if spec.mode is Mode.OUTPUT:
        G_pre = G_K * transfer_grad(spec.family, spec.gain, cache.pre)
        G_base = a * G_pre
        G_Sh = (G_base + G_base.T) @ Sh
    else:
        G_pre = G_K[:, :, None] * transfer_grad(spec.family, spec.gain, cache.pre) / m
        G_base = a * G_pre
        U = Sh * np.sqrt(m)
        G_U = np.einsum("ijk,jk->ik", G_base + G_base.transpose(1, 0, 2), U)
        G_Sh = np.sqrt(m) * G_U
    d_gain = float(np.sum(G_pre * cache.base))
    d_bias = float(np.sum(G_pre))
    radial = np.sum(G_Sh * Sh, axis=1, keepdims=True)
    G_S = (G_Sh - radial * Sh) / cache.norms
    if encode_distorted:
        G_E = G_S * transfer_grad(spec.family, spec.gain, cache.E)
    else:
        G_E = G_S
    if beta:
        G_E = G_E + beta * _regularizer_grad(cache.E, dim)
    E = cache.E
    if activation is Activation.TANH:
        G_Z = G_E * (1.0 - E * E)
    elif activation is Activation.PHASE_MAP:
        G_Z = -E[:, 1::2] * G_E[:, 0::2] + E[:, 0::2] * G_E[:, 1::2]
    else:
        G_Z = G_E
    dW = cache.X.T @ G_Z
    bad = ~np.isfinite(dW)
    if bad.any():
        raise NumericOverflowError("gradient overflowed", tuple(int(v) for v in np.argwhere(bad)[0]))
    return dW, np.array([d_gain, d_bias])


class ObjectiveEval(NamedTuple):
    value: float
    grad_weights: np.ndarray
    grad_calibration: np.ndarray
    kernel: np.ndarray


def evaluate_objective(
    params: EncoderParams,
    X,
    target,
    spec: DistortionSpec,
    *,
    alpha: float,
    beta: float,
    noise: Optional[Noise] = None,
    encode_distorted: bool = True,
    calibration: Optional[OutputCalibration] = None,
    task_loss: float = 0.0,
) -> ObjectiveEval:
    """Value and gradients of ``task + alpha*sim_loss + beta*R`` for one
    hardware sample with fixed noise."""
    X = _as_batch(X, params)
    T = np.asarray(target, dtype=np.float64)
    n = X.shape[0]
    if T.shape != (n, n):
        raise IncompatibleError(f"target must be {n}x{n}, got {T.shape}")
    noise = noise or Noise(None, None)
    W = params.weights
    K, cache = _forward(W, X, params.activation, spec, encode_distorted, calibration, noise)
    R = K - T
    value = float(task_loss) + alpha * float(np.sum(R * R))
    if beta:
        value += beta * regularizer_value(cache.E, params.dim)
    dW, dcal = _backward(W, cache, 2.0 * alpha * R, params.activation, spec,
                         encode_distorted, calibration, beta, params.dim)
    return ObjectiveEval(value, dW, dcal, K)


def loss_gradient(
    params: EncoderParams,
    batch: Sequence,
    target,
    spec: DistortionSpec,
    alpha: float,
    beta: float,
    rng: Optional[SeedLike] = None,
    *,
    encode_distorted: bool = True,
    calibration: Optional[OutputCalibration] = None,
) -> np.ndarray:
    """Gradient of the joint objective with respect to the weights."""
    X = _as_batch(batch, params)
    m = params.dim * (2 if params.activation is Activation.PHASE_MAP else 1)
    noise = draw_noise(spec, X.shape[0], m, as_rng(rng if rng is not None else spec.seed))
    return evaluate_objective(params, X, target, spec, alpha=alpha, beta=beta, noise=noise,
                              encode_distorted=encode_distorted, calibration=calibration).grad_weights
