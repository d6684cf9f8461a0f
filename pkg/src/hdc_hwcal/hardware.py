"""Compute-in-memory non-idealities.

A stored component x is read back as ``g(x) + offset + noise`` where g is one
of the odd, origin-fixing transfer curves below and ``offset`` is the
common-mode level of the storage cell (a conductance floor; 0 by default).
The comparison circuit Psi then produces a similarity that is itself passed
through g (``Mode.OUTPUT``) or accumulates g of every elementwise product
(``Mode.ACCUMULATE``).

Transfer curves, all mapping 0 to 0:

    tanh      tanh(gain * x)
    exp       sign(x) * (exp(gain*|x|) - 1) / (exp(gain) - 1)
    log       sign(x) * log(1 + gain*|x|) / log(1 + gain)
    identity  x
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    IncompatibleError,
    InvalidEnsembleError,
    InvalidParameterError,
    NumericInputError,
    UndefinedSimilarityError,
    UnsupportedReprError,
)
from .hv import BinaryHypervector, Hypervector, Repr, SeedLike, as_real, as_rng, hamming_sim


class Family(str, enum.Enum):
    TANH = "tanh"
    EXP = "exp"
    LOG = "log"
    IDENTITY = "identity"


class Mode(str, enum.Enum):
    OUTPUT = "output"
    ACCUMULATE = "accumulate"


def _parse_enum(cls, value, name):
    if isinstance(value, cls):
        return value
    try:
        return cls(str(value).strip().lower())
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise InvalidParameterError(f"{name} must be one of {{{choices}}}, got {value!r}") from None


@dataclass(frozen=True)
class DistortionSpec:
    family: Family = Family.IDENTITY
    gain: float = 1.0
    input_noise_std: float = 0.0
    output_noise_std: float = 0.0
    mode: Mode = Mode.OUTPUT
    seed: int = 0
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", _parse_enum(Family, self.family, "family"))
        object.__setattr__(self, "mode", _parse_enum(Mode, self.mode, "mode"))
        for name in ("gain", "input_noise_std", "output_noise_std", "offset"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.isfinite(self.gain) and self.gain > 0):
            raise InvalidParameterError(f"gain must be a positive finite number, got {self.gain}")
        if not (self.input_noise_std >= 0 and self.output_noise_std >= 0):
            raise InvalidParameterError("noise standard deviations must be >= 0")
        if not np.isfinite(self.offset):
            raise InvalidParameterError("offset must be finite")
        if int(self.seed) < 0:
            raise InvalidParameterError("seed must be non-negative")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def is_ideal(self) -> bool:
        return (
            self.family is Family.IDENTITY
            and self.offset == 0.0
            and self.input_noise_std == 0.0
            and self.output_noise_std == 0.0
        )

    @property
    def noiseless(self) -> "DistortionSpec":
        return replace(self, input_noise_std=0.0, output_noise_std=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_mapping(cls, m: Mapping) -> "DistortionSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(m) - known
        if unknown:
            raise InvalidParameterError(f"unknown distortion field(s): {sorted(unknown)}")
        return cls(**dict(m))


IDEAL = DistortionSpec()


@dataclass(frozen=True)
class HardwareEnsemble:
    family_pool: Tuple[Family, ...]
    gain_range: Tuple[float, float] = (1.0, 1.0)
    noise_range: Tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    mode: Mode = Mode.OUTPUT
    offset_range: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        pool = tuple(_parse_enum(Family, f, "family_pool") for f in self.family_pool)
        if not pool:
            raise InvalidEnsembleError("family_pool must not be empty")
        object.__setattr__(self, "family_pool", pool)
        object.__setattr__(self, "mode", _parse_enum(Mode, self.mode, "mode"))
        for name in ("gain_range", "noise_range", "offset_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if lo > hi:
                raise InvalidEnsembleError(f"{name} is not ordered: [{lo}, {hi}]")
            object.__setattr__(self, name, (lo, hi))
        if self.gain_range[0] <= 0:
            raise InvalidEnsembleError("gain_range must be positive")
        if self.noise_range[0] < 0:
            raise InvalidEnsembleError("noise_range must be non-negative")


@dataclass(frozen=True)
class OutputCalibration:
    """Learnable affine map applied to the argument of the comparison
    nonlinearity: ``g(gain * c + bias)``."""

    gain: float = 1.0
    bias: float = 0.0


# -- transfer curves --------------------------------------------------------


def transfer(family: Family, gain: float, x):
    x = np.asarray(x, dtype=np.float64)
    if family is Family.TANH:
        return np.tanh(gain * x)
    if family is Family.EXP:
        with np.errstate(over="ignore"):
            return np.sign(x) * np.expm1(gain * np.abs(x)) / np.expm1(gain)
    if family is Family.LOG:
        return np.sign(x) * np.log1p(gain * np.abs(x)) / np.log1p(gain)
    return x.copy()


def transfer_grad(family: Family, gain: float, x):
    """Derivative of ``transfer`` with respect to x (continuous at 0)."""
    x = np.asarray(x, dtype=np.float64)
    if family is Family.TANH:
        t = np.tanh(gain * x)
        return gain * (1.0 - t * t)
    if family is Family.EXP:
        with np.errstate(over="ignore"):
            return gain * np.exp(gain * np.abs(x)) / np.expm1(gain)
    if family is Family.LOG:
        return gain / ((1.0 + gain * np.abs(x)) * np.log1p(gain))
    return np.ones_like(x)


# -- storage ------------------------------------------------------------------


def store(values: np.ndarray, spec: DistortionSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Array form of ``distort``: the analog read-back of stored values."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericInputError("cannot store non-finite components")
    out = transfer(spec.family, spec.gain, values)
    if spec.offset:
        out = out + spec.offset
    if spec.input_noise_std > 0:
        out = out + as_rng(rng if rng is not None else spec.seed).normal(0.0, spec.input_noise_std, size=out.shape)
    return out


def distort(v: Hypervector, spec: DistortionSpec, rng: Optional[SeedLike] = None) -> Hypervector:
    if v.kind is Repr.PHASE:
        raise UnsupportedReprError("distort expects a DenseReal or Bipolar vector")
    return Hypervector.dense(store(v.data, spec, None if rng is None else as_rng(rng)))


# -- comparison ------------------------------------------------------------------


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise UndefinedSimilarityError("similarity is undefined for a zero vector")
    return M / norms


def compare(
    P: np.ndarray,
    Q: np.ndarray,
    spec: DistortionSpec,
    calibration: Optional[OutputCalibration] = None,
) -> np.ndarray:
    """Noise-free comparison Psi between the rows of two stored matrices."""
    a = 1.0 if calibration is None else calibration.gain
    b = 0.0 if calibration is None else calibration.bias
    Pn, Qn = _unit_rows(np.atleast_2d(P)), _unit_rows(np.atleast_2d(Q))
    if spec.mode is Mode.OUTPUT:
        C = np.clip(Pn @ Qn.T, -1.0, 1.0)
        return transfer(spec.family, spec.gain, a * C + b)
    m = Pn.shape[1]
    out = np.empty((Pn.shape[0], Qn.shape[0]))
    # chunk rows to bound the n x k x m temporary
    step = max(1, int(4_000_000 // max(1, Qn.shape[0] * m)))
    for lo in range(0, Pn.shape[0], step):
        prod = Pn[lo:lo + step, None, :] * Qn[None, :, :] * m
        out[lo:lo + step] = transfer(spec.family, spec.gain, a * prod + b).mean(axis=-1)
    return out


def similarity_matrix(
    P: np.ndarray,
    Q: Optional[np.ndarray],
    spec: DistortionSpec,
    rng: Optional[np.random.Generator] = None,
    *,
    distort_inputs: bool = True,
    calibration: Optional[OutputCalibration] = None,
) -> np.ndarray:
    """Hardware similarity between every row of P and every row of Q.

    With ``Q=None`` the rows of P are compared with each other and the
    result is exactly symmetric (upper triangle mirrored, output noise
    drawn once per unordered pair).
    """
    rng = as_rng(rng if rng is not None else spec.seed)
    symmetric = Q is None
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if distort_inputs:
        P = store(P, spec, rng)
        Q = P if symmetric else store(np.atleast_2d(Q), spec, rng)
    elif symmetric:
        Q = P
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if P.shape[1] != Q.shape[1]:
        raise IncompatibleError(f"dimension mismatch: {P.shape[1]} vs {Q.shape[1]}")
    S = compare(P, Q, spec, calibration)
    if symmetric:
        S = np.triu(S) + np.triu(S, 1).T
    if spec.output_noise_std > 0:
        if symmetric:
            noise = np.triu(rng.normal(0.0, spec.output_noise_std, size=S.shape))
            S = S + noise + np.triu(noise, 1).T
        else:
            S = S + rng.normal(0.0, spec.output_noise_std, size=S.shape)
    return S


def hw_similarity(
    a: Union[Hypervector, BinaryHypervector],
    b: Union[Hypervector, BinaryHypervector],
    spec: DistortionSpec,
    rng: Optional[SeedLike] = None,
    *,
    distort_inputs: bool = True,
) -> float:
    """Hardware-perceived similarity of two vectors.

    Binary pairs are compared by Hamming similarity h, rescaled to
    ``2h - 1`` and passed through the output nonlinearity; storage
    distortion does not apply to bits.
    """
    rng = as_rng(rng if rng is not None else spec.seed)
    if isinstance(a, BinaryHypervector) or isinstance(b, BinaryHypervector):
        if not (isinstance(a, BinaryHypervector) and isinstance(b, BinaryHypervector)):
            raise IncompatibleError("cannot compare binary with non-binary vectors")
        s = float(transfer(spec.family, spec.gain, 2.0 * hamming_sim(a, b) - 1.0))
        if spec.output_noise_std > 0:
            s += float(rng.normal(0.0, spec.output_noise_std))
        return s
    if a.dim != b.dim:
        raise IncompatibleError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if (a.kind is Repr.PHASE) != (b.kind is Repr.PHASE):
        raise IncompatibleError("cannot compare Phase with real-valued vectors")
    S = similarity_matrix(as_real(a), as_real(b), spec, rng, distort_inputs=distort_inputs)
    return float(S[0, 0])


def hamming_scores(query_bits: np.ndarray, class_bits: np.ndarray, spec: DistortionSpec,
                   rng: Optional[np.random.Generator] = None,
                   calibration: Optional[OutputCalibration] = None) -> np.ndarray:
    """Batched binary associative search: rows of queries vs rows of classes."""
    q = np.atleast_2d(query_bits).astype(np.int32)
    c = np.atleast_2d(class_bits).astype(np.int32)
    mismatches = q @ (1 - c).T + (1 - q) @ c.T
    h = 1.0 - mismatches / q.shape[1]
    x = 2.0 * h - 1.0
    if calibration is not None:
        x = calibration.gain * x + calibration.bias
    S = transfer(spec.family, spec.gain, x)
    if spec.output_noise_std > 0:
        S = S + as_rng(rng if rng is not None else spec.seed).normal(0.0, spec.output_noise_std, size=S.shape)
    return S


def sample_hardware(ensemble: HardwareEnsemble, rng: Optional[SeedLike] = None) -> DistortionSpec:
    rng = as_rng(rng if rng is not None else ensemble.seed)
    if not ensemble.family_pool:
        raise InvalidEnsembleError("family_pool must not be empty")
    family = ensemble.family_pool[int(rng.integers(len(ensemble.family_pool)))]
    gain = float(rng.uniform(*ensemble.gain_range))
    noise_in = float(rng.uniform(*ensemble.noise_range))
    noise_out = float(rng.uniform(*ensemble.noise_range))
    offset = float(rng.uniform(*ensemble.offset_range))
    return DistortionSpec(
        family=family,
        gain=gain,
        input_noise_std=noise_in,
        output_noise_std=noise_out,
        mode=ensemble.mode,
        seed=int(rng.integers(0, 2**63 - 1)),
        offset=offset,
    )
