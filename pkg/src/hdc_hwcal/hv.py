"""Hypervectors and the core HDC algebra.

Three value representations are supported:

* ``Repr.DENSE_REAL`` -- arbitrary real components (bundles, encodings).
* ``Repr.BIPOLAR`` -- components in {-1, +1}; binding is the elementwise
  product and every vector is its own inverse.
* ``Repr.PHASE`` -- FHRR vectors stored as phase angles in [0, 2*pi); the
  implied complex components exp(j*theta) have unit modulus, binding adds
  phases and the inverse is the complex conjugate (negated phases).

All functions are pure: inputs are never modified and the returned arrays
are read-only.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    EmptyInputError,
    IncompatibleError,
    InvalidDimensionError,
    UndefinedSimilarityError,
    UnsupportedReprError,
)

TWO_PI = 2.0 * np.pi

SeedLike = Union[int, np.integer, np.random.Generator]


class Repr(enum.IntEnum):
    DENSE_REAL = 0
    BIPOLAR = 1
    PHASE = 2


_BINARY_TAG = 3
_HEADER = struct.Struct("<BI")


def as_rng(seed: SeedLike) -> np.random.Generator:
    """Return a generator for ``seed``; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (bool, float)) or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.default_rng(int(seed))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def wrap_phase(theta) -> np.ndarray:
    """Reduce angles into [0, 2*pi), guarding the float edge where
    ``x % 2pi`` rounds up to exactly 2pi."""
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


@dataclass(frozen=True, eq=False)
class Hypervector:
    kind: Repr
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 1:
            raise InvalidDimensionError(f"hypervector data must be 1-D, got shape {data.shape}")
        if data.size == 0:
            raise InvalidDimensionError("hypervector dimension must be >= 1")
        if self.kind is Repr.BIPOLAR and not np.all(np.abs(data) == 1.0):
            raise ValueError("bipolar hypervector may only contain -1 and +1")
        if self.kind is Repr.PHASE and not np.all((data >= 0.0) & (data < TWO_PI)):
            raise ValueError("phase angles must lie in [0, 2*pi)")
        object.__setattr__(self, "kind", Repr(self.kind))
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return int(self.data.shape[0])

    @classmethod
    def dense(cls, values) -> "Hypervector":
        return cls(Repr.DENSE_REAL, np.asarray(values, dtype=np.float64))

    @classmethod
    def bipolar(cls, values) -> "Hypervector":
        return cls(Repr.BIPOLAR, np.asarray(values, dtype=np.float64))

    @classmethod
    def phase(cls, angles) -> "Hypervector":
        return cls(Repr.PHASE, wrap_phase(np.asarray(angles, dtype=np.float64)))

    def __neg__(self) -> "Hypervector":
        if self.kind is Repr.PHASE:
            return Hypervector.phase(self.data + np.pi)
        return Hypervector(self.kind, -self.data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hypervector):
            return NotImplemented
        return self.kind is other.kind and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((int(self.kind), self.data.tobytes()))

    def to_bytes(self) -> bytes:
        """Flat binary layout: u8 repr tag, u32 LE dim, then the payload.

        Bipolar vectors are stored as packed bits (1 for +1); the other
        representations as little-endian f64.
        """
        header = _HEADER.pack(int(self.kind), self.dim)
        if self.kind is Repr.BIPOLAR:
            return header + np.packbits(self.data > 0).tobytes()
        return header + self.data.astype("<f8").tobytes()


@dataclass(frozen=True, eq=False)
class BinaryHypervector:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8, copy=True)
        if bits.ndim != 1 or bits.size == 0:
            raise InvalidDimensionError("binary hypervector must be a non-empty 1-D array")
        if np.any(bits > 1):
            raise ValueError("binary hypervector may only contain 0 and 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def dim(self) -> int:
        return int(self.bits.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryHypervector):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def to_bipolar(self) -> Hypervector:
        return Hypervector.bipolar(2.0 * self.bits - 1.0)

    def to_bytes(self) -> bytes:
        return _HEADER.pack(_BINARY_TAG, self.dim) + np.packbits(self.bits).tobytes()


def from_bytes(buf: bytes) -> Union[Hypervector, BinaryHypervector]:
    """Inverse of ``Hypervector.to_bytes`` / ``BinaryHypervector.to_bytes``."""
    if len(buf) < _HEADER.size:
        raise ValueError("buffer too short for hypervector header")
    tag, dim = _HEADER.unpack_from(buf)
    payload = buf[_HEADER.size:]
    if tag in (Repr.BIPOLAR, _BINARY_TAG):
        need = (dim + 7) // 8
        if len(payload) != need:
            raise ValueError(f"expected {need} packed bytes, got {len(payload)}")
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:dim]
        if tag == _BINARY_TAG:
            return BinaryHypervector(bits)
        return Hypervector.bipolar(2.0 * bits - 1.0)
    if tag not in (Repr.DENSE_REAL, Repr.PHASE):
        raise ValueError(f"unknown repr tag {tag}")
    if len(payload) != 8 * dim:
        raise ValueError(f"expected {8 * dim} payload bytes, got {len(payload)}")
    return Hypervector(Repr(tag), np.frombuffer(payload, dtype="<f8").astype(np.float64))


def _check_dim(dim) -> int:
    if int(dim) < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    return int(dim)


def random_bipolar(dim: int, seed: SeedLike) -> Hypervector:
    dim = _check_dim(dim)
    rng = as_rng(seed)
    return Hypervector.bipolar(rng.integers(0, 2, size=dim) * 2.0 - 1.0)


def random_phase(dim: int, seed: SeedLike) -> Hypervector:
    dim = _check_dim(dim)
    rng = as_rng(seed)
    return Hypervector.phase(rng.uniform(0.0, TWO_PI, size=dim))


def _check_pair(a: Hypervector, b: Hypervector, *, bindable: bool):
    if a.dim != b.dim:
        raise IncompatibleError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.kind is not b.kind:
        raise IncompatibleError(f"repr mismatch: {a.kind.name} vs {b.kind.name}")
    if bindable and a.kind is Repr.DENSE_REAL:
        raise IncompatibleError("bind/unbind require Bipolar or Phase operands")


def bind(a: Hypervector, b: Hypervector) -> Hypervector:
    _check_pair(a, b, bindable=True)
    if a.kind is Repr.PHASE:
        return Hypervector.phase(a.data + b.data)
    return Hypervector.bipolar(a.data * b.data)


def inverse(v: Hypervector) -> Hypervector:
    if v.kind is Repr.BIPOLAR:
        return v
    if v.kind is Repr.PHASE:
        return Hypervector.phase(-v.data)
    raise UnsupportedReprError("only Bipolar and Phase vectors have a binding inverse")


def unbind(composite: Hypervector, key: Hypervector) -> Hypervector:
    _check_pair(composite, key, bindable=True)
    return bind(composite, inverse(key))


def as_real(v: Hypervector) -> np.ndarray:
    """Real view used for similarity and distortion.

    Phase vectors become interleaved (cos, sin) pairs of length 2D, so that
    the real inner product equals the real part of the Hermitian product.
    """
    if v.kind is Repr.PHASE:
        return phase_to_real(v.data)
    return v.data


def phase_to_real(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty(theta.shape[:-1] + (2 * theta.shape[-1],))
    out[..., 0::2] = np.cos(theta)
    out[..., 1::2] = np.sin(theta)
    return out


def bundle(vs: Sequence[Hypervector], normalize: bool = False) -> Hypervector:
    """Componentwise sum, optionally scaled to unit Euclidean norm.

    Phase vectors are summed as unit complex numbers; the result is a
    DenseReal vector of interleaved (re, im) pairs, see ``to_phase``.
    """
    vs = list(vs)
    if not vs:
        raise EmptyInputError("cannot bundle an empty list")
    dim = vs[0].dim
    is_phase = vs[0].kind is Repr.PHASE
    for v in vs:
        if v.dim != dim:
            raise IncompatibleError(f"dimension mismatch: {dim} vs {v.dim}")
        if (v.kind is Repr.PHASE) != is_phase:
            raise IncompatibleError("cannot bundle Phase vectors with real-valued vectors")
    total = np.sum([as_real(v) for v in vs], axis=0)
    if normalize:
        norm = np.linalg.norm(total)
        if norm == 0.0:
            raise UndefinedSimilarityError("cannot normalize a bundle that sums to zero")
        total = total / norm
    return Hypervector.dense(total)


def to_phase(v: Hypervector) -> Hypervector:
    """Project an interleaved complex bundle onto its phases."""
    if v.kind is not Repr.DENSE_REAL or v.dim % 2:
        raise UnsupportedReprError("to_phase expects an interleaved DenseReal bundle of even length")
    re, im = v.data[0::2], v.data[1::2]
    return Hypervector.phase(np.arctan2(im, re))


def cosine_sim(a: Hypervector, b: Hypervector) -> float:
    if a.dim != b.dim:
        raise IncompatibleError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if (a.kind is Repr.PHASE) != (b.kind is Repr.PHASE):
        raise IncompatibleError("cannot compare Phase with real-valued vectors")
    if a.kind is Repr.PHASE:
        return float(np.mean(np.cos(a.data - b.data)))
    return cosine(a.data, b.data)


def cosine(x: np.ndarray, y: np.ndarray) -> float:
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def hamming_sim(a: BinaryHypervector, b: BinaryHypervector) -> float:
    if a.dim != b.dim:
        raise IncompatibleError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return 1.0 - np.count_nonzero(a.bits ^ b.bits) / a.dim


def quantize_sign(v: Hypervector) -> BinaryHypervector:
    """Positive components become 1, everything else (zero included) 0."""
    if v.kind is Repr.PHASE:
        raise UnsupportedReprError("sign quantization is undefined for Phase vectors")
    return BinaryHypervector((v.data > 0).astype(np.uint8))
