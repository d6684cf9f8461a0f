"""Hardware-aware hyperdimensional computing.

Hypervector algebra, a compute-in-memory distortion model, a trainable
encoder whose hardware-perceived similarities can be calibrated against a
target kernel, and GrapHD/RelHD/QuantHD pipelines built on top.
"""

__version__ = "0.1.0"

from .errors import HDCError
from .hv import (
    BinaryHypervector,
    Hypervector,
    Repr,
    bind,
    bundle,
    cosine_sim,
    hamming_sim,
    inverse,
    quantize_sign,
    random_bipolar,
    random_phase,
    unbind,
)
from .hardware import DistortionSpec, Family, HardwareEnsemble, Mode, distort, hw_similarity

__all__ = [
    "HDCError",
    "BinaryHypervector",
    "Hypervector",
    "Repr",
    "bind",
    "bundle",
    "cosine_sim",
    "hamming_sim",
    "inverse",
    "quantize_sign",
    "random_bipolar",
    "random_phase",
    "unbind",
    "DistortionSpec",
    "Family",
    "HardwareEnsemble",
    "Mode",
    "distort",
    "hw_similarity",
]
