"""QuantHD classification on a CIM associative memory.

Class prototypes are accumulated from stored encodings, sign-quantized, and
searched by Hamming similarity through the hardware output nonlinearity.
Retraining adds a misclassified encoding to its true class and subtracts it
from the predicted one.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .calibrate import KernelMatrix, OptimizeConfig, fit_output_calibration, optimize_joint
from .data import Dataset
from .encoder import EncoderParams, encode_real
from .errors import EmptyInputError, IncompatibleError, InvalidParameterError, InvalidStateError
from .hardware import DistortionSpec, OutputCalibration, hamming_scores, store
from .hv import BinaryHypervector, SeedLike, as_rng

DEFAULT_EPOCHS = 20
CALIBRATION_BATCH = 64


@dataclass
class ClassModel:
    class_vectors: np.ndarray
    quantized: List[BinaryHypervector] = field(default_factory=list)
    calibration: Optional[OutputCalibration] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.class_vectors.shape[1]

    @property
    def n_classes(self) -> int:
        return self.class_vectors.shape[0]

    @property
    def trained(self) -> bool:
        return len(self.quantized) == self.n_classes

    def requantize(self) -> None:
        self.quantized = [BinaryHypervector((row > 0).astype(np.uint8)) for row in self.class_vectors]

    def bit_matrix(self) -> np.ndarray:
        if not self.trained:
            raise InvalidStateError("model has not been trained")
        return np.stack([q.bits for q in self.quantized])


def stored_encodings(X, params: EncoderParams, spec: DistortionSpec, rng) -> np.ndarray:
    return store(encode_real(X, params), spec, rng)


def _search(model: ClassModel, E: np.ndarray, spec: DistortionSpec, rng) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest class index
    S = hamming_scores((E > 0).astype(np.uint8), model.bit_matrix(), spec, rng, model.calibration)
    return np.argmax(S, axis=1)


def train(dataset: Dataset, params: EncoderParams, spec: DistortionSpec,
          epochs: int = DEFAULT_EPOCHS, rng: Optional[SeedLike] = None,
          n_classes: Optional[int] = None) -> ClassModel:
    if len(dataset) == 0:
        raise EmptyInputError("training set is empty")
    if epochs < 0:
        raise InvalidParameterError(f"epochs must be >= 0, got {epochs}")
    rng = as_rng(rng if rng is not None else spec.seed)
    y = dataset.labels
    C = n_classes or dataset.n_classes
    E = stored_encodings(dataset.features, params, spec, rng)
    V = np.zeros((C, E.shape[1]))
    np.add.at(V, y, E)
    model = ClassModel(V)
    empty = [k for k in range(C) if not np.any(y == k)]
    if empty:
        model.warnings.append(f"degenerate classes without training samples: {empty}")
    model.requantize()
    for _ in range(int(epochs)):
        pred = _search(model, E, spec, rng)
        wrong = np.flatnonzero(pred != y)
        if len(wrong) == 0:
            break
        np.add.at(model.class_vectors, y[wrong], E[wrong])
        np.subtract.at(model.class_vectors, pred[wrong], E[wrong])
        model.requantize()
    return model


def predict_batch(model: ClassModel, X, params: EncoderParams, spec: DistortionSpec,
                  rng: Optional[SeedLike] = None) -> np.ndarray:
    if not model.trained:
        raise InvalidStateError("model has not been trained")
    rng = as_rng(rng if rng is not None else spec.seed)
    E = stored_encodings(X, params, spec, rng)
    if E.shape[1] != model.dim:
        raise IncompatibleError(f"encoder dim {E.shape[1]} does not match model dim {model.dim}")
    return _search(model, E, spec, rng)


def predict(model: ClassModel, x, params: EncoderParams, spec: DistortionSpec,
            rng: Optional[SeedLike] = None) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise IncompatibleError("predict expects a single feature vector")
    return int(predict_batch(model, x[None, :], params, spec, rng)[0])


def evaluate(model: ClassModel, dataset: Dataset, params: EncoderParams, spec: DistortionSpec,
             repeats: int = 10, rng: Optional[SeedLike] = None) -> Dict:
    """Accuracy over ``repeats`` fresh noise draws."""
    if len(dataset) == 0:
        raise EmptyInputError("evaluation set is empty")
    if repeats < 1:
        raise InvalidParameterError(f"repeats must be >= 1, got {repeats}")
    rng = as_rng(rng if rng is not None else spec.seed)
    seeds = rng.integers(0, 2**63 - 1, size=int(repeats))
    per_repeat = [float(np.mean(predict_batch(model, dataset.features, params, spec, int(s))
                                == dataset.labels)) for s in seeds]
    return {"mean_accuracy": float(np.mean(per_repeat)), "per_repeat": per_repeat,
            "repeat_seeds": [int(s) for s in seeds]}


def build_label_kernel(labels: Sequence[int]) -> KernelMatrix:
    y = np.asarray(labels)
    if y.size == 0:
        raise EmptyInputError("labels are empty")
    return KernelMatrix((y[:, None] == y[None, :]).astype(np.float64))


def calibrate_encoder(dataset: Dataset, params: EncoderParams, spec: DistortionSpec,
                      cfg: OptimizeConfig, batch_size: int = CALIBRATION_BATCH) -> EncoderParams:
    """Fit the encoder so stored encodings reproduce the label kernel on
    random mini-batches; QuantHD then trains on the frozen result."""
    X, y = dataset.features, dataset.labels
    size = min(int(batch_size), len(dataset))

    def sampler(rng):
        idx = rng.choice(len(dataset), size=size, replace=False)
        return X[idx], build_label_kernel(y[idx]).values

    return optimize_joint(params, None, None, spec, cfg, encode_distorted=True, sampler=sampler).params


def fit_search_calibration(model: ClassModel, dataset: Dataset, params: EncoderParams,
                           spec: DistortionSpec, cfg: OptimizeConfig) -> OutputCalibration:
    """Output calibration mapping noise-free training Hamming scores onto
    one-hot labels; stored on the model and used by every later search."""
    E = stored_encodings(dataset.features, params, spec.noiseless, None)
    q = (E > 0).astype(np.int32)
    c = model.bit_matrix().astype(np.int32)
    h = 1.0 - (q @ (1 - c).T + (1 - q) @ c.T) / q.shape[1]
    target = (dataset.labels[:, None] == np.arange(model.n_classes)[None, :]).astype(np.float64)
    model.calibration = fit_output_calibration(2.0 * h - 1.0, target, spec, cfg)
    return model.calibration


def write_report(out_dir: str, report: Dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "classify_report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return path
