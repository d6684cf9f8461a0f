"""GrapHD graph memory and RelHD relation encoding under CIM distortion.

Node hypervectors are bipolar.  In the distorted pipeline every node vector
is first read back through the storage distortion; the graph memory, the
unbinding and the neighbor bundles are then computed digitally from those
stored values and only the final comparisons go through the hardware
similarity.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .calibrate import OptimizeConfig, fit_output_calibration, optimize_joint
from .encoder import Activation, EncoderParams, encode_real
from .errors import (
    IncompatibleError,
    InvalidDatasetError,
    InvalidParameterError,
)
from .hardware import DistortionSpec, OutputCalibration, similarity_matrix, store, transfer
from .hv import Hypervector, Repr, SeedLike, as_rng, cosine_sim, random_bipolar

Edge = Tuple[int, int]
SIMDIST_BINS = 50
GAP_FALLBACK = 0.05
FIXED_THRESHOLD = 0.5


def _edge(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class GraphSpec:
    n_nodes: int
    edges: FrozenSet[Edge]
    features: Optional[np.ndarray] = None
    labels: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 1:
            raise InvalidParameterError(f"n_nodes must be >= 1, got {n}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParameterError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidParameterError(f"edge ({i}, {j}) out of range for {n} nodes")
            e = _edge(i, j)
            if e in norm:
                raise InvalidParameterError(f"duplicate edge {e}")
            norm.add(e)
        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "edges", frozenset(norm))
        if self.features is not None:
            F = np.array(self.features, dtype=np.float64, copy=True)
            if F.ndim != 2 or F.shape[0] != n:
                raise InvalidParameterError(f"features must be {n} x d, got {F.shape}")
            F.setflags(write=False)
            object.__setattr__(self, "features", F)
        if self.labels is not None:
            if len(self.labels) != n:
                raise InvalidParameterError(f"need {n} labels, got {len(self.labels)}")
            object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    def edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)

    def permuted(self, perm: Sequence[int]) -> "GraphSpec":
        """Relabel node i as perm[i]."""
        perm = np.asarray(perm)
        feats = None
        if self.features is not None:
            feats = np.empty_like(self.features)
            feats[perm] = self.features
        labels = None
        if self.labels is not None:
            lab = np.empty(self.n_nodes, dtype=np.int64)
            lab[perm] = self.labels
            labels = tuple(lab)
        return GraphSpec(self.n_nodes, frozenset(_edge(perm[i], perm[j]) for i, j in self.edges),
                         feats, labels)


@dataclass(frozen=True)
class RelationContext:
    omega0: Hypervector
    omega1: Hypervector
    omega2: Hypervector

    def __post_init__(self):
        oms = (self.omega0, self.omega1, self.omega2)
        if any(o.kind is not Repr.BIPOLAR for o in oms):
            raise InvalidParameterError("relation vectors must be bipolar")
        dim = self.omega0.dim
        if any(o.dim != dim for o in oms):
            raise IncompatibleError("relation vectors must share a dimension")
        bound = 4.0 / np.sqrt(dim)
        for a in range(3):
            for b in range(a + 1, 3):
                if abs(cosine_sim(oms[a], oms[b])) >= bound:
                    raise InvalidParameterError(
                        f"omega{a} and omega{b} are not quasi-orthogonal (|cos| >= {bound:.3g})")

    @property
    def dim(self) -> int:
        return self.omega0.dim

    @classmethod
    def random(cls, dim: int, seed: SeedLike) -> "RelationContext":
        rng = as_rng(seed)
        while True:
            try:
                return cls(*(random_bipolar(dim, rng) for _ in range(3)))
            except InvalidParameterError:
                continue

    def matrix(self) -> np.ndarray:
        return np.stack([self.omega0.data, self.omega1.data, self.omega2.data])


NodeVectors = Union[Sequence[Hypervector], np.ndarray]


def _node_matrix(node_hvs: NodeVectors, n_nodes: Optional[int] = None) -> np.ndarray:
    if isinstance(node_hvs, np.ndarray):
        H = np.atleast_2d(np.asarray(node_hvs, dtype=np.float64))
    else:
        vs = list(node_hvs)
        if not vs:
            raise InvalidParameterError("node vector list is empty")
        if any(v.kind is Repr.PHASE for v in vs):
            raise IncompatibleError("graph memories need Bipolar or DenseReal node vectors")
        dim = vs[0].dim
        if any(v.dim != dim for v in vs):
            raise IncompatibleError("node vectors must share a dimension")
        H = np.stack([v.data for v in vs])
    if n_nodes is not None and H.shape[0] != n_nodes:
        raise IncompatibleError(f"need {n_nodes} node vectors, got {H.shape[0]}")
    return H


def _neighbor_sum(g: GraphSpec, V: np.ndarray) -> np.ndarray:
    """Row k = sum of V over the neighbors of k."""
    out = np.zeros_like(V)
    E = g.edge_array()
    if len(E):
        np.add.at(out, E[:, 0], V[E[:, 1]])
        np.add.at(out, E[:, 1], V[E[:, 0]])
    return out


# -- GrapHD ------------------------------------------------------------------


def graphd_memories(g: GraphSpec, node_hvs: NodeVectors) -> np.ndarray:
    return _neighbor_sum(g, _node_matrix(node_hvs, g.n_nodes))


def graphd_encode(g: GraphSpec, node_hvs: NodeVectors) -> Hypervector:
    """G = 1/2 * sum_i H_i * M_i with M_i the unnormalized neighbor bundle."""
    H = _node_matrix(node_hvs, g.n_nodes)
    M = _neighbor_sum(g, H)
    return Hypervector.dense(0.5 * np.sum(H * M, axis=0))


def graphd_node_memory(G: Hypervector, H_i: Hypervector) -> Hypervector:
    if G.dim != H_i.dim:
        raise IncompatibleError(f"dimension mismatch: {G.dim} vs {H_i.dim}")
    return Hypervector.dense(H_i.data * G.data)


def gap_threshold(scores: np.ndarray, min_gap: float = GAP_FALLBACK,
                  fallback: float = FIXED_THRESHOLD) -> float:
    """Midpoint of the widest gap between consecutive sorted scores."""
    s = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if s.size < 2:
        return fallback
    gaps = np.diff(s)
    k = int(np.argmax(gaps))
    if gaps[k] < min_gap:
        return fallback
    return float((s[k] + s[k + 1]) / 2.0)


def _safe_scores(Q: np.ndarray, P: np.ndarray, spec: DistortionSpec, rng,
                 calibration: Optional[OutputCalibration] = None) -> np.ndarray:
    """Hardware scores of Q rows against P rows; zero query rows score g(b)."""
    S = np.zeros((Q.shape[0], P.shape[0]))
    live = np.linalg.norm(Q, axis=1) > 0
    if calibration is not None:
        S[:] = transfer(spec.family, spec.gain, calibration.bias)
    if live.any():
        S[live] = similarity_matrix(Q[live], P, spec.noiseless, rng, distort_inputs=False,
                                    calibration=calibration)
    if spec.output_noise_std > 0:
        S = S + rng.normal(0.0, spec.output_noise_std, size=S.shape)
    return S


def recon_scores(G: Hypervector, node_hvs: NodeVectors, spec: DistortionSpec,
                 rng: Optional[SeedLike] = None, *, distort_inputs: bool = True) -> np.ndarray:
    """n x n decision scores s_ij = hw_similarity(H_i * G, H_j)."""
    rng = as_rng(rng if rng is not None else spec.seed)
    H = _node_matrix(node_hvs)
    if G.dim != H.shape[1]:
        raise IncompatibleError(f"dimension mismatch: {G.dim} vs {H.shape[1]}")
    Hs = store(H, spec, rng) if distort_inputs else H
    return _safe_scores(Hs * G.data[None, :], Hs, spec, rng)


def _pair_scores(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    iu = np.triu_indices(S.shape[0], 1)
    return np.maximum(S[iu], S.T[iu]), np.stack(iu, axis=1)


def graphd_reconstruct(
    G: Hypervector,
    node_hvs: NodeVectors,
    spec: DistortionSpec,
    tau: Union[str, float] = "bimodal",
    rng: Optional[SeedLike] = None,
    *,
    distort_inputs: bool = True,
) -> FrozenSet[Edge]:
    """Predicted edge set.  ``tau`` is ``"bimodal"`` (gap split) or a fixed
    threshold.  With ``distort_inputs=False`` the node vectors are taken to
    be already stored, matching how G was built."""
    S = recon_scores(G, node_hvs, spec, rng, distort_inputs=distort_inputs)
    pair, idx = _pair_scores(S)
    if isinstance(tau, str):
        if tau != "bimodal":
            raise InvalidParameterError(f"tau must be 'bimodal' or a number, got {tau!r}")
        thr = gap_threshold(pair)
    else:
        thr = float(tau)
    return frozenset((int(i), int(j)) for (i, j), s in zip(idx, pair) if s > thr)


class ReconResult(NamedTuple):
    edges: FrozenSet[Edge]
    precision: float
    recall: float
    f1: float
    density: float


def edge_metrics(pred: FrozenSet[Edge], true: FrozenSet[Edge], n_nodes: int) -> ReconResult:
    tp = len(pred & true)
    precision = tp / len(pred) if pred else (1.0 if not true else 0.0)
    recall = tp / len(true) if true else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    total = n_nodes * (n_nodes - 1) // 2
    return ReconResult(pred, precision, recall, f1, len(pred) / total if total else 0.0)


def reconstruct_graph(g: GraphSpec, node_hvs: NodeVectors, spec: DistortionSpec,
                      tau: Union[str, float] = "bimodal",
                      rng: Optional[SeedLike] = None) -> ReconResult:
    """Whole pipeline: store node vectors, build G from the stored values,
    recover every node memory and threshold the hardware scores."""
    rng = as_rng(rng if rng is not None else spec.seed)
    Hs = store(_node_matrix(node_hvs, g.n_nodes), spec, rng)
    G = graphd_encode(g, Hs)
    pred = graphd_reconstruct(G, Hs, spec, tau, rng, distort_inputs=False)
    return edge_metrics(pred, g.edges, g.n_nodes)


class SimDistribution(NamedTuple):
    centers: np.ndarray
    counts: np.ndarray
    mean: float
    values: np.ndarray


def similarity_distribution(node_hvs: NodeVectors, spec: DistortionSpec,
                            rng: Optional[SeedLike] = None) -> SimDistribution:
    """Histogram (50 bins over [-1, 1]) of all pairwise hardware similarities."""
    H = _node_matrix(node_hvs)
    if H.shape[0] < 2:
        raise InvalidParameterError("need at least two node vectors")
    S = similarity_matrix(H, None, spec, as_rng(rng if rng is not None else spec.seed))
    vals = S[np.triu_indices(H.shape[0], 1)]
    edges = np.linspace(-1.0, 1.0, SIMDIST_BINS + 1)
    counts, _ = np.histogram(np.clip(vals, -1.0, 1.0), bins=edges)
    return SimDistribution((edges[:-1] + edges[1:]) / 2.0, counts, float(vals.mean()), vals)


NODE_VECTOR_CONFIG = OptimizeConfig(step_size=5.0, iterations=500, optimizer="gd")


class NodeVectorResult(NamedTuple):
    vectors: List[Hypervector]
    trace: List[float]


def optimize_node_vectors_traced(n_nodes: int, dim: int, spec: DistortionSpec,
                                 cfg: OptimizeConfig = NODE_VECTOR_CONFIG) -> NodeVectorResult:
    n_nodes, dim = int(n_nodes), int(dim)
    if n_nodes < 1 or dim < 1:
        raise InvalidParameterError("n_nodes and dim must be >= 1")
    rng = as_rng(np.random.SeedSequence(cfg.seed).generate_state(1, dtype=np.uint64)[0])
    # identity features make the weight rows the relaxed node vectors
    W0 = rng.standard_normal((n_nodes, dim)) / np.sqrt(n_nodes)
    params = EncoderParams(W0, Activation.NONE)
    X = np.eye(n_nodes)
    res = optimize_joint(params, X, np.eye(n_nodes), spec, cfg, encode_distorted=True)
    H = np.where(res.params.weights > 0, 1.0, -1.0)
    return NodeVectorResult([Hypervector.bipolar(h) for h in H], res.trace)


def optimize_node_vectors(n_nodes: int, dim: int, spec: DistortionSpec,
                          cfg: OptimizeConfig = NODE_VECTOR_CONFIG) -> List[Hypervector]:
    """Quasi-orthogonal bipolar node vectors as seen through ``spec``."""
    return optimize_node_vectors_traced(n_nodes, dim, spec, cfg).vectors


# -- RelHD -------------------------------------------------------------------


def relhd_neighbors(g: GraphSpec, node_hvs: NodeVectors) -> Tuple[np.ndarray, np.ndarray]:
    """M1 (1-hop bundles) and M2 (bundles of the neighbors' M1)."""
    H = _node_matrix(node_hvs, g.n_nodes)
    M1 = _neighbor_sum(g, H)
    return M1, _neighbor_sum(g, M1)


def relhd_encode_matrix(g: GraphSpec, node_hvs: NodeVectors, ctx: RelationContext) -> np.ndarray:
    H = _node_matrix(node_hvs, g.n_nodes)
    if H.shape[1] != ctx.dim:
        raise IncompatibleError(f"dimension mismatch: {H.shape[1]} vs {ctx.dim}")
    M1, M2 = relhd_neighbors(g, H)
    w = ctx.matrix()
    return H * w[0] + M1 * w[1] + M2 * w[2]


def relhd_encode(g: GraphSpec, node_hvs: NodeVectors, ctx: RelationContext) -> List[Hypervector]:
    """I_k = H_k*omega0 + M1_k*omega1 + M2_k*omega2."""
    return [Hypervector.dense(row) for row in relhd_encode_matrix(g, node_hvs, ctx)]


@dataclass
class RelHDConfig:
    repeats: int = 10
    opt: OptimizeConfig = field(default_factory=lambda: OptimizeConfig(iterations=300))
    batch_size: int = 64


def _relhd_sampler(labels: np.ndarray, train_idx: np.ndarray, n_nodes: int, batch: int):
    """Half training nodes (label kernel) and half random nodes, which are
    only required to be quasi-orthogonal to everything else."""
    n_train = min(len(train_idx), max(1, batch // 2))

    def sample(rng):
        a = rng.choice(train_idx, size=n_train, replace=False)
        rest = np.setdiff1d(np.arange(n_nodes), a)
        b = rng.choice(rest, size=min(batch - n_train, len(rest)), replace=False)
        idx = np.concatenate([a, b])
        T = np.eye(len(idx))
        la = labels[a]
        T[:n_train, :n_train] = (la[:, None] == la[None, :]).astype(np.float64)
        return idx, T

    return sample


def calibrate_node_encoder(g: GraphSpec, params: EncoderParams, spec: DistortionSpec,
                           train_mask: np.ndarray, cfg: RelHDConfig) -> EncoderParams:
    labels = np.asarray(g.labels)
    train_idx = np.flatnonzero(train_mask)
    pick = _relhd_sampler(labels, train_idx, g.n_nodes, cfg.batch_size)
    F = g.features

    def sampler(rng):
        idx, T = pick(rng)
        return F[idx], T

    return optimize_joint(params, None, None, spec, cfg.opt, encode_distorted=True,
                          sampler=sampler).params


def _relations_and_prototypes(g, E, spec, ctx, train_mask, rng):
    labels = np.asarray(g.labels)
    H = store(E, spec, rng)
    Iv = relhd_encode_matrix(g, H, ctx)
    protos = np.zeros((int(labels.max()) + 1, Iv.shape[1]))
    tr = np.flatnonzero(train_mask)
    np.add.at(protos, labels[tr], Iv[tr])
    return Iv, protos


def fit_search_calibration(g: GraphSpec, params: EncoderParams, spec: DistortionSpec,
                           ctx: RelationContext, train_mask: np.ndarray,
                           cfg: OptimizeConfig) -> OutputCalibration:
    """Output calibration that maps training-node cosines against the class
    prototypes onto their one-hot labels."""
    E = encode_real(g.features, params)
    Iv, protos = _relations_and_prototypes(g, E, spec.noiseless, ctx, train_mask, None)
    tr = np.flatnonzero(train_mask)
    live = np.linalg.norm(protos, axis=1) > 0
    Q = Iv[tr]
    Q = Q[np.linalg.norm(Q, axis=1) > 0]
    keep = np.linalg.norm(Iv[tr], axis=1) > 0
    y = np.asarray(g.labels)[tr][keep]
    cos = similarity_matrix(Q, protos[live], DistortionSpec(), distort_inputs=False)
    target = (y[:, None] == np.flatnonzero(live)[None, :]).astype(np.float64)
    return fit_output_calibration(cos, target, spec, cfg)


def relhd_predict(g: GraphSpec, params: EncoderParams, spec: DistortionSpec, ctx: RelationContext,
                  train_mask: np.ndarray, rng: np.random.Generator,
                  calibration: Optional[OutputCalibration] = None,
                  encodings: Optional[np.ndarray] = None) -> np.ndarray:
    """Labels predicted for every node by one pass of the distorted pipeline."""
    E = encode_real(g.features, params) if encodings is None else encodings
    Iv, protos = _relations_and_prototypes(g, E, spec, ctx, train_mask, rng)
    live = np.linalg.norm(protos, axis=1) > 0
    S = np.full((g.n_nodes, protos.shape[0]), -np.inf)
    S[:, live] = _safe_scores(Iv, protos[live], spec, rng, calibration)
    return np.argmax(S, axis=1)


def relhd_classify(
    g: GraphSpec,
    params: EncoderParams,
    spec: DistortionSpec,
    ctx: RelationContext,
    train_mask,
    cfg: Optional[RelHDConfig] = None,
    optimized: bool = False,
    rng: Optional[SeedLike] = None,
    test_mask=None,
) -> Dict:
    if g.labels is None or g.features is None:
        raise InvalidDatasetError("node classification needs labels and features")
    cfg = cfg or RelHDConfig()
    train_mask = np.asarray(train_mask, dtype=bool)
    test_mask = ~train_mask if test_mask is None else np.asarray(test_mask, dtype=bool)
    if np.any(train_mask & test_mask):
        raise InvalidParameterError("train and test masks overlap")
    if not train_mask.any() or not test_mask.any():
        raise InvalidParameterError("train and test masks must both be non-empty")
    if params.activation is Activation.PHASE_MAP:
        raise IncompatibleError("RelHD needs real-valued node encodings")
    rng = as_rng(rng if rng is not None else spec.seed)
    calibration = None
    if optimized:
        params = calibrate_node_encoder(g, params, spec, train_mask, cfg)
        calibration = fit_search_calibration(g, params, spec, ctx, train_mask, cfg.opt)
    labels = np.asarray(g.labels)
    seeds = rng.integers(0, 2**63 - 1, size=cfg.repeats)
    per_repeat = []
    E = encode_real(g.features, params)
    for s in seeds:
        pred = relhd_predict(g, params, spec, ctx, train_mask, as_rng(int(s)), calibration, E)
        per_repeat.append(float(np.mean(pred[test_mask] == labels[test_mask])))
    return {
        "mean_accuracy": float(np.mean(per_repeat)),
        "per_repeat": per_repeat,
        "repeat_seeds": [int(s) for s in seeds],
        "params": params,
        "calibration": calibration,
    }


# -- report writers ----------------------------------------------------------


def write_recon(out_dir: str, result: ReconResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "recon_edges.csv"), "w", encoding="utf-8") as fh:
        fh.write("i,j\n")
        for i, j in sorted(result.edges):
            fh.write(f"{i},{j}\n")
    with open(os.path.join(out_dir, "recon_metrics.json"), "w", encoding="utf-8") as fh:
        json.dump({"precision": result.precision, "recall": result.recall, "f1": result.f1},
                  fh, indent=2)
        fh.write("\n")


def write_simdist(out_dir: str, dist: SimDistribution) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "simdist.csv"), "w", encoding="utf-8") as fh:
        fh.write("bin_center,count\n")
        for c, k in zip(dist.centers, dist.counts):
            fh.write(f"{c:.9g},{int(k)}\n")
