"""End-to-end experiment drivers shared by the CLI and the acceptance suite.

Each ``run_*`` function takes a resolved ``ExperimentConfig``, writes its
module outputs into ``out_dir`` (when given) and returns a JSON-ready
report.  Reports contain no wall-clock data, so equal configs give
byte-identical reports.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional

import numpy as np

from . import classify as qhd
from .calibrate import KernelExperimentConfig, OptimizeConfig, kernel_experiment
from .data import (
    cora_report,
    gen_random_graph,
    ingest_report,
    load_cora,
    load_fmnist,
    load_isolet,
    write_id_map,
    write_ingest_report,
)
from .encoder import random_projection_params
from .errors import ComparisonError, ConfigError, DataError, SchemaError
from .graph import (
    NODE_VECTOR_CONFIG,
    RelationContext,
    RelHDConfig,
    edge_metrics,
    graphd_encode,
    graphd_reconstruct,
    optimize_node_vectors,
    relhd_classify,
    similarity_distribution,
    write_recon,
    write_simdist,
)
from .hardware import DistortionSpec, Family, Mode, store
from .hv import random_bipolar

DATA_ENV = "HDC_HWCAL_DATA"


class Experiment(str, enum.Enum):
    KERNEL = "kernel"
    CLASSIFY = "classify"
    GRAPH_RECON = "graph-recon"
    NODE_CLASSIFY = "node-classify"


# The CIM preset couples a steep tanh with a common-mode storage level;
# it is the default whenever a family is named for the three downstream
# experiments.  The kernel experiment uses the unit-gain transfer curves.
HW_PRESETS: Dict[str, DistortionSpec] = {
    "ideal": DistortionSpec(),
    "tanh": DistortionSpec(family=Family.TANH),
    "exp": DistortionSpec(family=Family.EXP),
    "log": DistortionSpec(family=Family.LOG),
    "tanh-cim": DistortionSpec(family=Family.TANH, gain=5.0, offset=0.7,
                               input_noise_std=0.05, output_noise_std=0.02),
}

CIM_DEFAULTS = {"gain": 5.0, "offset": 0.7, "input_noise_std": 0.05, "output_noise_std": 0.02}

REQUIRED_KEYS = {
    Experiment.KERNEL: ("frobenius_errors",),
    Experiment.CLASSIFY: ("mean_accuracy",),
    Experiment.GRAPH_RECON: ("f1",),
    Experiment.NODE_CLASSIFY: ("mean_accuracy",),
}


@dataclass
class DataConfig:
    root: Optional[str] = None
    dataset: str = "isolet"
    train_size: Optional[int] = 10000
    test_size: Optional[int] = 2000
    train_per_class: int = 20
    test_nodes: int = 1000


@dataclass
class ExperimentConfig:
    experiment: Experiment
    hw: DistortionSpec = field(default_factory=DistortionSpec)
    opt: OptimizeConfig = field(default_factory=OptimizeConfig)
    data: DataConfig = field(default_factory=DataConfig)
    dim: int = 512
    repeats: int = 10
    seed: int = 0
    out_dir: Optional[str] = None
    optimized: bool = False
    encode_distorted: bool = False
    sigma: Optional[float] = None
    epochs: int = qhd.DEFAULT_EPOCHS
    nodes: int = 20
    edges: int = 10
    tau: str = "bimodal"
    batch_size: int = qhd.CALIBRATION_BATCH

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        if int(self.repeats) < 1:
            raise ConfigError("repeats", f"must be >= 1, got {self.repeats}")
        if int(self.dim) < 1:
            raise ConfigError("dim", f"must be >= 1, got {self.dim}")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed}")
        if int(self.epochs) < 0:
            raise ConfigError("epochs", f"must be >= 0, got {self.epochs}")
        if self.tau != "bimodal":
            try:
                float(self.tau)
            except ValueError:
                raise ConfigError("tau", f"must be 'bimodal' or a number, got {self.tau!r}") from None

    def resolved(self) -> Dict:
        """Fully resolved config as plain JSON values (no output path)."""
        opt = asdict(self.opt)
        opt["ensemble"] = None if self.opt.ensemble is None else _ensemble_dict(self.opt.ensemble)
        out = {
            "experiment": self.experiment.value,
            "hw": self.hw.to_dict(),
            "opt": opt,
            "data": asdict(self.data),
        }
        for f in fields(self):
            if f.name not in ("experiment", "hw", "opt", "data", "out_dir"):
                out[f.name] = getattr(self, f.name)
        return out


def _ensemble_dict(ens) -> Dict:
    d = asdict(ens)
    d["family_pool"] = [f.value for f in ens.family_pool]
    d["mode"] = ens.mode.value
    return d


def _seeds(seed: int, n: int) -> List[int]:
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _write_matrix(path: str, M: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.asarray(M):
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def data_root(cfg: ExperimentConfig) -> str:
    root = cfg.data.root or os.environ.get(DATA_ENV)
    if not root:
        raise DataError(f"no dataset root: set data.root or the {DATA_ENV} environment variable")
    return root


def _load(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (FileNotFoundError, OSError) as exc:
        raise DataError(str(exc)) from exc


# -- kernel ------------------------------------------------------------------


def run_kernel(cfg: ExperimentConfig) -> Dict:
    res = kernel_experiment(KernelExperimentConfig(
        spec=cfg.hw, encode_distorted=cfg.encode_distorted, seed=cfg.seed, dim=cfg.dim,
        sigma=cfg.sigma, opt=cfg.opt))
    errors = {k: res.frobenius_errors[k] for k in ("B", "C", "D")}
    if cfg.out_dir:
        for name in "ABCD":
            _write_matrix(os.path.join(cfg.out_dir, f"kernel_{name}.csv"), getattr(res, name).values)
        _write_json(os.path.join(cfg.out_dir, "kernel_errors.json"), errors)
    return {
        "experiment": cfg.experiment.value,
        "seed": cfg.seed,
        "hw": cfg.hw.to_dict(),
        "frobenius_errors": errors,
        "off_diagonal_mean": {k: getattr(res, k).off_diagonal_mean() for k in "AB"},
        "calibration": {"C": [res.calibration_C.gain, res.calibration_C.bias],
                        "D": [res.calibration_D.gain, res.calibration_D.bias]},
        "final_objective": {k: v[-1] for k, v in res.traces.items()},
        "initial_objective": {k: v[0] for k, v in res.traces.items()},
        "config": cfg.resolved(),
    }


# -- classify ----------------------------------------------------------------


def load_classification(cfg: ExperimentConfig, seed: int):
    root = data_root(cfg)
    name = cfg.data.dataset
    if name == "isolet":
        train, test = _load(load_isolet, os.path.join(root, "isolet"))
    elif name == "fmnist":
        train, test = _load(load_fmnist, os.path.join(root, "fmnist"), cfg.data.train_size,
                            cfg.data.test_size, seed)
    else:
        raise ConfigError("data.dataset", f"must be 'isolet' or 'fmnist', got {name!r}")
    return train, test


def run_classify(cfg: ExperimentConfig, train=None, test=None) -> Dict:
    s_data, s_enc, s_opt, s_train, s_eval = _seeds(cfg.seed, 5)
    if train is None:
        train, test = load_classification(cfg, s_data)
        if cfg.out_dir:
            write_ingest_report(cfg.out_dir, ingest_report(cfg.data.dataset, [train, test]))
    params = random_projection_params(train.n_features, cfg.dim, s_enc)
    spec = cfg.hw
    opt = replace(cfg.opt, seed=s_opt)
    if cfg.optimized:
        params = qhd.calibrate_encoder(train, params, spec, opt, cfg.batch_size)
    n_classes = max(train.n_classes, test.n_classes)
    model = qhd.train(train, params, spec, cfg.epochs, s_train, n_classes)
    if cfg.optimized:
        qhd.fit_search_calibration(model, train, params, spec, opt)
    ev = qhd.evaluate(model, test, params, spec, cfg.repeats, s_eval)
    report = {
        "experiment": cfg.experiment.value,
        "dataset": cfg.data.dataset,
        "hw": spec.to_dict(),
        "optimized": cfg.optimized,
        "mean_accuracy": ev["mean_accuracy"],
        "per_repeat": ev["per_repeat"],
        "seed": cfg.seed,
        "repeat_seeds": ev["repeat_seeds"],
        "subsampled": cfg.data.dataset == "fmnist" and cfg.data.train_size is not None,
        "rows": {"train": len(train), "test": len(test)},
        "warnings": model.warnings,
        "config": cfg.resolved(),
    }
    if cfg.out_dir:
        qhd.write_report(cfg.out_dir, report)
    return report


# -- graph reconstruction ----------------------------------------------------


def run_graph_recon(cfg: ExperimentConfig) -> Dict:
    s_graph, s_nodes, s_store, s_dist = _seeds(cfg.seed, 4)
    g = gen_random_graph(cfg.nodes, cfg.edges, s_graph)
    if cfg.optimized:
        H = optimize_node_vectors(cfg.nodes, cfg.dim, cfg.hw, replace(cfg.opt, seed=s_nodes))
    else:
        rng = np.random.default_rng(s_nodes)
        H = [random_bipolar(cfg.dim, rng) for _ in range(cfg.nodes)]
    rng = np.random.default_rng(s_store)
    Hs = store(np.stack([h.data for h in H]), cfg.hw, rng)
    G = graphd_encode(g, Hs)
    tau = cfg.tau if cfg.tau == "bimodal" else float(cfg.tau)
    pred = graphd_reconstruct(G, Hs, cfg.hw, tau, rng, distort_inputs=False)
    res = edge_metrics(pred, g.edges, g.n_nodes)
    dist = similarity_distribution(H, cfg.hw, s_dist)
    if cfg.out_dir:
        write_recon(cfg.out_dir, res)
        write_simdist(cfg.out_dir, dist)
    return {
        "experiment": cfg.experiment.value,
        "seed": cfg.seed,
        "hw": cfg.hw.to_dict(),
        "optimized": cfg.optimized,
        "precision": res.precision,
        "recall": res.recall,
        "f1": res.f1,
        "edge_density": res.density,
        "true_edges": [list(e) for e in sorted(g.edges)],
        "predicted_edges": [list(e) for e in sorted(res.edges)],
        "mean_similarity": dist.mean,
        "config": cfg.resolved(),
    }


# -- node classification -----------------------------------------------------


def cora_split(labels: np.ndarray, per_class: int, n_test: int, seed: int):
    """``per_class`` random training nodes per class, ``n_test`` test nodes
    drawn from the rest."""
    rng = np.random.default_rng(seed)
    train = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        train[rng.choice(idx, size=min(per_class, len(idx)), replace=False)] = True
    rest = np.flatnonzero(~train)
    test = np.zeros(len(labels), dtype=bool)
    test[rng.choice(rest, size=min(n_test, len(rest)), replace=False)] = True
    return train, test


def run_node_classify(cfg: ExperimentConfig, graph=None) -> Dict:
    s_split, s_enc, s_ctx, s_opt, s_eval = _seeds(cfg.seed, 5)
    if graph is None:
        cora = _load(load_cora, os.path.join(data_root(cfg), "cora"))
        graph = cora.graph
        if cfg.out_dir:
            write_ingest_report(cfg.out_dir, cora_report(cora))
            write_id_map(cfg.out_dir, cora)
    labels = np.asarray(graph.labels)
    train, test = cora_split(labels, cfg.data.train_per_class, cfg.data.test_nodes, s_split)
    params = random_projection_params(graph.features.shape[1], cfg.dim, s_enc)
    ctx = RelationContext.random(cfg.dim, s_ctx)
    rcfg = RelHDConfig(repeats=cfg.repeats, opt=replace(cfg.opt, seed=s_opt), batch_size=cfg.batch_size)
    res = relhd_classify(graph, params, cfg.hw, ctx, train, rcfg, cfg.optimized, s_eval, test)
    report = {
        "experiment": cfg.experiment.value,
        "dataset": "cora",
        "hw": cfg.hw.to_dict(),
        "optimized": cfg.optimized,
        "calibrated": "feature encoder and search output calibration" if cfg.optimized else "none",
        "mean_accuracy": res["mean_accuracy"],
        "per_repeat": res["per_repeat"],
        "seed": cfg.seed,
        "repeat_seeds": res["repeat_seeds"],
        "rows": {"train": int(train.sum()), "test": int(test.sum())},
        "config": cfg.resolved(),
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        _write_json(os.path.join(cfg.out_dir, "relhd_report.json"), report)
    return report


RUNNERS = {
    Experiment.KERNEL: run_kernel,
    Experiment.CLASSIFY: run_classify,
    Experiment.GRAPH_RECON: run_graph_recon,
    Experiment.NODE_CLASSIFY: run_node_classify,
}

REPORT_FILES = {
    Experiment.KERNEL: "kernel_report.json",
    Experiment.CLASSIFY: "classify_report.json",
    Experiment.GRAPH_RECON: "graph_report.json",
    Experiment.NODE_CLASSIFY: "relhd_report.json",
}


def run(cfg: ExperimentConfig) -> Dict:
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
    report = RUNNERS[cfg.experiment](cfg)
    if cfg.out_dir:
        _write_json(os.path.join(cfg.out_dir, REPORT_FILES[cfg.experiment]), report)
    return report


# -- comparison --------------------------------------------------------------


def _metrics(report: Dict, source: str) -> Dict[str, float]:
    if "experiment" not in report:
        raise SchemaError("experiment", source)
    try:
        exp = Experiment(report["experiment"])
    except ValueError:
        raise ComparisonError(f"{source}: unknown experiment {report['experiment']!r}") from None
    for key in REQUIRED_KEYS[exp]:
        if key not in report:
            raise SchemaError(key, source)
    if exp is Experiment.KERNEL:
        errs = report["frobenius_errors"]
        for k in ("B", "C", "D"):
            if k not in errs:
                raise SchemaError(f"frobenius_errors.{k}", source)
        return {f"frobenius_{k}": float(errs[k]) for k in ("B", "C", "D")}
    key = REQUIRED_KEYS[exp][0]
    return {key: float(report[key])}


# higher is better for accuracy and F1, lower for Frobenius errors
def _is_regression(metric: str, delta: float, tol: float) -> bool:
    return delta > tol if metric.startswith("frobenius") else delta < -tol


def compare_reports(a: Dict, b: Dict, tolerance: float = 0.0,
                    sources=("report_a", "report_b")) -> Dict:
    ma, mb = _metrics(a, sources[0]), _metrics(b, sources[1])
    if a["experiment"] != b["experiment"]:
        raise ComparisonError(f"cannot compare {a['experiment']!r} with {b['experiment']!r} reports")
    deltas = {k: mb[k] - ma[k] for k in ma}
    return {
        "experiment": a["experiment"],
        "a": ma,
        "b": mb,
        "delta": deltas,
        "tolerance": tolerance,
        "regressions": sorted(k for k, d in deltas.items() if _is_regression(k, d, tolerance)),
    }


def read_report(path: str) -> Dict:
    if os.path.isdir(path):
        found = [f for f in REPORT_FILES.values() if os.path.exists(os.path.join(path, f))]
        if len(found) != 1:
            raise ComparisonError(f"{path}: expected exactly one report file, found {found}")
        path = os.path.join(path, found[0])
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ComparisonError(f"{path}: {exc}") from exc
