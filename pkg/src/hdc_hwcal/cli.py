"""Command-line harness: ``hdc-hwcal <experiment> [--config FILE] [--key value ...]``.

Configuration is layered: per-experiment defaults, then a flat
``key = value`` config file (dotted section keys, ``#`` comments), then
command-line overrides such as ``--hw.family tanh``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time
from dataclasses import fields, replace
from typing import Callable, Dict, List, Optional

from . import __version__
from .calibrate import OptimizeConfig
from .errors import ConfigError, HDCError
from .experiments import (
    CIM_DEFAULTS,
    HW_PRESETS,
    DataConfig,
    Experiment,
    ExperimentConfig,
    compare_reports,
    read_report,
    run,
)
from .graph import NODE_VECTOR_CONFIG
from .hardware import DistortionSpec, Family

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _opt_int(s: str) -> Optional[int]:
    return None if s.strip().lower() in ("none", "full", "") else int(s)


def _opt_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("none", "") else float(s)


def _u64(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise ValueError(f"must be an unsigned 64-bit integer, got {s}")
    return v


# key -> (parser, help)
KEYS: Dict[str, tuple] = {
    "hw.preset": (str, f"hardware preset: {', '.join(HW_PRESETS)}"),
    "hw.family": (str, "distortion family: tanh, exp, log, identity"),
    "hw.gain": (float, "transfer-curve gain"),
    "hw.offset": (float, "common-mode storage level added after the transfer curve"),
    "hw.input_noise_std": (float, "storage read noise"),
    "hw.output_noise_std": (float, "comparison output noise"),
    "hw.mode": (str, "comparison mode: output or accumulate"),
    "hw.seed": (_u64, "hardware noise seed"),
    "opt.step_size": (float, "optimizer step size"),
    "opt.iterations": (int, "optimizer iterations"),
    "opt.alpha": (float, "similarity-loss weight"),
    "opt.beta": (float, "regularizer weight"),
    "opt.optimizer": (str, "adam or gd"),
    "opt.schedule": (str, "step-size schedule: cosine or constant"),
    "opt.ensemble_draws": (int, "hardware draws per step when an ensemble is used"),
    "data.root": (str, "dataset root (default: $HDC_HWCAL_DATA)"),
    "data.dataset": (str, "classify dataset: isolet or fmnist"),
    "data.train_size": (_opt_int, "FMNIST training subsample ('full' for all)"),
    "data.test_size": (_opt_int, "FMNIST test subsample ('full' for all)"),
    "data.train_per_class": (int, "Cora training nodes per class"),
    "data.test_nodes": (int, "Cora test nodes"),
    "dim": (int, "hypervector dimension"),
    "repeats": (int, "evaluation repeats"),
    "seed": (_u64, "run seed"),
    "out_dir": (str, "output directory"),
    "optimized": (_bool, "use the calibrated pipeline"),
    "encode_distorted": (_bool, "kernel: distort the stored encodings too"),
    "sigma": (_opt_float, "kernel: RBF width (default 1/n)"),
    "epochs": (int, "classify: retraining epochs"),
    "nodes": (int, "graph-recon: node count"),
    "edges": (int, "graph-recon: edge count"),
    "tau": (str, "graph-recon: 'bimodal' or a fixed threshold"),
    "batch_size": (int, "calibration mini-batch size"),
}


ALIASES = {"hw.input_noise": "hw.input_noise_std", "hw.output_noise": "hw.output_noise_std"}


def parse_config_text(text: str, source: str = "config") -> Dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key[4:] if key.startswith("run.") else key
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ConfigError(key, f"unknown config key ({source}:{lineno})")
        out[key] = value
    return out


def _defaults(exp: Experiment) -> Dict:
    if exp is Experiment.KERNEL:
        return {"hw": HW_PRESETS["tanh"], "opt": OptimizeConfig(), "dim": 512}
    if exp is Experiment.GRAPH_RECON:
        return {"hw": HW_PRESETS["tanh-cim"], "opt": NODE_VECTOR_CONFIG, "dim": 2048}
    dim = 512 if exp is Experiment.CLASSIFY else 2048
    return {"hw": HW_PRESETS["tanh-cim"], "opt": OptimizeConfig(iterations=300), "dim": dim}


def _convert(key: str, value: str):
    try:
        return KEYS[key][0](value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(key, str(exc)) from None


def _build_hw(exp: Experiment, base: DistortionSpec, raw: Dict[str, str]) -> DistortionSpec:
    if "hw.preset" in raw:
        name = raw["hw.preset"]
        if name not in HW_PRESETS:
            raise ConfigError("hw.preset", f"unknown preset {name!r}; choose from {sorted(HW_PRESETS)}")
        base = HW_PRESETS[name]
    values = base.to_dict()
    if "hw.family" in raw:
        try:
            family = Family(raw["hw.family"].strip().lower())
        except ValueError:
            raise ConfigError("hw.family", f"unknown family {raw['hw.family']!r}; "
                              f"choose from {[f.value for f in Family]}") from None
        values["family"] = family.value
        if "hw.preset" not in raw:
            # naming a family selects its device model: unit curves for the
            # kernel study, the CIM operating point elsewhere, ideal for identity
            if family is Family.IDENTITY:
                values.update(gain=1.0, offset=0.0, input_noise_std=0.0, output_noise_std=0.0)
            elif exp is Experiment.KERNEL:
                values.update(gain=1.0, offset=0.0)
            else:
                values.update(CIM_DEFAULTS)
    for key in ("gain", "offset", "input_noise_std", "output_noise_std", "mode", "seed"):
        if f"hw.{key}" in raw:
            values[key] = raw[f"hw.{key}"] if key == "mode" else _convert(f"hw.{key}", raw[f"hw.{key}"])
    try:
        return DistortionSpec.from_mapping(values)
    except HDCError as exc:
        raise ConfigError("hw", str(exc)) from None
    except (ValueError, TypeError) as exc:
        raise ConfigError("hw", str(exc)) from None


def build_config(exp: Experiment, raw: Dict[str, str]) -> ExperimentConfig:
    d = _defaults(exp)
    hw = _build_hw(exp, d["hw"], raw)
    opt_kwargs = {}
    for f in fields(OptimizeConfig):
        key = f"opt.{f.name}"
        if key in raw:
            opt_kwargs[f.name] = _convert(key, raw[key])
    try:
        opt = replace(d["opt"], **opt_kwargs)
    except HDCError as exc:
        raise ConfigError("opt", str(exc)) from None
    data_kwargs = {f.name: _convert(f"data.{f.name}", raw[f"data.{f.name}"])
                   for f in fields(DataConfig) if f"data.{f.name}" in raw}
    if data_kwargs.get("dataset", "isolet") not in ("isolet", "fmnist"):
        raise ConfigError("data.dataset", f"must be 'isolet' or 'fmnist', got {data_kwargs['dataset']!r}")
    top = {k: _convert(k, v) for k, v in raw.items() if "." not in k}
    top.setdefault("dim", d["dim"])
    try:
        return ExperimentConfig(experiment=exp, hw=hw, opt=opt, data=DataConfig(**data_kwargs), **top)
    except HDCError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError("config", str(exc)) from None


def default_out_dir(exp: Experiment, seed: int) -> str:
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    return os.path.join("runs", f"{exp.value}-{seed}-{stamp}")


def write_manifest(cfg: ExperimentConfig, report: Dict, started: float, finished: float,
                   argv: List[str]) -> str:
    manifest = {
        "library_version": __version__,
        "config": cfg.resolved(),
        "out_dir": cfg.out_dir,
        "argv": argv,
        "per_repeat_seeds": report.get("repeat_seeds", []),
        "wall_clock": {
            "started": _dt.datetime.fromtimestamp(started).isoformat(timespec="seconds"),
            "finished": _dt.datetime.fromtimestamp(finished).isoformat(timespec="seconds"),
            "seconds": round(finished - started, 3),
        },
    }
    path = os.path.join(cfg.out_dir, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def _summary(report: Dict) -> str:
    exp = report["experiment"]
    if exp == "kernel":
        e = report["frobenius_errors"]
        return f"kernel: frobenius B={e['B']:.4f} C={e['C']:.4f} D={e['D']:.4f}"
    if exp == "graph-recon":
        return (f"graph-recon: f1={report['f1']:.4f} precision={report['precision']:.4f} "
                f"recall={report['recall']:.4f} density={report['edge_density']:.3f}")
    return f"{exp}: mean_accuracy={report['mean_accuracy']:.4f}"


def _add_keys(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for key, (_, help_text) in KEYS.items():
        if key in ("optimized", "encode_distorted"):
            continue
        p.add_argument(f"--{key}", dest=key, metavar="VALUE", help=help_text)
    for alias, key in ALIASES.items():
        p.add_argument(f"--{alias}", dest=key, metavar="VALUE", help=f"alias of --{key}")
    p.add_argument("--optimized", dest="optimized", action="store_const", const="true",
                   help="use the calibrated pipeline")
    p.add_argument("--encode-distorted", dest="encode_distorted", action="store_const", const="true",
                   help="kernel: distort the stored encodings too")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdc-hwcal",
                                     description="Hardware-aware HDC calibration experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in Experiment:
        _add_keys(sub.add_parser(exp.value, help=f"run the {exp.value} experiment"))
    cmp_p = sub.add_parser("compare", help="compare two reports of the same experiment")
    cmp_p.add_argument("report_a")
    cmp_p.add_argument("report_b")
    cmp_p.add_argument("--tolerance", type=float, default=0.0,
                       help="allowed worsening before a delta counts as a regression")
    cmp_p.add_argument("--out", default="compare_report.json", help="where to write the summary")
    return parser


def _run_experiment(exp: Experiment, ns: argparse.Namespace, argv: List[str],
                    echo: Callable[[str], None]) -> int:
    raw: Dict[str, str] = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                raw.update(parse_config_text(fh.read(), ns.config))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
    for key in KEYS:
        value = getattr(ns, key, None)
        if value is not None:
            raw[key] = value
    cfg = build_config(exp, raw)
    if not cfg.out_dir:
        cfg.out_dir = default_out_dir(exp, cfg.seed)
    started = time.time()
    report = run(cfg)
    write_manifest(cfg, report, started, time.time(), argv)
    echo(_summary(report))
    echo(f"outputs written to {cfg.out_dir}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = build_parser().parse_args(argv)
    try:
        if ns.command == "compare":
            a, b = read_report(ns.report_a), read_report(ns.report_b)
            summary = compare_reports(a, b, ns.tolerance, (ns.report_a, ns.report_b))
            with open(ns.out, "w", encoding="utf-8") as fh:
                json.dump(summary, fh, indent=2)
                fh.write("\n")
            print(json.dumps(summary, indent=2))
            return 0
        return _run_experiment(Experiment(ns.command), ns, argv, print)
    except HDCError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
