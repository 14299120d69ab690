"""Command-line surface: detection, inference, experiments, benchmarks.

Usage: ``standa <command> [--config FILE] [--set key=value ...] [--seed N]
[--out DIR]``. Configuration is file-first (JSON or TOML by extension) with
``--set`` overrides on top; unknown keys are rejected. Every run that
writes artifacts also writes ``manifest.json`` echoing the fully resolved
configuration, and all outputs are deterministic given (config, seed).

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .datamodel import CovarianceSpec, DataPair
from .experiments import (
    ExperimentConfig,
    SplitSpec,
    gen_synthetic,
    ingest_csv,
    make_random_bundle,
    run_fpr,
    run_runtime,
    run_tpr,
)
from .gauss import RegionMassError
from .inference import stand_da
from .network import BundleFormatError, ModelBundle, detect, forward, load_bundle

REPORT_VERSION = "stand-da-report/1"
MANIFEST_VERSION = "stand-da-manifest/1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """Bad or missing configuration key; message names the key."""


class NumericFailure(RuntimeError):
    """Every tested anomaly failed numerically."""


_DATA_KEYS = {
    "bundle": None,
    "bundle_spec": None,
    "data_csv": None,
    "split": None,
    "synthetic": None,
    "rate": 0.05,
    "seed": 0,
    "out": None,
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "detect": dict(_DATA_KEYS),
    "infer": dict(_DATA_KEYS, alpha=0.05, backend="parallel"),
    "experiment": {
        "mode": None,
        "ns_list": [150],
        "nt": 25,
        "d": 10,
        "deltas": [],
        "rho": 0.0,
        "trials": 120,
        "alpha": 0.05,
        "rate": 0.05,
        "seed": 0,
        "bundle": None,
        "bundle_spec": None,
        "backend": "parallel",
        "out": None,
    },
    "bench": {
        "ns_list": [30],
        "nt": 10,
        "d": 10,
        "rho": 0.0,
        "trials": 1,
        "alpha": 0.05,
        "rate": 0.05,
        "seed": 0,
        "bundle_spec": None,
        "backend": "parallel",
        "out": None,
    },
    "validate-bundle": {"bundle": None, "probe": None, "seed": 0, "out": None},
}


def _load_config_file(path: str) -> dict[str, Any]:
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        return tomllib.loads(text.decode("utf-8"))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path}: top level must be a table/object")
    return doc


def _parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def resolve_config(command: str, args) -> dict[str, Any]:
    """defaults <- config file <- --set overrides <- --seed/--out flags."""
    cfg = dict(_DEFAULTS[command])
    layers: list[dict[str, Any]] = []
    if args.config:
        layers.append(_load_config_file(args.config))
    if args.set:
        layers.append(dict(_parse_override(s) for s in args.set))
    for layer in layers:
        for key, value in layer.items():
            if key not in cfg:
                raise ConfigError(f"unknown configuration key {key!r} for {command}")
            cfg[key] = value
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    return cfg


def _jsonify(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonify(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_manifest(
    command: str, cfg: dict[str, Any], elapsed: float | None = None
) -> None:
    if cfg.get("out") is None:
        return
    doc: dict[str, Any] = {
        "version": MANIFEST_VERSION,
        "command": command,
        "config": cfg,
    }
    # timing lives here, not in the result artifacts, which stay
    # byte-reproducible for a fixed (config, seed)
    if elapsed is not None:
        doc["elapsed_s"] = round(elapsed, 6)
    _write_json(Path(cfg["out"]) / "manifest.json", doc)


def _resolve_bundle(cfg: dict[str, Any]) -> ModelBundle:
    if cfg.get("bundle"):
        try:
            return load_bundle(cfg["bundle"])
        except FileNotFoundError as exc:
            raise OSError(f"bundle file not found: {cfg['bundle']}") from exc
    spec = cfg.get("bundle_spec")
    if not spec:
        raise ConfigError("missing key 'bundle' (path) or 'bundle_spec'")
    return make_random_bundle(
        tuple(spec.get("extractor", (10, 8, 4))),
        tuple(spec.get("autoencoder", (4, 2, 4))),
        int(spec.get("seed", cfg.get("seed", 0))),
    )


def _resolve_data(cfg: dict[str, Any]) -> tuple[DataPair, CovarianceSpec]:
    if cfg.get("data_csv"):
        if not cfg.get("split"):
            raise ConfigError("data_csv needs a 'split' table")
        return ingest_csv(cfg["data_csv"], SplitSpec(**cfg["split"]))
    syn = cfg.get("synthetic")
    if not syn:
        raise ConfigError("missing key 'data_csv' or 'synthetic'")
    pair, cov, _, _ = gen_synthetic(
        int(syn.get("n_s", 150)),
        int(syn.get("n_t", 25)),
        int(syn.get("d", 10)),
        float(syn.get("delta", 0.0)),
        float(syn.get("rho", 0.0)),
        [int(cfg.get("seed", 0)), int(syn.get("seed", 0))],
    )
    return pair, cov


def cmd_detect(cfg: dict[str, Any]) -> int:
    bundle = _resolve_bundle(cfg)
    data, _ = _resolve_data(cfg)
    det = detect(bundle, data, float(cfg["rate"]))
    print(f"flagged {det.anomalous.size} of {det.errors.size} rows "
          f"(threshold row {det.threshold_index})")
    print(f"target anomalies: {det.target_anomalies.tolist()}")
    if cfg.get("out") is not None:
        _write_json(
            Path(cfg["out"]) / "detection.json",
            {
                "version": "stand-da-detect/1",
                "target_anomalies": det.target_anomalies,
                "anomalous_rows": det.anomalous,
                "threshold_index": det.threshold_index,
                "errors": det.errors,
            },
        )
    _write_manifest("detect", cfg)
    return EXIT_OK


def cmd_infer(cfg: dict[str, Any]) -> int:
    t0 = time.perf_counter()
    bundle = _resolve_bundle(cfg)
    data, cov = _resolve_data(cfg)
    alpha = float(cfg["alpha"])
    reports = stand_da(
        data, cov, bundle, rate=float(cfg["rate"]), alpha=alpha,
        backend=cfg["backend"],
    )
    header = f"{'idx':>4} {'T_j':>12} {'p_sel':>10} {'p_naive':>10} {'p_bonf':>10} {'p_oc':>10}  reject@{alpha:g}"
    print(header)
    records = []
    for r in reports:
        if r.failure is not None:
            print(f"{r.anomaly_index:>4} failed: {r.failure}")
        else:
            print(
                f"{r.anomaly_index:>4} {r.direction.z_obs:>12.6f} "
                f"{r.p_selective:>10.6f} {r.p_naive:>10.6f} "
                f"{r.p_bonferroni:>10.6f} {r.p_oc:>10.6f}  "
                f"{'yes' if r.p_selective <= alpha else 'no'}"
            )
        records.append(
            {
                "index": r.anomaly_index,
                "z_obs": None if r.direction is None else r.direction.z_obs,
                "variance": None if r.direction is None else r.direction.variance,
                "region": None if r.region is None else r.region.as_array(),
                "p_selective": r.p_selective,
                "p_oc": r.p_oc,
                "p_naive": r.p_naive,
                "p_bonferroni": r.p_bonferroni,
                "reject": None if r.p_selective is None else bool(r.p_selective <= alpha),
                "diagnostics": {
                    k: v for k, v in r.diagnostics.items() if k != "elapsed_s"
                },
                "failure": r.failure,
            }
        )
    if cfg.get("out") is not None:
        _write_json(
            Path(cfg["out"]) / "reports.json",
            {
                "version": REPORT_VERSION,
                "alpha": alpha,
                "rate": float(cfg["rate"]),
                "n_s": data.n_s,
                "n_t": data.n_t,
                "d": data.d,
                "anomalies": records,
            },
        )
    _write_manifest("infer", cfg, elapsed=time.perf_counter() - t0)
    if reports and all(r.failure is not None for r in reports):
        raise NumericFailure("all tested anomalies failed numerically")
    return EXIT_OK


def cmd_experiment(cfg: dict[str, Any]) -> int:
    t0 = time.perf_counter()
    if not cfg.get("mode"):
        raise ConfigError("missing key 'mode' (fpr | tpr | runtime)")
    expcfg = _experiment_config(cfg)
    runner = {"fpr": run_fpr, "tpr": run_tpr, "runtime": run_runtime}.get(expcfg.mode)
    if runner is None:
        raise ConfigError(f"mode {expcfg.mode!r} is not runnable from the CLI")
    rows = runner(expcfg)
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    _write_manifest("experiment", cfg, elapsed=time.perf_counter() - t0)
    return EXIT_OK


def _experiment_config(cfg: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            mode=cfg.get("mode", "runtime"),
            ns_list=tuple(cfg["ns_list"]),
            nt=int(cfg["nt"]),
            d=int(cfg["d"]),
            deltas=tuple(cfg.get("deltas", ())),
            rho=float(cfg.get("rho", 0.0)),
            trials=int(cfg["trials"]),
            alpha=float(cfg["alpha"]),
            rate=float(cfg["rate"]),
            seed=int(cfg["seed"]),
            bundle_path=cfg.get("bundle"),
            bundle_spec=cfg.get("bundle_spec"),
            outdir=cfg.get("out"),
            backend=cfg.get("backend", "parallel"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_bench(cfg: dict[str, Any]) -> int:
    t0 = time.perf_counter()
    cfg = dict(cfg, mode="runtime", deltas=[])
    expcfg = _experiment_config(cfg)
    rows = run_runtime(expcfg)
    worst = 0.0
    for row in rows:
        print(
            f"layers={row['layers']:>3} backend={row['backend']:<10} "
            f"median_ms={row['median_ms']:.2f}"
        )
        worst = max(worst, row["p_gap"])
    print(f"max cross-backend p-value gap: {worst:.3e}")
    del cfg["mode"], cfg["deltas"]
    _write_manifest("bench", cfg, elapsed=time.perf_counter() - t0)
    if worst > 1e-10:
        raise NumericFailure(f"backend p-values diverge by {worst:.3e} (> 1e-10)")
    return EXIT_OK


def cmd_validate_bundle(cfg: dict[str, Any]) -> int:
    if not cfg.get("bundle"):
        raise ConfigError("missing key 'bundle' (path to the bundle JSON)")
    try:
        bundle = load_bundle(cfg["bundle"])
    except FileNotFoundError as exc:
        raise OSError(f"bundle file not found: {cfg['bundle']}") from exc
    ext, ae = bundle.extractor, bundle.autoencoder
    print(
        f"bundle ok: extractor {ext.input_dim}->{ext.output_dim} "
        f"({len(ext.layers)} layers), autoencoder {ae.input_dim}->"
        f"{ae.output_dim} ({len(ae.layers)} layers)"
    )
    if cfg.get("probe"):
        rows = []
        with open(cfg["probe"], newline="", encoding="utf-8") as fh:
            for ln, row in enumerate(csv.reader(fh), start=1):
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ConfigError(f"probe {cfg['probe']}:{ln}: {exc}") from exc
        x = np.array(rows, dtype=np.float64)
        rep = forward(ext, x)
        rec = forward(ae, rep)
        doc = {
            "version": "stand-da-probe/1",
            "representation": rep,
            "reconstruction": rec,
            "errors": np.abs(rep - rec).sum(axis=1),
        }
        if cfg.get("out") is not None:
            _write_json(Path(cfg["out"]) / "probe.json", doc)
        else:
            print(json.dumps(_jsonify(doc), indent=1, sort_keys=True))
    _write_manifest("validate-bundle", cfg)
    return EXIT_OK


_COMMANDS = {
    "detect": cmd_detect,
    "infer": cmd_infer,
    "experiment": cmd_experiment,
    "bench": cmd_bench,
    "validate-bundle": cmd_validate_bundle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="standa",
        description="Anomaly detection with selectively valid p-values.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON or TOML configuration file")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a configuration key (value parsed as JSON)",
        )
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, BundleFormatError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, RegionMassError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
