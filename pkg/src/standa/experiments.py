"""Synthetic studies: FPR/TPR sweeps, runtime benchmarks, CSV ingestion.

Data follows the two-domain shifted-Gaussian design: source rows from
N(0_d, Xi), target rows from N(2_d, Xi) with Xi_ij = rho^|i-j| (identity
when rho = 0). Anomalies are injected by adding a constant offset delta to
every coordinate of 5% of the rows in each domain. Networks are fixed
before any data is drawn, so the selective guarantee applies per trial.

False/true positive rates count hypotheses, not trials: each tested anomaly
contributes one Bernoulli outcome.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz

from .datamodel import CovarianceSpec, DataPair, mat_rows, sample_matrix_normal
from .engine import PatternAbortError, PipelineEngine
from .events import ad_event_constraints, solve_constraints
from .inference import build_eta, infer_anomaly, nuisance_line, stand_da
from .network import (
    Affine,
    ModelBundle,
    PiecewiseLinearNetwork,
    ReLU,
    detect,
    detect_from_errors,
    load_bundle,
)

_MODES = ("fpr", "tpr", "runtime", "real")
_METHODS = ("selective", "oc", "naive", "bonferroni")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    ns_list: tuple[int, ...] = (150,)
    nt: int = 25
    d: int = 10
    deltas: tuple[float, ...] = ()
    rho: float = 0.0
    trials: int = 120
    alpha: float = 0.05
    rate: float = 0.05
    seed: int = 0
    bundle_path: str | None = None
    bundle_spec: dict | None = None
    outdir: str | None = None
    backend: str = "parallel"

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if any(dl < 0 for dl in self.deltas):
            raise ValueError("deltas must be nonnegative")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        object.__setattr__(self, "ns_list", tuple(int(v) for v in self.ns_list))
        object.__setattr__(self, "deltas", tuple(float(v) for v in self.deltas))


def _random_net(dims, rng: np.random.Generator) -> PiecewiseLinearNetwork:
    """Affine stack with ReLU between layers (none after the last)."""
    layers: list = []
    for i in range(len(dims) - 1):
        w = rng.normal(0.0, math.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
        c = rng.normal(0.0, 0.1, size=dims[i + 1])
        layers.append(Affine(w, c))
        if i < len(dims) - 2:
            layers.append(ReLU())
    return PiecewiseLinearNetwork(tuple(layers), int(dims[0]))


def make_random_bundle(
    extractor_dims=(10, 8, 4), ae_dims=(4, 2, 4), seed: int = 0
) -> ModelBundle:
    """Randomly initialized extractor + autoencoder (He-scaled weights)."""
    rng = np.random.default_rng(seed)
    extractor = _random_net(tuple(extractor_dims), rng)
    autoencoder = _random_net(tuple(ae_dims), rng)
    return ModelBundle(
        extractor, autoencoder, metadata={"init": "random", "seed": int(seed)}
    )


def make_deep_bundle(
    d: int, n_layers: int, width: int | None = None, seed: int = 0
) -> ModelBundle:
    """Extractor with ``n_layers`` affine layers, for runtime scaling runs."""
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    width = d if width is None else int(width)
    d_rep = max(2, d // 2)
    dims = [d] + [width] * (n_layers - 1) + [d_rep]
    rng = np.random.default_rng(seed)
    extractor = _random_net(dims, rng)
    autoencoder = _random_net([d_rep, max(1, d_rep // 2), d_rep], rng)
    return ModelBundle(
        extractor,
        autoencoder,
        metadata={"init": "random-deep", "layers": int(n_layers), "seed": int(seed)},
    )


def resolve_bundle(cfg: ExperimentConfig) -> ModelBundle:
    """Load from cfg.bundle_path or build from cfg.bundle_spec (one run = one
    fixed network)."""
    if cfg.bundle_path is not None:
        return load_bundle(cfg.bundle_path)
    spec = cfg.bundle_spec or {}
    extractor_dims = tuple(spec.get("extractor", (cfg.d, 8, 4)))
    ae_dims = tuple(spec.get("autoencoder", (4, 2, 4)))
    seed = int(spec.get("seed", cfg.seed))
    return make_random_bundle(extractor_dims, ae_dims, seed)


def gen_synthetic(
    n_s: int,
    n_t: int,
    d: int,
    delta: float,
    rho: float,
    trial_seed,
) -> tuple[DataPair, CovarianceSpec, np.ndarray, np.ndarray]:
    """One trial's data: (pair, covariance, source labels, target labels).

    Labels mark the rows shifted by +delta (all False when delta = 0).
    """
    rng = np.random.default_rng(trial_seed)
    xi = toeplitz(rho ** np.arange(d)) if rho > 0.0 else np.eye(d)
    source = sample_matrix_normal(np.zeros((n_s, d)), np.eye(n_s), xi, rng)
    target = sample_matrix_normal(np.full((n_t, d), 2.0), np.eye(n_t), xi, rng)
    src_labels = np.zeros(n_s, dtype=bool)
    tgt_labels = np.zeros(n_t, dtype=bool)
    if delta > 0.0:
        for x, labels in ((source, src_labels), (target, tgt_labels)):
            k = math.ceil(0.05 * x.shape[0])
            picked = rng.choice(x.shape[0], size=k, replace=False)
            x[picked] += delta
            labels[picked] = True
    return DataPair(source, target), CovarianceSpec.iid_rows(n_s, n_t, xi), src_labels, tgt_labels


def _p_by_method(report) -> dict[str, float | None]:
    return {
        "selective": report.p_selective,
        "oc": report.p_oc,
        "naive": report.p_naive,
        "bonferroni": report.p_bonferroni,
    }


def run_fpr(cfg: ExperimentConfig) -> list[dict]:
    """Null-data sweep over cfg.ns_list; rejection rates per method.

    Returns one row per (n_s, method) with rejections, tested hypotheses,
    the rate, and a binomial 2-sd half-width; writes fpr.csv when an output
    directory is configured. Trials whose detector finds no target anomaly
    contribute no hypotheses.
    """
    bundle = resolve_bundle(cfg)
    rows: list[dict] = []
    for n_s in cfg.ns_list:
        counts = {m: 0 for m in _METHODS}
        tested = {m: 0 for m in _METHODS}
        failures = 0
        for t in range(cfg.trials):
            data, cov, _, _ = gen_synthetic(
                n_s, cfg.nt, cfg.d, 0.0, cfg.rho, [cfg.seed, n_s, t]
            )
            for report in stand_da(
                data, cov, bundle, rate=cfg.rate, backend=cfg.backend
            ):
                if report.failure is not None:
                    failures += 1
                    continue
                for m, p in _p_by_method(report).items():
                    tested[m] += 1
                    counts[m] += p <= cfg.alpha
        for m in _METHODS:
            f = counts[m] / tested[m] if tested[m] else math.nan
            half = 2.0 * math.sqrt(f * (1.0 - f) / tested[m]) if tested[m] else math.nan
            rows.append(
                {
                    "n_s": n_s,
                    "method": m,
                    "rejections": counts[m],
                    "tested": tested[m],
                    "fpr": f,
                    "ci_half": half,
                    "failures": failures,
                }
            )
    if cfg.outdir is not None:
        _write_csv(
            Path(cfg.outdir) / "fpr.csv",
            ["n_s", "method", "rejections", "tested", "fpr"],
            rows,
        )
        _write_plot_manifest(
            Path(cfg.outdir), "fpr.csv", x="n_s", y="fpr", series="method"
        )
    return rows


def run_tpr(cfg: ExperimentConfig) -> list[dict]:
    """Injected-anomaly sweep over cfg.deltas for selective and oc.

    Only detected anomalies that are truly injected count toward the rate.
    """
    if not cfg.deltas:
        raise ValueError("tpr mode needs a nonempty delta list")
    bundle = resolve_bundle(cfg)
    n_s = cfg.ns_list[0]
    rows: list[dict] = []
    for delta in cfg.deltas:
        counts = {m: 0 for m in ("selective", "oc")}
        tested = {m: 0 for m in ("selective", "oc")}
        p_sums = {m: 0.0 for m in ("selective", "oc")}
        for t in range(cfg.trials):
            data, cov, _, tgt_labels = gen_synthetic(
                n_s, cfg.nt, cfg.d, delta, cfg.rho, [cfg.seed, int(delta * 1000), t]
            )
            for report in stand_da(
                data, cov, bundle, rate=cfg.rate, backend=cfg.backend
            ):
                if report.failure is not None or not tgt_labels[report.anomaly_index]:
                    continue
                for m, p in (("selective", report.p_selective), ("oc", report.p_oc)):
                    tested[m] += 1
                    counts[m] += p <= cfg.alpha
                    p_sums[m] += p
        for m in ("selective", "oc"):
            rows.append(
                {
                    "delta": delta,
                    "method": m,
                    "rejections": counts[m],
                    "tested": tested[m],
                    "tpr": counts[m] / tested[m] if tested[m] else math.nan,
                    "mean_p": p_sums[m] / tested[m] if tested[m] else math.nan,
                }
            )
    if cfg.outdir is not None:
        _write_csv(Path(cfg.outdir) / "tpr.csv", ["delta", "method", "tpr"], rows)
        _write_plot_manifest(
            Path(cfg.outdir), "tpr.csv", x="delta", y="tpr", series="method"
        )
    return rows


def run_runtime(cfg: ExperimentConfig) -> list[dict]:
    """Windowed-pass cost vs extractor depth, both backends.

    The full line scan's duration depends on how many windows the data
    happens to produce, so depth scaling is measured on a controlled
    workload instead: a fixed sweep of 50 scan points, each doing one
    conditioned pass plus detector replay and event solve. ``median_ms`` is
    the median sweep time over >= 5 repetitions. Each cell also runs the
    complete inference once so the two backends' p-values can be compared
    (``p_gap``).
    """
    spec = cfg.bundle_spec or {}
    layer_counts = tuple(spec.get("layer_counts", (8, 16, 32, 64)))
    width = spec.get("width")
    reps = max(5, int(spec.get("reps", 5)))
    probes = int(spec.get("probes", 50))
    n_s = cfg.ns_list[0]
    rows: list[dict] = []
    for n_layers in layer_counts:
        bundle = make_deep_bundle(cfg.d, int(n_layers), width, seed=cfg.seed)
        data = None
        anomalies = np.empty(0, dtype=int)
        # redraw until the detector flags at least one target row
        for t in range(200):
            data, cov, _, _ = gen_synthetic(
                n_s, cfg.nt, cfg.d, 0.0, cfg.rho, [cfg.seed, n_layers, t]
            )
            anomalies = detect(bundle, data, cfg.rate).target_anomalies
            if anomalies.size:
                break
        if not anomalies.size:
            raise RuntimeError(f"no target anomaly found for layers={n_layers}")
        j = int(anomalies[0])
        n = n_s + cfg.nt
        direction = build_eta(data, cov, anomalies, j)
        line = nuisance_line(direction, cov, data.vectorized())
        z_min, z_max = line.z_range
        z_probes = np.linspace(z_min, z_max, probes + 2)[1:-1]
        p_seen: dict[str, float] = {}
        for backend in ("sequential", "parallel"):
            engine = PipelineEngine(bundle, n, backend)
            report = infer_anomaly(
                data, cov, bundle, anomalies, j, cfg.rate, engine=engine
            )  # warmup (jit compile, caches) + p-value for the gap check
            if report.failure is not None:
                raise RuntimeError(
                    f"benchmark inference failed ({backend}, layers={n_layers}): "
                    f"{report.failure}"
                )
            p_seen[backend] = report.p_selective
            engine.set_line(
                mat_rows(line.offset, n, cfg.d), mat_rows(line.direction, n, cfg.d)
            )
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                for z in z_probes:
                    try:
                        tap, out, iv = engine.window(float(z), z_min, z_max)
                    except PatternAbortError:
                        continue
                    errors = np.abs(tap.value - out.value).sum(axis=1)
                    det = detect_from_errors(errors, cfg.rate, n_s)
                    solve_constraints(
                        ad_event_constraints(tap, out, det.threshold_index, det.anomalous)
                    )
                times.append((time.perf_counter() - t0) * 1e3)
            rows.append(
                {
                    "layers": int(n_layers),
                    "backend": backend,
                    "median_ms": float(np.median(times)),
                    "p_selective": report.p_selective,
                }
            )
        rows[-1]["p_gap"] = abs(p_seen["sequential"] - p_seen["parallel"])
        rows[-2]["p_gap"] = rows[-1]["p_gap"]
    if cfg.outdir is not None:
        _write_csv(
            Path(cfg.outdir) / "runtime.csv",
            ["layers", "backend", "median_ms"],
            rows,
        )
        _write_plot_manifest(
            Path(cfg.outdir), "runtime.csv", x="layers", y="median_ms", series="backend"
        )
    return rows


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a feature CSV into source/target domains."""

    column: str
    source_value: str
    target_value: str
    n_s: int
    n_t: int
    standardize: bool = True
    seed: int = 0
    feature_columns: tuple[str, ...] | None = None


def ingest_csv(
    path,
    split: SplitSpec,
    loc: np.ndarray | None = None,
    scale: np.ndarray | None = None,
    cov: CovarianceSpec | None = None,
) -> tuple[DataPair, CovarianceSpec]:
    """Read a feature CSV, split into domains, subsample, standardize.

    Standardization uses per-column mean/std over the whole file unless
    held-out estimates (loc, scale) are passed. Sampling is without
    replacement and deterministic per split.seed. The covariance defaults
    to identity unless one is supplied.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or split.column not in reader.fieldnames:
            raise ValueError(f"{path}: missing split column {split.column!r}")
        feat_cols = split.feature_columns or tuple(
            c for c in reader.fieldnames if c != split.column
        )
        feats: list[list[float]] = []
        domains: list[str] = []
        for ln, row in enumerate(reader, start=2):
            vals = []
            for c in feat_cols:
                try:
                    vals.append(float(row[c]))
                except (TypeError, ValueError):
                    raise ValueError(
                        f"{path}:{ln}: non-numeric cell in column {c!r}: {row[c]!r}"
                    ) from None
            feats.append(vals)
            domains.append(row[split.column])
    x = np.array(feats, dtype=np.float64)
    domains_arr = np.array(domains)
    if split.standardize:
        mu = np.asarray(loc, dtype=np.float64) if loc is not None else x.mean(axis=0)
        sd = np.asarray(scale, dtype=np.float64) if scale is not None else x.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        x = (x - mu) / sd
    rng = np.random.default_rng(split.seed)
    picked = {}
    for name, value, want in (
        ("source", split.source_value, split.n_s),
        ("target", split.target_value, split.n_t),
    ):
        idx = np.flatnonzero(domains_arr == value)
        if idx.size < want:
            raise ValueError(
                f"{path}: split {split.column}={value!r} has {idx.size} rows, "
                f"need {want}"
            )
        picked[name] = x[np.sort(rng.choice(idx, size=want, replace=False))]
    pair = DataPair(picked["source"], picked["target"])
    if cov is None:
        cov = CovarianceSpec.identity(split.n_s, split.n_t, pair.d)
    return pair, cov


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def _write_plot_manifest(outdir: Path, filename: str, **axes: str) -> None:
    manifest_path = outdir / "plots.json"
    entry = {"file": filename, **axes}
    existing = []
    if manifest_path.exists():
        existing = json.loads(manifest_path.read_text(encoding="utf-8"))
        existing = [e for e in existing if e.get("file") != filename]
    existing.append(entry)
    manifest_path.write_text(
        json.dumps(existing, indent=1) + "\n", encoding="utf-8"
    )
