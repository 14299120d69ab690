"""Cross-package round-trip: trained weights must behave identically downstream.

Training runs in float32; the detector loads bundles in float64. The exported
JSON widens every weight exactly, so the forward passes may differ only by
summation order — well inside 1e-5.
"""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from standa.network import forward as detector_forward, load_bundle
from standa_trainer import (
    TrainConfig,
    export_bundle,
    forward as trainer_forward,
    train_autoencoder,
    train_wdgrl,
)

PARITY_TOL = 1e-5


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    cfg = TrainConfig(
        extractor_hidden=(12, 6), ae_encoder=(6, 4, 2),
        epochs=40, batch_size=32, critic_steps=3, critic_hidden=12,
        lr_ae=2e-3, seed=23,
    )
    rng = np.random.default_rng(77)
    src = rng.standard_normal((120, 10)).astype(np.float32)
    tgt = (rng.standard_normal((90, 10)) + 1.0).astype(np.float32)
    probe = rng.standard_normal((10, 10)).astype(np.float32)

    wd = train_wdgrl(src, tgt, cfg)
    ae = train_autoencoder(trainer_forward(wd.extractor, src), cfg)
    path = tmp_path_factory.mktemp("bundle") / "bundle.json"
    export_bundle(wd.extractor, ae.layers, path, config=cfg)
    return wd.extractor, ae.layers, path, probe


def test_exported_bundle_loads_in_the_detector(trained):
    _, _, path, _ = trained
    bundle = load_bundle(path)
    assert bundle.extractor.input_dim == 10
    assert bundle.extractor.output_dim == bundle.autoencoder.input_dim == 6
    assert bundle.autoencoder.output_dim == 6


def test_forward_parity_on_random_probes(trained):
    ext, ae, path, probe = trained
    rep32 = trainer_forward(ext, probe)
    rec32 = trainer_forward(ae, rep32)
    bundle = load_bundle(path)
    rep64 = detector_forward(bundle.extractor, probe.astype(np.float64))
    rec64 = detector_forward(bundle.autoencoder, rep64)
    assert np.max(np.abs(rep64 - rep32)) < PARITY_TOL
    assert np.max(np.abs(rec64 - rec32)) < PARITY_TOL
    # parity on a constant output would be vacuous; this model must not collapse
    assert rec32.std(axis=0).max() > 1e-3


def test_cli_probe_reproduces_the_trainer_forward(trained, tmp_path):
    ext, ae, path, probe = trained
    probe_csv = tmp_path / "probe.csv"
    with open(probe_csv, "w", newline="") as fh:
        csv.writer(fh).writerows(probe.tolist())
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "standa.cli", "validate-bundle",
         f"--set=bundle={path}", f"--set=probe={probe_csv}", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "bundle ok" in proc.stdout

    doc = json.loads((out / "probe.json").read_text())
    rep32 = trainer_forward(ext, probe)
    rec32 = trainer_forward(ae, rep32)
    assert np.max(np.abs(np.array(doc["representation"]) - rep32)) < PARITY_TOL
    assert np.max(np.abs(np.array(doc["reconstruction"]) - rec32)) < PARITY_TOL
    errs = np.abs(np.array(doc["representation"]) - np.array(doc["reconstruction"])).sum(axis=1)
    assert np.allclose(np.array(doc["errors"]), errs)
