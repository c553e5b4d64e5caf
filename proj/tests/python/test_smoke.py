import json
import math
from pathlib import Path

import numpy as np
import pytest

import mrfault

ROOT = Path(__file__).resolve().parents[2]
MODEL = ROOT / "fixtures" / "models" / "original.slwa"
IMAGES = ROOT / "fixtures" / "mnist" / "t10k-images-idx3-ubyte.gz"
LABELS = ROOT / "fixtures" / "mnist" / "t10k-labels-idx1-ubyte.gz"


def test_thermal_shift():
    expected = 0.8 * 1.86e-4 * 1550.0 / 4.2 * 10.0
    assert math.isclose(mrfault.thermal_shift_nm(1550.0, 10.0), expected, rel_tol=1e-12)
    with pytest.raises(mrfault.DomainError):
        mrfault.thermal_shift_nm(1550.0, -1.0)


def test_snapping_and_resonance():
    assert mrfault.snap_to_channel(1550.0, count=3) == 2
    assert mrfault.snap_to_channel(1550.8, count=3) == 1
    assert mrfault.snap_to_channel(1560.0, count=3) is None
    assert abs(mrfault.resonant_wavelength_nm(10.0, 97, 2.4) - 1554.60) < 0.01


def test_inventory_and_selection():
    acc = mrfault.Accelerator()
    assert acc.conv_mr_count == 80_000
    assert acc.fc_mr_count == 2_700_000
    targets = mrfault.select_actuation_targets(acc, "conv", 0.10, seed=1)
    assert len(targets) == 8_000 == len(set(targets))
    assert max(targets) < acc.conv_mr_count


def test_model_and_inference():
    model = mrfault.load_model(MODEL)
    assert model.parameter_count == 44_190
    data = mrfault.load_idx(IMAGES, LABELS).head(50)
    assert data.count == 50
    img = data.image(0)
    assert img.shape == (1, 28, 28)
    logits = mrfault.reference_forward(model, img)
    assert logits.shape == (10,)
    assert int(np.argmax(logits)) == int(data.labels[0])

    acc = mrfault.Accelerator()
    clean = mrfault.fault_free_accuracy(model, data, acc)
    assert clean >= 0.9
    attacked, slots, targeted = mrfault.attacked_accuracy(model, data, acc, "hotspot", "both", 0.10, seed=3)
    assert attacked < clean
    assert slots > 0
    assert targeted >= 278_000


def test_bad_inputs():
    with pytest.raises(mrfault.FormatError):
        mrfault.load_model(IMAGES)
    with pytest.raises(mrfault.ConfigError):
        mrfault.select_actuation_targets(mrfault.Accelerator(), "everywhere", 0.1, seed=1)


def test_small_campaign(tmp_path):
    assert len(mrfault.validate_config(ROOT / "configs" / "mnist.toml")) == 16
    report = mrfault.run_campaign(ROOT / "configs" / "mnist.toml", output=tmp_path, trials=1, subsample=10)
    assert len(report["rows"]) == 18
    assert (tmp_path / "trials.csv").read_text().startswith(
        "variant,kind,scope,fraction,trial,seed,accuracy,corrupted_slots\n"
    )
    text = (tmp_path / "report.json").read_text()
    table = mrfault.recovery(text, text)
    lines = table.strip().splitlines()
    assert len(lines) == 19
    assert all(float(line.split(",")[-1]) == 0.0 for line in lines[1:])
    assert json.loads(text)["metadata"]["trials"] == 1
