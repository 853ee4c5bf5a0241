"""Round trip against the consuming toolkit.

These tests require protorestore to be installed in the same
environment; they are what pins the restated bank writer to the real
loader, byte for byte, and prove an exported bank drives a full
evaluation.
"""

import re
import subprocess

import numpy as np
import torch

from protorestore.featstore import load_bank

from featexport import ExportSpec, export_features


def test_loader_validates_exported_bank(exported):
    spec, result = exported
    bank = load_bank(spec.out_path)
    assert bank.n_records == result.n_records == 10
    assert bank.dim == result.dim == 512
    assert bank.manifest.split_of == {0: "novel", 1: "novel"}
    assert bank.manifest.names == {0: "beak", 1: "claw"}
    assert np.isfinite(bank.vectors).all()
    counts = np.bincount(bank.class_ids, minlength=2)
    assert counts.tolist() == [5, 5]


def test_eval_smoke_run(exported):
    spec, _ = exported
    proc = subprocess.run(
        ["protorestore", "eval", "--bank", str(spec.out_path),
         "--split", "novel", "--n-way", "2", "--k-shot", "1",
         "--queries", "3", "--episodes", "20", "--seed", "0"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    m = re.search(r"baseline 2-way 1-shot: (\d+\.\d+)±(\d+\.\d+)", proc.stdout)
    assert m, proc.stdout
    assert 0.0 <= float(m.group(1)) <= 100.0


def test_supplied_weights_change_features(exported, tmp_path):
    spec, _ = exported
    torch.manual_seed(99)
    from torchvision.models import resnet18
    wpath = tmp_path / "alt.pt"
    torch.save(resnet18(weights=None).state_dict(), wpath)

    alt = ExportSpec(root=spec.root, split_file=spec.split_file,
                     out_path=tmp_path / "alt.fbank", weights_path=wpath)
    export_features(alt)
    a = load_bank(spec.out_path)
    b = load_bank(alt.out_path)
    assert np.array_equal(a.class_ids, b.class_ids)
    assert not np.array_equal(a.vectors, b.vectors)
    assert "file:alt.pt" in b.manifest.provenance
