import numpy as np
import pytest
from PIL import Image

from featexport import ExportSpec, export_features


def make_tree(root, classes, per_class, size=48):
    """Class-per-directory tree of small noisy color images."""
    rng = np.random.default_rng(7)
    for cname, color in classes:
        d = root / cname
        d.mkdir(parents=True)
        for i in range(per_class):
            arr = rng.normal(color, 25.0, size=(size, size, 3))
            img = Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))
            img.save(d / f"img_{i:02d}.png")


@pytest.fixture(scope="session")
def toy_tree(tmp_path_factory):
    base = tmp_path_factory.mktemp("toy")
    root = base / "images"
    make_tree(root, [("beak", (200, 40, 40)), ("claw", (40, 60, 220))],
              per_class=5)
    split = base / "splits.txt"
    split.write_text("beak,novel\nclaw,novel\n", encoding="utf-8")
    return root, split


@pytest.fixture(scope="session")
def exported(toy_tree, tmp_path_factory):
    root, split = toy_tree
    out = tmp_path_factory.mktemp("banks") / "toy.fbank"
    spec = ExportSpec(root=root, split_file=split, out_path=out)
    return spec, export_features(spec)
