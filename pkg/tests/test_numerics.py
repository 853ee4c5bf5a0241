"""Seeded RNG streams, distance/softmax kernels, CI math, report formatting."""

import numpy as np
import pytest

from protorestore.numerics import (
    RngStream,
    ci95,
    format_mean_ci,
    mean_vec,
    pca2d,
    softmax,
    sq_euclidean,
    write_plot_points,
)


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(42, 3).generator().random(16)
        b = RngStream(42, 3).generator().random(16)
        np.testing.assert_array_equal(a, b)

    def test_distinct_stream_ids_decorrelate(self):
        a = RngStream(42, 0).generator().random(16)
        b = RngStream(42, 1).generator().random(16)
        assert not np.array_equal(a, b)

    def test_child_streams_are_stable_and_distinct(self):
        root = RngStream(9, 0)
        c5 = root.child(5).generator().random(8)
        c5_again = root.child(5).generator().random(8)
        c6 = root.child(6).generator().random(8)
        np.testing.assert_array_equal(c5, c5_again)
        assert not np.array_equal(c5, c6)

    def test_child_chain_independent_of_sibling_consumption(self):
        # deriving child i must not depend on whether child j was used
        root = RngStream(1, 0)
        before = root.child(2).generator().random(4)
        root.child(1).generator().random(1000)
        after = root.child(2).generator().random(4)
        np.testing.assert_array_equal(before, after)


class TestKernels:
    def test_sq_euclidean_scalar(self):
        assert sq_euclidean(np.array([1.0, 2.0]), np.array([4.0, 6.0])) == 25.0

    def test_sq_euclidean_zero_on_identical(self):
        v = np.arange(5, dtype=np.float64)
        assert sq_euclidean(v, v) == 0.0

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = softmax(rng.normal(size=7) * 10)
            assert abs(p.sum() - 1.0) <= 1e-9
            assert np.all(p >= 0)

    def test_softmax_shift_invariance(self):
        x = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(softmax(x), softmax(x + 100.0), atol=1e-12)

    def test_softmax_large_magnitudes_stay_finite(self):
        p = softmax(np.array([1e4, -1e4, 0.0]))
        assert np.all(np.isfinite(p))
        assert abs(p.sum() - 1.0) <= 1e-9

    def test_softmax_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))

    def test_mean_vec(self):
        m = mean_vec(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(m, [0.5, 0.5])


class TestCi95:
    def test_known_sample(self):
        # hand computation: mean 0.7, sample sd over n-1, 1.96 * sd / sqrt(n)
        xs = np.array([0.5, 0.7, 0.9, 0.6, 0.8])
        m, half = ci95(xs)
        assert m == pytest.approx(0.7)
        assert half == pytest.approx(0.13859292911256332)

    def test_single_point_has_zero_width(self):
        m, half = ci95(np.array([0.4]))
        assert m == 0.4
        assert half == 0.0

    def test_format_style(self):
        assert format_mean_ci(59.281, 0.204) == "59.28±0.20"
        assert format_mean_ci(5.0, 0.0) == "5.00±0.00"


class TestPca2d:
    def test_planar_data_preserved_exactly(self):
        # points already in a 2-d subspace keep their pairwise distances
        rng = np.random.default_rng(3)
        flat = rng.normal(size=(40, 2))
        basis = np.linalg.qr(rng.normal(size=(6, 2)))[0]
        emb = flat @ basis.T
        proj = pca2d(emb)
        d_orig = np.linalg.norm(flat[:, None] - flat[None, :], axis=-1)
        d_proj = np.linalg.norm(proj[:, None] - proj[None, :], axis=-1)
        np.testing.assert_allclose(d_proj, d_orig, atol=1e-8)

    def test_deterministic_sign(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 5))
        np.testing.assert_array_equal(pca2d(x), pca2d(x.copy()))

    def test_degenerate_rank_rejected(self):
        with pytest.raises(ValueError):
            pca2d(np.zeros((10, 4)))


def test_write_plot_points_roundtrippable(tmp_path):
    pts = np.array([[0.5, -1.25], [2.0, 3.5]])
    path = tmp_path / "proj.txt"
    write_plot_points(path, pts, class_ids=[1, 2], tags=["sample", "prototype"])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,class_id,tag"
    x, y, cid, tag = lines[1].split(",")
    assert (float(x), float(y), int(cid), tag) == (0.5, -1.25, 1, "sample")
    assert lines[2].endswith("prototype")
