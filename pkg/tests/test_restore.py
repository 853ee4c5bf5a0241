"""Pair mining, restoration training, and the half-half restore rule."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protorestore.featstore import FeatureBank, SplitManifest
from protorestore.neural import DenseNet2, TrainConfig
from protorestore.protocore import Prototype
from protorestore.restore import (
    PairSet,
    collect_pairs,
    compute_targets,
    load_model,
    restore,
    RestoreModel,
    save_model,
    train_restore,
    transform,
)


def bank_from(vecs, cids, n_classes=None):
    vecs = np.asarray(vecs, dtype=np.float32)
    n_classes = n_classes or int(max(cids)) + 1
    manifest = SplitManifest({c: "base" for c in range(n_classes)})
    return FeatureBank(vecs.shape[1], np.asarray(cids), vecs, manifest)


def mine_brute_force(view, targets, lam):
    """Reference miner: per class, sort by (-distance, row position)."""
    picked = []
    for cid in sorted(set(int(c) for c in view.class_ids)):
        t = targets.vector_for(cid)
        rows = view.vectors[view.class_ids == cid].astype(np.float64)
        d = [float(np.linalg.norm(r - t)) for r in rows]
        order = sorted(range(len(rows)), key=lambda i: (-d[i], i))[:min(lam, len(rows))]
        picked.append(rows[order])
    return np.vstack(picked)


class TestComputeTargets:
    def test_centroid_over_all_records(self):
        bank = bank_from([[0.0, 0.0], [2.0, 2.0], [10.0, 0.0]], [0, 0, 1], 2)
        targets = compute_targets(bank)
        np.testing.assert_allclose(targets.vector_for(0), [1.0, 1.0])
        np.testing.assert_allclose(targets.vector_for(1), [10.0, 0.0])

    def test_empty_view_rejected(self):
        bank = bank_from(np.zeros((0, 2)), np.zeros(0, dtype=int), 1)
        with pytest.raises(ValueError):
            compute_targets(bank)


class TestCollectPairs:
    def test_farthest_first_with_hand_data(self):
        bank = bank_from([[0.0], [4.0], [1.0], [3.0]], [0, 0, 0, 0], 1)
        targets = compute_targets(bank)   # centroid 2.0
        pairs = collect_pairs(bank, targets, 2)
        # distances: 2, 2, 1, 1 -> ties at distance 2 keep row order
        np.testing.assert_allclose(pairs.inputs[:, 0], [0.0, 4.0])
        np.testing.assert_array_equal(pairs.ranks, [0, 1])
        np.testing.assert_allclose(pairs.distances, [2.0, 2.0])

    def test_lam_clamped_to_class_size(self):
        bank = bank_from([[0.0], [1.0]], [0, 0], 1)
        pairs = collect_pairs(bank, compute_targets(bank), 99)
        assert len(pairs.inputs) == 2

    def test_lam_below_one_rejected(self):
        bank = bank_from([[0.0]], [0], 1)
        with pytest.raises(ValueError):
            collect_pairs(bank, compute_targets(bank), 0)

    def test_missing_target_class_rejected(self):
        bank = bank_from([[0.0], [1.0]], [0, 1], 2)
        only_zero = compute_targets(bank_from([[0.0]], [0], 1))
        with pytest.raises(KeyError):
            collect_pairs(bank, only_zero, 1)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), lam=st.sampled_from([1, 5, 999]),
           n_classes=st.integers(1, 4), per_class=st.integers(1, 12))
    def test_matches_brute_force_miner(self, seed, lam, n_classes, per_class):
        rng = np.random.default_rng(seed)
        cids = np.repeat(np.arange(n_classes), per_class)
        bank = bank_from(rng.normal(size=(len(cids), 3)), cids, n_classes)
        targets = compute_targets(bank)
        got = collect_pairs(bank, targets, lam)
        want = mine_brute_force(bank, targets, lam)
        np.testing.assert_allclose(got.inputs, want, atol=1e-12)
        # every pair's target is its class centroid
        for row, cid in zip(got.targets, got.class_ids):
            np.testing.assert_allclose(row, targets.vector_for(int(cid)))

    def test_dump_format(self, tmp_path):
        bank = bank_from([[0.0], [4.0]], [0, 0], 1)
        pairs = collect_pairs(bank, compute_targets(bank), 2)
        text = pairs.dump(tmp_path / "pairs.txt").read_text()
        first = text.splitlines()[0].split(",")
        assert first[0] == "0" and first[1] == "0"
        assert float(first[2]) == 2.0


class TestTrainRestore:
    def test_loss_decreases_and_is_logged(self):
        rng = np.random.default_rng(0)
        cids = np.repeat(np.arange(3), 40)
        center = rng.normal(size=(3, 6)) * 0.5
        vecs = center[cids] + rng.normal(size=(120, 6))
        bank = bank_from(vecs, cids, 3)
        pairs = collect_pairs(bank, compute_targets(bank), 12)
        model = train_restore(pairs, hidden_dim=16,
                              train=TrainConfig(seed=1, epochs=30))
        assert len(model.loss_log) == 30
        assert model.loss_log[-1] < model.loss_log[0]

    def test_deterministic_under_seed(self):
        bank = bank_from(np.random.default_rng(2).normal(size=(40, 4)),
                         np.repeat([0, 1], 20), 2)
        pairs = collect_pairs(bank, compute_targets(bank), 10)
        cfg = TrainConfig(seed=5, epochs=5)
        m1 = train_restore(pairs, 8, cfg)
        m2 = train_restore(pairs, 8, cfg)
        for name in m1.net.params():
            np.testing.assert_array_equal(m1.net.params()[name],
                                          m2.net.params()[name])

    def test_identity_task_converges(self):
        # input == target everywhere: a linearly solvable task the net
        # must drive to near-zero loss at the default epoch budget
        rng = np.random.default_rng(4)
        vecs = rng.normal(size=(640, 6))
        bank = bank_from(vecs, np.repeat(np.arange(4), 160), 4)
        pairs = collect_pairs(bank, compute_targets(bank), 160)
        pairs.targets = pairs.inputs.copy()
        model = train_restore(pairs, hidden_dim=16, train=TrainConfig(seed=2))
        assert model.loss_log[-1] < 1e-3 * bank.dim
        recon = np.array([transform(model, v) for v in pairs.inputs])
        assert np.abs(recon - pairs.inputs).mean() < 0.05

    def test_divergence_reported(self):
        bank = bank_from(np.random.default_rng(3).normal(size=(20, 3)) * 1e3,
                         np.zeros(20, dtype=int), 1)
        pairs = collect_pairs(bank, compute_targets(bank), 20)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(FloatingPointError):
                train_restore(pairs, 8, TrainConfig(seed=0, epochs=5,
                                                    learning_rate=1e200))


class TestRestoreRule:
    def constant_model(self, out, dim):
        # W2 zeroed, so the net always emits b2: restore() becomes
        # 0.5 * out + 0.5 * p, checkable in closed form
        net = DenseNet2(W1=np.zeros((2, dim)), b1=np.zeros(2),
                        W2=np.zeros((dim, 2)), b2=np.asarray(out, dtype=np.float64))
        return RestoreModel(net=net, lam=1, seed=0, epochs=0)

    def test_half_half_average(self):
        model = self.constant_model([4.0, 0.0], 2)
        proto = Prototype(1, np.array([0.0, 2.0]), "raw")
        out = restore(model, proto)
        np.testing.assert_allclose(out.vector, [2.0, 1.0])
        assert out.source == "restored"
        assert out.class_id == 1

    def test_source_tracks_refinement(self):
        model = self.constant_model([0.0], 1)
        refined = Prototype(0, np.array([1.0]), "refined")
        assert restore(model, refined).source == "refined_restored"

    def test_transform_is_raw_net_output(self):
        model = self.constant_model([3.0, 3.0], 2)
        np.testing.assert_allclose(transform(model, np.zeros(2)), [3.0, 3.0])


class TestModelCheckpoint:
    def test_roundtrip_keeps_metadata(self, tmp_path):
        bank = bank_from(np.random.default_rng(4).normal(size=(30, 4)),
                         np.repeat([0, 1, 2], 10), 3)
        pairs = collect_pairs(bank, compute_targets(bank), 5)
        model = train_restore(pairs, 8, TrainConfig(seed=9, epochs=3))
        path = save_model(model, tmp_path / "r.dnw1")
        loaded = load_model(path)
        assert (loaded.lam, loaded.seed, loaded.epochs) == (5, 9, 3)
        out_a = transform(model, np.ones(4))
        out_b = transform(loaded, np.ones(4))
        np.testing.assert_allclose(out_a, out_b, atol=1e-5)

    def test_wrong_kind_rejected(self, tmp_path):
        from protorestore.neural import save_net, init_net
        from protorestore.numerics import RngStream
        path = save_net(init_net(2, 2, 2, RngStream(0, 0)), tmp_path / "x.dnw1",
                        meta={"kind": "embed"})
        with pytest.raises(ValueError):
            load_model(path)
