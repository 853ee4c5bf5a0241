"""Bank container, binary serialization round-trip, and the error taxonomy."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protorestore.featstore import (
    BadMagicError,
    BankFormatError,
    FeatureBank,
    NonFiniteError,
    SplitManifest,
    TruncatedError,
    VersionError,
    load_bank,
    manifest_path,
    save_bank,
    view_split,
)

HEADER_LEN = 24


def tiny_bank(dim=8, per_class=3, n_classes=4, seed=0):
    rng = np.random.default_rng(seed)
    cids = np.repeat(np.arange(n_classes, dtype=np.uint32), per_class)
    vecs = rng.normal(size=(len(cids), dim)).astype(np.float32)
    split_of = {c: ("base" if c < 2 else "novel") for c in range(n_classes)}
    return FeatureBank(dim, cids, vecs, SplitManifest(split_of))


class TestContainer:
    def test_dense_class_range_required(self):
        manifest = SplitManifest({0: "base", 2: "novel"})
        with pytest.raises(ValueError):
            FeatureBank(2, np.array([0, 2]), np.zeros((2, 2)), manifest)

    def test_record_class_must_exist(self):
        manifest = SplitManifest({0: "base"})
        with pytest.raises(ValueError):
            FeatureBank(2, np.array([5]), np.zeros((1, 2)), manifest)

    def test_non_finite_rejected_with_record_index(self):
        vecs = np.zeros((3, 2), dtype=np.float32)
        vecs[1, 0] = np.nan
        manifest = SplitManifest({0: "base"})
        with pytest.raises(NonFiniteError, match="record 1"):
            FeatureBank(2, np.array([0, 0, 0]), vecs, manifest)

    def test_positions_of_class(self):
        bank = tiny_bank()
        np.testing.assert_array_equal(bank.positions_of_class(1), [3, 4, 5])

    def test_unknown_split_name_rejected(self):
        with pytest.raises(ValueError):
            SplitManifest({0: "test"})


class TestRoundTrip:
    def test_save_load_equals(self, tmp_path):
        bank = tiny_bank()
        path = save_bank(bank, tmp_path / "b.fbank")
        assert load_bank(path).equals(bank)

    def test_header_layout_frozen(self, tmp_path):
        bank = tiny_bank(dim=8, per_class=3, n_classes=4)
        path = save_bank(bank, tmp_path / "b.fbank")
        raw = path.read_bytes()
        magic, version, dim, n, n_cls = struct.unpack("<4sIIQI", raw[:HEADER_LEN])
        assert (magic, version, dim, n, n_cls) == (b"FBNK", 1, 8, 12, 4)
        assert len(raw) == HEADER_LEN + n * (4 + dim * 4)

    def test_save_is_deterministic(self, tmp_path):
        bank = tiny_bank()
        p1 = save_bank(bank, tmp_path / "a.fbank")
        p2 = save_bank(bank, tmp_path / "b.fbank")
        assert p1.read_bytes() == p2.read_bytes()
        assert manifest_path(p1).read_text() == manifest_path(p2).read_text()

    @settings(max_examples=25, deadline=None)
    @given(dim=st.integers(1, 32), per_class=st.integers(1, 6),
           n_classes=st.integers(1, 5), seed=st.integers(0, 2**16))
    def test_roundtrip_property(self, tmp_path_factory, dim, per_class,
                                n_classes, seed):
        bank = tiny_bank(dim, per_class, n_classes, seed)
        root = tmp_path_factory.mktemp("rt")
        assert load_bank(save_bank(bank, root / "b.fbank")).equals(bank)


class TestLoaderErrors:
    @pytest.fixture
    def saved(self, tmp_path):
        return save_bank(tiny_bank(), tmp_path / "b.fbank")

    def test_bad_magic(self, saved):
        raw = bytearray(saved.read_bytes())
        raw[:4] = b"XXXX"
        saved.write_bytes(raw)
        with pytest.raises(BadMagicError):
            load_bank(saved)

    def test_wrong_version(self, saved):
        raw = bytearray(saved.read_bytes())
        raw[4:8] = struct.pack("<I", 2)
        saved.write_bytes(raw)
        with pytest.raises(VersionError):
            load_bank(saved)

    def test_truncated_body(self, saved):
        raw = saved.read_bytes()
        saved.write_bytes(raw[:-5])
        with pytest.raises(TruncatedError):
            load_bank(saved)

    def test_truncated_header(self, saved):
        saved.write_bytes(saved.read_bytes()[:10])
        with pytest.raises(TruncatedError):
            load_bank(saved)

    def test_non_finite_payload_named(self, saved):
        raw = bytearray(saved.read_bytes())
        # first float of record 2: header + 2 records + class_id field
        off = HEADER_LEN + 2 * (4 + 8 * 4) + 4
        raw[off:off + 4] = struct.pack("<f", float("nan"))
        saved.write_bytes(raw)
        with pytest.raises(NonFiniteError, match="record 2"):
            load_bank(saved)

    def test_missing_manifest_sidecar(self, saved):
        manifest_path(saved).unlink()
        with pytest.raises(BankFormatError):
            load_bank(saved)

    def test_errors_are_value_errors(self):
        # callers may catch the whole family as ValueError
        assert issubclass(BadMagicError, ValueError)
        assert issubclass(TruncatedError, BankFormatError)


class TestViewSplit:
    def test_view_selects_only_split_classes(self):
        bank = tiny_bank()
        view = view_split(bank, "base")
        assert set(np.unique(view.class_ids)) == {0, 1}
        assert view.n_records == 6
        assert view.manifest.split_of == bank.manifest.split_of

    def test_view_preserves_vector_content(self):
        bank = tiny_bank()
        view = view_split(bank, "novel")
        np.testing.assert_array_equal(view.vectors, bank.vectors[6:])

    def test_empty_split_allowed(self):
        bank = tiny_bank()
        assert view_split(bank, "val").n_records == 0

    def test_unknown_split_rejected(self):
        with pytest.raises(ValueError):
            view_split(tiny_bank(), "holdout")
