import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatehash.data import (
    DatasetSplit,
    concat_modalities,
    generate_synthetic,
    load_split,
    make_embedding_set,
    read_embedding_file,
    stack_concat,
    write_embedding_file,
    write_split_manifest,
)
from gatehash.errors import (
    BadMagicError,
    NonFiniteError,
    SchemaError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)

from conftest import random_embedding_set


def assert_sets_equal(a, b):
    assert a.modality_dims == b.modality_dims
    assert a.sample_count == b.sample_count
    for fa, fb in zip(a.features, b.features):
        np.testing.assert_array_equal(fa, fb)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.ids, b.ids)


class TestEmbxRoundTrip:
    def test_roundtrip_identity(self, rng, tmp_path):
        original = random_embedding_set(rng)
        path = tmp_path / "set.embx"
        write_embedding_file(original, path)
        assert_sets_equal(read_embedding_file(path), original)

    def test_empty_set_roundtrip(self, tmp_path):
        empty = make_embedding_set(
            [np.zeros((0, 512)), np.zeros((0, 512))],
            np.zeros((0, 3), dtype=np.uint8),
            np.zeros(0, dtype=np.uint64),
        )
        path = tmp_path / "empty.embx"
        write_embedding_file(empty, path)
        loaded = read_embedding_file(path)
        assert loaded.sample_count == 0
        assert loaded.modality_dims == (512, 512)

    def test_header_declares_count(self, rng, tmp_path):
        path = tmp_path / "set.embx"
        write_embedding_file(random_embedding_set(rng, count=3), path)
        raw = path.read_bytes()
        (count,) = struct.unpack("<Q", raw[8:16])
        assert count == 3

    @settings(max_examples=50, deadline=None)
    @given(
        count=st.integers(0, 10),
        dims=st.lists(st.integers(1, 5), min_size=1, max_size=3),
        categories=st.integers(0, 4),
        seed=st.integers(0, 2**31),
    )
    def test_roundtrip_property(self, tmp_path_factory, count, dims, categories, seed):
        rng = np.random.default_rng(seed)
        features = [
            rng.standard_normal((count, d)).astype(np.float32).astype(np.float64)
            for d in dims
        ]
        labels = rng.integers(0, 2, size=(count, categories)).astype(np.uint8)
        if categories:
            for row in range(count):
                if not labels[row].any():
                    labels[row, int(rng.integers(categories))] = 1
        ids = rng.permutation(np.arange(1000, 1000 + count)).astype(np.uint64)
        original = make_embedding_set(features, labels, ids)

        path = tmp_path_factory.mktemp("embx") / "set.embx"
        write_embedding_file(original, path)
        assert_sets_equal(read_embedding_file(path), original)


class TestEmbxErrors:
    def test_bad_magic(self, rng, tmp_path):
        path = tmp_path / "set.embx"
        write_embedding_file(random_embedding_set(rng), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            read_embedding_file(path)

    def test_version_mismatch(self, rng, tmp_path):
        path = tmp_path / "set.embx"
        write_embedding_file(random_embedding_set(rng), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            read_embedding_file(path)

    def test_truncated_payload(self, rng, tmp_path):
        path = tmp_path / "set.embx"
        write_embedding_file(random_embedding_set(rng), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(TruncatedFileError):
            read_embedding_file(path)

    def test_trailing_bytes(self, rng, tmp_path):
        path = tmp_path / "set.embx"
        write_embedding_file(random_embedding_set(rng), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(SchemaError):
            read_embedding_file(path)

    def test_nan_feature_rejected_on_write(self, rng, tmp_path):
        bad = random_embedding_set(rng)
        bad.features[0][0, 0] = np.nan
        with pytest.raises(NonFiniteError):
            write_embedding_file(bad, tmp_path / "bad.embx")

    def test_nonfinite_value_rejected_on_read(self, rng, tmp_path):
        path = tmp_path / "set.embx"
        emb = random_embedding_set(rng, count=2, dims=(2,), categories=1)
        write_embedding_file(emb, path)
        raw = bytearray(path.read_bytes())
        # first feature float starts right after the header (magic+16+4+4 bytes)
        raw[28:32] = struct.pack("<f", float("inf"))
        path.write_bytes(bytes(raw))
        with pytest.raises(NonFiniteError):
            read_embedding_file(path)


class TestInvariants:
    def test_label_row_without_bits_rejected(self, rng):
        with pytest.raises(ValidationError):
            make_embedding_set(
                [rng.standard_normal((2, 3))],
                np.array([[1, 0], [0, 0]], dtype=np.uint8),
                np.arange(2, dtype=np.uint64),
            )

    def test_zero_categories_means_unlabeled(self, rng):
        emb = make_embedding_set(
            [rng.standard_normal((2, 3))],
            np.zeros((2, 0), dtype=np.uint8),
            np.arange(2, dtype=np.uint64),
        )
        assert emb.unlabeled

    def test_duplicate_ids_rejected(self, rng):
        with pytest.raises(ValidationError):
            make_embedding_set(
                [rng.standard_normal((2, 3))],
                np.ones((2, 1), dtype=np.uint8),
                np.array([7, 7], dtype=np.uint64),
            )

    def test_row_count_mismatch_rejected(self, rng):
        with pytest.raises(ValidationError):
            make_embedding_set(
                [rng.standard_normal((2, 3)), rng.standard_normal((3, 3))],
                np.ones((2, 1), dtype=np.uint8),
                np.arange(2, dtype=np.uint64),
            )


class TestConcat:
    def test_two_modalities(self):
        emb = make_embedding_set(
            [np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])],
            np.array([[1]], dtype=np.uint8),
            np.array([0], dtype=np.uint64),
        )
        np.testing.assert_array_equal(concat_modalities(emb, 0), [1.0, 2.0, 3.0, 4.0])

    def test_default_dims_give_1024(self, rng):
        emb = random_embedding_set(rng, count=2, dims=(512, 512))
        assert concat_modalities(emb, 0).shape == (1024,)

    def test_single_modality_identity(self, rng):
        emb = random_embedding_set(rng, count=2, dims=(4,))
        np.testing.assert_array_equal(concat_modalities(emb, 1), emb.features[0][1])

    def test_index_out_of_range(self, rng):
        emb = random_embedding_set(rng, count=2)
        with pytest.raises(IndexError):
            concat_modalities(emb, 2)

    def test_length_always_sum_of_dims(self, rng):
        for dims in [(1,), (2, 3), (4, 1, 2)]:
            emb = random_embedding_set(rng, count=3, dims=dims)
            assert concat_modalities(emb, 0).shape == (sum(dims),)

    def test_stack_concat_normalizes_per_modality(self, rng):
        emb = random_embedding_set(rng, count=5, dims=(3, 4))
        stacked = stack_concat(emb, normalize=True)
        np.testing.assert_allclose(
            np.linalg.norm(stacked[:, :3], axis=1), 1.0, atol=1e-12
        )
        np.testing.assert_allclose(
            np.linalg.norm(stacked[:, 3:], axis=1), 1.0, atol=1e-12
        )


class TestSynthetic:
    def test_zero_noise_puts_samples_on_centers(self):
        split = generate_synthetic(3, 6, (4, 5), noise_sigma=0.0, seed=9)
        for part in (split.train, split.retrieval, split.query):
            for feat in part.features:
                for c in range(3):
                    rows = feat[part.labels[:, c] == 1]
                    if rows.shape[0] > 1:
                        assert np.ptp(rows, axis=0).max() == 0.0

    def test_same_seed_is_bitwise_identical(self):
        a = generate_synthetic(4, 10, (3, 3), 0.1, seed=5)
        b = generate_synthetic(4, 10, (3, 3), 0.1, seed=5)
        for part in ("train", "retrieval", "query"):
            assert_sets_equal(getattr(a, part), getattr(b, part))

    def test_counts_and_disjoint_ids(self):
        split = generate_synthetic(10, 100, (4, 4), 0.05, seed=1)
        total = (split.train.sample_count + split.retrieval.sample_count
                 + split.query.sample_count)
        assert total == 1000
        assert split.query.sample_count == 200
        assert split.retrieval.sample_count == 300
        all_ids = np.concatenate([split.train.ids, split.retrieval.ids, split.query.ids])
        assert len(np.unique(all_ids)) == 1000
        split.validate()  # query/retrieval disjointness

    def test_class_count_must_be_at_least_two(self):
        with pytest.raises(ValidationError):
            generate_synthetic(1, 10, (4,), 0.1, seed=0)


class TestSplitManifest:
    def test_write_then_load(self, tmp_path):
        split = generate_synthetic(3, 8, (4, 4), 0.02, seed=2)
        for role in ("train", "retrieval", "query"):
            write_embedding_file(getattr(split, role), tmp_path / f"{role}.embx")
        write_split_manifest(tmp_path / "split.json", "train.embx", "retrieval.embx",
                             "query.embx", split.category_count)
        loaded = load_split(tmp_path / "split.json")
        assert loaded.category_count == 3
        assert_sets_equal(loaded.train, split.train)
        assert_sets_equal(loaded.query, split.query)

    def test_query_retrieval_overlap_rejected(self, rng):
        emb = random_embedding_set(rng, count=4)
        split = DatasetSplit(train=emb, retrieval=emb, query=emb, category_count=4)
        with pytest.raises(ValidationError):
            split.validate()
