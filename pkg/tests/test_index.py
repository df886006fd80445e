import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatehash.errors import (
    BadMagicError,
    DimensionMismatchError,
    SchemaError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)
from gatehash.index import (
    BinaryCodeMatrix,
    hamming_distance,
    pack_codes,
    rank_all,
    read_code_file,
    search_topk,
    unpack_codes,
    words_per_code,
    write_code_file,
)

from oracles import naive_full_sort_search, naive_hamming


def random_signs(rng, count, k):
    return rng.choice(np.array([-1, 1], dtype=np.int8), size=(count, k))


def random_matrix(rng, count, k, id_offset=0):
    signs = random_signs(rng, count, k)
    ids = np.arange(id_offset, id_offset + count, dtype=np.uint64)
    return pack_codes(signs, ids), signs


class TestPacking:
    def test_word_encoding(self):
        m = pack_codes(np.array([[1, -1, 1, -1]]), np.array([0], dtype=np.uint64))
        assert m.words[0, 0] == 0b0101

    def test_128_bits_use_two_words(self):
        m, _ = random_matrix(np.random.default_rng(0), 3, 128)
        assert m.words.shape == (3, 2)
        assert words_per_code(128) == 2

    def test_pack_unpack_roundtrip(self, rng):
        for k in (1, 7, 16, 63, 64, 65, 128):
            signs = random_signs(rng, 5, k)
            m = pack_codes(signs, np.arange(5, dtype=np.uint64))
            np.testing.assert_array_equal(unpack_codes(m), signs)

    def test_bit_vectors_pack_like_signs(self, rng):
        signs = random_signs(rng, 4, 16)
        bits = (signs > 0).astype(np.uint8)
        ids = np.arange(4, dtype=np.uint64)
        np.testing.assert_array_equal(
            pack_codes(signs, ids).words, pack_codes(bits, ids).words
        )

    def test_padding_bits_are_zero(self, rng):
        m, _ = random_matrix(rng, 10, 17)
        assert np.all(m.words[:, -1] >> np.uint64(17) == 0)
        m.validate()

    def test_ragged_input_rejected(self):
        with pytest.raises(ValidationError):
            pack_codes([[1, -1], [1, -1, 1]], np.arange(2, dtype=np.uint64))

    def test_nonzero_padding_rejected(self):
        words = np.array([[1 << 40]], dtype=np.uint64)
        m = BinaryCodeMatrix(words=words, k=16, ids=np.array([0], dtype=np.uint64))
        with pytest.raises(ValidationError):
            m.validate()


class TestHammingDistance:
    def test_identity(self, rng):
        m, _ = random_matrix(rng, 4, 64)
        assert hamming_distance(m.words[2], m.words[2]) == 0

    def test_two_differing_positions(self):
        a = pack_codes(np.array([[1, -1, 1, -1]]), np.array([0], dtype=np.uint64))
        b = pack_codes(np.array([[1, 1, -1, -1]]), np.array([0], dtype=np.uint64))
        assert hamming_distance(a.words[0], b.words[0]) == 2

    def test_matches_naive_oracle(self, rng):
        m, signs = random_matrix(rng, 40, 128)
        for _ in range(200):
            i, j = rng.integers(0, 40, size=2)
            assert hamming_distance(m.words[i], m.words[j]) == naive_hamming(
                signs[i], signs[j]
            )

    def test_word_count_mismatch(self, rng):
        a, _ = random_matrix(rng, 1, 64)
        b, _ = random_matrix(rng, 1, 128)
        with pytest.raises(DimensionMismatchError):
            hamming_distance(a.words[0], b.words[0])

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31), k=st.sampled_from((16, 32, 64, 128)))
    def test_metric_axioms(self, seed, k):
        rng = np.random.default_rng(seed)
        m, _ = random_matrix(rng, 3, k)
        a, b, c = m.words
        assert hamming_distance(a, a) == 0
        assert hamming_distance(a, b) == hamming_distance(b, a)
        assert hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c)
        assert 0 <= hamming_distance(a, b) <= k


class TestSearch:
    def test_topk_at_least_count_gives_full_ranking(self, rng):
        m, _ = random_matrix(rng, 10, 32)
        result = search_topk(m, m.words[0], topk=100)
        assert len(result) == 10
        assert sorted(result.ids.tolist()) == list(range(10))

    def test_own_code_ranks_first(self, rng):
        m, _ = random_matrix(rng, 20, 32)
        result = search_topk(m, m.words[7], topk=3)
        assert result.distances[0] == 0
        assert 7 in result.ids[result.distances == 0]

    def test_matches_full_sort_oracle(self, rng):
        m, signs = random_matrix(rng, 100, 64)
        for q in range(10):
            expected = naive_full_sort_search(signs, m.ids, signs[q], topk=5)
            got = search_topk(m, m.words[q], topk=5).pairs()
            assert got == expected

    def test_empty_index_rejected(self):
        m = pack_codes(np.zeros((0, 16), dtype=np.int8), np.zeros(0, dtype=np.uint64))
        with pytest.raises(ValidationError):
            search_topk(m, np.zeros(1, dtype=np.uint64), topk=1)

    def test_topk_must_be_positive(self, rng):
        m, _ = random_matrix(rng, 3, 16)
        with pytest.raises(ValidationError):
            search_topk(m, m.words[0], topk=0)

    def test_distances_non_decreasing(self, rng):
        m, _ = random_matrix(rng, 50, 32)
        result = search_topk(m, m.words[0], topk=50)
        assert np.all(np.diff(result.distances) >= 0)


class TestRankAll:
    def test_all_ties_rank_by_ascending_id(self):
        signs = np.tile(np.array([1, -1, 1, -1], dtype=np.int8), (5, 1))
        ids = np.array([42, 7, 99, 0, 13], dtype=np.uint64)
        index = pack_codes(signs, ids)
        queries = pack_codes(signs[:1], np.array([1000], dtype=np.uint64))
        np.testing.assert_array_equal(rank_all(index, queries)[0], [0, 7, 13, 42, 99])

    def test_output_is_permutation(self, rng):
        index, _ = random_matrix(rng, 30, 16)
        queries, _ = random_matrix(rng, 4, 16, id_offset=100)
        rankings = rank_all(index, queries)
        for row in rankings:
            assert sorted(row.tolist()) == sorted(index.ids.tolist())

    def test_matches_search_topk(self, rng):
        index, _ = random_matrix(rng, 25, 32)
        queries, _ = random_matrix(rng, 6, 32, id_offset=100)
        rankings = rank_all(index, queries)
        for q in range(6):
            full = search_topk(index, queries.words[q], topk=25)
            np.testing.assert_array_equal(rankings[q], full.ids)

    def test_k_mismatch_rejected(self, rng):
        index, _ = random_matrix(rng, 5, 16)
        queries, _ = random_matrix(rng, 2, 32, id_offset=50)
        with pytest.raises(DimensionMismatchError):
            rank_all(index, queries)

    def test_stable_under_index_reordering(self, rng):
        signs = random_signs(rng, 30, 32)
        ids = rng.permutation(np.arange(30)).astype(np.uint64)
        index_a = pack_codes(signs, ids)
        order = rng.permutation(30)
        index_b = pack_codes(signs[order], ids[order])
        queries, _ = random_matrix(rng, 5, 32, id_offset=500)
        np.testing.assert_array_equal(
            rank_all(index_a, queries), rank_all(index_b, queries)
        )


class TestCodeFile:
    def test_roundtrip(self, rng, tmp_path):
        m, _ = random_matrix(rng, 9, 48)
        path = tmp_path / "codes.cmhc"
        write_code_file(m, path)
        loaded = read_code_file(path)
        assert loaded.k == m.k
        np.testing.assert_array_equal(loaded.words, m.words)
        np.testing.assert_array_equal(loaded.ids, m.ids)

    def test_empty_roundtrip(self, tmp_path):
        m = pack_codes(np.zeros((0, 32), dtype=np.int8), np.zeros(0, dtype=np.uint64))
        path = tmp_path / "codes.cmhc"
        write_code_file(m, path)
        loaded = read_code_file(path)
        assert loaded.count == 0 and loaded.k == 32

    def test_bad_magic(self, rng, tmp_path):
        m, _ = random_matrix(rng, 2, 16)
        path = tmp_path / "codes.cmhc"
        write_code_file(m, path)
        path.write_bytes(b"WAT?" + path.read_bytes()[4:])
        with pytest.raises(BadMagicError):
            read_code_file(path)

    def test_truncated(self, rng, tmp_path):
        m, _ = random_matrix(rng, 2, 16)
        path = tmp_path / "codes.cmhc"
        write_code_file(m, path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(TruncatedFileError):
            read_code_file(path)

    def test_version(self, rng, tmp_path):
        m, _ = random_matrix(rng, 2, 16)
        path = tmp_path / "codes.cmhc"
        write_code_file(m, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            read_code_file(path)

    def test_trailing_bytes(self, rng, tmp_path):
        m, _ = random_matrix(rng, 2, 16)
        path = tmp_path / "codes.cmhc"
        write_code_file(m, path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(SchemaError):
            read_code_file(path)
