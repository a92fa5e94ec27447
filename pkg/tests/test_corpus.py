from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from r2a.corpus import (
    EmbeddingMatrix,
    TextCorpus,
    build_index,
    ingest_texts,
    load_index,
    make_shards,
    normalize_rows,
    read_vector_file,
    save_index,
    write_vector_file,
)
from r2a.errors import FormatError, ValidationError

from .oracles import ref_row_norms


class TestIngestTexts:
    def test_trim_and_skip(self):
        corpus = ingest_texts(["a cat", "", " a dog "])
        assert corpus.entries == [(0, "a cat"), (1, "a dog")]
        assert corpus.skipped_lines == 1

    def test_empty_input(self):
        corpus = ingest_texts([])
        assert len(corpus) == 0

    def test_ten_line_fixture_matches_line_reader(self, tmp_path):
        lines = [f"caption number {i} about scene {i * 7}" for i in range(10)]
        path = tmp_path / "captions.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

        with open(path, "rb") as fh:
            corpus = ingest_texts(fh.read().splitlines())

        # oracle: plain line-by-line reading
        expected = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                text = line.strip()
                if text:
                    expected.append(text)
        assert len(corpus) == 10
        assert [t for _, t in corpus.entries] == expected
        assert [i for i, _ in corpus.entries] == list(range(10))

    def test_invalid_utf8_reports_line_number(self):
        with pytest.raises(ValidationError, match="line 2"):
            ingest_texts([b"fine", b"\xff\xfe broken", b"fine too"])

    def test_order_preserving_property(self):
        lines = ["  x  ", "", "y", "   ", "z z", "q"]
        corpus = ingest_texts(lines)
        trimmed = [ln.strip() for ln in lines if ln.strip()]
        assert list(corpus.texts) == trimmed


class TestNormalizeRows:
    def test_three_four_five(self):
        m = normalize_rows(EmbeddingMatrix(values=np.array([[3.0, 4.0]])))
        assert m.values[0] == pytest.approx([0.6, 0.8], abs=1e-7)
        assert m.normalized

    def test_idempotent(self):
        m = normalize_rows(EmbeddingMatrix(values=np.array([[3.0, 4.0], [1.0, 0.0]])))
        again = normalize_rows(m)
        assert np.max(np.abs(again.values - m.values)) < 1e-7

    def test_random_matrix_norms_match_loop_oracle(self):
        rng = np.random.default_rng(7)
        m = normalize_rows(EmbeddingMatrix(values=rng.standard_normal((100, 16))))
        norms = ref_row_norms(m.values.tolist())
        assert max(abs(n - 1.0) for n in norms) <= 1e-6

    def test_zero_norm_row_reports_index(self):
        values = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValidationError, match="row 1"):
            normalize_rows(EmbeddingMatrix(values=values))

    def test_nan_rejected(self):
        with pytest.raises(ValidationError, match="NaN"):
            EmbeddingMatrix(values=np.array([[1.0, np.nan]]))


class TestShards:
    def test_partition(self):
        assert make_shards(10, 3) == ((0, 4), (4, 7), (7, 10))
        assert make_shards(4, 8) == ((0, 1), (1, 2), (2, 3), (3, 4))

    def test_bad_shards_rejected(self):
        from r2a.corpus import CorpusIndex

        corpus = ingest_texts(["a", "b"])
        emb = normalize_rows(EmbeddingMatrix(values=np.eye(2, 3)))
        with pytest.raises(ValidationError):
            CorpusIndex(corpus=corpus, embeddings=emb, shards=((0, 1), (0, 2)))


def _small_index(n=3, d=4, seed=0):
    rng = np.random.default_rng(seed)
    corpus = ingest_texts([f"text {i}" for i in range(n)])
    matrix = EmbeddingMatrix(values=rng.standard_normal((n, d)))
    return build_index(corpus, matrix, shard_count=2)


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path):
        index = _small_index()
        save_index(index, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        assert loaded.embeddings.values.tobytes() == index.embeddings.values.tobytes()
        assert loaded.corpus.texts == index.corpus.texts
        assert loaded.shards == index.shards
        assert loaded.embeddings.normalized

    def test_truncated_payload(self, tmp_path):
        index = _small_index()
        save_index(index, tmp_path / "idx")
        vec = tmp_path / "idx" / "vectors.r2av"
        vec.write_bytes(vec.read_bytes()[:-5])
        with pytest.raises(FormatError, match="size"):
            load_index(tmp_path / "idx")

    def test_header_dim_mismatch(self, tmp_path):
        index = _small_index(n=2, d=256)
        save_index(index, tmp_path / "idx")
        vec = tmp_path / "idx" / "vectors.r2av"
        raw = bytearray(vec.read_bytes())
        # rewrite d=256 -> 512 in the header (offset 16, little-endian u32)
        raw[16:20] = (512).to_bytes(4, "little")
        vec.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="size"):
            load_index(tmp_path / "idx")

    def test_bad_magic(self, tmp_path):
        index = _small_index()
        save_index(index, tmp_path / "idx")
        vec = tmp_path / "idx" / "vectors.r2av"
        raw = bytearray(vec.read_bytes())
        raw[:4] = b"XXXX"
        vec.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            load_index(tmp_path / "idx")

    def test_bad_version(self, tmp_path):
        index = _small_index()
        save_index(index, tmp_path / "idx")
        vec = tmp_path / "idx" / "vectors.r2av"
        raw = bytearray(vec.read_bytes())
        raw[4:8] = (99).to_bytes(4, "little")
        vec.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_index(tmp_path / "idx")

    def test_text_count_mismatch(self, tmp_path):
        index = _small_index()
        save_index(index, tmp_path / "idx")
        texts = tmp_path / "idx" / "texts.jsonl"
        lines = texts.read_text(encoding="utf-8").splitlines()
        texts.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(FormatError, match="count"):
            load_index(tmp_path / "idx")

    def test_mmap_load_matches(self, tmp_path):
        index = _small_index(n=7, d=5, seed=3)
        save_index(index, tmp_path / "idx")
        eager = load_index(tmp_path / "idx")
        mapped = load_index(tmp_path / "idx", mmap=True)
        assert mapped.embeddings.values.tobytes() == eager.embeddings.values.tobytes()

    def test_empty_corpus_round_trip(self, tmp_path):
        corpus = ingest_texts([])
        matrix = EmbeddingMatrix(values=np.zeros((0, 4), dtype=np.float32), normalized=True)
        index = build_index(corpus, matrix)
        save_index(index, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        assert loaded.count == 0
        assert loaded.dim == 4


@st.composite
def index_strategy(draw):
    n = draw(st.integers(min_value=1, max_value=8))
    d = draw(st.integers(min_value=1, max_value=6))
    texts = draw(
        st.lists(
            st.text(min_size=1, max_size=20).filter(lambda s: s.strip()),
            min_size=n,
            max_size=n,
        )
    )
    seed = draw(st.integers(min_value=0, max_value=2**31))
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((n, d)).astype(np.float32) + 0.01
    shard_count = draw(st.integers(min_value=1, max_value=4))
    return texts, values, shard_count


@settings(max_examples=40, deadline=None)
@given(index_strategy())
def test_save_load_identity_property(tmp_path_factory, data):
    texts, values, shard_count = data
    corpus = TextCorpus(texts=tuple(t.strip() for t in texts))
    index = build_index(corpus, EmbeddingMatrix(values=values), shard_count=shard_count)
    path = tmp_path_factory.mktemp("roundtrip") / "idx"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.embeddings.values.tobytes() == index.embeddings.values.tobytes()
    assert loaded.embeddings.normalized == index.embeddings.normalized
    assert loaded.corpus.texts == index.corpus.texts
    assert (loaded.count, loaded.dim) == (index.count, index.dim)
    assert loaded.shards == index.shards


def test_vector_file_standalone_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    matrix = EmbeddingMatrix(values=rng.standard_normal((5, 3)).astype(np.float32))
    path = tmp_path / "frames.r2av"
    write_vector_file(path, matrix)
    loaded = read_vector_file(path)
    assert loaded.values.tobytes() == matrix.values.tobytes()
    assert not loaded.normalized
