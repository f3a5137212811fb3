from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aot_lab.bpe import BpeModel, bpe_decode, bpe_encode, bpe_train, pretokenize
from aot_lab.datapipe import (Direction, SplitConfig, batch_iter, fisher_yates, prepare_batch,
                              prepare_direction, reverse_chars, shuffle_split, split_array,
                              split_with_stride, to_natural_order)
from aot_lab.errors import InvalidArgumentError, UnknownSymbolError
from aot_lab.langgen import BOS, LINEAR_VOCAB, mult_toy_language
from aot_lab.shards import checksum, read_shard, write_shard


class TestSplit:
    def test_two_overlapping_windows(self):
        assert split_with_stride("ABCDEF", SplitConfig(5, 2)) == ["ABCD", "CDEF"]

    def test_exact_window(self):
        assert split_with_stride("ABCD", SplitConfig(5, 2)) == ["ABCD"]

    def test_trailing_partial_dropped(self):
        assert split_with_stride("ABCDE", SplitConfig(5, 2)) == ["ABCD"]

    def test_short_input_is_empty(self):
        assert split_with_stride("AB", SplitConfig(5, 2)) == []
        assert split_array(np.arange(2), SplitConfig(5, 2)).shape == (0, 4)

    def test_default_stride(self):
        assert SplitConfig(8).stride == 4
        assert SplitConfig(7).stride == 3
        assert SplitConfig(2).stride == 1

    def test_bad_config(self):
        with pytest.raises(InvalidArgumentError):
            SplitConfig(1)
        with pytest.raises(InvalidArgumentError):
            SplitConfig(5, 5)

    @settings(max_examples=50, deadline=None)
    @given(length=st.integers(0, 60), n=st.integers(2, 12), data=st.data())
    def test_windows_tile(self, length, n, data):
        stride = data.draw(st.integers(1, n - 1))
        cfg = SplitConfig(n, stride)
        tokens = list(range(length))
        wins = split_with_stride(tokens, cfg)
        np.testing.assert_array_equal(split_array(tokens, cfg).reshape(-1, n - 1),
                                      np.array(wins, dtype=np.int64).reshape(-1, n - 1))
        for a, b in zip(wins, wins[1:]):
            assert a[stride:] == b[:n - 1 - stride]
        if wins:
            assert wins[0][0] == 0 and len(tokens) - (wins[-1][0] + n - 1) < stride


class TestDirection:
    def test_parse(self):
        assert Direction.parse("BW") is Direction.BW
        with pytest.raises(InvalidArgumentError):
            Direction.parse("up")

    def test_bos_placement(self):
        assert prepare_direction([4, 5, 6], "fw", 9).tolist() == [9, 4, 5, 6]
        assert prepare_direction([4, 5, 6], "bw", 9).tolist() == [9, 6, 5, 4]

    def test_bw_involution(self):
        s = np.array([3, 1, 4, 1, 5])
        back = prepare_direction(prepare_direction(s, "bw", 7)[1:], "bw", 7)[1:]
        np.testing.assert_array_equal(back, s)

    def test_bos_in_payload_rejected(self):
        with pytest.raises(InvalidArgumentError):
            prepare_batch([[1, 7]], "fw", 7)

    def test_natural_order(self):
        per = np.array([[0.0, 1.0, 2.0]])
        np.testing.assert_array_equal(to_natural_order(per, "bw"), [[2.0, 1.0, 0.0]])
        np.testing.assert_array_equal(to_natural_order(per, "fw"), per)


class TestShuffle:
    def test_fisher_yates_is_permutation_and_seeded(self):
        p = fisher_yates(1000, 3)
        assert sorted(p.tolist()) == list(range(1000))
        np.testing.assert_array_equal(p, fisher_yates(1000, 3))
        assert not np.array_equal(p, fisher_yates(1000, 4))

    def test_fisher_yates_uniform_small(self):
        counts = Counter(tuple(fisher_yates(3, s)) for s in range(6000))
        assert len(counts) == 6
        assert all(850 < c < 1150 for c in counts.values())

    def test_split_sizes(self):
        sents = np.arange(20).reshape(10, 2)
        train, val = shuffle_split(sents, 0, 3)
        assert (len(train), len(val)) == (7, 3)
        assert not set(train.indices) & set(val.indices)
        assert set(train.indices) | set(val.indices) == set(range(10))
        np.testing.assert_array_equal(train.sentences, sents[train.indices])

    def test_split_deterministic(self):
        sents = np.arange(200).reshape(100, 2)
        a, b = shuffle_split(sents, 5, 10), shuffle_split(sents, 5, 10)
        assert a[0].sentences.tobytes() == b[0].sentences.tobytes()
        assert a[1].sentences.tobytes() == b[1].sentences.tobytes()

    def test_empty_validation(self):
        train, val = shuffle_split(np.zeros((4, 3)), 1, 0)
        assert len(val) == 0 and len(train) == 4

    def test_too_much_validation(self):
        with pytest.raises(InvalidArgumentError):
            shuffle_split(np.zeros((4, 3)), 1, 4)


class TestBatches:
    def test_same_sentences_in_both_directions(self):
        lang = mult_toy_language()
        train, _ = shuffle_split(lang.sentences, 11, 0)
        bos = len(lang.vocab)
        fw = list(batch_iter(train, 16, "fw", bos))
        bw = list(batch_iter(train, 16, "bw", bos))
        assert len(fw) == len(bw) == 6
        for a, b in zip(fw, bw):
            assert (a[:, 0] == bos).all() and (b[:, 0] == bos).all()
            np.testing.assert_array_equal(a[:, 1:], b[:, :0:-1])

    def test_short_final_batch_and_token_count(self):
        train, _ = shuffle_split(np.ones((10, 4), dtype=int), 0, 0)
        batches = list(batch_iter(train, 32, "bw", 5))
        assert len(batches) == 1 and batches[0].shape == (10, 5)
        batches = list(batch_iter(train, 3, "fw", 5))
        assert sum(b.size for b in batches) == 10 * 5


def reference_bpe(corpus, vocab_size):
    """Recount every pair from scratch before each merge."""
    words = Counter(pretokenize(corpus))
    seqs = {w: list(w) for w in words}
    tokens = [BOS] + sorted(set(corpus))
    merges = []
    while len(tokens) < vocab_size:
        counts = Counter()
        for w, f in words.items():
            s = seqs[w]
            for pair in zip(s, s[1:]):
                counts[pair] += f
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], p))
        if counts[best] < 2:
            break
        merges.append(best)
        if best[0] + best[1] not in tokens:
            tokens.append(best[0] + best[1])
        for w, s in seqs.items():
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and (s[i], s[i + 1]) == best:
                    out.append(s[i] + s[i + 1])
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            seqs[w] = out
    return tokens, merges


CORPUS = "the cat sat on the mat\nthe dog sat on the log\n" * 3 + "héllo wörld ✓ naïve\n"


class TestBpe:
    def test_first_merge_by_hand(self):
        m = bpe_train("aaaa", 3)
        assert m.merges == [("a", "a")]
        assert list(m.vocab.tokens) == [BOS, "a", "aa"]
        assert [m.vocab.tokens[i] for i in bpe_encode(m, "aaaa")] == ["aa", "aa"]

    def test_character_tokenizer(self):
        m = bpe_train(CORPUS, len(set(CORPUS)) + 1)
        assert m.merges == []
        ids = bpe_encode(m, "the cat")
        assert [m.vocab.tokens[i] for i in ids] == list("the cat")

    def test_vocab_too_small(self):
        with pytest.raises(InvalidArgumentError):
            bpe_train("abc", 3)
        with pytest.raises(InvalidArgumentError):
            bpe_train("", 10)

    def test_size_and_roundtrip(self):
        m = bpe_train(CORPUS, 60)
        assert len(m.vocab) <= 60 and m.bos_id == 0
        ids = bpe_encode(m, CORPUS)
        assert bpe_decode(m, ids) == CORPUS
        assert bpe_decode(m, np.concatenate([[m.bos_id], ids])) == CORPUS
        assert set(m.vocab.tokens[i] for i in ids) <= set(m.vocab.tokens)

    def test_deterministic(self):
        assert bpe_train(CORPUS, 50).merges == bpe_train(CORPUS, 50).merges

    def test_unknown_symbol(self):
        m = bpe_train(CORPUS, 40)
        with pytest.raises(UnknownSymbolError):
            bpe_encode(m, "zebra Ω")

    def test_file_roundtrip(self, tmp_path):
        m = bpe_train("a b\\c\td\n  e e e  \\s\\s", 20)
        m.save(tmp_path / "bpe.txt")
        back = BpeModel.load(tmp_path / "bpe.txt")
        assert back.vocab == m.vocab and back.merges == m.merges
        assert (tmp_path / "bpe.txt").read_text(encoding="utf-8").splitlines()[0] == str(len(m.vocab))

    @settings(max_examples=60, deadline=None)
    @given(text=st.text(alphabet="ab c\n", min_size=1, max_size=80), extra=st.integers(0, 12))
    def test_matches_reference_trainer(self, text, extra):
        size = len(set(text)) + 1 + extra
        m = bpe_train(text, size)
        tokens, merges = reference_bpe(text, size)
        assert m.merges == merges
        assert list(m.vocab.tokens) == tokens
        assert bpe_decode(m, bpe_encode(m, text)) == text


class TestReverseChars:
    def test_examples(self):
        assert reverse_chars("abc") == "cba"
        assert reverse_chars("né✓") == "✓én"

    @given(st.text())
    def test_involution(self, t):
        assert reverse_chars(reverse_chars(t)) == t

    def test_control_pipeline_preserves_tokens(self):
        rev = reverse_chars(CORPUS)
        m = bpe_train(rev, 48)
        ids = bpe_encode(m, rev)
        cfg = SplitConfig(9)
        windows = split_array(ids, cfg)
        assert windows.shape[1] == 8
        assert bpe_decode(m, ids) == rev and reverse_chars(bpe_decode(m, ids)) == CORPUS
        assert windows.shape[0] == (len(ids) - 8) // cfg.stride + 1


class TestShards:
    def test_roundtrip(self, tmp_path):
        lang = mult_toy_language()
        path = tmp_path / "toy.bin"
        header = write_shard(path, lang.sentences, lang.vocab)
        assert (header.vocab_size, header.length, header.count) == (12, 6, 81)
        arr, vocab = read_shard(path)
        np.testing.assert_array_equal(arr, lang.sentences)
        assert vocab == lang.vocab
        assert checksum(arr) == checksum(lang.sentences)

    def test_layout(self, tmp_path):
        path = tmp_path / "s.bin"
        write_shard(path, [[1, 0, 2]], LINEAR_VOCAB)
        raw = path.read_bytes()
        assert raw[:8] == b"AOTSHRD1"
        assert raw[-6:] == bytes([1, 0, 0, 0, 2, 0])

    def test_rejects_corruption(self, tmp_path):
        path = tmp_path / "s.bin"
        write_shard(path, [[1, 0, 2]], LINEAR_VOCAB)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(InvalidArgumentError):
            read_shard(path)
        with pytest.raises(InvalidArgumentError):
            write_shard(path, [[5]], LINEAR_VOCAB)
