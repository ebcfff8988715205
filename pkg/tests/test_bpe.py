import numpy as np
import pytest

from hindilm.bpe import DEFAULT_SPECIALS, TokenizerModel, train_bpe
from hindilm.errors import DataError

from conftest import random_utf8_strings
from oracles import naive_train_bpe


@pytest.fixture(scope="module")
def one_merge_model():
    return train_bpe(["aaab aaab"], target_vocab=257)


class TestTrainBpe:
    def test_single_merge(self, one_merge_model):
        # pair (a,a) occurs 4x across the two chunks, (a,b) only 2x
        assert one_merge_model.merges == [(97, 97, 256)]

    def test_tie_break_smallest_pair(self):
        # after (a,a)->256, pairs (256,97) and (97,98) tie at 2; (97,98) is smaller
        model = train_bpe(["aaab aaab"], target_vocab=258)
        assert model.merges == [(97, 97, 256), (97, 98, 257)]

    def test_stops_when_no_pair_repeats(self):
        model = train_bpe(["ab cd"], target_vocab=300)
        assert model.merges == []

    def test_specials_appended_after_merges(self, one_merge_model):
        ids = [i for i, _ in one_merge_model.specials]
        assert ids == list(range(257, 265))
        assert [n for _, n in one_merge_model.specials] == list(DEFAULT_SPECIALS)

    def test_vocab_arithmetic_at_published_size(self):
        # 50000 = 256 bytes + 49744 merges; appending 8 specials reaches 50008
        merges = [(0, 0, 256 + i) for i in range(49_744)]
        specials = [(50_000 + i, n) for i, n in enumerate(DEFAULT_SPECIALS)]
        model = TokenizerModel(merges, specials, target_vocab=50_000)
        assert model.vocab_size == 50_008

    def test_target_below_minimum_rejected(self):
        with pytest.raises(DataError):
            train_bpe(["abc"], target_vocab=256)

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            train_bpe([], target_vocab=300)
        with pytest.raises(DataError):
            train_bpe([""], target_vocab=300)

    def test_deterministic(self):
        lines = random_utf8_strings(seed=2, count=50)
        a = train_bpe(lines, target_vocab=300)
        b = train_bpe(lines, target_vocab=300)
        assert a.merges == b.merges

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            lines = random_utf8_strings(seed=100 + trial, count=int(rng.integers(3, 20)))
            if not any(line.strip() for line in lines):
                continue
            target = int(rng.integers(258, 300))
            fast = train_bpe(lines, target)
            assert fast.merges == naive_train_bpe(lines, target)


class TestEncodeDecode:
    def test_empty(self, one_merge_model):
        assert one_merge_model.encode("") == []
        assert one_merge_model.decode([]) == ""

    def test_one_merge_encoding(self, one_merge_model):
        assert one_merge_model.encode("aaab") == [256, 97, 98]

    def test_decode_inverts(self, one_merge_model):
        assert one_merge_model.decode([256, 97, 98]) == "aaab"

    def test_byte_model_is_identity_on_ascii(self):
        model = TokenizerModel.byte_level()
        text = "plain ascii text!"
        assert model.encode(text) == list(text.encode("ascii"))

    def test_roundtrip_examples(self, one_merge_model):
        for text in ("नमस्ते दुनिया!", "aaab aaab", "  spaces\tand\nnewlines ", "🙂 क़"):
            assert one_merge_model.decode(one_merge_model.encode(text)) == text

    def test_merges_never_cross_chunks(self):
        # "a a" has pair (a, a) only via the space chunk; they must not merge
        model = train_bpe(["aa aa aa aa"], target_vocab=257)
        assert model.merges == [(97, 97, 256)]
        assert model.encode("a a") == [97, 32, 97]

    def test_specials_never_emitted_on_plain_text(self, one_merge_model):
        special_ids = {i for i, _ in one_merge_model.specials}
        for s in random_utf8_strings(seed=4, count=500):
            assert not special_ids & set(one_merge_model.encode(s))

    def test_special_decode_requires_flag(self, one_merge_model):
        eot = one_merge_model.special_id("eot")
        with pytest.raises(DataError):
            one_merge_model.decode([97, eot])
        assert one_merge_model.decode([97, eot], allow_specials=True) == "aeot"

    def test_out_of_range_id(self, one_merge_model):
        with pytest.raises(DataError):
            one_merge_model.decode([999])

    def test_invalid_utf8_reports_offset(self):
        model = TokenizerModel.byte_level()
        with pytest.raises(DataError, match="offset"):
            model.decode([0xE0, 0x20])

    def test_monotone_vocabulary(self):
        # extending the merge list never increases the token count
        lines = ["कल कल ही कल", "कमल कमल कहे", "मलमल चले कहल"] * 3
        texts = ["कल कमल", "मन की बात", "hello कहे"] + random_utf8_strings(seed=8, count=80)
        models = [train_bpe(lines, v) for v in (257, 260, 265, 280)]
        for small, big in zip(models, models[1:]):
            assert small.merges == big.merges[: len(small.merges)]
            for text in texts:
                assert len(big.encode(text)) <= len(small.encode(text))


class TestFertility:
    def test_byte_model_on_devanagari_word(self):
        # 6 codepoints x 3 UTF-8 bytes each = 18 tokens for one word
        assert TokenizerModel.byte_level().fertility("नमस्ते") == 18.0

    def test_plain_ratio(self, one_merge_model):
        # "aaab aaab aaab ab" -> chunks of [256,97,98] x3 + [32,97,98] x... check directly
        text = "xx yy zz ww"
        model = TokenizerModel.byte_level()
        assert model.fertility(text) == pytest.approx(len(model.encode(text)) / 4)

    def test_paper_scale_arithmetic(self):
        # 345 tokens over 100 words vs 785 over the same words
        assert 345 / 100 == pytest.approx(3.45)
        assert 785 / 100 == pytest.approx(7.85)

    def test_zero_words_rejected(self):
        with pytest.raises(DataError):
            TokenizerModel.byte_level().fertility("   ")


class TestSaveLoad:
    def test_roundtrip(self, tmp_path, one_merge_model):
        path = tmp_path / "tok.txt"
        one_merge_model.save(path)
        back = TokenizerModel.load(path)
        assert back.merges == one_merge_model.merges
        assert back.specials == one_merge_model.specials
        assert back.target_vocab == one_merge_model.target_vocab
        assert back.serialize() == one_merge_model.serialize()

    def test_two_merge_roundtrip(self, tmp_path):
        model = train_bpe(["aaab aaab"], target_vocab=258)
        path = tmp_path / "tok.txt"
        model.save(path)
        assert TokenizerModel.load(path).merges == model.merges

    def test_undefined_merge_id_rejected(self, tmp_path):
        path = tmp_path / "tok.txt"
        lines = ["HLLM-TOK v1", "target_vocab 257", "M 999 97 256"]
        lines += [f"S {257 + i} {n}" for i, n in enumerate(DEFAULT_SPECIALS)]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="undefined id"):
            TokenizerModel.load(path)

    def test_truncated_file_rejected(self, tmp_path, one_merge_model):
        path = tmp_path / "tok.txt"
        full = one_merge_model.serialize().splitlines()
        path.write_text("\n".join(full[:-2]) + "\n")
        with pytest.raises(DataError, match="truncated"):
            TokenizerModel.load(path)

    def test_version_mismatch_rejected(self, tmp_path, one_merge_model):
        path = tmp_path / "tok.txt"
        path.write_text(one_merge_model.serialize().replace("v1", "v9"))
        with pytest.raises(DataError, match=":1:"):
            TokenizerModel.load(path)

    def test_duplicate_id_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "tok.txt"
        lines = ["HLLM-TOK v1", "target_vocab 258", "M 97 97 256", "M 97 98 256"]
        lines += [f"S {258 + i} {n}" for i, n in enumerate(DEFAULT_SPECIALS)]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError):
            TokenizerModel.load(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "tok.txt"
        path.write_text("HLLM-TOK v1\ntarget_vocab 257\nM 97 97\n")
        with pytest.raises(DataError, match=":3:"):
            TokenizerModel.load(path)
