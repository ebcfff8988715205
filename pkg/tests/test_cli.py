import json

import numpy as np
import pytest

from hindilm.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestDispatch:
    def test_no_arguments_is_usage_error(self, capsys, workdir):
        code, out, err = run(capsys)
        assert code == 1
        assert "usage" in err

    def test_unknown_flag_is_usage_error(self, capsys, workdir):
        code, out, err = run(capsys, "stats", "--bogus", "x")
        assert code == 1

    def test_version(self, capsys, workdir):
        assert main(["--version"]) == 0
        assert "hindilm 0.1.0" in capsys.readouterr().out

    def test_count_params_preset(self, capsys, workdir):
        code, out, _ = run(capsys, "count-params", "--dims", "50257,1024,24,16,1024")
        assert code == 0
        assert out.strip() == "354823168"

    def test_count_params_small_dims(self, capsys, workdir):
        code, out, _ = run(capsys, "count-params", "--dims", "50257,768,12,12,1024")
        assert (code, out.strip()) == (0, "124439808")

    def test_count_params_presets_use_50008_vocab(self, capsys, workdir):
        code, out, _ = run(capsys, "count-params", "--preset", "medium")
        assert (code, out.strip()) == (0, "354568192")
        code, out, _ = run(capsys, "count-params", "--preset", "small")
        assert (code, out.strip()) == (0, "124248576")

    def test_missing_file_is_data_error(self, capsys, workdir):
        code, _, err = run(capsys, "stats", "--in", "absent.txt")
        assert code == 2
        assert "absent.txt" in err


class TestCorpusCommands:
    def test_stats_tsv_line(self, capsys, workdir):
        (workdir / "c.txt").write_bytes("क ख\n\nग".encode())
        code, out, _ = run(capsys, "stats", "--in", "c.txt")
        assert code == 0
        assert out == "12\t3\t2\t2\n"
        assert (workdir / "stats.manifest.json").exists()

    def test_clean_writes_output_and_manifest(self, capsys, workdir):
        (workdir / "raw.txt").write_text(
            "नमस्ते (hello) दुनिया अच्छा दिन है।\n\n12345 !!!\n", encoding="utf-8")
        code, _, err = run(capsys, "clean", "--in", "raw.txt", "--out", "clean.txt")
        assert code == 0
        assert (workdir / "clean.txt").read_text(encoding="utf-8") == "नमस्ते दुनिया अच्छा दिन है।\n"
        manifest = json.loads((workdir / "clean.txt.manifest.json").read_text())
        assert manifest["subcommand"] == "clean"
        assert manifest["config"]["min_devanagari"] == 0.5
        assert "raw.txt" in manifest["input_digests"]

    def test_stdout_carries_only_data(self, capsys, workdir):
        (workdir / "raw.txt").write_text("एक पूरा ठीक वाक्य यहाँ है।\n", encoding="utf-8")
        code, out, err = run(capsys, "clean", "--in", "raw.txt", "--out", "o.txt")
        assert code == 0
        assert out == ""
        assert "kept" in err


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """One tiny end-to-end pipeline shared by the command tests below."""
    root = tmp_path_factory.mktemp("pipeline")
    corpus = root / "corpus.txt"
    corpus.write_text(("abcd efgh ijkl mnop " * 12 + "\n") * 30, encoding="utf-8")
    assert main(["tokenizer-train", "--in", str(corpus), "--vocab", "300",
                 "--out", str(root / "tok.txt")]) == 0
    assert main(["pretrain", "--config", "tiny", "--corpus", str(corpus),
                 "--tok", str(root / "tok.txt"), "--out", str(root / "m.ckpt"),
                 "--steps", "30", "--batch", "4", "--lr", "5e-3", "--seed", "3",
                 "--checkpoint-every", "15"]) == 0
    return root


class TestPipelineCommands:
    def test_tokenize_prints_ids(self, capsys, pipeline_dir, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        code, out, _ = run(capsys, "tokenize", "--model", str(pipeline_dir / "tok.txt"),
                           "--text", "abcd")
        assert code == 0
        ids = [int(x) for x in out.split()]
        assert ids and all(i >= 0 for i in ids)

    def test_fertility_output(self, capsys, pipeline_dir, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        sample = tmp_path / "sample.txt"
        sample.write_text("abcd efgh ijkl\n", encoding="utf-8")
        code, out, _ = run(capsys, "fertility", "--model", str(pipeline_dir / "tok.txt"),
                           "--in", str(sample))
        assert code == 0
        assert float(out.strip()) > 0

    def test_metrics_log_written(self, pipeline_dir):
        log = (pipeline_dir / "m.ckpt.metrics.tsv").read_text().splitlines()
        assert log[0] == "step\ttrain_loss\teval_loss\teval_acc\tperplexity"
        assert len(log) == 31  # header + one row per step

    def test_eval_ppl_consistency(self, capsys, pipeline_dir, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        corpus = pipeline_dir / "corpus.txt"
        code, out, _ = run(capsys, "eval-ppl", "--ckpt", str(pipeline_dir / "m.ckpt"),
                           "--tok", str(pipeline_dir / "tok.txt"), "--in", str(corpus))
        assert code == 0
        loss, acc, ppl = (float(x) for x in out.split("\t"))
        assert ppl == pytest.approx(np.exp(loss), rel=1e-5)
        assert 0.0 <= acc <= 1.0

    def test_corrupt_checkpoint_exits_2_with_crc_message(self, capsys, pipeline_dir,
                                                         monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        blob = bytearray((pipeline_dir / "m.ckpt").read_bytes())
        blob[60] ^= 0xFF
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(blob))
        code, _, err = run(capsys, "eval-ppl", "--ckpt", str(bad),
                           "--tok", str(pipeline_dir / "tok.txt"),
                           "--in", str(pipeline_dir / "corpus.txt"))
        assert code == 2
        assert "CRC" in err

    def test_generate_deterministic(self, capsys, pipeline_dir, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        args = ("generate", "--ckpt", str(pipeline_dir / "m.ckpt"),
                "--tok", str(pipeline_dir / "tok.txt"), "--prompt", "abcd",
                "--max-new", "8", "--strategy", "topk:2", "--seed", "11")
        code_a, out_a, _ = run(capsys, *args)
        code_b, out_b, _ = run(capsys, *args)
        assert code_a == code_b == 0
        assert out_a == out_b

    def test_bad_strategy_is_data_error(self, capsys, pipeline_dir, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        code, _, err = run(capsys, "generate", "--ckpt", str(pipeline_dir / "m.ckpt"),
                           "--tok", str(pipeline_dir / "tok.txt"), "--prompt", "a",
                           "--strategy", "beam:4")
        assert code == 2

    def test_finetune_then_eval_cls(self, capsys, pipeline_dir, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        train = tmp_path / "train.tsv"
        rows = []
        for i in range(12):
            cls = i % 2
            word = ("abcd" if cls == 0 else "mnop")
            rows.append(f"{word} {word}\t{cls}")
        train.write_text("\n".join(rows) + "\n", encoding="utf-8")
        code = main(["finetune", "--ckpt", str(pipeline_dir / "m.ckpt"),
                     "--tok", str(pipeline_dir / "tok.txt"), "--task", "cls",
                     "--classes", "2", "--train", str(train), "--lr", "3e-3",
                     "--epochs", "3", "--seed", "0", "--out", str(tmp_path / "ft.ckpt")])
        assert code == 0
        capsys.readouterr()
        code, out, _ = run(capsys, "eval-cls", "--model", str(tmp_path / "ft.ckpt"),
                           "--tok", str(pipeline_dir / "tok.txt"), "--task", "cls",
                           "--classes", "2", "--test", str(train))
        assert code == 0
        lines = out.splitlines()
        assert lines[0].startswith("accuracy\t")
        assert lines[1].startswith("macro_p/r/f1\t")
        assert float(lines[0].split("\t")[1]) == 1.0

    def test_human_eval_output(self, capsys, workdir):
        (workdir / "r.txt").write_text("4\n4\n3\n2\n0\n")
        code, out, _ = run(capsys, "human-eval", "--in", "r.txt")
        assert code == 0
        assert out.splitlines()[-1] == "mean\t2.600000"
