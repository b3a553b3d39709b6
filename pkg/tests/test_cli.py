"""CLI subcommands, exit codes, and idempotence."""

import numpy as np
import pytest

from vista.cli import run


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    code = run(
        [
            "synth", "--seed", "4", "--length", "1024", "--dims", "2",
            "--contamination", "0.05", "--out-dir", str(out),
        ]
    )
    assert code == 0
    return out


def base_flags(dataset):
    return ["--window-size", "32", "--coreset-ratio", "1.0", "--knn", "3",
            "--extractor", "seeded:0", "--normalize"]


class TestSmokePath:
    def test_fit_score_eval(self, dataset, tmp_path):
        bank = tmp_path / "bank.vstb"
        scores = tmp_path / "scores.csv"
        report = tmp_path / "report.txt"
        assert run(["fit", "--train", str(dataset / "train.csv"), "--out", str(bank)]
                   + base_flags(dataset)) == 0
        assert bank.exists()
        assert run(["score", "--test", str(dataset / "test.csv"), "--bank", str(bank),
                    "--out", str(scores)] + base_flags(dataset)) == 0
        assert run(["eval", "--scores", str(scores), "--labels", str(dataset / "test_labels.txt"),
                    "--out", str(report)]) == 0
        text = report.read_text()
        assert "f1 =" in text and "roc_auc =" in text

    def test_score_idempotent(self, dataset, tmp_path):
        bank = tmp_path / "bank.vstb"
        flags = base_flags(dataset)
        run(["fit", "--train", str(dataset / "train.csv"), "--out", str(bank)] + flags)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run(["score", "--test", str(dataset / "test.csv"), "--bank", str(bank),
                        "--out", str(out)] + flags) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_config_file_with_flag_override(self, dataset, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "window_size = 64\ncoreset_ratio = 1.0\nknn_k = 3\nextractor_spec = seeded:0\n",
            encoding="utf-8",
        )
        bank = tmp_path / "bank.vstb"
        # flag overrides the file's window size
        assert run(["fit", "--train", str(dataset / "train.csv"), "--config", str(cfg),
                    "--window-size", "32", "--out", str(bank)]) == 0


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, dataset, tmp_path):
        assert run(["fit", "--train", str(dataset / "train.csv"),
                    "--out", str(tmp_path / "b"), "--wibble"]) == 1

    def test_bad_window_size_names_allowed_set(self, dataset, tmp_path, capsys):
        code = run(["fit", "--train", str(dataset / "train.csv"),
                    "--out", str(tmp_path / "b"), "--window-size", "33"])
        assert code == 1
        err = capsys.readouterr().err
        assert "32" in err and "1024" in err

    def test_digest_mismatch_is_data_error(self, dataset, tmp_path, capsys):
        bank = tmp_path / "bank.vstb"
        run(["fit", "--train", str(dataset / "train.csv"), "--out", str(bank)]
            + base_flags(dataset))
        code = run(["score", "--test", str(dataset / "test.csv"), "--bank", str(bank),
                    "--out", str(tmp_path / "s.csv"), "--window-size", "32",
                    "--coreset-ratio", "1.0", "--knn", "3", "--extractor", "seeded:1",
                    "--normalize"])
        assert code == 2
        assert "different configuration" in capsys.readouterr().err

    def test_missing_input_is_data_error(self, tmp_path):
        assert run(["fit", "--train", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "b"),
                    "--window-size", "32"]) == 2

    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 1


class TestDebugCommands:
    def test_decompose_csv(self, dataset, tmp_path):
        out = tmp_path / "decomp.csv"
        assert run(["decompose", "--input", str(dataset / "train.csv"), "--out", str(out),
                    "--window-size", "32"]) == 0
        header = out.read_text().splitlines()[0]
        assert header == "t,variable,trend,seasonal,residual"
        body = np.loadtxt(out, delimiter=",", skiprows=1)
        assert body.shape[0] == 1024 * 2  # every point, every variable
        reconstructed = body[:, 2] + body[:, 3] + body[:, 4]
        raw = np.loadtxt(dataset / "train.csv", delimiter=",", ndmin=2)
        flat = raw[body[:, 0].astype(int), body[:, 1].astype(int)]
        assert np.allclose(reconstructed, flat, rtol=0, atol=1e-9 * np.abs(raw).max())

    def test_render_writes_pngs(self, dataset, tmp_path):
        out = tmp_path / "imgs"
        assert run(["render", "--input", str(dataset / "train.csv"), "--out-dir", str(out),
                    "--window-size", "32"]) == 0
        files = sorted(out.glob("*.png"))
        assert len(files) == 32 * 2  # 32 windows x 2 variables

    def test_gridsearch_reports_best(self, dataset, tmp_path, capsys):
        out = tmp_path / "best.cfg"
        code = run([
            "gridsearch", "--train", str(dataset / "train.csv"),
            "--test", str(dataset / "test.csv"), "--labels", str(dataset / "test_labels.txt"),
            "--window-sizes", "32", "--coreset-ratios", "0.5,1.0", "--knn-values", "3",
            "--extractor", "seeded:0", "--normalize", "--out", str(out),
        ])
        assert code == 0
        assert "best configuration" in capsys.readouterr().out
        assert "coreset_ratio" in out.read_text()
