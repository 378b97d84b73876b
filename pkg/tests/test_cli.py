"""CLI subcommand tests (driven through main())."""

import json

import pytest

from smash.cli import main
from smash.engine import save_database
from smash.ml import label, save_dataset

from conftest import CHAIN_SQL


@pytest.fixture
def data_dir(tmp_path, chain_db):
    d = tmp_path / "data"
    save_database(chain_db, d)
    return str(d)


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


class TestSingleQueryCommands:
    def test_parse(self, capsys):
        code, out = run(capsys, ["parse", CHAIN_SQL])
        assert code == 0
        assert json.loads(out)["kind"] == "aggregate"

    def test_parse_error_exit_code(self, capsys):
        assert main(["parse", "SELECT * FROM R"]) == 1

    def test_jointree(self, capsys):
        code, out = run(capsys, ["jointree", CHAIN_SQL])
        assert code == 0 and '"root": 0' in out

    def test_rewrite_with_and_without_drops(self, capsys):
        code, out = run(capsys, ["rewrite", CHAIN_SQL])
        assert code == 0 and "DROP" in out
        _, out = run(capsys, ["rewrite", CHAIN_SQL, "--no-with-drops"])
        assert "DROP" not in out

    def test_features(self, capsys, data_dir):
        code, out = run(capsys, ["--data-dir", data_dir, "features", CHAIN_SQL])
        assert code == 0
        assert "est_total_cost" in out

    def test_features_env_var(self, capsys, data_dir, monkeypatch):
        monkeypatch.setenv("SMASH_DATA_DIR", data_dir)
        code, _ = run(capsys, ["features", CHAIN_SQL])
        assert code == 0


class TestWorkloadCommands:
    def test_generate_then_run_then_significance(self, capsys, tmp_path):
        out_dir = tmp_path / "wl"
        code, _ = run(capsys, [
            "generate", "--out", str(out_dir), "--queries", "3",
        ])
        assert code == 0
        assert len(list((out_dir / "queries").glob("*.sql"))) == 3

        runlog = tmp_path / "runlog.json"
        code, _ = run(capsys, [
            "--data-dir", str(out_dir / "data"), "--repeats", "2",
            "run", "--queries", str(out_dir / "queries"),
            "--out", str(runlog),
        ])
        assert code == 0 and runlog.exists()

        code, out = run(capsys, [
            "significance", "--runlog", str(runlog), "Base", "Rewriting",
        ])
        assert code == 0 and "median test p" in out

    def test_augment(self, capsys, tmp_path, data_dir):
        sql_file = tmp_path / "q.sql"
        sql_file.write_text(
            "SELECT MIN(R.a) FROM R, S WHERE R.b = S.b AND R.a >= 1\n"
        )
        out_dir = tmp_path / "aug"
        code, _ = run(capsys, [
            "--data-dir", data_dir, "augment", str(sql_file),
            "--out", str(out_dir),
        ])
        assert code == 0
        names = sorted(p.name for p in out_dir.glob("*.sql"))
        assert any("-augF" in n for n in names)
        assert any("-augA" in n for n in names)
        assert any("-augE" in n for n in names)


class TestModelCommands:
    @pytest.fixture
    def dataset_csv(self, tmp_path):
        examples = []
        for i in range(40):
            fast = i % 2 == 0
            # 31 features so trained models apply to real query vectors
            examples.append(label(
                f"q{i}", [float(fast), float(i)] + [0.0] * 29,
                2.0 if fast else 1.0, 1.0 if fast else 2.0,
            ))
        path = tmp_path / "dataset.csv"
        save_dataset(examples, path)
        return str(path)

    def test_train_evaluate_decide(self, capsys, tmp_path, dataset_csv, data_dir):
        model = tmp_path / "model.json"
        code, out = run(capsys, [
            "train", "--dataset", dataset_csv, "--out", str(model),
        ])
        assert code == 0 and model.exists()
        assert json.loads(out)["train_size"] == 32

        code, out = run(capsys, [
            "evaluate", "--dataset", dataset_csv, "--model", str(model),
        ])
        assert code == 0
        assert json.loads(out)["acc"] == 1.0

        code, out = run(capsys, [
            "--data-dir", data_dir, "decide", CHAIN_SQL,
            "--model", str(model),
        ])
        assert code == 0 and out.strip() in ("Original", "Rewritten")

    def test_e2e_report(self, capsys, tmp_path):
        report = tmp_path / "report.json"
        code, out = run(capsys, [
            "--repeats", "1", "e2e", "--queries", "24",
            "--out", str(report),
        ])
        assert code == 0
        assert "SMASH" in out and report.exists()
        payload = json.loads(report.read_text())
        assert set(payload["strategies"]) == {
            "Base", "Rewriting", "SMASH", "OracleBest",
        }
