import csv

import numpy as np
import pytest

from omniforest.cli import main
from omniforest.data import load_csv
from omniforest.serialize import load_model


def run_cli(*argv):
    return main(list(argv))


class TestGenerateIngest:
    def test_generate_then_ingest(self, tmp_path, capsys):
        path = str(tmp_path / "xor.csv")
        assert run_cli("generate", "--kind", "xor", "--n", "50", "--seed", "3", "--out", path) == 0
        assert run_cli("ingest", "--data", path) == 0
        out = capsys.readouterr().out
        assert "task 0: 50 rows" in out

    def test_generate_spirals(self, tmp_path):
        path = str(tmp_path / "spi.csv")
        code = run_cli(
            "generate", "--kind", "spirals", "--n", "60", "--classes", "3",
            "--turns", "2.5", "--angle-variance", "3.0", "--out", path,
        )
        assert code == 0
        seq = load_csv(path)
        assert seq.train[0].class_count == 3

    def test_generate_rxor_angle(self, tmp_path):
        a = str(tmp_path / "a.csv")
        b = str(tmp_path / "b.csv")
        run_cli("generate", "--kind", "xor", "--n", "40", "--seed", "5", "--out", a)
        run_cli("generate", "--kind", "rxor", "--angle", "90", "--n", "40", "--seed", "5", "--out", b)
        xa, xb = load_csv(a).train[0], load_csv(b).train[0]
        assert not np.allclose(xa.features, xb.features)
        assert np.allclose(np.linalg.norm(xa.features, axis=1),
                           np.linalg.norm(xb.features, axis=1), atol=1e-9)

    def test_ingest_missing_file_is_runtime_error(self, tmp_path):
        assert run_cli("ingest", "--data", str(tmp_path / "nope.csv")) == 1

    def test_ingest_bad_schema(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        assert run_cli("ingest", "--data", str(path)) == 1


class TestRun:
    def write_config(self, tmp_path, text):
        path = tmp_path / "cfg.toml"
        path.write_text(text)
        return str(path)

    def test_run_tiny_experiment(self, tmp_path, capsys):
        out = str(tmp_path / "rows.csv")
        cfg = self.write_config(
            tmp_path,
            """
kind = "xor_xnor"
seed = 5

[forest]
n_estimators = 2

[params]
reps = 2
n_task1 = 60
n_task2 = 60
n_test = 100
checkpoints1 = [60]
checkpoints2 = [60]
""",
        )
        assert run_cli("run", "--config", cfg, "--out", out) == 0
        assert "experiment: xor_xnor" in capsys.readouterr().out
        with open(out) as fh:
            header = next(csv.reader(fh))
        assert header[0] == "experiment"

    def test_config_error_exit_code(self, tmp_path):
        cfg = self.write_config(tmp_path, 'kind = "nope"\n')
        assert run_cli("run", "--config", cfg) == 2

    def test_unknown_key_exit_code(self, tmp_path):
        cfg = self.write_config(tmp_path, 'kind = "xor_xnor"\nbogus = 3\n')
        assert run_cli("run", "--config", cfg) == 2

    def test_missing_config_file(self, tmp_path):
        assert run_cli("run", "--config", str(tmp_path / "none.toml")) == 2

    def test_cli_overrides(self, tmp_path):
        out = str(tmp_path / "rows.csv")
        cfg = self.write_config(
            tmp_path,
            """
kind = "label_shuffle"

[forest]
n_estimators = 2

[params]
reps = 5
n_task1 = 50
n_task2 = 50
n_test = 80
""",
        )
        assert run_cli("run", "--config", cfg, "--reps", "2", "--seed", "1", "--out", out) == 0
        with open(out) as fh:
            reader = csv.DictReader(fh)
            reps = {row["repetition"] for row in reader}
        assert reps == {"-1", "0", "1"}


class TestScalingCommand:
    def test_scaling_with_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
kind = "scaling"

[forest]
n_estimators = 2

[params]
per_task = 50
grid = [100, 200, 400]
""",
        )
        assert run_cli("scaling", "--config", str(cfg)) == 0
        out = capsys.readouterr().out
        assert "time_exponent" in out and "size_exponent" in out

    def test_single_point_grid_refused(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
kind = "scaling"

[params]
per_task = 50
grid = [100]
""",
        )
        assert run_cli("scaling", "--config", str(cfg)) == 1

    def test_wrong_kind_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('kind = "xor_xnor"\n')
        assert run_cli("scaling", "--config", str(cfg)) == 2


class TestSaveLoad:
    def test_save_load_predict_cycle(self, tmp_path, capsys):
        data = str(tmp_path / "tasks.csv")
        model = str(tmp_path / "model.bin")
        preds = str(tmp_path / "preds.csv")
        run_cli("generate", "--kind", "xor", "--n", "60", "--task-id", "0", "--seed", "1", "--out", data)
        assert run_cli("save", "--data", data, "--out", model, "--seed", "4") == 0
        assert run_cli("load", "--model", model) == 0
        assert "1 tasks" in capsys.readouterr().out
        assert run_cli("load", "--model", model, "--data", data, "--out", preds) == 0

        learner = load_model(model)
        seq = load_csv(data)
        expected = learner.predict_batch(0, seq.train[0].features)
        with open(preds) as fh:
            rows = list(csv.DictReader(fh))
        got = np.array([int(r["predicted"]) for r in rows])
        assert np.array_equal(got, expected)

    def test_load_corrupt_model(self, tmp_path):
        bad = tmp_path / "model.bin"
        bad.write_bytes(b"garbage")
        assert run_cli("load", "--model", str(bad)) == 1

    def test_load_predict_requires_out(self, tmp_path):
        data = str(tmp_path / "tasks.csv")
        model = str(tmp_path / "model.bin")
        run_cli("generate", "--kind", "xor", "--n", "40", "--seed", "2", "--out", data)
        run_cli("save", "--data", data, "--out", model)
        assert run_cli("load", "--model", model, "--data", data) == 2
