import io
import json
import os

import numpy as np
import pytest

from evopinn import cli
from evopinn.genome import genome_from_text

GENOME_TEXT = ("layer num: 4\nneuron num: 20\nshortcuts: [0-2]\n"
               "activation: tanh(x)\nactivation params: none\n")


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "model.genome").write_text(GENOME_TEXT)
    return tmp_path


def run_cli(args):
    return cli.main([str(a) for a in args])


class TestConfig:
    def test_round_trip_is_idempotent(self):
        text = ("mode train\nproblem klein_gordon:I\nseed 5\nepochs 3\n"
                "gen 1 pop 8 epochs 5\ngen 2 pop 4 epochs 10\n")
        once = cli.serialize_config(cli.parse_config(text))
        twice = cli.serialize_config(cli.parse_config(once))
        assert once == twice

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("frobnicate 3\n")

    def test_schedule_rows(self):
        cfg = cli.parse_config("gen 1 pop 8 epochs 5\ngen 2 pop 4 epochs 9\n")
        assert cfg.schedule.sizes == (8, 4)
        assert cfg.schedule.epochs == (5, 9)

    def test_schedule_gap_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config("gen 1 pop 8 epochs 5\ngen 3 pop 4 epochs 9\n")

    def test_comments_and_equals_accepted(self):
        cfg = cli.parse_config("# a comment\nseed = 9\n\nworkers 2\n")
        assert cfg.seed == 9 and cfg.workers == 2


class TestSpace:
    def test_defaults_contain_published_values(self):
        buf = io.StringIO()
        assert cli.cmd_space(cli.RunConfig(), out=buf) == cli.EXIT_OK
        text = buf.getvalue()
        assert "283328" in text
        assert "9.64e17" in text
        assert "2.65e05" in text

    def test_single_depth_structure(self):
        buf = io.StringIO()
        cfg = cli.parse_config("n_min 3\nn_max 3\nn_neu 1\n")
        cli.cmd_space(cfg, out=buf)
        assert "structure: 5 " in buf.getvalue()

    def test_zero_nodes_gives_empty_activation_space(self):
        buf = io.StringIO()
        cfg = cli.parse_config("max_nodes 0\n")
        cli.cmd_space(cfg, out=buf)
        assert "activation m<=0: 0 " in buf.getvalue()

    def test_invalid_range_rejected(self):
        cfg = cli.parse_config("n_min 9\nn_max 3\n")
        assert cli.cmd_space(cfg) == cli.EXIT_CONFIG


class TestTrain:
    def test_train_writes_artifacts(self, workdir):
        cfgfile = workdir / "train.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\nepochs 2\n"
                           "engine eager\nseed 11\n")
        rc = run_cli(["--config", cfgfile, "--genome", workdir / "model.genome",
                      "--out", workdir / "out"])
        assert rc == cli.EXIT_OK
        rows = (workdir / "out" / "train_trace.csv").read_text().splitlines()
        assert rows[0].startswith("epoch,loss")
        assert len(rows) >= 2
        metrics = json.loads((workdir / "out" / "metrics.json").read_text())
        assert metrics["status"] in ("completed", "converged")
        assert "u" in metrics["relative_l2"]

    def test_zero_epochs_single_row(self, workdir):
        cfgfile = workdir / "t0.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\nepochs 0\nseed 11\n")
        rc = run_cli(["--config", cfgfile, "--genome", workdir / "model.genome",
                      "--out", workdir / "out0"])
        assert rc == cli.EXIT_OK
        rows = (workdir / "out0" / "train_trace.csv").read_text().splitlines()
        assert len(rows) == 2  # header + initial loss

    def test_malformed_genome_is_parse_error(self, workdir):
        bad = workdir / "bad.genome"
        bad.write_text("layer num: 4\nneuron num: 20\nshortcuts: none\nactivation: tanh(\n")
        cfgfile = workdir / "train.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\nepochs 1\n")
        rc = run_cli(["--config", cfgfile, "--genome", bad, "--out", workdir / "o"])
        assert rc == cli.EXIT_PARSE

    def test_missing_epochs_is_config_error(self, workdir):
        cfgfile = workdir / "t.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\n")
        rc = run_cli(["--config", cfgfile, "--genome", workdir / "model.genome"])
        assert rc == cli.EXIT_CONFIG

    def test_unknown_mode(self):
        assert run_cli(["frobnicate"]) == cli.EXIT_CONFIG


class TestEvaluate:
    def test_matches_training_error(self, workdir):
        cfgfile = workdir / "train.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\nepochs 2\n"
                           "engine eager\nseed 11\n")
        assert run_cli(["--config", cfgfile, "--genome", workdir / "model.genome",
                        "--out", workdir / "out"]) == cli.EXIT_OK
        evalcfg = workdir / "eval.cfg"
        evalcfg.write_text(f"mode evaluate\nproblem klein_gordon:I\n"
                           f"snapshot {workdir / 'out' / 'params.npz'}\n")
        assert run_cli(["--config", evalcfg, "--genome", workdir / "model.genome",
                        "--out", workdir / "out"]) == cli.EXIT_OK
        train_metrics = json.loads((workdir / "out" / "metrics.json").read_text())
        eval_metrics = json.loads((workdir / "out" / "evaluate_metrics.json").read_text())
        assert eval_metrics["relative_l2"]["u"] == pytest.approx(
            train_metrics["relative_l2"]["u"], abs=1e-12)

    def test_wrong_genome_shape_rejected(self, workdir):
        cfgfile = workdir / "train.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\nepochs 1\nseed 11\n")
        run_cli(["--config", cfgfile, "--genome", workdir / "model.genome",
                 "--out", workdir / "out"])
        other = workdir / "other.genome"
        other.write_text("layer num: 5\nneuron num: 30\nshortcuts: none\n"
                         "activation: sin(x)\nactivation params: none\n")
        evalcfg = workdir / "eval.cfg"
        evalcfg.write_text(f"mode evaluate\nproblem klein_gordon:I\n"
                           f"snapshot {workdir / 'out' / 'params.npz'}\n")
        rc = run_cli(["--config", evalcfg, "--genome", other, "--out", workdir / "out"])
        assert rc == cli.EXIT_CONFIG

    def test_generalization_to_other_case(self, workdir):
        # a snapshot trained on case I evaluates against case II's exact solution
        cfgfile = workdir / "train.cfg"
        cfgfile.write_text("mode train\nproblem klein_gordon:I\nepochs 1\nseed 11\n")
        run_cli(["--config", cfgfile, "--genome", workdir / "model.genome",
                 "--out", workdir / "out"])
        evalcfg = workdir / "eval2.cfg"
        evalcfg.write_text(f"mode evaluate\nproblem klein_gordon:II\n"
                           f"snapshot {workdir / 'out' / 'params.npz'}\n")
        assert run_cli(["--config", evalcfg, "--genome", workdir / "model.genome",
                        "--out", workdir / "out2"]) == cli.EXIT_OK


class TestSearch:
    def test_smoke_and_determinism(self, workdir):
        cfgfile = workdir / "search.cfg"
        cfgfile.write_text("mode search-evo\nproblem klein_gordon:I\nseed 9\n"
                           "gen 1 pop 6 epochs 2\ngen 2 pop 4 epochs 3\n")
        rc = run_cli(["--config", cfgfile, "--out", workdir / "s1"])
        assert rc == cli.EXIT_OK
        rc = run_cli(["--config", cfgfile, "--out", workdir / "s2"])
        assert rc == cli.EXIT_OK
        w1 = (workdir / "s1" / "winner.genome").read_bytes()
        w2 = (workdir / "s2" / "winner.genome").read_bytes()
        assert w1 == w2
        genome_from_text(w1.decode())  # winner validates
        summary = json.loads((workdir / "s1" / "summary.json").read_text())
        assert summary["planned_epochs"] == 6 * 2 + 4 * 3 + 1 * 3 + 3 * 4 * 3
        assert not list(workdir.glob("s1/*.tmp"))  # atomic writes leave no debris

    def test_random_search_mode(self, workdir):
        cfgfile = workdir / "search.cfg"
        cfgfile.write_text("mode search-random\nproblem klein_gordon:I\nseed 9\n"
                           "gen 1 pop 6 epochs 2\ngen 2 pop 4 epochs 3\n")
        assert run_cli(["--config", cfgfile, "--out", workdir / "rs"]) == cli.EXIT_OK

    def test_all_invalid_exit_code(self, workdir):
        cfgfile = workdir / "search.cfg"
        cfgfile.write_text("mode search-evo\nproblem klein_gordon:I\nseed 9\n"
                           "time_limit 0\ngen 1 pop 4 epochs 2\n")
        assert run_cli(["--config", cfgfile, "--out", workdir / "sx"]) == cli.EXIT_ALL_INVALID
