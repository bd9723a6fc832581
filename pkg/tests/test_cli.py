"""Command-line behavior: config merging, exit codes, console reports,
and the file formats the subcommands exchange."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdmd.cli import main
from pdmd.data import read_dataset
from pdmd.metrics import report_from_line


def run_cli(*argv):
    return main(list(argv))


def make_dataset(tmp_path, *extra, name="data.pdmd1"):
    path = tmp_path / name
    code = run_cli(
        "synth", "--family", "linear", "--nh", "6", "--np", "6",
        "--nt", "40", "--dt", "0.1", "--param-range", "0.3,0.7",
        "--seed", "3", "--threads", "1", "--out", str(path), *extra,
    )
    assert code == 0
    return path


class TestConfigMerge:
    def test_flags_override_config_file(self, tmp_path, capsys):
        config = tmp_path / "synth.cfg"
        config.write_text(
            "# comment line\n"
            "family = modes\n"
            "nh = 4\n"
            "np = 3\n"
            "nt = 12\n"
            "out = %s\n" % (tmp_path / "ds.pdmd1")
        )
        code = run_cli("synth", "--config", str(config), "--nh", "5",
                       "--threads", "1")
        assert code == 0
        dataset = read_dataset(tmp_path / "ds.pdmd1")
        assert dataset.n_state == 5
        assert dataset.n_params == 3
        assert len(dataset.grid) == 12
        assert_allclose(dataset.grid.dt, 0.1)

    def test_family_alias_accepted_in_config(self, tmp_path):
        config = tmp_path / "synth.cfg"
        config.write_text("family=oscillator\nnh=6\nnp=3\nnt=16\nout=%s\n"
                          % (tmp_path / "ds.pdmd1"))
        assert run_cli("synth", "--config", str(config), "--threads", "1") == 0
        sidecar = json.loads((tmp_path / "ds.pdmd1.spec.json").read_text())
        assert sidecar["family"] == "lifted-oscillator"

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        config = tmp_path / "synth.cfg"
        config.write_text("famly=linear\n")
        assert run_cli("synth", "--config", str(config)) == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_bad_config_value_is_usage_error(self, tmp_path, capsys):
        config = tmp_path / "synth.cfg"
        config.write_text("nh=many\n")
        assert run_cli("synth", "--config", str(config)) == 2
        assert "nh" in capsys.readouterr().err

    def test_duplicate_config_key_rejected(self, tmp_path):
        config = tmp_path / "synth.cfg"
        config.write_text("nh=4\nnh=5\n")
        assert run_cli("synth", "--config", str(config)) == 2

    def test_missing_config_file_is_usage_error(self, tmp_path):
        assert run_cli("synth", "--config", str(tmp_path / "absent.cfg")) == 2


class TestExitCodes:
    def test_missing_required_flag(self, tmp_path, capsys):
        assert run_cli("fit", "--algorithm", "roi") == 2
        assert "--data is required" in capsys.readouterr().err

    def test_invalid_flag_value_exits_via_argparse(self):
        with pytest.raises(SystemExit) as excinfo:
            run_cli("synth", "--family", "bogus")
        assert excinfo.value.code == 2

    def test_missing_dataset_file_is_data_error(self, tmp_path):
        assert run_cli("fit", "--data", str(tmp_path / "absent.pdmd1"),
                       "--algorithm", "roi") == 3

    def test_missing_model_file_is_data_error(self, tmp_path):
        assert run_cli("predict", "--model", str(tmp_path / "absent.pdmdm"),
                       "--mu", "0.5") == 3

    def test_bad_threads_env_is_usage_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PDMD_THREADS", "lots")
        assert run_cli("synth", "--out", str(tmp_path / "ds.pdmd1")) == 2


class TestSynth:
    def test_same_seed_gives_identical_files(self, tmp_path):
        first = make_dataset(tmp_path, name="a.pdmd1")
        second = make_dataset(tmp_path, name="b.pdmd1")
        assert first.read_bytes() == second.read_bytes()
        assert (tmp_path / "a.pdmd1.spec.json").read_text() == (
            tmp_path / "b.pdmd1.spec.json"
        ).read_text()

    def test_reports_shape(self, tmp_path, capsys):
        make_dataset(tmp_path)
        out = capsys.readouterr().out
        assert "6 parameters" in out
        assert "6 x 40 snapshots" in out


class TestFit:
    def test_window_reports_column_count(self, tmp_path, capsys):
        path = tmp_path / "long.pdmd1"
        assert run_cli(
            "synth", "--family", "linear", "--nh", "4", "--np", "4",
            "--nt", "161", "--dt", "10", "--t0", "1400",
            "--param-range", "0.3,0.7", "--seed", "3", "--threads", "1",
            "--out", str(path),
        ) == 0
        capsys.readouterr()
        code = run_cli(
            "fit", "--data", str(path), "--algorithm", "roi", "--rank", "4",
            "--time-window", "1400,2800", "--threads", "1",
            "--out", str(tmp_path / "m.pdmdm"),
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "training columns: 141" in out
        assert "training parameters: 4" in out

    def test_full_rank_linear_fit_reports_tiny_training_error(self, tmp_path, capsys):
        path = make_dataset(tmp_path)
        capsys.readouterr()
        code = run_cli(
            "fit", "--data", str(path), "--algorithm", "roi", "--rank", "6",
            "--threads", "1", "--out", str(tmp_path / "m.pdmdm"),
        )
        assert code == 0
        out = capsys.readouterr().out
        line = [l for l in out.splitlines() if l.startswith("training error:")][0]
        assert float(line.split(":")[1]) <= 1e-6
        assert (tmp_path / "m.pdmdm").exists()

    def test_train_idx_subsets_parameters(self, tmp_path, capsys):
        path = make_dataset(tmp_path)
        capsys.readouterr()
        code = run_cli(
            "fit", "--data", str(path), "--algorithm", "mono", "--rank", "6",
            "--train-idx", "0,2,4", "--threads", "1",
            "--out", str(tmp_path / "m.pdmdm"),
        )
        assert code == 0
        assert "training parameters: 3" in capsys.readouterr().out

    def test_rank_beyond_data_is_data_error(self, tmp_path):
        path = make_dataset(tmp_path)
        assert run_cli(
            "fit", "--data", str(path), "--algorithm", "roi", "--rank", "99",
            "--threads", "1", "--out", str(tmp_path / "m.pdmdm"),
        ) == 3


class TestPredict:
    def fit_model(self, tmp_path, algorithm="roi"):
        data = make_dataset(tmp_path)
        model = tmp_path / f"{algorithm}.pdmdm"
        assert run_cli(
            "fit", "--data", str(data), "--algorithm", algorithm,
            "--rank", "6", "--threads", "1", "--out", str(model),
        ) == 0
        return data, model

    def test_training_parameter_reproduces_trajectory(self, tmp_path, capsys):
        data, model = self.fit_model(tmp_path)
        dataset = read_dataset(data)
        mu = float(dataset.params[2, 0])
        capsys.readouterr()
        out_path = tmp_path / "pred.pdmd1"
        code = run_cli("predict", "--model", str(model), "--mu", repr(mu),
                       "--threads", "1", "--out", str(out_path))
        assert code == 0
        console = capsys.readouterr().out
        assert "regressor fits: 0" in console
        prediction = read_dataset(out_path)
        assert prediction.n_params == 1
        assert_allclose(prediction.grid.instants, dataset.grid.instants,
                        atol=1e-12)
        assert_allclose(prediction.trajectories[0].state,
                        dataset.trajectories[2].state, atol=1e-8)

    def test_default_window_matches_training_lattice(self, tmp_path):
        data, model = self.fit_model(tmp_path)
        out_path = tmp_path / "pred.pdmd1"
        assert run_cli("predict", "--model", str(model), "--mu", "0.5",
                       "--threads", "1", "--out", str(out_path)) == 0
        prediction = read_dataset(out_path)
        assert len(prediction.grid) == 40
        assert_allclose(prediction.grid.dt, 0.1)

    def test_explicit_window_and_nt(self, tmp_path):
        # Window sampling must stay on the training lattice for the
        # discrete-time operator-interpolation model.
        data, model = self.fit_model(tmp_path)
        out_path = tmp_path / "pred.pdmd1"
        assert run_cli("predict", "--model", str(model), "--mu", "0.5",
                       "--time-window", "0,6", "--nt", "61",
                       "--threads", "1", "--out", str(out_path)) == 0
        prediction = read_dataset(out_path)
        assert len(prediction.grid) == 61
        assert_allclose(prediction.grid.instants[-1], 6.0)

    def test_off_lattice_instants_with_continuous_model(self, tmp_path):
        data, model = self.fit_model(tmp_path, algorithm="rkoi")
        out_path = tmp_path / "pred.pdmd1"
        assert run_cli("predict", "--model", str(model), "--mu", "0.5",
                       "--time-window", "0,6", "--nt", "25",
                       "--threads", "1", "--out", str(out_path)) == 0
        prediction = read_dataset(out_path)
        assert len(prediction.grid) == 25
        assert_allclose(prediction.grid.instants[-1], 6.0)

    def test_wrong_parameter_dimension_is_data_error(self, tmp_path):
        data, model = self.fit_model(tmp_path)
        assert run_cli("predict", "--model", str(model), "--mu", "0.5,0.5",
                       "--threads", "1",
                       "--out", str(tmp_path / "pred.pdmd1")) == 3


class TestEvalAndPlotdata:
    def make_reports(self, tmp_path, capsys):
        data = make_dataset(tmp_path)
        models = []
        for algorithm in ("roi", "mono"):
            model = tmp_path / f"{algorithm}.pdmdm"
            assert run_cli(
                "fit", "--data", str(data), "--algorithm", algorithm,
                "--rank", "6", "--threads", "1", "--out", str(model),
            ) == 0
            models.append(model)
        report = tmp_path / "report.jsonl"
        capsys.readouterr()
        code = run_cli(
            "eval", "--model", str(models[0]), "--model", str(models[1]),
            "--data", str(data), "--test-idx", "1,3", "--threads", "1",
            "--out", str(report),
        )
        assert code == 0
        return data, report

    def test_eval_writes_one_line_per_model_parameter_pair(
        self, tmp_path, capsys
    ):
        data, report = self.make_reports(tmp_path, capsys)
        console = capsys.readouterr().out
        lines = [l for l in report.read_text().splitlines() if l.strip()]
        assert len(lines) == 4
        parsed = [report_from_line(l) for l in lines]
        assert [r.algorithm for r in parsed] == ["roi", "roi", "mono", "mono"]
        for r in parsed:
            assert r.rank == 6
            assert len(r.time_errors) == 40
            assert r.extras["online_fits"] == (0 if r.algorithm == "roi" else 40)
        assert "parameter" in console and "algorithm" in console
        assert console.count("roi") >= 2 and console.count("mono") >= 2

    def test_plotdata_emits_tidy_rows(self, tmp_path, capsys):
        data, report = self.make_reports(tmp_path, capsys)
        out = tmp_path / "plot.csv"
        assert run_cli("plotdata", "--report", str(report),
                       "--out", str(out)) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "time,value,algorithm,parameter"
        assert len(lines) == 1 + 4 * 40
        first = report_from_line(report.read_text().splitlines()[0])
        time0, value0, algo0, _ = lines[1].split(",")
        assert algo0 == "roi"
        assert_allclose(float(time0), first.extras["times"][0])
        assert_allclose(float(value0), first.time_errors[0], rtol=1e-12)

    def test_plotdata_without_reports_writes_header_only(self, tmp_path):
        out = tmp_path / "plot.csv"
        assert run_cli("plotdata", "--out", str(out)) == 0
        assert out.read_text() == "time,value,algorithm,parameter\n"


class TestBenchCommand:
    SUITE = (
        "[scenario tiny]\n"
        "family=linear-operator\n"
        "nh=4\nnp=4\nnt=30\ndt=0.2\nseed=5\n"
        "param-range=0.3,0.7\ntest-idx=1\nrank=4\n"
    )

    def test_suite_file_runs_and_writes_reports(self, tmp_path, capsys):
        suite = tmp_path / "suite.cfg"
        suite.write_text(self.SUITE)
        out_dir = tmp_path / "bench"
        code = run_cli("bench", "--suite", str(suite), "--threads", "1",
                       "--out", str(out_dir))
        assert code == 0
        console = capsys.readouterr().out
        assert "scenario tiny: ok" in console
        assert (out_dir / "tiny_table.csv").exists()
        assert (out_dir / "tiny_series.csv").exists()

    def test_bad_suite_file_is_data_error(self, tmp_path):
        suite = tmp_path / "suite.cfg"
        suite.write_text("[scenario tiny]\nwat=1\n")
        assert run_cli("bench", "--suite", str(suite),
                       "--out", str(tmp_path / "bench")) == 3
