import numpy as np
import pytest

from dcsim import lstm, mobility, radio
from dcsim.cli import main
from dcsim.config import load_config
from dcsim.harness import read_metrics_csv

TINY_INI = """\
[map]
width_m = 1000
height_m = 1000
n_hotspots = 12
fractal_depth = 2

[train]
hidden_sizes = 8
epochs = 2

[sweep]
densities_per_km2 = 10
speeds_mps = 1
users_per_speed = 1
days = 3
eval_days = 1
sites_per_user = 4
seeds = 0
"""


@pytest.fixture()
def ini(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY_INI)
    return str(p)


def run(ini, out, *argv):
    return main(["--config", ini, "--out", str(out), *argv])


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.map_spec.width_m == 4000.0
        assert cfg.densities_per_km2 == (5.0, 10.0, 20.0)

    def test_overrides(self, ini):
        cfg = load_config(ini)
        assert cfg.map_spec.n_hotspots == 12
        assert cfg.stack_spec.hidden_sizes == (8,)
        assert cfg.days == 3 and cfg.train_days == 2


class TestGenMap:
    def test_writes_hotspots_and_deployments(self, ini, tmp_path):
        out = tmp_path / "out"
        assert run(ini, out, "gen-map") == 0
        assert (out / "hotspots.csv").exists()
        dep = radio.read_deployment_csv(out / "deployment_10.csv")
        assert dep.n_bs >= 1 and dep.density_per_km2 == 10.0


class TestGenTraces:
    def test_writes_full_traces(self, ini, tmp_path):
        out = tmp_path / "out"
        assert run(ini, out, "gen-traces") == 0
        trajectories = mobility.read_trace_csv(out / "traces.csv")
        # 1 user x 3 days
        assert len(trajectories) == 3
        assert all(len(t.positions) == mobility.MINUTES_PER_DAY
                   for t in trajectories)

    def test_deterministic(self, ini, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(ini, a, "gen-traces")
        run(ini, b, "gen-traces")
        assert (a / "traces.csv").read_bytes() == (b / "traces.csv").read_bytes()


class TestTrainEvalPipeline:
    def test_end_to_end(self, ini, tmp_path):
        out = tmp_path / "out"
        run(ini, out, "gen-map")
        run(ini, out, "gen-traces")
        assert run(ini, out, "train", "--traces", str(out / "traces.csv")) == 0
        blob = (out / "user_0.lstm").read_bytes()
        spec, params = lstm.load_checkpoint(blob)
        assert spec.hidden_sizes == (8,)
        log = (out / "user_0_train_log.csv").read_text().splitlines()
        assert log[0] == "epoch,loss" and len(log) == 3

        assert run(ini, out, "eval-pred",
                   "--traces", str(out / "traces.csv"),
                   "--deployment", str(out / "deployment_10.csv"),
                   "--models", str(out)) == 0
        lines = (out / "predictions.csv").read_text().splitlines()
        assert lines[0] == ("user_id,day,minute,pred_x_m,pred_y_m,"
                            "serving_bs,predicted_target_bs")
        # eval day only: minutes 0..718 for one user
        assert len(lines) == mobility.MINUTES_PER_DAY


class TestSimulate:
    def test_writes_events_and_links(self, ini, tmp_path):
        out = tmp_path / "out"
        assert run(ini, out, "simulate", "--mode", "single",
                   "--density", "10", "--speed", "1") == 0
        links = (out / "links.csv").read_text().splitlines()
        assert links[0].startswith("minute,user_id,mode,serving_bs")
        assert len(links) == mobility.MINUTES_PER_DAY + 1
        assert (out / "events.csv").exists()

    def test_unknown_speed_fails(self, ini, tmp_path):
        assert run(ini, tmp_path / "out", "simulate", "--mode", "single",
                   "--density", "10", "--speed", "99") == 1


class TestSweepReport:
    def test_sweep_then_report(self, ini, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(ini, out, "sweep") == 0
        rows = read_metrics_csv(out / "metrics.csv")
        assert len(rows) == 3  # one density x speed x seed, three modes
        assert run(ini, out, "report", "--metrics",
                   str(out / "metrics.csv")) == 0
        text = capsys.readouterr().out
        assert "accuracy" in text
        assert (out / "metrics_long.csv").exists()
