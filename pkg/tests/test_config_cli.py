import csv
import json

import pytest

from swarmtrack.cli import main, moving_average
from swarmtrack.config import (
    RunBundle,
    bundle_to_dict,
    config_hash,
    dump_config,
    load_config,
)
from swarmtrack.errors import ConfigInvalid


TINY_CONFIG = """
[scenario]
n_uav = 2
m_target = 1
horizon = 8
p_jammer = 0.0
r_min = 1500
r_max = 2500
v_min = 5
v_max = 15

[train]
total_episodes = 2
hidden_layers = 2
hidden_units = 16
obs_scale = 2500.0
minibatch = 0
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_CONFIG)
    return path


class TestConfigLoading:
    def test_defaults_when_absent(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text("")
        bundle = load_config(path)
        assert bundle == RunBundle()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            load_config(tmp_path / "nope.ini")

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[scenario]\nn_uavs = 6\n")
        with pytest.raises(ConfigInvalid, match="unknown key"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[scnario]\nn_uav = 6\n")
        with pytest.raises(ConfigInvalid, match="unknown section"):
            load_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[scenario]\nn_uav = six\n")
        with pytest.raises(ConfigInvalid):
            load_config(path)

    def test_invariant_violation_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[scenario]\np_jammer = 2.0\n")
        with pytest.raises(ConfigInvalid):
            load_config(path)

    def test_dump_round_trips(self, tmp_path):
        bundle = RunBundle()
        path = tmp_path / "dumped.ini"
        path.write_text(dump_config(bundle))
        again = load_config(path)
        assert bundle_to_dict(again) == bundle_to_dict(bundle)

    def test_neighbor_std_follows_d0(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[scenario]\nd0 = 40.0\n")
        bundle = load_config(path)
        assert bundle.sa.neighbor_move_std == 20.0

    def test_tracker_noise_follows_drive_noise(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[scenario]\ndrive_noise_std = 2.0\n")
        bundle = load_config(path)
        assert bundle.tracker.process_noise_std == 2.0
        pinned = tmp_path / "p.ini"
        pinned.write_text("[scenario]\ndrive_noise_std = 2.0\n[tracker]\nprocess_noise_std = 0.1\n")
        assert load_config(pinned).tracker.process_noise_std == 0.1

    def test_hash_tracks_content(self, tiny_config):
        a = config_hash(RunBundle())
        b = config_hash(load_config(tiny_config))
        assert a != b
        assert a == config_hash(RunBundle())


class TestMovingAverage:
    def test_constant_series_unchanged(self):
        assert moving_average([3.0] * 10, 4) == [3.0] * 10

    def test_trailing_window(self):
        got = moving_average([1.0, 2.0, 3.0, 4.0], 2)
        assert got == [1.0, 1.5, 2.5, 3.5]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestCliTrain:
    def test_tiny_run_and_artifacts(self, tiny_config, tmp_path):
        out = tmp_path / "run"
        code = main([
            "train", "--config", str(tiny_config), "--out", str(out), "--seed-list", "0,1",
        ])
        assert code == 0
        assert (out / "manifest.json").is_file()
        for seed in (0, 1):
            rows = read_csv(out / f"metrics_seed{seed}.csv")
            assert len(rows) == 2
            assert list(rows[0].keys()) == [
                "episode", "mean_reward", "TE", "violations_c7", "violations_c8",
                "repairs_invoked",
            ]
            assert (out / f"checkpoint_seed{seed}.pt").is_file()
        agg = read_csv(out / "aggregate.csv")
        assert len(agg) == 2

    def test_rerun_reproduces_aggregate(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        assert (out1 / "aggregate.csv").read_bytes() == (out2 / "aggregate.csv").read_bytes()

    def test_cli_matches_library(self, tiny_config, tmp_path):
        from dataclasses import replace
        from swarmtrack.mappo import Trainer

        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        rows = read_csv(out / "metrics_seed0.csv")

        bundle = load_config(tiny_config)
        trainer = Trainer(
            scenario=bundle.scenario,
            train_cfg=replace(bundle.train, seed=0),
            factors=bundle.factors,
            sa_cfg=bundle.sa,
            tracker_cfg=bundle.tracker,
            repair_enabled=True,
        )
        metrics = trainer.train()
        for row, m in zip(rows, metrics):
            assert float(row["mean_reward"]) == m.mean_reward
            assert float(row["TE"]) == m.te

    def test_config_error_exit_code(self, tmp_path):
        code = main(["train", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)])
        assert code == 2


class TestCliEvaluate:
    def test_random_policy_baseline(self, tiny_config, tmp_path):
        out = tmp_path / "eval"
        code = main([
            "evaluate", "--config", str(tiny_config), "--out", str(out),
            "--random-policy", "--episodes", "2", "--seed-list", "5",
        ])
        assert code == 0
        rows = read_csv(out / "eval_seed5.csv")
        assert len(rows) == 2
        summary = json.loads((out / "eval_summary.json").read_text())
        assert summary["episodes"] == 2

    def test_zero_episodes_ok(self, tiny_config, tmp_path):
        code = main([
            "evaluate", "--config", str(tiny_config), "--out", str(tmp_path / "e0"),
            "--random-policy", "--episodes", "0",
        ])
        assert code == 0

    def test_checkpoint_round_trip(self, tiny_config, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        code = main([
            "evaluate", "--config", str(tiny_config), "--out", str(tmp_path / "eval"),
            "--checkpoint", str(out / "checkpoint_seed0.pt"), "--episodes", "1",
        ])
        assert code == 0

    def test_hash_mismatch_is_runtime_error(self, tiny_config, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        other = tmp_path / "other.ini"
        other.write_text(TINY_CONFIG.replace("horizon = 8", "horizon = 9"))
        code = main([
            "evaluate", "--config", str(other), "--out", str(tmp_path / "eval"),
            "--checkpoint", str(out / "checkpoint_seed0.pt"), "--episodes", "1",
        ])
        assert code == 3

    def test_missing_checkpoint_flag_is_config_error(self, tiny_config, tmp_path):
        code = main([
            "evaluate", "--config", str(tiny_config), "--out", str(tmp_path / "eval"),
            "--episodes", "1",
        ])
        assert code == 2

    def test_paired_repair_ablation_direction(self, tiny_config, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        counts = {}
        for label, extra in (("on", []), ("off", ["--no-repair"])):
            eval_dir = tmp_path / f"eval_{label}"
            code = main([
                "evaluate", "--config", str(tiny_config), "--out", str(eval_dir),
                "--checkpoint", str(out / "checkpoint_seed0.pt"),
                "--episodes", "2", "--seed-list", "0,1", *extra,
            ])
            assert code == 0
            counts[label] = json.loads((eval_dir / "eval_summary.json").read_text())[
                "violations_c8"
            ]
        assert counts["on"] <= counts["off"]


class TestCliTrace:
    def test_trace_schema(self, tiny_config, tmp_path):
        out = tmp_path / "trace"
        code = main([
            "trace", "--config", str(tiny_config), "--out", str(out),
            "--random-policy", "--seed-list", "3",
        ])
        assert code == 0
        lines = [json.loads(l) for l in (out / "trace.jsonl").read_text().splitlines()]
        header, records = lines[0], lines[1:]
        assert header["type"] == "header" and header["horizon"] == 8
        assert len(records) == 8
        for rec in records:
            assert len(rec["uavs"]) == 2 and len(rec["targets"]) == 1
            assert all(mode in (0, 1) for _, _, mode in rec["uavs"])
            assert all(j in (0, 1) for _, _, j in rec["targets"])
            assert rec["lb"] > 0
            assert len(rec["rewards"]) == 2


class TestCliRepairBench:
    def test_zero_trials(self, tiny_config, tmp_path):
        code = main([
            "repair-bench", "--config", str(tiny_config), "--out", str(tmp_path / "rb0"),
            "--trials", "0",
        ])
        assert code == 0
        stats = json.loads((tmp_path / "rb0" / "repair_bench.json").read_text())
        assert stats["trials"] == 0 and stats["repaired_fraction"] == 0.0

    def test_statistics_ranges(self, tiny_config, tmp_path):
        code = main([
            "repair-bench", "--config", str(tiny_config), "--out", str(tmp_path / "rb"),
            "--trials", "40", "--seed-list", "1",
        ])
        assert code == 0
        stats = json.loads((tmp_path / "rb" / "repair_bench.json").read_text())
        assert 0.0 <= stats["repaired_fraction"] <= 1.0
        assert stats["mean_wall_time_s"] >= 0.0
        assert stats["mean_objective_improvement"] >= 0.0
