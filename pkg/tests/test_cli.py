import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satmarl.cli import SCENARIOS, dump_config, main, parse_config, scenario_env
from satmarl.cli.config import ExperimentConfig
from satmarl.cli.runio import OUTPUT_ROOT_ENV
from satmarl.errors import ConfigError
from satmarl.marl import ALGORITHMS, TrainConfig, TrainingAborted

TINY = """
[experiment]
scenario = "{scenario}"
algorithm = "{algorithm}"
seeds = {seeds}
output_dir = "{out}"

[env]
n_targets = 40
horizon_orbits = 0.2

[train]
total_env_steps = 40
eval_episodes = 1
"""


def write_config(path: Path, scenario="cluster4_hetero_storage", algorithm="mappo", seeds="[0, 1]", out="run"):
    path.write_text(TINY.format(scenario=scenario, algorithm=algorithm, seeds=seeds, out=out))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    cfg = write_config(root / "exp.toml")
    mp = pytest.MonkeyPatch()
    mp.setenv(OUTPUT_ROOT_ENV, str(root))
    try:
        assert main(["train", str(cfg)]) == 0
    finally:
        mp.undo()
    return root / "run", cfg


# ------------------------------------------------------------- scenarios


class TestScenarios:
    def test_catalog_size(self):
        assert len(SCENARIOS) >= 9

    def test_hetero_storage(self):
        env = scenario_env("cluster4_hetero_storage")
        assert [env.params_for(i).d_max_gb for i in range(4)] == [5, 10, 250, 500]

    def test_limited_battery(self):
        assert scenario_env("single_limited_battery").params_for(0).b_max_wh == 50

    def test_limited_storage(self):
        assert scenario_env("single_limited_storage").params_for(0).d_max_gb == 5

    def test_random_flags(self):
        env = scenario_env("single_random")
        assert env.randomize_rw and env.randomize_battery and env.randomize_storage and env.disturbance

    def test_walker(self):
        assert scenario_env("walker4_default").constellation.kind == "walker_delta"

    def test_unknown(self):
        with pytest.raises(ConfigError):
            scenario_env("nope")

    def test_command_lists_all(self, capsys):
        assert main(["scenarios"]) == 0
        out = capsys.readouterr().out
        assert all(name in out for name in SCENARIOS)


# ---------------------------------------------------------------- config


class TestConfig:
    @pytest.mark.parametrize("scenario", sorted(SCENARIOS))
    def test_round_trip_every_scenario(self, scenario):
        alg = "ppo" if scenario.startswith("single") else "happo"
        cfg = parse_config(f'[experiment]\nscenario = "{scenario}"\nalgorithm = "{alg}"\n')
        again = parse_config(dump_config(cfg))
        assert again == cfg

    @settings(max_examples=40, deadline=None)
    @given(
        n_targets=st.integers(1, 5000),
        horizon=st.floats(0.01, 10, allow_nan=False),
        lr=st.floats(1e-6, 1.0),
        gamma=st.floats(0, 1),
        b_max=st.floats(1, 1e4),
        spacing=st.floats(1e-6, 1.0),
        seeds=st.lists(st.integers(0, 2**31), min_size=1, max_size=4),
        rollout=st.one_of(st.none(), st.integers(1, 500)),
    )
    def test_round_trip_random(self, n_targets, horizon, lr, gamma, b_max, spacing, seeds, rollout):
        cfg = parse_config('[experiment]\nscenario = "cluster4_default"\nalgorithm = "mappo"\n')
        env = replace(
            cfg.env,
            n_targets=n_targets,
            horizon_orbits=horizon,
            constellation=replace(cfg.env.constellation, cluster_spacing_rad=spacing),
            sat_params=(replace(cfg.env.sat_params[0], b_max_wh=b_max),),
        )
        train = TrainConfig(lr=lr, gamma=gamma, seeds=tuple(seeds), rollout_steps=rollout)
        cfg = ExperimentConfig("cluster4_default", "mappo", env, train, "some/dir")
        assert parse_config(dump_config(cfg)) == cfg

    def test_overrides_apply(self):
        cfg = parse_config(
            '[experiment]\nscenario = "cluster4_default"\nalgorithm = "ippo"\nseeds = [3, 4]\n'
            "[env]\nn_targets = 12\n[env.constellation]\ncluster_spacing_rad = 0.02\n"
            "[[env.satellite]]\nb_max_wh = 77.0\n[train]\nlr = 0.001\nhidden = [8, 8]\n"
        )
        assert cfg.env.n_targets == 12 and cfg.env.constellation.cluster_spacing_rad == 0.02
        assert cfg.env.params_for(3).b_max_wh == 77.0
        assert cfg.train.lr == 0.001 and cfg.train.hidden == (8, 8) and cfg.seeds == (3, 4)

    def test_per_satellite_tables_keep_scenario_values(self):
        text = '[experiment]\nscenario = "cluster4_hetero_storage"\nalgorithm = "mappo"\n'
        text += "".join("[[env.satellite]]\nb_max_wh = 60.0\n" for _ in range(4))
        cfg = parse_config(text)
        assert [cfg.env.params_for(i).d_max_gb for i in range(4)] == [5, 10, 250, 500]
        assert cfg.env.params_for(2).b_max_wh == 60.0

    @pytest.mark.parametrize(
        "text",
        [
            '[experiment]\nalgorithm = "ppo"\n',
            '[experiment]\nscenario = "single_default"\nalgorithm = "dqn"\n',
            '[experiment]\nscenario = "cluster4_default"\nalgorithm = "ppo"\n',
            '[experiment]\nscenario = "single_default"\nalgorithm = "ppo"\nseeds = []\n',
            '[experiment]\nscenario = "single_default"\nalgorithm = "ppo"\n[env]\nwarp = 1\n',
            '[experiment]\nscenario = "single_default"\nalgorithm = "ppo"\n[env]\nn_targets = "many"\n',
            '[experiment]\nscenario = "single_default"\nalgorithm = "ppo"\n[train]\nlr = -1.0\n',
            '[experiment]\nscenario = "single_default"\nalgorithm = "ppo"\n[extra]\n',
            "not toml [",
        ],
        ids=["no-scenario", "bad-alg", "ppo-multi", "no-seeds", "unknown-key", "type", "range", "section", "syntax"],
    )
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)


# ----------------------------------------------------------------- train


class TestTrain:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["train", str(tmp_path / "absent.toml")]) == 2
        assert "absent.toml" in capsys.readouterr().err

    def test_ppo_on_four_satellites(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        cfg = write_config(tmp_path / "c.toml", scenario="cluster4_default", algorithm="ppo")
        assert main(["train", str(cfg)]) == 2
        assert not (tmp_path / "run").exists()

    def test_curve_rows(self, trained):
        run, _ = trained
        manifest = json.loads((run / "manifest.json").read_text())
        rows = read_rows(run / "curve.csv")
        iterations = sum(e["iterations"] for e in manifest["per_seed"].values())
        assert len(rows) == iterations == 3 * 2
        assert list(rows[0]) == [
            "env_steps", "seed", "mean_return", "unique_captures", "failures", "entropy", "clip_fraction"
        ]

    def test_jsonl_one_line_per_iteration(self, trained):
        run, _ = trained
        for seed in (0, 1):
            lines = (run / f"metrics_seed{seed}.jsonl").read_text().splitlines()
            assert [json.loads(l)["iteration"] for l in lines] == [0, 1, 2]

    def test_manifest(self, trained):
        run, cfg = trained
        m = json.loads((run / "manifest.json").read_text())
        assert (run / m["config_snapshot"]).read_bytes() == cfg.read_bytes()
        assert m["algorithm"] == "mappo" and m["seeds"] == [0, 1] and m["status"] == "complete"
        assert m["started_at"] <= m["finished_at"] and m["code_version"]
        assert len(m["config_sha256"]) == 64

    def test_no_orphan_outputs(self, trained):
        run, _ = trained
        m = json.loads((run / "manifest.json").read_text())
        on_disk = {
            p.relative_to(run).as_posix() for p in run.rglob("*") if p.is_file() and "eval" not in p.parts
        }
        assert on_disk - {"manifest.json"} == set(m["files"])
        assert len(m["files"]) == len(set(m["files"]))

    def test_refuses_to_overwrite(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        cfg = write_config(tmp_path / "c.toml", scenario="single_default", algorithm="ppo", seeds="[0]")
        assert main(["train", str(cfg)]) == 0
        assert main(["train", str(cfg)]) == 2
        assert main(["train", str(cfg), "--force"]) == 0

    def test_numeric_abort_keeps_partial_outputs(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        cli_main = sys.modules["satmarl.cli.main"]
        real_train = cli_main.train

        def exploding(algorithm, env_cfg, cfg, seed, progress=None):
            rows = []

            def keep(row):
                rows.append(row)
                progress(row)
                if len(rows) == 2:
                    raise TrainingAborted("injected NaN", None, rows)

            return real_train(algorithm, env_cfg, cfg, seed, progress=keep)

        monkeypatch.setattr(cli_main, "train", exploding)
        cfg = write_config(tmp_path / "c.toml", scenario="single_default", algorithm="ppo", seeds="[5, 6]")
        assert main(["train", str(cfg)]) == 3
        run = tmp_path / "run"
        m = json.loads((run / "manifest.json").read_text())
        assert m["status"] == "aborted" and "injected NaN" in m["error"]
        assert len(read_rows(run / "curve.csv")) == 2
        assert len((run / "metrics_seed5.jsonl").read_text().splitlines()) == 2

    def test_determinism_of_curves(self, tmp_path, monkeypatch):
        outs = []
        for name in ("a", "b"):
            monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / name))
            cfg = write_config(tmp_path / f"{name}.toml", algorithm="happo", seeds="[2]")
            assert main(["train", str(cfg)]) == 0
            outs.append((tmp_path / name / "run" / "curve.csv").read_bytes())
        assert outs[0] == outs[1]


# ------------------------------------------------------------------ eval


@pytest.fixture(scope="module")
def evaluated(trained):
    run, _ = trained
    assert main(["eval", str(run), "--episodes", "2", "--seed", "7"]) == 0
    return run / "eval" / "seed7_episodes2"


class TestEval:
    def test_frequencies_sum_to_active_steps(self, evaluated):
        metrics = json.loads((evaluated / "metrics.json").read_text())
        for seed in ("0", "1"):
            rows = read_rows(evaluated / f"actions_seed{seed}.csv")
            active = metrics["per_train_seed"][seed]["active_steps"]
            for agent in range(4):
                assert sum(int(r["count"]) for r in rows if r["agent"] == str(agent)) == active[agent]

    def test_same_seed_identical(self, trained, evaluated):
        run, _ = trained
        before = {p.name: p.read_bytes() for p in evaluated.glob("*.csv")}
        assert main(["eval", str(run), "--episodes", "2", "--seed", "7"]) == 0
        assert before == {p.name: p.read_bytes() for p in evaluated.glob("*.csv")}

    def test_histogram_has_block_per_agent(self, trained, tmp_path, monkeypatch):
        run, _ = trained
        monkeypatch.setattr(
            sys.modules["satmarl.cli.main"], "evaluate", _evaluate_with_captures
        )
        assert main(["eval", str(run), "--episodes", "1", "--seed", "1"]) == 0
        rows = read_rows(run / "eval" / "seed1_episodes1" / "captures_seed0.csv")
        assert list(rows[0]) == ["agent", "target_id", "count"]
        assert sorted({r["agent"] for r in rows}) == ["0", "1", "2", "3"]

    def test_eval_manifest_lists_outputs(self, evaluated):
        m = json.loads((evaluated / "eval_manifest.json").read_text())
        on_disk = {p.name for p in evaluated.iterdir()} - {"eval_manifest.json"}
        assert set(m["files"]) == on_disk

    def test_missing_checkpoint(self, trained, tmp_path):
        run = _copy_run(trained[0], tmp_path)
        (run / "checkpoints" / "seed1" / "actor2.smnn").unlink()
        assert main(["eval", str(run), "--episodes", "1", "--seed", "0"]) == 2

    def test_corrupt_checkpoint(self, trained, tmp_path):
        run = _copy_run(trained[0], tmp_path)
        p = run / "checkpoints" / "seed0" / "critic0.smnn"
        p.write_bytes(p.read_bytes()[:-5])
        assert main(["eval", str(run), "--episodes", "1", "--seed", "0"]) == 2

    def test_not_a_run(self, tmp_path):
        assert main(["eval", str(tmp_path), "--episodes", "1"]) == 2


def _evaluate_with_captures(agents, env_cfg, n, seed, **kw):
    # Random policy on a target-dense map, so every agent stores something.
    from satmarl.marl import evaluate

    env_cfg = replace(env_cfg, n_targets=2000, horizon_orbits=1.0)
    return evaluate(None, env_cfg, n, seed)


def _copy_run(src: Path, dst: Path) -> Path:
    import shutil

    shutil.copytree(src, dst / "run")
    return dst / "run"


# ---------------------------------------------------------------- report


class TestReport:
    def test_single_run(self, trained, tmp_path):
        run, _ = trained
        assert main(["report", str(run), "--out", str(tmp_path)]) == 0
        tidy = read_rows(tmp_path / "curves.csv")
        assert list(tidy[0]) == ["algorithm", "scenario", "env_steps", "seed", "mean_return"]
        assert {r["algorithm"] for r in tidy} == {"mappo"}
        summary = read_rows(tmp_path / "summary.csv")
        assert len(summary) == 3  # iterations x algorithms
        for s in summary:
            vals = [float(r["mean_return"]) for r in tidy if r["env_steps"] == s["env_steps"]]
            assert abs(float(s["mean"]) - sum(vals) / len(vals)) <= 1e-12
            assert float(s["std"]) == pytest.approx(np.std(vals, ddof=1), abs=1e-12)

    def test_two_algorithms(self, trained, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        cfg = write_config(tmp_path / "i.toml", algorithm="ippo", out="ippo_run")
        assert main(["train", str(cfg)]) == 0
        assert main(["report", str(trained[0]), str(tmp_path / "ippo_run")]) == 0
        summary = read_rows(tmp_path / "report" / "summary.csv")
        assert len(summary) == 3 * 2
        assert {r["algorithm"] for r in summary} == {"mappo", "ippo"}

    def test_mixed_scenarios_rejected(self, trained, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        cfg = write_config(tmp_path / "o.toml", scenario="cluster4_default", out="other")
        assert main(["train", str(cfg)]) == 0
        capsys.readouterr()
        assert main(["report", str(trained[0]), str(tmp_path / "other"), "--out", str(tmp_path / "r")]) == 2
        assert "scenario" in capsys.readouterr().err


# ------------------------------------------------------------ exit codes


@pytest.mark.parametrize(
    "argv,code",
    [([], 2), (["bogus"], 2), (["eval"], 2), (["--help"], 0), (["eval", "x", "--episodes", "0"], 2)],
)
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code


def test_all_algorithms_accept_catalog_configs():
    for alg in ALGORITHMS:
        scen = "single_default" if alg == "ppo" else "cluster4_default"
        parse_config(f'[experiment]\nscenario = "{scen}"\nalgorithm = "{alg}"\n')
