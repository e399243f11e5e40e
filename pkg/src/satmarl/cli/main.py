"""Command-line entry point: ``satmarl {train,eval,report,scenarios}``.

Exit codes: 0 success, 2 configuration, usage or checkpoint problem,
3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..env import SatelliteConstellationEnv, action_label
from ..errors import ConfigError, ContractError, NumericError
from ..marl import TrainingAborted, evaluate, train
from ..nn import CheckpointError
from . import runio
from .config import ExperimentConfig, config_hash, dump_config, parse_config
from .scenarios import SCENARIOS

log = logging.getLogger("satmarl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
TRAIN_EVAL_SEED_OFFSET = 10_000


class UsageError(Exception):
    pass


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def _env_hash(cfg: ExperimentConfig) -> str:
    # Hash of the resolved environment section; runs are comparable only if equal.
    text = dump_config(cfg)
    env_part = text[text.index("[env]"): text.index("[train]")]
    return config_hash(env_part.encode("utf-8"))


# ------------------------------------------------------------------ train


def _clear_previous(run_dir: Path, force: bool) -> None:
    if not (run_dir / runio.MANIFEST).exists():
        return
    if not force:
        raise UsageError(f"{run_dir} already holds a run; pass --force to replace it")
    old = runio.read_manifest(run_dir)
    for rel in old.get("files", []):
        (run_dir / rel).unlink(missing_ok=True)
    (run_dir / runio.MANIFEST).unlink()


def cmd_train(config_path: str, force: bool = False) -> int:
    try:
        raw = Path(config_path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc.strerror or exc}") from exc
    try:
        cfg = parse_config(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{config_path}: not UTF-8 text") from exc
    run_dir = runio.resolve_output(cfg.output_dir)
    _clear_previous(run_dir, force)
    run_dir.mkdir(parents=True, exist_ok=True)

    started = runio.now_iso()
    files: List[Path] = []
    snapshot = run_dir / runio.CONFIG_SNAPSHOT
    snapshot.write_bytes(raw)
    files.append(snapshot)

    per_seed: Dict[str, Dict] = {}
    curve_rows: List[tuple] = []
    status, error, code = "complete", None, EXIT_OK
    for seed in cfg.seeds:
        metrics_path = run_dir / f"metrics_seed{seed}.jsonl"
        files.append(metrics_path)
        entry: Dict = {"metrics": _rel(metrics_path, run_dir)}
        per_seed[str(seed)] = entry
        with open(metrics_path, "w", encoding="utf-8") as fh:

            def record(row, fh=fh, seed=seed):
                fh.write(json.dumps(row, sort_keys=True) + "\n")
                fh.flush()
                curve_rows.append((row["env_steps"], seed, row["mean_return"], row["unique_captures"],
                                   row["failures"], row["entropy"], row["clip_fraction"]))

            log.info("training %s seed %d", cfg.algorithm, seed)
            try:
                result = train(cfg.algorithm, cfg.env, cfg.train, seed, progress=record)
            except TrainingAborted as exc:
                status, error, code = "aborted", f"seed {seed}: {exc}", EXIT_NUMERIC
                entry["iterations"] = len(exc.metrics)
                break
        ckpts = runio.save_agents(run_dir / "checkpoints" / f"seed{seed}", result.agents)
        files.extend(ckpts)
        entry["checkpoints"] = [_rel(p, run_dir) for p in ckpts]
        last = result.metrics[-1]
        entry.update(
            iterations=len(result.metrics),
            env_steps=last["env_steps"],
            final_mean_return=last["mean_return"],
            final_unique_captures=last["unique_captures"],
            final_failures=last["failures"],
        )
        if cfg.train.eval_episodes:
            ev = evaluate(result.agents, cfg.env, cfg.train.eval_episodes, TRAIN_EVAL_SEED_OFFSET + seed)
            entry["eval"] = {k: v for k, v in ev.summary().items() if k != "action_counts"}

    curve = run_dir / runio.CURVE_CSV
    runio.write_csv(curve, runio.CURVE_COLUMNS, curve_rows)
    files.append(curve)

    done = [e for e in per_seed.values() if "checkpoints" in e]
    summary = {"completed_seeds": len(done)}
    if done:
        finals = [e["final_mean_return"] for e in done]
        summary.update(final_mean_return=float(np.mean(finals)), final_std_return=float(np.std(finals)))
        evals = [e["eval"]["mean_return"] for e in done if "eval" in e]
        if evals:
            summary["eval_mean_return"] = float(np.mean(evals))
    manifest = {
        "kind": "train",
        "status": status,
        "error": error,
        "algorithm": cfg.algorithm,
        "scenario": cfg.scenario,
        "env_hash": _env_hash(cfg),
        "seeds": list(cfg.seeds),
        "config_snapshot": runio.CONFIG_SNAPSHOT,
        "config_sha256": config_hash(raw),
        "code_version": runio.code_version(),
        "started_at": started,
        "finished_at": runio.now_iso(),
        "curve": runio.CURVE_CSV,
        "per_seed": per_seed,
        "summary": summary,
        "files": [_rel(p, run_dir) for p in files],
    }
    runio.write_json(run_dir / runio.MANIFEST, manifest)
    if error:
        print(f"error: numeric failure, partial outputs kept in {run_dir}: {error}", file=sys.stderr)
    else:
        print(f"run written to {run_dir}")
    return code


# ------------------------------------------------------------------- eval


def _load_run(run_dir: Path):
    manifest = runio.read_manifest(run_dir)
    if manifest.get("kind") != "train":
        raise ConfigError(f"{run_dir}: manifest does not describe a training run")
    raw = (run_dir / manifest["config_snapshot"]).read_bytes()
    if config_hash(raw) != manifest["config_sha256"]:
        raise ConfigError(f"{run_dir}: config snapshot does not match the manifest hash")
    return manifest, parse_config(raw.decode("utf-8"))


def cmd_eval(run_dir: str, episodes: int, seed: int) -> int:
    if episodes < 1:
        raise UsageError("--episodes must be >= 1")
    root = Path(run_dir)
    manifest, cfg = _load_run(root)
    env = SatelliteConstellationEnv(cfg.env)
    out = root / "eval" / f"seed{seed}_episodes{episodes}"
    out.mkdir(parents=True, exist_ok=True)
    files: List[Path] = []
    results = {}
    trained = [(s, e) for s, e in manifest["per_seed"].items() if "checkpoints" in e]
    if not trained:
        raise CheckpointError(f"{root}: no completed seed has checkpoints")
    for train_seed, entry in trained:
        agents = runio.load_agents([root / p for p in entry["checkpoints"]], cfg.algorithm, env, cfg.train)
        ev = evaluate(agents, cfg.env, episodes, seed)
        results[train_seed] = ev.summary()

        actions = out / f"actions_seed{train_seed}.csv"
        runio.write_csv(actions, ("agent", "action", "count"), (
            (i, action_label(a), int(ev.action_counts[i, a]))
            for i in range(env.n_agents) for a in range(env.action_space())
        ))
        # One block per agent over every target any agent stored, zero-filled.
        targets = sorted({t for _, t in ev.capture_hist})
        captures = out / f"captures_seed{train_seed}.csv"
        runio.write_csv(captures, ("agent", "target_id", "count"), (
            (i, t, ev.capture_hist.get((i, t), 0)) for i in range(env.n_agents) for t in targets
        ))
        files += [actions, captures]

    metrics = out / "metrics.json"
    runio.write_json(metrics, {"episodes": episodes, "seed": seed, "per_train_seed": results})
    files.append(metrics)
    runio.write_json(out / "eval_manifest.json", {
        "kind": "eval",
        "run_dir": str(root),
        "algorithm": cfg.algorithm,
        "scenario": cfg.scenario,
        "episodes": episodes,
        "seed": seed,
        "code_version": runio.code_version(),
        "finished_at": runio.now_iso(),
        "files": [_rel(p, out) for p in files],
    })
    print(f"evaluation written to {out}")
    return EXIT_OK


# ----------------------------------------------------------------- report


def cmd_report(run_dirs: Sequence[str], out_dir: Optional[str]) -> int:
    tidy = []
    scenario_key = None
    for rd in run_dirs:
        root = Path(rd)
        manifest = runio.read_manifest(root)
        if manifest.get("kind") != "train" or manifest.get("status") != "complete":
            raise UsageError(f"{root}: not a completed training run")
        key = (manifest["scenario"], manifest["env_hash"])
        if scenario_key is None:
            scenario_key = key
        elif key != scenario_key:
            raise UsageError(
                f"{root}: scenario {key[0]!r} (env {key[1][:8]}) differs from "
                f"{scenario_key[0]!r} (env {scenario_key[1][:8]}); reports must compare one scenario"
            )
        for row in runio.read_csv(root / manifest["curve"]):
            tidy.append((manifest["algorithm"], manifest["scenario"], int(row["env_steps"]),
                         int(row["seed"]), float(row["mean_return"])))

    out = Path(out_dir) if out_dir else runio.output_root() / "report"
    out.mkdir(parents=True, exist_ok=True)
    curves = out / "curves.csv"
    runio.write_csv(curves, ("algorithm", "scenario", "env_steps", "seed", "mean_return"), tidy)

    groups: Dict[tuple, List[float]] = defaultdict(list)
    for alg, scen, steps, _, ret in tidy:
        groups[(alg, scen, steps)].append(ret)
    summary = out / "summary.csv"
    runio.write_csv(summary, ("algorithm", "scenario", "env_steps", "mean", "std", "n_seeds"), (
        (alg, scen, steps, float(np.mean(v)), float(np.std(v, ddof=1)) if len(v) > 1 else 0.0, len(v))
        for (alg, scen, steps), v in sorted(groups.items())
    ))
    runio.write_json(out / "report_manifest.json", {
        "kind": "report",
        "runs": [str(Path(r)) for r in run_dirs],
        "code_version": runio.code_version(),
        "finished_at": runio.now_iso(),
        "files": [curves.name, summary.name],
    })
    print(f"report written to {out}")
    return EXIT_OK


def cmd_scenarios() -> int:
    width = max(map(len, SCENARIOS))
    for name, (desc, _) in SCENARIOS.items():
        print(f"{name:<{width}}  {desc}")
    return EXIT_OK


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satmarl", description="Satellite constellation tasking experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed of an experiment config")
    t.add_argument("config")
    t.add_argument("--force", action="store_true", help="replace an existing run in the output directory")

    e = sub.add_parser("eval", help="greedy evaluation of a finished run")
    e.add_argument("run_dir")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("report", help="merge learning curves of several runs")
    r.add_argument("run_dirs", nargs="+")
    r.add_argument("--out", default=None, help=f"output directory (default: ${runio.OUTPUT_ROOT_ENV}/report)")

    sub.add_parser("scenarios", help="list built-in scenarios")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "train":
            return cmd_train(args.config, args.force)
        if args.command == "eval":
            return cmd_eval(args.run_dir, args.episodes, args.seed)
        if args.command == "report":
            return cmd_report(args.run_dirs, args.out)
        return cmd_scenarios()
    except NumericError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CheckpointError, ContractError, UsageError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # keep the exit-code contract even for unexpected faults
        log.exception("unexpected failure")
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
