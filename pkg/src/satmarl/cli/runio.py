"""Run-directory file formats: checkpoints, manifests, metrics and CSVs."""

from __future__ import annotations

import csv
import json
import os
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from ..env import SatelliteConstellationEnv
from ..errors import ConfigError
from ..marl import AgentSet, TrainConfig, make_agent_set
from ..nn import AdamState, CheckpointError, load_params, save_params

OUTPUT_ROOT_ENV = "SATMARL_OUTPUT_ROOT"
MANIFEST = "manifest.json"
CONFIG_SNAPSHOT = "config.toml"
CURVE_CSV = "curve.csv"
CURVE_COLUMNS = ("env_steps", "seed", "mean_return", "unique_captures", "failures", "entropy", "clip_fraction")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or ".")


def resolve_output(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else output_root() / p


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_jsonl(path: Path, rows: Iterable[Dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_manifest(run_dir: Path) -> Dict:
    path = run_dir / MANIFEST
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{run_dir}: no {MANIFEST}; not a run directory") from None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: unreadable manifest ({exc})") from exc


# ------------------------------------------------------------ checkpoints


def save_agents(directory: Path, agents: AgentSet) -> List[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind, nets in (("actor", agents.actors), ("critic", agents.critics)):
        for i, net in enumerate(nets):
            p = directory / f"{kind}{i}.smnn"
            save_params(p, net)
            paths.append(p)
    return paths


def load_agents(paths: Sequence[Path], algorithm: str, env: SatelliteConstellationEnv,
                train_cfg: TrainConfig) -> AgentSet:
    """Rebuild an :class:`AgentSet` from checkpoint files.

    Every file must exist, parse, and match the architecture the algorithm
    would build for this environment; anything else is a CheckpointError.
    """
    template = make_agent_set(algorithm, env.n_agents, env.obs_dim, env.state_dim, env.action_space(), train_cfg, 0)
    expected = [(f"actor{i}.smnn", a) for i, a in enumerate(template.actors)]
    expected += [(f"critic{i}.smnn", c) for i, c in enumerate(template.critics)]
    by_name = {Path(p).name: Path(p) for p in paths}
    loaded = []
    for name, ref in expected:
        if name not in by_name:
            raise CheckpointError(f"checkpoint {name} is not listed in the manifest")
        try:
            net = load_params(by_name[name])
        except OSError as exc:
            raise CheckpointError(f"{by_name[name]}: {exc.strerror or exc}") from exc
        if net.spec != ref.spec:
            raise CheckpointError(f"{by_name[name]}: architecture {net.spec} does not match {ref.spec}")
        loaded.append(net)
    n_act = len(template.actors)
    actors, critics = loaded[:n_act], loaded[n_act:]
    return AgentSet(
        algorithm=algorithm,
        n_agents=env.n_agents,
        actors=actors,
        critics=critics,
        actor_opt=[AdamState.zeros(len(a), train_cfg.lr) for a in actors],
        critic_opt=[AdamState.zeros(len(c), train_cfg.lr) for c in critics],
    )
