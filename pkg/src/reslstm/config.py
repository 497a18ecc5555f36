"""INI experiment configuration.

Every section and key is optional except where noted; unknown sections or
keys are rejected. One ``[experiment] seed`` drives all randomness: each
consumer draws from ``PCG64(SeedSequence(seed, spawn_key=(slot,)))`` with
slot 0 for weight init, 1 for data generation, 2 for the train/CV split and
3 for per-epoch shuffling.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .network import NetworkConfig
from .tasks import TaskSpec
from .training import TrainConfig

_SCHEMA = {
    "experiment": {"seed": int},
    "network": {"cell_kind": str, "layers": int, "cell_size": int, "output_size": int,
                "init_scale": float, "forget_bias": float, "shortcut": str},
    "task": {"task_kind": str, "T": int, "D": int, "C": int, "noise_sigma": float,
             "delay_k": int, "num_sequences": int, "cv_fraction": float},
    "train": {"learning_rate": float, "l2_lambda": float, "bptt_len": int, "epochs": int,
              "lr_halving": bool, "clip_norm": float},
    "output": {"dir": str, "wallclock": bool},
    "sweep": {"kinds": list, "layers": list},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)
    task: TaskSpec = field(default_factory=TaskSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    cv_fraction: float = 0.2
    output_dir: Path = Path("runs")
    wallclock: bool = True
    sweep_kinds: tuple[str, ...] = ("plain", "highway", "residual_scaled")
    sweep_layers: tuple[int, ...] = (3, 5, 10)

    def with_network(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, network=replace(self.network, **changes))


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is list:
            return [item.strip() for item in raw.split(",") if item.strip()]
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep T, D, C upper-case
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[section][key] = _convert(section, key, raw, _SCHEMA[section][key])

    seed = values.get("experiment", {}).get("seed", 0)
    task_vals = dict(values.get("task", {}))
    cv_fraction = task_vals.pop("cv_fraction", 0.2)
    try:
        task = TaskSpec(seed=seed, **task_vals)
        network = NetworkConfig(input_dim=task.D, num_classes=task.C, seed=seed,
                                **values.get("network", {}))
        train = TrainConfig(seed=seed, **values.get("train", {}))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = values.get("output", {})
    sweep = values.get("sweep", {})
    cfg = ExperimentConfig(seed=seed, network=network, task=task, train=train,
                           cv_fraction=cv_fraction, output_dir=Path(out.get("dir", "runs")),
                           wallclock=out.get("wallclock", True))
    if "kinds" in sweep:
        cfg.sweep_kinds = tuple(sweep["kinds"])
    if "layers" in sweep:
        cfg.sweep_layers = tuple(_convert("sweep", "layers", v, int) for v in sweep["layers"])
    if not 0 < cfg.cv_fraction < 1:
        raise ConfigError(f"{source}: cv_fraction must lie in (0, 1)")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))
