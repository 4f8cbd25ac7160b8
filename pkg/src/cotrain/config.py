"""Experiment configuration: presets, a layered plain-text key-value
config format with includes, and dotted-path overrides.

Config files hold one ``section.field = value`` assignment per line plus
optional ``include <path>`` lines; later assignments win.  Every command
writes its fully resolved configuration next to its outputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .evaluation import RolloutConfig
from .experiments import PoolCounts, WorldConfig
from .policy import PolicyConfig
from .training import TrainConfig, finetune_config, pretrain_config

PRESETS = ("paper", "desk", "smoke")


@dataclass(frozen=True)
class EvalSettings:
    n_trials: int = 10
    grid_n_per_cell: int = 10
    seeds: tuple[int, ...] = (0, 1, 2)
    sweep_alphas: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    budget_scale: int = 5
    replan_every: int = 8
    budget_multiplier: float = 4.0

    @property
    def rollout(self) -> RolloutConfig:
        return RolloutConfig(
            replan_every=self.replan_every, budget_multiplier=self.budget_multiplier
        )


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "desk"
    seed: int = 0
    out: str = "runs/exp"
    world: WorldConfig = field(default_factory=WorldConfig)
    counts: PoolCounts = field(default_factory=PoolCounts)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    pretrain: TrainConfig = field(default_factory=pretrain_config)
    finetune: TrainConfig = field(default_factory=finetune_config)
    eval: EvalSettings = field(default_factory=EvalSettings)


def preset_config(name: str) -> ExperimentConfig:
    """paper mirrors the published recipe; desk is the scaled configuration
    every acceptance experiment runs at; smoke is for integration tests."""
    if name == "paper":
        return ExperimentConfig(
            preset="paper",
            world=WorldConfig(resolution=64),
            counts=PoolCounts(n_sim=500, n_hum=500, n_real=80),
            policy=PolicyConfig(),
            pretrain=pretrain_config(),
            finetune=finetune_config(),
            eval=EvalSettings(),
        )
    if name == "desk":
        return ExperimentConfig(
            preset="desk",
            world=WorldConfig(resolution=48),
            counts=PoolCounts(n_sim=100, n_hum=100, n_real=16),
            policy=PolicyConfig(
                image_hw=(48, 48),
                hidden=96,
                enc_layers=2,
                dec_layers=3,
                heads=4,
                conv_channels=(12, 24, 48, 48),
                horizon=8,
            ),
            pretrain=pretrain_config(steps=1400, lr=3e-4, warmup_steps=100, batch_size=32),
            finetune=finetune_config(steps=600, lr=1.5e-4, warmup_steps=50, batch_size=32),
            eval=EvalSettings(grid_n_per_cell=3),
        )
    if name == "smoke":
        return ExperimentConfig(
            preset="smoke",
            world=WorldConfig(resolution=32, human_capture_hz=10.0),
            counts=PoolCounts(n_sim=6, n_hum=6, n_real=4),
            policy=PolicyConfig(
                image_hw=(32, 32),
                hidden=32,
                enc_layers=1,
                dec_layers=1,
                heads=2,
                conv_channels=(8, 16, 32),
                horizon=4,
            ),
            pretrain=pretrain_config(steps=30, lr=3e-4, warmup_steps=5, batch_size=8),
            finetune=finetune_config(steps=15, lr=1.5e-4, warmup_steps=3, batch_size=8),
            eval=EvalSettings(n_trials=2, grid_n_per_cell=1, seeds=(0,)),
        )
    raise ConfigError(f"unknown preset {name!r} (choose from {PRESETS})")


# ---------------------------------------------------------------------------
# flat key-value layer

def flatten(cfg) -> dict[str, object]:
    out: dict[str, object] = {}

    def walk(prefix: str, obj):
        if is_dataclass(obj) and not isinstance(obj, type):
            for f in fields(obj):
                walk(f"{prefix}{f.name}.", getattr(obj, f.name))
        else:
            out[prefix[:-1]] = obj

    walk("", cfg)
    return out


def _parse_value(raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        text = raw.strip("()[] ")
        if not text:
            return ()
        parts = [p.strip() for p in text.split(",") if p.strip()]
        elem = current[0] if current else 0
        caster = type(elem)
        return tuple(caster(p) for p in parts)
    return raw


def apply_override(cfg, dotted: str, raw_value: str):
    """Set one dotted-path field, preserving the field's current type."""
    parts = dotted.split(".")
    if not hasattr(cfg, parts[0]):
        raise ConfigError(f"unknown config field {dotted!r}")
    if len(parts) == 1:
        current = getattr(cfg, parts[0])
        if is_dataclass(current):
            raise ConfigError(f"{dotted!r} is a section, not a field")
        return replace(cfg, **{parts[0]: _parse_value(raw_value, current)})
    child = apply_override(getattr(cfg, parts[0]), ".".join(parts[1:]), raw_value)
    return replace(cfg, **{parts[0]: child})


def apply_overrides(cfg: ExperimentConfig, items: dict[str, str]) -> ExperimentConfig:
    for key, value in items.items():
        cfg = apply_override(cfg, key, value)
    return cfg


def read_config_file(path: str | Path) -> dict[str, str]:
    """Layered loader: returns dotted-key assignments, includes resolved
    first so the including file overrides them."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include "):
            inc = (path.parent / line[len("include "):].strip()).resolve()
            out.update(read_config_file(inc))
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def load_config(
    config_path: str | Path | None = None,
    preset: str | None = None,
    overrides: dict[str, str] | None = None,
) -> ExperimentConfig:
    """Resolution order: preset defaults < config file < explicit overrides."""
    items = dict(read_config_file(config_path)) if config_path else {}
    items.update(overrides or {})
    preset_name = preset or items.pop("preset", None) or "desk"
    items.pop("preset", None)
    cfg = preset_config(preset_name)
    return apply_overrides(cfg, items)


def resolved_text(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in sorted(flatten(cfg).items()):
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_resolved(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved.cfg"
    path.write_text(resolved_text(cfg))
    return path
