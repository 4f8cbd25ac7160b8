"""Two-stage optimization: co-training pretraining on the sim and human
pools with exact per-batch mixing, then recombination plus fine-tuning on
real-robot data.

Optimizer registration is stage-scoped: only parameters that can receive
gradients in the stage are handed to AdamW, so decoupled weight decay never
perturbs an unrouted branch and "untouched" means bitwise unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .data import (
    DomainTag,
    Episode,
    SamplePool,
    TrainingSample,
    compose_batch,
    human_count,
    split_by_domain,
)
from .diffusion import NoiseSchedule, add_noise, build_schedule
from .errors import ConfigError, TrainingError
from .policy import (
    PolicyBundle,
    PolicyConfig,
    collate,
    init_policy,
    recombine_for_real,
    reinit_branch,
)

FINETUNE_MODES = ("real_only", "sim_real", "hum_real", "simhum")
REINIT_SEED_OFFSET = 7919  # derived seed for fresh branch inits at fine-tune

LOG_COLUMNS = ("step", "lr", "loss_total", "loss_sim", "loss_hum", "grad_norm")


@dataclass
class TrainConfig:
    stage: str  # "pretrain" | "finetune"
    steps: int
    lr: float
    betas: tuple[float, float] = (0.95, 0.999)
    weight_decay: float = 1e-6
    warmup_steps: int = 2000
    batch_size: int = 64
    alpha: float = 0.5
    seed: int = 0
    grad_clip: float = 1.0
    checkpoint_every: int = 0  # 0 = final checkpoint only
    divergence_loss: float = 1e3
    divergence_patience: int = 100

    def __post_init__(self):
        if self.stage not in ("pretrain", "finetune"):
            raise ConfigError(f"stage must be pretrain or finetune, got {self.stage!r}")
        if self.warmup_steps > self.steps:
            raise ConfigError(
                f"warmup_steps {self.warmup_steps} exceeds total steps {self.steps}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")


def pretrain_config(**overrides) -> TrainConfig:
    base = dict(stage="pretrain", steps=200_000, lr=1e-4)
    base.update(overrides)
    return TrainConfig(**base)


def finetune_config(**overrides) -> TrainConfig:
    base = dict(stage="finetune", steps=60_000, lr=5e-5)
    base.update(overrides)
    return TrainConfig(**base)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to cfg.lr then cosine decay to zero at cfg.steps."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps, 1)
    progress = (step - cfg.warmup_steps) / span
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# losses

def _domain_sample_losses(
    bundle: PolicyBundle,
    batch: Sequence[TrainingSample],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Per-sample noise-prediction losses for one homogeneous sub-batch."""
    dtype = bundle.cfg.torch_dtype
    images, states, chunks, domain = collate(batch, dtype)
    route = bundle.route_for(domain)
    states = bundle.normalize(states, f"{route.branch}_state")
    chunks = bundle.normalize(chunks, f"{route.branch}_action")
    t = rng.integers(0, schedule.T_train, size=len(batch))
    eps = rng.standard_normal(chunks.shape)
    z_t = add_noise(chunks.numpy(), t, eps, schedule)
    z_t = torch.from_numpy(z_t).to(dtype)
    eps = torch.from_numpy(eps).to(dtype)
    t = torch.from_numpy(t)
    eps_hat = bundle(images, states, z_t, t, route)
    return ((eps - eps_hat) ** 2).mean(dim=(1, 2))


def loss_eq3(
    bundle: PolicyBundle,
    batch: Sequence[TrainingSample],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Mean squared noise-prediction error over a single-domain batch."""
    return _domain_sample_losses(bundle, batch, schedule, rng).mean()


def loss_total(
    bundle: PolicyBundle,
    batch: Sequence[TrainingSample],
    alpha: float,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> dict:
    """Mixed-batch loss.

    Computed as the uniform per-sample mean; with exact per-batch counts
    this equals (1 - alpha) * L_sim + alpha * L_hum.  Sub-batches are
    processed in fixed domain order so the noise draws are reproducible.
    """
    by_domain = split_by_domain(batch)
    n_hum = sum(len(v) for d, v in by_domain.items() if d is DomainTag.HUMAN)
    if abs(n_hum - alpha * len(batch)) > 0.5 + 1e-9:
        raise ConfigError(
            f"batch has {n_hum} human samples, inconsistent with alpha={alpha}, B={len(batch)}"
        )
    parts = {}
    for domain in (DomainTag.SIM, DomainTag.HUMAN, DomainTag.REAL):
        if domain in by_domain:
            parts[domain] = _domain_sample_losses(bundle, by_domain[domain], schedule, rng)
    per_sample = torch.cat(list(parts.values()))
    total = per_sample.mean()
    return {
        "total": total,
        "sim": parts[DomainTag.SIM].detach().mean().item() if DomainTag.SIM in parts else float("nan"),
        "hum": parts[DomainTag.HUMAN].detach().mean().item() if DomainTag.HUMAN in parts else float("nan"),
        "per_sample": per_sample.detach(),
    }


# ---------------------------------------------------------------------------
# normalization statistics

def pool_stats(pool: SamplePool) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-dimension affine-to-[-1, 1] stats of a pool's states and chunks."""
    states = np.stack([s.state for s in pool.samples])
    actions = np.concatenate([s.action_chunk for s in pool.samples])
    out = {}
    for kind, arr in (("state", states), ("action", actions)):
        lo, hi = arr.min(axis=0), arr.max(axis=0)
        center = (hi + lo) / 2.0
        scale = (hi - lo) / 2.0
        scale[scale < 1e-8] = 1.0
        out[kind] = (center, scale)
    return out


def normalization_from_pools(
    sim_pool: SamplePool | None, hum_pool: SamplePool | None
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    stats = {}
    if sim_pool is not None and len(sim_pool):
        s = pool_stats(sim_pool)
        stats["robot_state"], stats["robot_action"] = s["state"], s["action"]
    if hum_pool is not None and len(hum_pool):
        s = pool_stats(hum_pool)
        stats["human_state"], stats["human_action"] = s["state"], s["action"]
    return stats


# ---------------------------------------------------------------------------
# optimizer scoping

def pretrain_group_names(alpha: float, bundle: PolicyBundle) -> list[str]:
    names = ["vision_encoders", "backbone", "positional"]
    if alpha < 1.0:
        names += ["sim_adaptors", "robot_branch"]
    if alpha > 0.0:
        names += ["real_adaptor", "human_branch"]
    return [n for n in names if n == "positional" or n in bundle.module_groups()]


def make_optimizer(bundle: PolicyBundle, cfg: TrainConfig, group_names: list[str]):
    params = list(bundle.group_parameters(group_names))
    return torch.optim.AdamW(
        params, lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay
    ), params


@dataclass
class TrainResult:
    bundle: PolicyBundle
    log: list[dict] = field(default_factory=list)


class _LogWriter:
    def __init__(self, out_dir: Path | None, name: str):
        self.rows: list[dict] = []
        self.fh = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            self.fh = open(out_dir / name, "w")
            self.fh.write("\t".join(LOG_COLUMNS) + "\n")

    def add(self, **row):
        self.rows.append(row)
        if self.fh:
            self.fh.write("\t".join(f"{row[c]:.8g}" if c != "step" else str(row[c]) for c in LOG_COLUMNS) + "\n")

    def close(self):
        if self.fh:
            self.fh.close()
            self.fh = None


def _real_only_loss(bundle, batch, schedule, rng) -> dict:
    per_sample = _domain_sample_losses(bundle, batch, schedule, rng)
    return {
        "total": per_sample.mean(),
        "sim": float("nan"),
        "hum": float("nan"),
        "per_sample": per_sample.detach(),
    }


def _optimize(
    bundle: PolicyBundle,
    cfg: TrainConfig,
    schedule: NoiseSchedule,
    batch_fn,
    loss_fn,
    group_names: list[str],
    out_dir: str | Path | None,
    log_name: str,
) -> TrainResult:
    out_dir = Path(out_dir) if out_dir is not None else None
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    optimizer, params = make_optimizer(bundle, cfg, group_names)
    writer = _LogWriter(out_dir, log_name)
    bundle.train()
    bad_steps = 0
    try:
        for step in range(cfg.steps):
            lr = lr_at(step, cfg)
            for g in optimizer.param_groups:
                g["lr"] = lr
            batch = batch_fn(rng)
            parts = loss_fn(bundle, batch, schedule, rng)
            loss = parts["total"]
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at step {step} "
                    f"(sim={parts['sim']:.4g}, hum={parts['hum']:.4g})"
                )
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            grad_norm = torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            optimizer.step()
            writer.add(
                step=step,
                lr=lr,
                loss_total=loss.item(),
                loss_sim=parts["sim"],
                loss_hum=parts["hum"],
                grad_norm=float(grad_norm),
            )
            bad_steps = bad_steps + 1 if loss.item() > cfg.divergence_loss else 0
            if bad_steps >= cfg.divergence_patience:
                raise TrainingError(
                    f"loss above {cfg.divergence_loss} for {bad_steps} consecutive steps"
                )
            if (
                out_dir is not None
                and cfg.checkpoint_every > 0
                and (step + 1) % cfg.checkpoint_every == 0
            ):
                from .policy import serialize_policy

                serialize_policy(bundle, out_dir / f"checkpoint_{step + 1:07d}.npz")
    finally:
        writer.close()
    bundle.eval()
    if out_dir is not None:
        from .policy import serialize_policy

        serialize_policy(bundle, out_dir / "checkpoint_final.npz")
    return TrainResult(bundle=bundle, log=writer.rows)


def pretrain(
    sim_episodes: Sequence[Episode],
    hum_episodes: Sequence[Episode],
    policy_cfg: PolicyConfig,
    cfg: TrainConfig,
    schedule: NoiseSchedule | None = None,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Joint noise-prediction training on the sim and human pools with the
    per-batch mixing ratio cfg.alpha."""
    if cfg.stage != "pretrain":
        raise ConfigError("pretrain() requires a pretrain-stage config")
    schedule = schedule or build_schedule()
    sim_pool = SamplePool.from_episodes(sim_episodes, policy_cfg.horizon) if sim_episodes else None
    hum_pool = SamplePool.from_episodes(hum_episodes, policy_cfg.horizon) if hum_episodes else None
    if cfg.alpha < 1.0 and not sim_pool:
        raise ConfigError("alpha < 1 requires a non-empty sim pool")
    if cfg.alpha > 0.0 and not hum_pool:
        raise ConfigError("alpha > 0 requires a non-empty human pool")
    bundle = init_policy(policy_cfg, cfg.seed)
    bundle.set_normalization(normalization_from_pools(sim_pool, hum_pool))

    def batch_fn(rng):
        return compose_batch(sim_pool, hum_pool, cfg.batch_size, cfg.alpha, rng)

    def loss_fn(b, batch, sched, rng):
        return loss_total(b, batch, cfg.alpha, sched, rng)

    return _optimize(
        bundle, cfg, schedule, batch_fn, loss_fn, pretrain_group_names(cfg.alpha, bundle),
        out_dir, "pretrain_log.tsv",
    )


def finetune(
    pretrained: PolicyBundle | None,
    real_episodes: Sequence[Episode],
    policy_cfg: PolicyConfig,
    cfg: TrainConfig,
    mode: str = "simhum",
    schedule: NoiseSchedule | None = None,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Recombine and adapt on real-robot data.

    Modes: simhum / sim_real fine-tune the recombined pretrained bundle;
    hum_real additionally re-initializes the robot branch (it was never
    trained at alpha = 1); real_only trains a fresh recombined bundle from
    scratch.
    """
    if cfg.stage != "finetune":
        raise ConfigError("finetune() requires a finetune-stage config")
    if mode not in FINETUNE_MODES:
        raise ConfigError(f"mode must be one of {FINETUNE_MODES}, got {mode!r}")
    if not real_episodes:
        raise ConfigError("real episode pool is empty")
    if any(ep.domain is not DomainTag.REAL for ep in real_episodes):
        raise ConfigError("finetune pool must contain REAL episodes only")
    schedule = schedule or build_schedule()

    if mode == "real_only":
        if pretrained is not None:
            raise ConfigError("real_only mode takes no pretrained bundle")
        bundle = init_policy(replace(policy_cfg, recombined=True), cfg.seed)
    else:
        if pretrained is None:
            raise ConfigError(f"mode {mode} requires a pretrained bundle")
        if pretrained.cfg.horizon != policy_cfg.horizon:
            raise ConfigError("pretrained bundle horizon differs from policy config")
        bundle = recombine_for_real(pretrained)
        if mode == "hum_real":
            reinit_branch(bundle, "robot", cfg.seed + REINIT_SEED_OFFSET)

    real_pool = SamplePool.from_episodes(real_episodes, policy_cfg.horizon)
    if mode in ("real_only", "hum_real"):
        # robot-side stats never came from a pretraining pool in these modes
        s = pool_stats(real_pool)
        bundle.set_normalization({"robot_state": s["state"], "robot_action": s["action"]})

    def batch_fn(rng):
        return real_pool.draw(cfg.batch_size, rng)

    group_names = ["vision_encoders", "real_adaptor", "robot_branch", "backbone", "positional"]
    return _optimize(
        bundle, cfg, schedule, batch_fn, _real_only_loss, group_names, out_dir, "finetune_log.tsv"
    )
