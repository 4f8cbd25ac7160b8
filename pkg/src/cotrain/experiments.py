"""Experiment recipes: pool generation, the four training modes, scenario
batteries, factor ablations, alpha sweeps, budget sweeps, and the
position-generalization grid.

Pretrained checkpoints are cached on disk keyed by a hash of everything
that determines them, so sweeps sharing a pretraining configuration train
it once.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import DomainTag, Episode, FactorConfig
from .diffusion import NoiseSchedule, build_schedule
from .errors import ConfigError, GenerationError
from .evaluation import (
    EvalReport,
    GridResult,
    PolicyRunner,
    RolloutConfig,
    grid_eval,
    run_trials,
)
from .pipeline import prune_static, resample
from .policy import PolicyBundle, PolicyConfig, load_policy, serialize_policy
from .training import TrainConfig, finetune, pretrain
from .world import (
    Catalog,
    RenderConfig,
    WorldParams,
    default_catalog,
    embodiment_for,
    generate_scene,
    get_task,
    human_scenarios,
    ood_scenarios,
    real_scenarios,
    run_expert,
    sim_randomized_factors,
)

MODES = ("real_only", "sim_real", "hum_real", "simhum")
MODE_ALPHA = {"sim_real": 0.0, "hum_real": 1.0}


@dataclass(frozen=True)
class WorldConfig:
    task: str = "stack_discs"
    resolution: int = 64
    expert_noise: float = 0.003
    obs_noise_sigma: float = 1.5
    human_capture_hz: float = 30.0
    control_hz: float = 10.0
    prune_threshold: float = 1e-4
    expert_retries: int = 20

    @property
    def render_cfg(self) -> RenderConfig:
        return RenderConfig(
            resolution=(self.resolution, self.resolution), noise_sigma=self.obs_noise_sigma
        )


@dataclass(frozen=True)
class PoolCounts:
    n_sim: int = 500
    n_hum: int = 500
    n_real: int = 80


def real_scenario_mix(n: int) -> list[FactorConfig]:
    """Scenario assignment of the real pool: base-heavy 50:30 split."""
    names = real_scenarios()
    n_base = int(round(n * 50.0 / 80.0))
    out = [names[0][1]] * n_base
    k = 0
    while len(out) < n:
        out.append(names[1 + k % 3][1])
        k += 1
    return out


def generate_pool(
    domain: DomainTag,
    wcfg: WorldConfig,
    n: int,
    seed: int,
    catalog: Catalog | None = None,
    init: str = "full",
) -> list[Episode]:
    """Scripted-expert episodes for one domain, post-processed through the
    resample + prune pipeline.  Failed expert runs are discarded and
    retried with a fresh scene."""
    catalog = catalog or default_catalog()
    task = get_task(wcfg.task)
    rng = np.random.default_rng(seed)
    emb = embodiment_for(domain)
    layout = emb.layout
    capture_hz = wcfg.human_capture_hz if domain is DomainTag.HUMAN else wcfg.control_hz
    if domain is DomainTag.REAL:
        mix = real_scenario_mix(n)
    episodes = []
    for i in range(n):
        if domain is DomainTag.SIM:
            factors = sim_randomized_factors(rng, init=init)
        elif domain is DomainTag.HUMAN:
            factors = replace(human_scenarios()[i % 12][1], init=init)
        else:
            factors = replace(mix[i], init=init)
        for attempt in range(wcfg.expert_retries):
            try:
                scene = generate_scene(task, factors, catalog, rng)
                result = run_expert(
                    task, scene, domain, factors, catalog, rng,
                    noise_sigma=wcfg.expert_noise, frequency_hz=capture_hz,
                    render_cfg=wcfg.render_cfg,
                )
            except GenerationError:
                continue
            if result.score == task.max_score:
                break
        else:
            raise GenerationError(
                f"expert failed {wcfg.expert_retries} times for {domain.value} episode {i}"
            )
        ep = result.episode
        if capture_hz != wcfg.control_hz:
            ep = resample(ep, wcfg.control_hz, layout)
        ep = prune_static(ep, wcfg.prune_threshold, gripper_changes_count=True, layout=layout)
        episodes.append(ep)
    return episodes


def build_pools(
    wcfg: WorldConfig, counts: PoolCounts, seed: int, catalog: Catalog | None = None
) -> dict[DomainTag, list[Episode]]:
    return {
        DomainTag.SIM: generate_pool(DomainTag.SIM, wcfg, counts.n_sim, seed * 3 + 11, catalog),
        DomainTag.HUMAN: generate_pool(DomainTag.HUMAN, wcfg, counts.n_hum, seed * 3 + 12, catalog),
        DomainTag.REAL: generate_pool(DomainTag.REAL, wcfg, counts.n_real, seed * 3 + 13, catalog),
    }


# ---------------------------------------------------------------------------
# cached pretraining

def _config_key(*parts) -> str:
    blob = json.dumps([_jsonable(p) for p in parts], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(x):
    if hasattr(x, "__dataclass_fields__"):
        return asdict(x)
    return x


def cached_pretrain(
    sim_eps: Sequence[Episode],
    hum_eps: Sequence[Episode],
    policy_cfg: PolicyConfig,
    train_cfg: TrainConfig,
    schedule: NoiseSchedule,
    cache_dir: str | Path | None,
    data_key: str,
    log: Callable[[str], None] = lambda s: None,
) -> PolicyBundle:
    key = _config_key(policy_cfg, train_cfg, data_key, schedule.T_train, schedule.s_offset)
    if cache_dir is not None:
        path = Path(cache_dir) / f"pretrain_{key}.npz"
        if path.exists():
            log(f"pretrain cache hit: {path.name}")
            return load_policy(path)
    t0 = time.time()
    result = pretrain(sim_eps, hum_eps, policy_cfg, train_cfg, schedule)
    log(f"pretrained alpha={train_cfg.alpha} seed={train_cfg.seed} in {time.time() - t0:.0f}s")
    if cache_dir is not None:
        serialize_policy(result.bundle, path)
    return result.bundle


# ---------------------------------------------------------------------------
# one mode end to end

@dataclass
class RunArtifacts:
    mode: str
    seed: int
    bundle: PolicyBundle
    ood: EvalReport | None = None
    id_report: EvalReport | None = None


def run_mode(
    mode: str,
    pools: dict[DomainTag, list[Episode]],
    policy_cfg: PolicyConfig,
    pre_cfg: TrainConfig,
    ft_cfg: TrainConfig,
    wcfg: WorldConfig,
    seed: int,
    catalog: Catalog | None = None,
    cache_dir: str | Path | None = None,
    data_key: str = "",
    log: Callable[[str], None] = lambda s: None,
) -> PolicyBundle:
    """Train one baseline/mode to a ready-to-evaluate bundle."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    catalog = catalog or default_catalog()
    schedule = build_schedule()
    pre_cfg = replace(pre_cfg, seed=seed, alpha=MODE_ALPHA.get(mode, pre_cfg.alpha))
    ft_cfg = replace(ft_cfg, seed=seed)
    pretrained = None
    if mode != "real_only":
        sim_eps = pools[DomainTag.SIM] if pre_cfg.alpha < 1.0 else []
        hum_eps = pools[DomainTag.HUMAN] if pre_cfg.alpha > 0.0 else []
        pretrained = cached_pretrain(
            sim_eps, hum_eps, policy_cfg, pre_cfg, schedule, cache_dir,
            data_key=f"{data_key}:{seed}", log=log,
        )
    t0 = time.time()
    result = finetune(
        pretrained, pools[DomainTag.REAL], policy_cfg, ft_cfg, mode=mode, schedule=schedule
    )
    log(f"finetuned mode={mode} seed={seed} in {time.time() - t0:.0f}s")
    return result.bundle


def evaluate_battery(
    bundle: PolicyBundle,
    wcfg: WorldConfig,
    battery: str,
    n_trials: int,
    catalog: Catalog | None = None,
    base_seed: int = 0,
    rollout: RolloutConfig | None = None,
) -> EvalReport:
    """battery 'id' = the four fine-tuning scenarios, 'ood' = the two
    held-out extreme scenarios."""
    catalog = catalog or default_catalog()
    if battery == "id":
        scenarios = real_scenarios()
    elif battery == "ood":
        scenarios = ood_scenarios()
    else:
        raise ConfigError(f"battery must be 'id' or 'ood', got {battery!r}")
    runner = PolicyRunner(bundle, rollout=rollout)
    return run_trials(
        runner, get_task(wcfg.task), scenarios, n_trials, catalog,
        base_seed=base_seed, render_cfg=wcfg.render_cfg,
    )


# ---------------------------------------------------------------------------
# experiment suites

@dataclass
class ModeMatrixResult:
    reports: dict[str, list[EvalReport]]  # mode -> one report per seed

    def mean_sr(self, mode: str) -> float:
        return float(np.mean([r.sr for r in self.reports[mode]]))

    def mean_pr(self, mode: str) -> float:
        return float(np.mean([r.pr for r in self.reports[mode]]))

    def table(self) -> str:
        lines = ["mode\tmean_sr\tmean_pr\tseeds"]
        for mode, reps in self.reports.items():
            lines.append(
                f"{mode}\t{self.mean_sr(mode):.2f}\t{self.mean_pr(mode):.2f}\t{len(reps)}"
            )
        return "\n".join(lines) + "\n"


def mode_matrix(
    modes: Sequence[str],
    seeds: Sequence[int],
    wcfg: WorldConfig,
    counts: PoolCounts,
    policy_cfg: PolicyConfig,
    pre_cfg: TrainConfig,
    ft_cfg: TrainConfig,
    n_trials: int,
    battery: str = "ood",
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> ModeMatrixResult:
    """The co-training benefit experiment: every mode trained and evaluated
    per seed on a shared per-seed dataset."""
    catalog = default_catalog()
    reports: dict[str, list[EvalReport]] = {m: [] for m in modes}
    for seed in seeds:
        t0 = time.time()
        pools = build_pools(wcfg, counts, seed, catalog)
        log(f"seed {seed}: pools generated in {time.time() - t0:.0f}s")
        for mode in modes:
            bundle = run_mode(
                mode, pools, policy_cfg, pre_cfg, ft_cfg, wcfg, seed,
                catalog, cache_dir, data_key=_config_key(wcfg, counts), log=log,
            )
            report = evaluate_battery(bundle, wcfg, battery, n_trials, catalog, base_seed=seed)
            log(f"seed {seed} mode {mode}: {report.summary_line()}")
            reports[mode].append(report)
    return ModeMatrixResult(reports=reports)


def alpha_sweep(
    alphas: Sequence[float],
    seeds: Sequence[int],
    wcfg: WorldConfig,
    counts: PoolCounts,
    policy_cfg: PolicyConfig,
    pre_cfg: TrainConfig,
    ft_cfg: TrainConfig,
    n_trials: int,
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> dict[float, list[EvalReport]]:
    """OOD evaluation of the co-training ratio across seeds."""
    catalog = default_catalog()
    out: dict[float, list[EvalReport]] = {a: [] for a in alphas}
    for seed in seeds:
        pools = build_pools(wcfg, counts, seed, catalog)
        for alpha in alphas:
            bundle = run_mode(
                "simhum", pools, policy_cfg, replace(pre_cfg, alpha=alpha), ft_cfg,
                wcfg, seed, catalog, cache_dir, data_key=_config_key(wcfg, counts), log=log,
            )
            report = evaluate_battery(bundle, wcfg, "ood", n_trials, catalog, base_seed=seed)
            log(f"alpha {alpha} seed {seed}: {report.summary_line()}")
            out[alpha].append(report)
    return out


@dataclass(frozen=True)
class BudgetRow:
    label: str
    n_real: int
    n_sim: int
    n_hum: int
    mode: str


def paper_budget_rows(scale: int = 5) -> list[BudgetRow]:
    """The collection-budget table scaled down by an integer factor."""
    raw = [
        ("real_only_2h", 40, 0, 0, "real_only"),
        ("real_only_4h", 80, 0, 0, "real_only"),
        ("real_only_8h", 160, 0, 0, "real_only"),
        ("simhum_2h", 19, 100, 100, "simhum"),
        ("simhum_4h", 40, 200, 200, "simhum"),
        ("simhum_8h", 80, 400, 400, "simhum"),
        ("sim_real_8h", 80, 400, 0, "sim_real"),
        ("hum_real_8h", 80, 0, 400, "hum_real"),
    ]
    rows = []
    for label, r, s, h, mode in raw:
        rows.append(
            BudgetRow(
                label, max(2, round(r / scale)), round(s / scale), round(h / scale), mode
            )
        )
    return rows


def budget_sweep(
    rows: Sequence[BudgetRow],
    seeds: Sequence[int],
    wcfg: WorldConfig,
    policy_cfg: PolicyConfig,
    pre_cfg: TrainConfig,
    ft_cfg: TrainConfig,
    n_trials: int,
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> dict[str, list[EvalReport]]:
    """OOD evaluation across data-collection budget compositions."""
    catalog = default_catalog()
    out: dict[str, list[EvalReport]] = {row.label: [] for row in rows}
    max_counts = PoolCounts(
        n_sim=max(r.n_sim for r in rows),
        n_hum=max(r.n_hum for r in rows),
        n_real=max(r.n_real for r in rows),
    )
    for seed in seeds:
        pools = build_pools(wcfg, max_counts, seed, catalog)
        for row in rows:
            for n, domain in (
                (row.n_sim, DomainTag.SIM), (row.n_hum, DomainTag.HUMAN), (row.n_real, DomainTag.REAL),
            ):
                if n > len(pools[domain]):
                    raise ConfigError(f"row {row.label}: pool has too few {domain.value} episodes")
            sub = {
                DomainTag.SIM: pools[DomainTag.SIM][: row.n_sim],
                DomainTag.HUMAN: pools[DomainTag.HUMAN][: row.n_hum],
                DomainTag.REAL: pools[DomainTag.REAL][: row.n_real],
            }
            bundle = run_mode(
                row.mode, sub, policy_cfg, pre_cfg, ft_cfg, wcfg, seed, catalog,
                cache_dir, data_key=_config_key(wcfg, row), log=log,
            )
            report = evaluate_battery(bundle, wcfg, "ood", n_trials, catalog, base_seed=seed)
            log(f"budget {row.label} seed {seed}: {report.summary_line()}")
            out[row.label].append(report)
    return out


# ---------------------------------------------------------------------------
# leave-one-factor-out ablation

FACTOR_BASE = {"bg": "base", "light": "neutral", "dist": "none", "obj": "set_red"}


def factor_filter(factor: str):
    """Keep only episodes at the base condition of the target factor."""
    if factor not in FACTOR_BASE:
        raise ConfigError(f"factor must be one of {sorted(FACTOR_BASE)}, got {factor!r}")
    base = FACTOR_BASE[factor]

    def pred(domain, task, fc: FactorConfig) -> bool:
        return getattr(fc, factor) == base

    return pred


def factor_ood_scenarios(factor: str) -> list[tuple[str, FactorConfig]]:
    """OOD scenarios that specifically feature the held-out factor: base
    everywhere except held-out values for the target factor."""
    base = FactorConfig("set_red", "none", 0, "neutral", "base", "full")
    variants = {
        "bg": [("bg_a", {"bg": "ood_wrinkle_a"}), ("bg_b", {"bg": "ood_wrinkle_b"})],
        "light": [("light_a", {"light": "ood_amber"}), ("light_b", {"light": "ood_dusk"})],
        "dist": [
            ("dist_a", {"dist": "ood_heavy_a", "dist_count": 6}),
            ("dist_b", {"dist": "ood_heavy_b", "dist_count": 7}),
        ],
        "obj": [("obj_a", {"obj": "ood_cyan"}), ("obj_b", {"obj": "ood_violet"})],
    }[factor]
    return [(f"ood_{name}", replace(base, **kv)) for name, kv in variants]


@dataclass
class AblationResult:
    factor: str
    full: EvalReport
    without: EvalReport


def factor_ablation(
    factor: str,
    pools: dict[DomainTag, list[Episode]],
    wcfg: WorldConfig,
    policy_cfg: PolicyConfig,
    pre_cfg: TrainConfig,
    ft_cfg: TrainConfig,
    n_trials: int,
    seed: int,
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> AblationResult:
    """Paired run: full human pool vs human pool filtered to the base
    condition of the target factor, identical seeds and configs, both
    evaluated on OOD scenarios featuring that factor."""
    catalog = default_catalog()
    pred = factor_filter(factor)
    filtered = [ep for ep in pools[DomainTag.HUMAN] if pred(ep.domain, ep.task, ep.factors)]
    if not filtered:
        raise ConfigError(f"holding out factor {factor!r} empties the human pool")
    task = get_task(wcfg.task)
    scenarios = factor_ood_scenarios(factor)
    reports = {}
    for tag, hum in (("full", pools[DomainTag.HUMAN]), ("without", filtered)):
        sub = dict(pools)
        sub[DomainTag.HUMAN] = hum
        bundle = run_mode(
            "simhum", sub, policy_cfg, pre_cfg, ft_cfg, wcfg, seed, catalog,
            cache_dir, data_key=_config_key(wcfg, factor, tag, len(hum)), log=log,
        )
        runner = PolicyRunner(bundle)
        reports[tag] = run_trials(
            runner, task, scenarios, n_trials, catalog, base_seed=seed,
            render_cfg=wcfg.render_cfg,
        )
        log(f"ablation {factor} {tag}: {reports[tag].summary_line()}")
    return AblationResult(factor=factor, full=reports["full"], without=reports["without"])


# ---------------------------------------------------------------------------
# position-generalization grid

@dataclass
class GridExperimentResult:
    results: dict[str, list[GridResult]]  # mode -> per-seed grids

    def mean_seen(self, mode: str) -> float:
        return float(np.mean([g.seen_mean() for g in self.results[mode]]))

    def mean_unseen(self, mode: str) -> float:
        return float(np.mean([g.unseen_mean() for g in self.results[mode]]))


def grid_experiment(
    modes: Sequence[str],
    seeds: Sequence[int],
    wcfg: WorldConfig,
    counts: PoolCounts,
    policy_cfg: PolicyConfig,
    pre_cfg: TrainConfig,
    ft_cfg: TrainConfig,
    n_per_cell: int,
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> GridExperimentResult:
    """Fine-tune on real data confined to the inner 3x3 block, then score a
    4x4 grid of init positions in an extreme scenario."""
    catalog = default_catalog()
    region = catalog.init_region("full")
    ood_factors = ood_scenarios()[0][1]
    results: dict[str, list[GridResult]] = {m: [] for m in modes}
    for seed in seeds:
        pools = build_pools(wcfg, counts, seed, catalog)
        pools[DomainTag.REAL] = generate_pool(
            DomainTag.REAL, wcfg, counts.n_real, seed * 3 + 13, catalog, init="inner"
        )
        for mode in modes:
            bundle = run_mode(
                mode, pools, policy_cfg, pre_cfg, ft_cfg, wcfg, seed, catalog,
                cache_dir, data_key=_config_key(wcfg, counts, "grid"), log=log,
            )
            runner = PolicyRunner(bundle)
            grid = grid_eval(
                runner, get_task(wcfg.task), region, catalog, ood_factors,
                rows=4, cols=4, n_per_cell=n_per_cell, base_seed=seed,
                render_cfg=wcfg.render_cfg,
            )
            log(
                f"grid {mode} seed {seed}: seen {grid.seen_mean():.1f} "
                f"unseen {grid.unseen_mean():.1f}"
            )
            results[mode].append(grid)
    return GridExperimentResult(results=results)
