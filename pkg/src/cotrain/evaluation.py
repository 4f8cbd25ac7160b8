"""Rollout harness and metrics: milestone scoring of policy rollouts,
SR/PR aggregation with standard errors, scenario batteries, and the
position-generalization grid.

Trials are fully determined by (policy checksum, scenario id, seed): every
random draw inside a trial comes from a generator derived from those.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .data import DomainTag, FactorConfig
from .diffusion import NoiseSchedule, build_schedule, sample
from .errors import ConfigError
from .policy import PolicyBundle, Route
from .world import (
    Catalog,
    Rect,
    RenderConfig,
    TaskSpec,
    WorldParams,
    embodiment_for,
    generate_scene,
    home_state,
    render,
    score_rollout,
    step,
)


def success_rate(scores: Sequence[int], s_max: int) -> float:
    """Percentage of trials achieving the maximum score."""
    scores = _checked(scores, s_max)
    return 100.0 * float(np.sum(scores == s_max)) / len(scores)


def progress_rate(scores: Sequence[int], s_max: int) -> float:
    """Percentage of total accumulated score over the maximum possible."""
    scores = _checked(scores, s_max)
    return 100.0 * float(np.sum(scores)) / (len(scores) * s_max)


def sr_stderr(scores: Sequence[int], s_max: int) -> float:
    """Binomial standard error of the success proportion, in percent."""
    scores = _checked(scores, s_max)
    p = float(np.mean(scores == s_max))
    return 100.0 * float(np.sqrt(p * (1.0 - p) / len(scores)))


def pr_stderr(scores: Sequence[int], s_max: int) -> float:
    """Standard error of the mean per-trial progress, in percent."""
    scores = _checked(scores, s_max)
    frac = scores / s_max
    if len(frac) < 2:
        return 0.0
    return 100.0 * float(np.std(frac, ddof=1) / np.sqrt(len(frac)))


def _checked(scores, s_max: int) -> np.ndarray:
    arr = np.asarray(scores)
    if arr.size == 0:
        raise ValueError("empty score list")
    if (arr < 0).any() or (arr > s_max).any():
        raise ValueError(f"scores must lie in [0, {s_max}]")
    return arr


@dataclass
class TrialResult:
    task: str
    scenario: str
    seed: int
    score: int
    max_score: int
    trace_len: int
    valid: bool = True
    reason: str = ""


@dataclass
class EvalReport:
    trials: list[TrialResult]
    per_scenario: dict[str, dict] = field(default_factory=dict)
    sr: float = 0.0
    sr_se: float = 0.0
    pr: float = 0.0
    pr_se: float = 0.0
    n_total: int = 0
    n_valid: int = 0

    def recompute(self) -> "EvalReport":
        valid = [t for t in self.trials if t.valid]
        if not valid:
            raise ConfigError("no valid trials to aggregate")
        s_max = valid[0].max_score
        scores = [t.score for t in valid]
        self.sr = success_rate(scores, s_max)
        self.sr_se = sr_stderr(scores, s_max)
        self.pr = progress_rate(scores, s_max)
        self.pr_se = pr_stderr(scores, s_max)
        self.n_total = len(self.trials)
        self.n_valid = len(valid)
        self.per_scenario = {}
        for t in valid:
            self.per_scenario.setdefault(t.scenario, []).append(t.score)
        self.per_scenario = {
            name: {
                "sr": success_rate(ss, s_max),
                "pr": progress_rate(ss, s_max),
                "n": len(ss),
            }
            for name, ss in self.per_scenario.items()
        }
        return self

    def to_json(self) -> str:
        payload = {
            "summary": {
                "sr": self.sr, "sr_se": self.sr_se,
                "pr": self.pr, "pr_se": self.pr_se,
                "n_total": self.n_total, "n_valid": self.n_valid,
            },
            "per_scenario": self.per_scenario,
            "trials": [asdict(t) for t in self.trials],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        return cls(trials=[TrialResult(**t) for t in payload["trials"]]).recompute()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")

    def summary_line(self) -> str:
        return (
            f"SR {self.sr:5.1f} ± {self.sr_se:4.1f} | PR {self.pr:5.1f} ± {self.pr_se:4.1f} "
            f"(n={self.n_valid}/{self.n_total})"
        )


def trial_seed(policy_checksum: str, scenario: str, base_seed: int, index: int) -> int:
    key = f"{policy_checksum}:{scenario}:{base_seed}:{index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") % (2**63)


@dataclass
class RolloutConfig:
    replan_every: int = 8
    budget_multiplier: float = 4.0
    sample_mode: str = "accelerated"
    obs_noise: bool = True


class PolicyRunner:
    """Receding-horizon execution of a recombined (robot-routed) bundle."""

    def __init__(
        self,
        bundle: PolicyBundle,
        schedule: NoiseSchedule | None = None,
        rollout: RolloutConfig | None = None,
    ):
        self.bundle = bundle
        self.schedule = schedule or build_schedule()
        self.rollout = rollout or RolloutConfig()
        self.route = bundle.route_for(DomainTag.REAL)
        bundle.eval()

    def plan(self, image: np.ndarray, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sample one denormalized action chunk for the current observation."""
        cfg = self.bundle.cfg
        dtype = cfg.torch_dtype
        img = torch.from_numpy(image[None, None].astype(np.float32)).to(dtype) / 255.0
        st = torch.from_numpy(state[None]).to(dtype)
        st = self.bundle.normalize(st, f"{self.route.branch}_state")
        with torch.no_grad():
            memory = self.bundle.encode_obs(img, st, self.route)

            def denoise_fn(z, t):
                zt = torch.from_numpy(z[None]).to(dtype)
                tt = torch.tensor([t])
                eps = self.bundle.denoise(memory, zt, tt, self.route)
                return eps[0].cpu().numpy()

            chunk = sample(
                denoise_fn,
                (cfg.horizon, cfg.action_dim(self.route.branch)),
                self.schedule,
                rng,
                mode=self.rollout.sample_mode,
            )
            chunk_t = torch.from_numpy(chunk).to(dtype)
            chunk_t = self.bundle.unnormalize(chunk_t, f"{self.route.branch}_action")
        return chunk_t.cpu().numpy()


def binarize_grippers(action: np.ndarray, gripper_indices: Sequence[int]) -> np.ndarray:
    out = action.copy()
    for i in gripper_indices:
        out[i] = 1.0 if out[i] >= 0.5 else 0.0
    return out


def run_single_trial(
    runner: PolicyRunner,
    task: TaskSpec,
    factors: FactorConfig,
    catalog: Catalog,
    seed: int,
    scenario: str,
    world_params: WorldParams | None = None,
    render_cfg: RenderConfig | None = None,
    init_override: Rect | None = None,
) -> TrialResult:
    params = world_params or WorldParams()
    render_cfg = render_cfg or RenderConfig()
    rng = np.random.default_rng(seed)
    emb = embodiment_for(DomainTag.REAL)
    layout = emb.layout
    scene = generate_scene(task, factors, catalog, rng, init_override=init_override, params=params)
    state = home_state(emb, params)
    trace = [(scene, state)]
    budget = int(task.episode_hint * runner.rollout.budget_multiplier)
    noise_rng = rng if runner.rollout.obs_noise else None
    steps_done = 0
    while steps_done < budget:
        image = render(scene, emb, state, DomainTag.REAL, catalog, render_cfg, rng=noise_rng)
        chunk = runner.plan(image, state, rng)
        for k in range(min(runner.rollout.replan_every, len(chunk))):
            action = binarize_grippers(chunk[k], layout.gripper_indices)
            state, scene = step(state, action, scene, emb, params)
            trace.append((scene, state))
            steps_done += 1
            if steps_done >= budget:
                break
    score = score_rollout(trace, task, emb, params)
    return TrialResult(
        task=task.task_id, scenario=scenario, seed=seed, score=score,
        max_score=task.max_score, trace_len=len(trace),
    )


def run_trials(
    runner: PolicyRunner,
    task: TaskSpec,
    scenarios: Sequence[tuple[str, FactorConfig]],
    n_trials: int,
    catalog: Catalog,
    base_seed: int = 0,
    world_params: WorldParams | None = None,
    render_cfg: RenderConfig | None = None,
    init_override: Rect | None = None,
) -> EvalReport:
    """n_trials randomized rollouts per scenario; invalid trials are kept
    in the table (marked with a reason) but excluded from aggregates."""
    checksum = runner.bundle.checksum()
    trials = []
    for name, factors in scenarios:
        for i in range(n_trials):
            seed = trial_seed(checksum, name, base_seed, i)
            try:
                trials.append(
                    run_single_trial(
                        runner, task, factors, catalog, seed, name,
                        world_params, render_cfg, init_override,
                    )
                )
            except Exception as e:  # env failure: excluded, never silent
                trials.append(
                    TrialResult(
                        task=task.task_id, scenario=name, seed=seed, score=0,
                        max_score=task.max_score, trace_len=0, valid=False,
                        reason=f"{type(e).__name__}: {e}",
                    )
                )
    return EvalReport(trials=trials).recompute()


@dataclass
class GridResult:
    heatmap: np.ndarray  # (rows, cols) mean PR per cell
    seen_mask: np.ndarray  # True on the inner seen block
    report: EvalReport

    def seen_mean(self) -> float:
        return float(self.heatmap[self.seen_mask].mean())

    def unseen_mean(self) -> float:
        return float(self.heatmap[~self.seen_mask].mean())


def grid_cells(region: Rect, rows: int, cols: int) -> list[tuple[int, int, Rect]]:
    w, h = region.size
    cw, ch = w / cols, h / rows
    cells = []
    for r in range(rows):
        for c in range(cols):
            cx = region.x0 + (c + 0.5) * cw
            cy = region.y0 + (r + 0.5) * ch
            jx, jy = 0.2 * cw, 0.2 * ch
            cells.append((r, c, Rect(cx - jx, cy - jy, cx + jx, cy + jy)))
    return cells


def grid_eval(
    runner: PolicyRunner,
    task: TaskSpec,
    region: Rect,
    catalog: Catalog,
    factors: FactorConfig,
    rows: int = 4,
    cols: int = 4,
    n_per_cell: int = 10,
    base_seed: int = 0,
    world_params: WorldParams | None = None,
    render_cfg: RenderConfig | None = None,
) -> GridResult:
    """Per-cell mean PR over a rows x cols grid of init positions; the
    border ring is the unseen zone, the inner block the seen zone."""
    workspace = Rect(0.0, 0.0, 1.0, 1.0)
    checksum = runner.bundle.checksum()
    heatmap = np.zeros((rows, cols))
    seen = np.zeros((rows, cols), dtype=bool)
    seen[1 : rows - 1, 1 : cols - 1] = True
    trials = []
    for r, c, cell in grid_cells(region, rows, cols):
        if not (workspace.contains((cell.x0, cell.y0)) and workspace.contains((cell.x1, cell.y1))):
            raise ConfigError(f"grid cell ({r}, {c}) extends outside the workspace")
        name = f"cell_{r}_{c}"
        cell_scores = []
        for i in range(n_per_cell):
            seed = trial_seed(checksum, name, base_seed, i)
            try:
                t = run_single_trial(
                    runner, task, factors, catalog, seed, name,
                    world_params, render_cfg, init_override=cell,
                )
            except Exception as e:
                t = TrialResult(
                    task=task.task_id, scenario=name, seed=seed, score=0,
                    max_score=task.max_score, trace_len=0, valid=False,
                    reason=f"{type(e).__name__}: {e}",
                )
            trials.append(t)
            if t.valid:
                cell_scores.append(t.score)
        heatmap[r, c] = (
            progress_rate(cell_scores, task.max_score) if cell_scores else 0.0
        )
    return GridResult(heatmap=heatmap, seen_mask=seen, report=EvalReport(trials=trials).recompute())
