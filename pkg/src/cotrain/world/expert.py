"""Closed-loop scripted expert.

Executes a task's waypoint plan with either embodiment: each phase moves
the commanded effectors straight toward targets (re-planned every step, so
injected action noise is compensated), then issues grip commands once every
target is reached.  Hands grasp by closing all fingertips below the pinch
threshold; grippers by the binary channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DomainTag, Episode, FactorConfig
from ..errors import GenerationError
from .catalog import Catalog
from .core import (
    Embodiment,
    Scene,
    WorldParams,
    embodiment_for,
    home_state,
    rest_fingertips,
    step,
)
from .render import RenderConfig, render
from .tasks import TaskSpec, score_rollout


@dataclass
class ExpertResult:
    episode: Episode
    score: int
    trace: list  # [(scene, state)] incl. the final frame


def _fingertip_action(closed: bool, params: WorldParams) -> np.ndarray:
    r = params.hand_closed_offset if closed else params.hand_rest_offset
    return rest_fingertips(r).ravel()


def _hold_action(state: np.ndarray, emb: Embodiment) -> np.ndarray:
    action = np.zeros(emb.action_dim)
    for idx in emb.layout.passthrough:
        action[idx] = state[idx]
    return action


def run_expert(
    task: TaskSpec,
    scene: Scene,
    domain: DomainTag,
    factors: FactorConfig,
    catalog: Catalog,
    rng: np.random.Generator,
    noise_sigma: float = 0.003,
    frequency_hz: float = 10.0,
    params: WorldParams | None = None,
    render_cfg: RenderConfig | None = None,
) -> ExpertResult:
    """Roll the expert and package the trajectory as an Episode.

    noise_sigma perturbs commanded translations (workspace units per step
    at 10 Hz); zero noise reproduces the plan exactly.  frequency_hz scales
    per-step motion so slower capture rates traverse the same path.
    """
    params = params or WorldParams()
    render_cfg = render_cfg or RenderConfig()
    emb = embodiment_for(domain)
    scale = 10.0 / frequency_hz
    step_size = params.step_size * scale
    sigma = noise_sigma * scale
    max_steps = int(params.max_phase_steps / scale) + params.max_phase_steps

    state = home_state(emb, params)
    cur = scene.copy()
    grip_cmd = [emb.grip_active(state, i, params) for i in range(emb.n_effectors)]

    observations, states, actions = [], [], []
    trace = [(cur, state)]

    def record(action):
        observations.append(
            render(cur, emb, state, domain, catalog, render_cfg, rng=rng)
        )
        states.append(state.copy())
        actions.append(action)

    def apply(action):
        nonlocal state, cur
        record(action)
        state, cur = step(state, action, cur, emb, params)
        trace.append((cur, state))

    def base_action():
        action = np.zeros(emb.action_dim)
        if emb.kind == "gripper":
            for i in range(2):
                action[4 * i + 3] = 1.0 if grip_cmd[i] else 0.0
        else:
            for i in range(2):
                action[6 + 8 * i : 14 + 8 * i] = _fingertip_action(grip_cmd[i], params)
        return action

    for phase in task.plan(scene):
        goals = {i: spec.resolve(cur) for i, spec in phase.targets.items()}
        tol = phase.tol if phase.tol is not None else params.arrive_tol
        for n in range(max_steps + 1):
            deltas = {
                i: goals[i] - emb.effector_pose(state, i)[:2] for i in goals
            }
            if all(np.linalg.norm(d) <= tol for d in deltas.values()):
                break
            if n == max_steps:
                raise GenerationError(
                    f"expert could not reach {task.task_id} phase target within {max_steps} steps"
                )
            action = base_action()
            for i, d in deltas.items():
                norm = np.linalg.norm(d)
                move = d if norm <= step_size else d * (step_size / norm)
                move = move + rng.normal(0.0, sigma, 2)
                lo, _ = emb.layout.pose_slices[i]
                action[lo : lo + 2] = move
            apply(action)
        if phase.grip:
            for i, g in phase.grip.items():
                grip_cmd[i] = g
            apply(base_action())

    # settle so the trajectory ends on a hold
    apply(base_action())
    record(_hold_action(state, emb))

    episode = Episode(
        domain=domain,
        task=task.task_id,
        factors=factors,
        frequency_hz=frequency_hz,
        observations=np.stack(observations),
        states=np.stack(states),
        actions=np.stack(actions),
        scores_available=True,
    )
    score = score_rollout(trace, task, emb, params)
    episode.score = score
    return ExpertResult(episode=episode, score=score, trace=trace)
