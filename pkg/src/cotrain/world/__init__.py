from .catalog import (
    Catalog,
    Rect,
    default_catalog,
    held_out_ids,
    human_scenarios,
    ood_scenarios,
    real_scenarios,
    sim_randomized_factors,
)
from .core import (
    GRIPPER,
    HAND,
    Embodiment,
    Scene,
    SceneObject,
    WorldParams,
    embodiment_for,
    generate_scene,
    home_state,
    step,
)
from .expert import ExpertResult, run_expert
from .render import RenderConfig, render
from .tasks import TASKS, Milestone, TaskSpec, get_task, score_rollout

__all__ = [
    "Catalog",
    "Rect",
    "default_catalog",
    "held_out_ids",
    "human_scenarios",
    "ood_scenarios",
    "real_scenarios",
    "sim_randomized_factors",
    "GRIPPER",
    "HAND",
    "Embodiment",
    "Scene",
    "SceneObject",
    "WorldParams",
    "embodiment_for",
    "generate_scene",
    "home_state",
    "step",
    "ExpertResult",
    "run_expert",
    "RenderConfig",
    "render",
    "TASKS",
    "Milestone",
    "TaskSpec",
    "get_task",
    "score_rollout",
]
