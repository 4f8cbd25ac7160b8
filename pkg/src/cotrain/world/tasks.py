"""Task definitions: target builders, ordered milestone predicates, and
expert waypoint plans for the four manipulation tasks.

Milestones are ordered: score_rollout only credits milestone k after
milestones 1..k-1 have fired, so a lucky late predicate never skips the
sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data import FactorConfig
from ..errors import GenerationError
from .catalog import Catalog, Rect
from .core import Embodiment, Scene, SceneObject, WorldParams

STACK_TOL = 0.035
HOVER_TOL = 0.08
PRESS_TOL = 0.025
LIFT_HEIGHT = 0.10
LID_CLEAR = 0.12
INSERT_TOL = 0.045


@dataclass(frozen=True)
class TargetSpec:
    """Where an effector should go: an object anchor and/or fixed offsets."""

    obj: str | None = None
    local: tuple[float, float] = (0.0, 0.0)  # offset in the object frame
    world: tuple[float, float] = (0.0, 0.0)  # offset in workspace frame

    def resolve(self, scene: Scene) -> np.ndarray:
        base = np.zeros(2)
        if self.obj is not None:
            o = scene.find(self.obj)
            c, s = np.cos(o.theta), np.sin(o.theta)
            base = o.xy + np.array(
                [c * self.local[0] - s * self.local[1], s * self.local[0] + c * self.local[1]]
            )
        return base + np.array(self.world)


@dataclass(frozen=True)
class Phase:
    targets: dict[int, TargetSpec]
    grip: dict[int, bool] = field(default_factory=dict)
    tol: float | None = None


@dataclass(frozen=True)
class Milestone:
    name: str
    check: Callable[[Scene, np.ndarray, Embodiment, WorldParams], bool]


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    milestones: tuple[Milestone, ...]
    build_targets: Callable[[FactorConfig, Catalog, Rect, np.random.Generator], list[SceneObject]]
    plan: Callable[[Scene], list[Phase]]
    episode_hint: int  # nominal expert episode length at 10 Hz

    @property
    def max_score(self) -> int:
        return len(self.milestones)


def _near(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) <= tol


def _eff_xy(state: np.ndarray, emb: Embodiment, i: int) -> np.ndarray:
    lo, _ = emb.layout.pose_slices[i]
    return state[lo : lo + 2]


def _shade(color: np.ndarray, f: float) -> np.ndarray:
    return np.clip(color * f + (1.0 - f) * 0.95, 0.0, 1.0)


def _inset(region: Rect, pad: float) -> Rect:
    x0, y0 = region.x0 + pad, region.y0 + pad
    x1, y1 = max(region.x1 - pad, x0 + 1e-6), max(region.y1 - pad, y0 + 1e-6)
    return Rect(x0, y0, x1, y1)


# ---------------------------------------------------------------------------
# stack_discs: sequential dual-arm stacking (max score 3)

def _stack_targets(factors, catalog, region, rng):
    style = catalog.object_style(factors.obj)
    color = np.array(style.color)
    a = SceneObject("disc_a", "disc", color, region.sample(rng), size=style.size)
    b = SceneObject(
        "disc_b", "disc", _shade(color, 0.66), region.mirrored().sample(rng), size=style.size
    )
    return [a, b]


def _stack_plan(scene: Scene) -> list[Phase]:
    return [
        Phase({0: TargetSpec("disc_a")}, grip={0: True}),
        Phase({1: TargetSpec("disc_b")}, grip={1: True}),
        Phase({1: TargetSpec("disc_a")}, grip={1: False}),
    ]


STACK_DISCS = TaskSpec(
    task_id="stack_discs",
    milestones=(
        Milestone("grasp_left", lambda sc, st, emb, p: sc.find("disc_a").attached_to == 0),
        Milestone(
            "grasp_both",
            lambda sc, st, emb, p: sc.find("disc_a").attached_to == 0
            and sc.find("disc_b").attached_to == 1,
        ),
        Milestone(
            "stacked",
            lambda sc, st, emb, p: _near(sc.find("disc_a").xy, sc.find("disc_b").xy, STACK_TOL),
        ),
    ),
    build_targets=_stack_targets,
    plan=_stack_plan,
    episode_hint=42,
)


# ---------------------------------------------------------------------------
# press_button: fine positioning with the right effector (max score 2)

def _button_targets(factors, catalog, region, rng):
    style = catalog.object_style(factors.obj)
    return [
        SceneObject(
            "button", "button", np.array(style.color), region.mirrored().sample(rng),
            size=style.size,
        )
    ]


def _press_plan(scene: Scene) -> list[Phase]:
    return [
        Phase({1: TargetSpec("button", world=(0.0, 0.05))}, tol=0.02),
        Phase({1: TargetSpec("button")}, grip={1: True}),
    ]


PRESS_BUTTON = TaskSpec(
    task_id="press_button",
    milestones=(
        Milestone(
            "hover",
            lambda sc, st, emb, p: _near(_eff_xy(st, emb, 1), sc.find("button").xy, HOVER_TOL),
        ),
        Milestone(
            "press",
            lambda sc, st, emb, p: _near(_eff_xy(st, emb, 1), sc.find("button").xy, PRESS_TOL)
            and emb.grip_active(st, 1, p),
        ),
    ),
    build_targets=_button_targets,
    plan=_press_plan,
    episode_hint=28,
)


# ---------------------------------------------------------------------------
# lift_bar: synchronized bimanual lift (max score 2)

BAR_GRIP = 0.095  # grasp points, distance from bar center


def _bar_targets(factors, catalog, region, rng):
    style = catalog.object_style(factors.obj)
    bar_r = 0.12 * style.size
    c = _inset(region, bar_r).sample(rng)
    c[0] = np.clip(c[0] + 0.5 - (region.x0 + region.x1) / 2.0, bar_r, 1.0 - bar_r)
    bar = SceneObject("bar", "bar", np.array(style.color), c, theta=0.0, size=style.size)
    bar.init_xy = c.copy()
    return [bar]


def _bar_ends_grasped(sc, st, emb, p):
    bar = sc.find("bar")
    c, s = np.cos(bar.theta), np.sin(bar.theta)
    left = bar.xy + np.array([-c * BAR_GRIP, -s * BAR_GRIP])
    right = bar.xy + np.array([c * BAR_GRIP, s * BAR_GRIP])
    return (
        _near(_eff_xy(st, emb, 0), left, p.grasp_radius * 1.5)
        and _near(_eff_xy(st, emb, 1), right, p.grasp_radius * 1.5)
        and emb.grip_active(st, 0, p)
        and emb.grip_active(st, 1, p)
    )


def _bar_lifted(sc, st, emb, p):
    bar = sc.find("bar")
    return _bar_ends_grasped(sc, st, emb, p) and (bar.xy[1] - bar.init_xy[1]) > LIFT_HEIGHT


def _bar_plan(scene: Scene) -> list[Phase]:
    lift = (0.0, LIFT_HEIGHT + 0.05)
    return [
        Phase(
            {0: TargetSpec("bar", local=(-BAR_GRIP, 0.0)), 1: TargetSpec("bar", local=(BAR_GRIP, 0.0))},
            grip={0: True, 1: True},
        ),
        Phase(
            {
                0: TargetSpec("bar", local=(-BAR_GRIP, 0.0), world=lift),
                1: TargetSpec("bar", local=(BAR_GRIP, 0.0), world=lift),
            }
        ),
    ]


LIFT_BAR = TaskSpec(
    task_id="lift_bar",
    milestones=(
        Milestone("grasp_ends", _bar_ends_grasped),
        Milestone("lifted", _bar_lifted),
    ),
    build_targets=_bar_targets,
    plan=_bar_plan,
    episode_hint=34,
)


# ---------------------------------------------------------------------------
# lid_insert: long-horizon uncover-and-place (max score 3)

def _lid_targets(factors, catalog, region, rng):
    style = catalog.object_style(factors.obj)
    color = np.array(style.color)
    pot_xy = _inset(region.mirrored(), 0.08).sample(rng)
    pot = SceneObject("pot", "pot", _shade(color, 0.45), pot_xy, size=style.size, graspable=False)
    lid = SceneObject("lid", "lid", _shade(color, 0.8), pot_xy.copy(), size=style.size)
    item = SceneObject("item", "item", color, region.sample(rng), size=style.size)
    return [pot, lid, item]


def _lid_plan(scene: Scene) -> list[Phase]:
    pot = scene.find("pot")
    park = np.clip(pot.xy + np.array([0.18, -0.16]), 0.06, 0.94)
    return [
        Phase({0: TargetSpec("item")}, grip={0: True}),
        Phase({1: TargetSpec("lid")}, grip={1: True}),
        Phase({1: TargetSpec(world=tuple(park))}, grip={1: False}),
        Phase({0: TargetSpec("pot")}, grip={0: False}),
    ]


LID_INSERT = TaskSpec(
    task_id="lid_insert",
    milestones=(
        Milestone("grasp_item", lambda sc, st, emb, p: sc.find("item").attached_to != -1),
        Milestone(
            "lid_clear",
            lambda sc, st, emb, p: not _near(sc.find("lid").xy, sc.find("pot").xy, LID_CLEAR),
        ),
        Milestone(
            "inserted",
            lambda sc, st, emb, p: _near(sc.find("item").xy, sc.find("pot").xy, INSERT_TOL)
            and sc.find("item").attached_to == -1,
        ),
    ),
    build_targets=_lid_targets,
    plan=_lid_plan,
    episode_hint=60,
)


TASKS: dict[str, TaskSpec] = {
    t.task_id: t for t in (STACK_DISCS, PRESS_BUTTON, LIFT_BAR, LID_INSERT)
}


def get_task(task_id: str) -> TaskSpec:
    if task_id not in TASKS:
        raise GenerationError(f"unknown task {task_id!r} (known: {sorted(TASKS)})")
    return TASKS[task_id]


def score_rollout(
    trace,
    task: TaskSpec,
    emb: Embodiment,
    params: WorldParams | None = None,
) -> int:
    """Deepest milestone reached in order over a (scene, state) trace."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    params = params or WorldParams()
    k = 0
    for scene, state in trace:
        while k < task.max_score and task.milestones[k].check(scene, state, emb, params):
            k += 1
        if k == task.max_score:
            break
    return k
