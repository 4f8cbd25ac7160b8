"""Scene model, embodiments, scene generation, and kinematic stepping.

The world is a 2D tabletop in [0, 1] x [0, 1] workspace units with two
effectors.  Dynamics are kinematic: effector poses integrate relative
actions, grasping snap-attaches the nearest object within reach, and
attached objects move rigidly with their effector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .. import pose
from ..data import DomainTag, FactorConfig
from ..errors import ConfigError, GenerationError
from ..pipeline import TrajectoryLayout
from .catalog import Catalog, Rect

WORKSPACE = Rect(0.0, 0.0, 1.0, 1.0)

# base radii in workspace units, scaled by object style size
SHAPE_RADIUS = {
    "disc": 0.055,
    "square": 0.045,
    "triangle": 0.05,
    "ring": 0.05,
    "hex": 0.05,
    "bar": 0.12,  # half-length; half-width fixed in render
    "item": 0.035,
    "pot": 0.075,
    "lid": 0.045,
    "button": 0.045,
}


@dataclass
class SceneObject:
    name: str
    shape: str
    color: np.ndarray  # (3,) in [0, 1]
    xy: np.ndarray  # (2,)
    theta: float = 0.0
    size: float = 1.0
    graspable: bool = True
    attached_to: int = -1  # effector index, -1 = free
    grip_offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    grip_dtheta: float = 0.0
    init_xy: np.ndarray | None = None  # spawn position, for displacement predicates

    @property
    def radius(self) -> float:
        return SHAPE_RADIUS[self.shape] * self.size

    def grasp_distance(self, xy: np.ndarray) -> float:
        """Distance from a point to the graspable body of the object.

        Elongated shapes are graspable anywhere along their axis, compact
        shapes at their center.
        """
        rel = np.asarray(xy) - self.xy
        if self.shape == "bar":
            c, s = np.cos(self.theta), np.sin(self.theta)
            along = np.clip(c * rel[0] + s * rel[1], -self.radius, self.radius)
            return float(np.linalg.norm(rel - along * np.array([c, s])))
        return float(np.linalg.norm(rel))

    def copy(self) -> "SceneObject":
        return replace(
            self,
            color=self.color.copy(),
            xy=self.xy.copy(),
            grip_offset=self.grip_offset.copy(),
            init_xy=None if self.init_xy is None else self.init_xy.copy(),
        )


@dataclass
class Scene:
    objects: list[SceneObject]
    distractors: list[SceneObject]
    background: str
    light_gain: float
    light_tint: np.ndarray  # (3,)
    workspace: Rect = WORKSPACE

    def copy(self) -> "Scene":
        return Scene(
            objects=[o.copy() for o in self.objects],
            distractors=[o.copy() for o in self.distractors],
            background=self.background,
            light_gain=self.light_gain,
            light_tint=self.light_tint.copy(),
            workspace=self.workspace,
        )

    def all_objects(self) -> list[SceneObject]:
        return self.objects + self.distractors

    def find(self, name: str) -> SceneObject:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(f"no scene object named {name!r}")


@dataclass(frozen=True)
class Embodiment:
    """GRIPPER is the robot body (shared by SIM and REAL), HAND the human."""

    kind: str  # "gripper" | "hand"
    state_dim: int
    action_dim: int
    n_effectors: int = 2

    @property
    def layout(self) -> TrajectoryLayout:
        if self.kind == "gripper":
            return TrajectoryLayout(
                mode="2d", pose_slices=((0, 3), (4, 7)), gripper_indices=(3, 7)
            )
        return TrajectoryLayout(
            mode="2d", pose_slices=((0, 3), (3, 6)), aux_indices=tuple(range(6, 22))
        )

    def effector_pose(self, state: np.ndarray, i: int) -> np.ndarray:
        lo, hi = self.layout.pose_slices[i]
        return state[lo:hi]

    def grip_active(self, state: np.ndarray, i: int, params: "WorldParams") -> bool:
        if self.kind == "gripper":
            return state[4 * i + 3] > 0.5
        tips = fingertips(state, i)
        return float(np.mean(np.linalg.norm(tips, axis=1))) < params.pinch_threshold


GRIPPER = Embodiment(kind="gripper", state_dim=8, action_dim=8)
HAND = Embodiment(kind="hand", state_dim=22, action_dim=22)


def embodiment_for(domain: DomainTag) -> Embodiment:
    return GRIPPER if domain.is_robot else HAND


def fingertips(state: np.ndarray, hand: int) -> np.ndarray:
    """(4, 2) fingertip offsets of one hand, wrist-frame coordinates."""
    lo = 6 + 8 * hand
    return state[lo : lo + 8].reshape(4, 2)


def rest_fingertips(radius: float) -> np.ndarray:
    ang = np.array([0.4, 1.2, 1.9, 2.6])
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


@dataclass(frozen=True)
class WorldParams:
    grasp_radius: float = 0.07
    pinch_threshold: float = 0.03
    hand_rest_offset: float = 0.055
    hand_closed_offset: float = 0.014
    step_size: float = 0.045  # max translation per control step
    arrive_tol: float = 0.012
    max_phase_steps: int = 90
    placement_retries: int = 200


def home_state(emb: Embodiment, params: WorldParams | None = None) -> np.ndarray:
    params = params or WorldParams()
    if emb.kind == "gripper":
        return np.array([0.30, 0.14, 0.0, 0.0, 0.70, 0.14, 0.0, 0.0])
    state = np.zeros(22)
    state[0:3] = (0.30, 0.14, 0.0)
    state[3:6] = (0.70, 0.14, 0.0)
    rest = rest_fingertips(params.hand_rest_offset).ravel()
    state[6:14] = rest
    state[14:22] = rest
    return state


# ---------------------------------------------------------------------------
# scene generation

TargetBuilder = Callable[[FactorConfig, Catalog, Rect, np.random.Generator], list[SceneObject]]


def _collision_free(xy: np.ndarray, radius: float, placed: list[SceneObject], margin: float) -> bool:
    for o in placed:
        if np.linalg.norm(xy - o.xy) < radius + o.radius + margin:
            return False
    return True


def generate_scene(
    task,
    factors: FactorConfig,
    catalog: Catalog,
    rng: np.random.Generator,
    init_override: Rect | None = None,
    params: WorldParams | None = None,
) -> Scene:
    """Sample a scene: targets uniform in the init region, distractors
    collision-free with the targets."""
    params = params or WorldParams()
    catalog.check(factors)
    region = init_override if init_override is not None else catalog.init_region(factors.init)
    targets = task.build_targets(factors, catalog, region, rng)
    dist_set = catalog.distractor_set(factors.dist)
    if factors.dist_count > 0 and not dist_set:
        raise ConfigError(f"distractor set {factors.dist!r} is empty but count > 0")
    light = catalog.light(factors.light)
    distractors = []
    envelope = Rect(0.05, 0.08, 0.95, 0.92)
    for j in range(factors.dist_count):
        shape, color = dist_set[int(rng.integers(0, len(dist_set)))]
        size = float(rng.uniform(0.7, 1.1))
        radius = SHAPE_RADIUS[shape] * size
        for attempt in range(params.placement_retries):
            xy = envelope.sample(rng)
            if _collision_free(xy, radius, targets, margin=0.03):
                break
        else:
            raise GenerationError(
                f"cannot place distractor {j} after {params.placement_retries} retries"
            )
        distractors.append(
            SceneObject(
                name=f"dist_{j}", shape=shape, color=np.array(color), xy=xy,
                theta=float(rng.uniform(-np.pi, np.pi)), size=size,
            )
        )
    return Scene(
        objects=targets,
        distractors=distractors,
        background=factors.bg,
        light_gain=light.gain,
        light_tint=np.array(light.tint),
    )


# ---------------------------------------------------------------------------
# dynamics

def _attach(scene: Scene, eff_xy: np.ndarray, eff_theta: float, eff_i: int, params: WorldParams):
    free = [o for o in scene.all_objects() if o.attached_to == -1 and o.graspable]
    if not free:
        return
    dists = [o.grasp_distance(eff_xy) for o in free]
    k = int(np.argmin(dists))
    if dists[k] <= params.grasp_radius:
        obj = free[k]
        obj.attached_to = eff_i
        c, s = np.cos(-eff_theta), np.sin(-eff_theta)
        rel = obj.xy - eff_xy
        obj.grip_offset = np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]])
        obj.grip_dtheta = obj.theta - eff_theta


def _detach(scene: Scene, eff_i: int):
    for o in scene.all_objects():
        if o.attached_to == eff_i:
            o.attached_to = -1


def _carry(scene: Scene, eff_xy: np.ndarray, eff_theta: float, eff_i: int):
    c, s = np.cos(eff_theta), np.sin(eff_theta)
    for o in scene.all_objects():
        if o.attached_to == eff_i:
            off = o.grip_offset
            o.xy = eff_xy + np.array([c * off[0] - s * off[1], s * off[0] + c * off[1]])
            o.theta = eff_theta + o.grip_dtheta


def step(
    state: np.ndarray,
    action: np.ndarray,
    scene: Scene,
    emb: Embodiment,
    params: WorldParams | None = None,
) -> tuple[np.ndarray, Scene]:
    """Advance one control step; returns fresh (state, scene) copies."""
    params = params or WorldParams()
    if action.shape != (emb.action_dim,):
        raise ValueError(f"action shape {action.shape} != ({emb.action_dim},)")
    if not np.isfinite(action).all():
        raise ValueError("non-finite entries in action")
    new_state = state.astype(float).copy()
    new_scene = scene.copy()
    layout = emb.layout
    for i, (lo, hi) in enumerate(layout.pose_slices):
        new_pose = pose.compose_2d(state[lo:hi], action[lo:hi])
        new_pose[0] = np.clip(new_pose[0], 0.0, 1.0)
        new_pose[1] = np.clip(new_pose[1], 0.0, 1.0)
        new_state[lo:hi] = new_pose
    # passthrough entries adopt the commanded values
    for idx in layout.passthrough:
        new_state[idx] = action[idx]
    for i, (lo, hi) in enumerate(layout.pose_slices):
        was = emb.grip_active(state, i, params)
        now = emb.grip_active(new_state, i, params)
        eff_xy, eff_theta = new_state[lo : lo + 2], new_state[lo + 2]
        if now and not was:
            _attach(new_scene, eff_xy, eff_theta, i, params)
        elif was and not now:
            _detach(new_scene, i)
        _carry(new_scene, eff_xy, eff_theta, i)
    return new_state, new_scene
