"""Trajectory post-processing: relative-action derivation, temporal
resampling, and static-segment pruning.

All three stages are pure functions over Episodes.  They are layout-driven:
a TrajectoryLayout says where each effector's pose block lives inside the
state/action vectors and which entries are next-frame passthrough values
(gripper commands, fingertip offsets).

Conventions: action[t] carries the pose deltas moving state t to state t+1
(base-frame composition, see :mod:`cotrain.pose`); passthrough entries of
action[t] equal the corresponding state entries at t+1.  The final action
of an episode is a hold (zero deltas, own-state passthrough).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import pose
from .data import Episode
from .errors import ConfigError, DatasetError

POSE_WIDTH = {"2d": 3, "3d": 7}


@dataclass(frozen=True)
class TrajectoryLayout:
    mode: str  # "2d" or "3d"
    pose_slices: tuple[tuple[int, int], ...]
    gripper_indices: tuple[int, ...] = ()
    aux_indices: tuple[int, ...] = ()

    def __post_init__(self):
        width = POSE_WIDTH[self.mode]
        for lo, hi in self.pose_slices:
            if hi - lo != width:
                raise ConfigError(f"pose slice ({lo}, {hi}) width != {width} for {self.mode}")

    @property
    def passthrough(self) -> tuple[int, ...]:
        return self.gripper_indices + self.aux_indices


def derive_relative_actions(states: np.ndarray, layout: TrajectoryLayout) -> np.ndarray:
    """Rebuild the action sequence from an absolute state trajectory."""
    T = states.shape[0]
    actions = np.zeros_like(states)
    for t in range(T - 1):
        for lo, hi in layout.pose_slices:
            actions[t, lo:hi] = pose.relative_action(states[t, lo:hi], states[t + 1, lo:hi])
        for i in layout.passthrough:
            actions[t, i] = states[t + 1, i]
    # final action holds: identity deltas, own-state passthrough
    if layout.mode == "3d":
        for lo, hi in layout.pose_slices:
            actions[T - 1, lo + 3] = 1.0  # unit quaternion w
    for i in layout.passthrough:
        actions[T - 1, i] = states[T - 1, i]
    return actions


def relativize(episode: Episode, layout: TrajectoryLayout) -> Episode:
    """Replace the action track with relative actions derived from states."""
    return replace(episode, actions=derive_relative_actions(episode.states, layout))


def resample(episode: Episode, target_hz: float, layout: TrajectoryLayout) -> Episode:
    """Downsample to target_hz keeping nearest-source-index frames.

    Frame 0 is always kept; relative actions are re-derived between the
    retained poses rather than summed, so the composed pose chain is
    preserved exactly.  Identity at equal rates.
    """
    if target_hz <= 0:
        raise ConfigError(f"target_hz must be positive, got {target_hz}")
    if target_hz > episode.frequency_hz:
        raise ConfigError(
            f"cannot upsample: target {target_hz} Hz > source {episode.frequency_hz} Hz"
        )
    T = len(episode)
    ratio = episode.frequency_hz / target_hz
    indices = []
    k = 0
    while True:
        i = int(np.floor(k * ratio + 0.5))
        if i > T - 1:
            break
        indices.append(i)
        k += 1
    idx = np.array(indices)
    states = episode.states[idx]
    return replace(
        episode,
        observations=episode.observations[idx],
        states=states,
        actions=derive_relative_actions(states, layout),
        frequency_hz=float(target_hz),
    )


def step_motion(states: np.ndarray, actions: np.ndarray, layout: TrajectoryLayout) -> np.ndarray:
    """Per-step motion magnitude: norm of pose deltas plus aux changes."""
    T = states.shape[0]
    motion = np.zeros(T)
    width = POSE_WIDTH[layout.mode]
    for t in range(T):
        parts = []
        for lo, hi in layout.pose_slices:
            d = actions[t, lo:hi].astype(float)
            if layout.mode == "2d":
                parts.append(d)  # (dx, dy, dtheta)
            else:
                # translation plus rotation angle of the delta quaternion
                parts.append(d[:3])
                parts.append([2.0 * np.arccos(np.clip(abs(d[3]), -1.0, 1.0))])
        for i in layout.aux_indices:
            parts.append([actions[t, i] - states[t, i]])
        motion[t] = np.linalg.norm(np.concatenate([np.atleast_1d(p) for p in parts]))
    return motion


def gripper_changes(states: np.ndarray, actions: np.ndarray, layout: TrajectoryLayout) -> np.ndarray:
    """True where any gripper command differs from the current gripper state."""
    T = states.shape[0]
    if not layout.gripper_indices:
        return np.zeros(T, dtype=bool)
    g = list(layout.gripper_indices)
    return np.any(np.abs(actions[:, g] - states[:, g]) > 0.5, axis=1)


def prune_static(
    episode: Episode,
    motion_threshold: float = 1e-4,
    gripper_changes_count: bool = True,
    layout: TrajectoryLayout | None = None,
) -> Episode:
    """Trim the static prefix and suffix of an episode.

    A step is static when its motion magnitude is below the threshold and,
    if ``gripper_changes_count``, its gripper command matches the current
    gripper state.  Interior static spans are untouched; the landing frame
    of the last moving step is retained so at least 2 frames remain.
    """
    if layout is None:
        raise ConfigError("prune_static requires a trajectory layout")
    motion = step_motion(episode.states, episode.actions, layout)
    moving = motion >= motion_threshold
    if gripper_changes_count:
        moving |= gripper_changes(episode.states, episode.actions, layout)
    if not moving.any():
        raise DatasetError("no motion content: entire episode is static")
    first = int(np.argmax(moving))
    last = len(moving) - 1 - int(np.argmax(moving[::-1]))
    stop = min(last + 2, len(episode))
    sl = slice(first, stop)
    return replace(
        episode,
        observations=episode.observations[sl],
        states=episode.states[sl],
        actions=episode.actions[sl],
    )
