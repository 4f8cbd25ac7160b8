import numpy as np
import pytest

from cotrain import pose
from cotrain.data import DomainTag, Episode
from cotrain.errors import ConfigError, DatasetError
from cotrain.pipeline import (
    TrajectoryLayout,
    derive_relative_actions,
    prune_static,
    relativize,
    resample,
    step_motion,
)
from cotrain.world import GRIPPER, HAND

from conftest import make_factors

ROBOT = GRIPPER.layout


def robot_episode(states: np.ndarray, hz=30.0) -> Episode:
    T = states.shape[0]
    return Episode(
        domain=DomainTag.REAL,
        task="stack_discs",
        factors=make_factors(),
        frequency_hz=hz,
        observations=np.zeros((T, 4, 4, 3), dtype=np.uint8),
        states=states,
        actions=derive_relative_actions(states, ROBOT),
    )


def smooth_states(T: int, seed=0) -> np.ndarray:
    """Random smooth dual-arm trajectory with a gripper toggle mid-way."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, T)
    states = np.zeros((T, 8))
    for arm, lo in ((0, 0), (1, 4)):
        f = rng.uniform(0.5, 2.0, 3)
        ph = rng.uniform(0, np.pi, 3)
        states[:, lo + 0] = 0.5 + 0.3 * np.sin(2 * np.pi * f[0] * t + ph[0])
        states[:, lo + 1] = 0.5 + 0.3 * np.cos(2 * np.pi * f[1] * t + ph[1])
        states[:, lo + 2] = 0.8 * np.sin(2 * np.pi * f[2] * t + ph[2])
        states[T // 2 :, lo + 3] = 1.0
    return states


def compose_chain(start_poses, actions, layout):
    poses = [p.copy() for p in start_poses]
    for a in actions:
        for i, (lo, hi) in enumerate(layout.pose_slices):
            poses[i] = pose.compose(poses[i], a[lo:hi])
    return poses


class TestResample:
    def test_90_at_30hz_gives_30_frames(self):
        ep = robot_episode(smooth_states(90), hz=30.0)
        out = resample(ep, 10.0, ROBOT)
        assert len(out) == 30
        assert out.frequency_hz == 10.0
        np.testing.assert_array_equal(out.observations[0], ep.observations[0])
        np.testing.assert_array_equal(out.states[0], ep.states[0])
        # exact stride 3
        np.testing.assert_array_equal(out.states, ep.states[::3])

    def test_equal_rate_identity(self):
        ep = robot_episode(smooth_states(20), hz=30.0)
        out = resample(ep, 30.0, ROBOT)
        np.testing.assert_array_equal(out.states, ep.states)
        np.testing.assert_array_equal(out.actions, ep.actions)
        np.testing.assert_array_equal(out.observations, ep.observations)

    def test_pose_chain_preserved(self):
        # composing the 10 Hz relative actions must land on the same final
        # pose as composing the 30 Hz chain up to the last retained frame
        ep = robot_episode(smooth_states(91, seed=3), hz=30.0)
        out = resample(ep, 10.0, ROBOT)
        last_src = 3 * (len(out) - 1)
        start = [ep.states[0, lo:hi] for lo, hi in ROBOT.pose_slices]
        fine = compose_chain(start, ep.actions[:last_src], ROBOT)
        coarse = compose_chain(start, out.actions[: len(out) - 1], ROBOT)
        for f, c in zip(fine, coarse):
            np.testing.assert_allclose(f[:2], c[:2], atol=1e-9)
            assert abs(pose.wrap_angle(f[2] - c[2])) < 1e-9

    def test_non_integral_ratio(self):
        ep = robot_episode(smooth_states(30), hz=25.0)
        out = resample(ep, 10.0, ROBOT)
        # nearest indices of k*2.5: 0, 3 (2.5 rounds up), 5, 8, 10, ...
        expected = [int(np.floor(k * 2.5 + 0.5)) for k in range(12)]
        np.testing.assert_array_equal(out.states, ep.states[expected])

    def test_passthrough_from_next_retained_frame(self):
        ep = robot_episode(smooth_states(90), hz=30.0)
        out = resample(ep, 10.0, ROBOT)
        for k in range(len(out) - 1):
            assert out.actions[k, 3] == ep.states[3 * (k + 1), 3]
            assert out.actions[k, 7] == ep.states[3 * (k + 1), 7]

    def test_bad_rates(self):
        ep = robot_episode(smooth_states(10), hz=10.0)
        with pytest.raises(ConfigError, match="positive"):
            resample(ep, 0.0, ROBOT)
        with pytest.raises(ConfigError, match="upsample"):
            resample(ep, 20.0, ROBOT)


def static_pad_episode(lead=10, motion=8, tail=5, toggle_at_end_of_lead=False):
    T = lead + motion + tail
    states = np.zeros((T, 8))
    states[:, 0] = 0.2
    states[:, 4] = 0.8
    x = 0.2
    for t in range(lead, lead + motion):
        x += 0.03
        states[t:, 0] = x
    if toggle_at_end_of_lead:
        states[lead:, 3] = 1.0  # gripper closes on the step lead-1 -> lead
    ep = robot_episode(states, hz=10.0)
    return ep


class TestPruneStatic:
    def test_leading_static_removed(self):
        ep = static_pad_episode(lead=10, motion=8, tail=5)
        out = prune_static(ep, 1e-6, gripper_changes_count=True, layout=ROBOT)
        np.testing.assert_array_equal(out.states[0], ep.states[10])
        # motion steps 10..17 plus the landing frame 18
        assert len(out) == 8 + 1

    def test_motion_throughout_unchanged(self):
        states = smooth_states(24)
        ep = robot_episode(states, hz=10.0)
        out = prune_static(ep, 1e-6, gripper_changes_count=True, layout=ROBOT)
        assert len(out) == len(ep)

    def test_gripper_toggle_stops_prefix(self):
        # hand-built: static prefix whose final step toggles the gripper;
        # with the flag on, the toggle step survives
        ep = static_pad_episode(lead=10, motion=8, tail=5, toggle_at_end_of_lead=True)
        with_flag = prune_static(ep, 1e-6, gripper_changes_count=True, layout=ROBOT)
        np.testing.assert_array_equal(with_flag.states[0], ep.states[9])
        without = prune_static(ep, 1e-6, gripper_changes_count=False, layout=ROBOT)
        np.testing.assert_array_equal(without.states[0], ep.states[10])

    def test_all_static_rejected(self):
        states = np.tile(np.array([0.2, 0.2, 0.0, 0.0, 0.8, 0.2, 0.0, 0.0]), (6, 1))
        ep = robot_episode(states, hz=10.0)
        with pytest.raises(DatasetError, match="no motion content"):
            prune_static(ep, 1e-6, gripper_changes_count=True, layout=ROBOT)

    def test_never_removes_motion_and_never_grows(self):
        for seed in range(5):
            states = smooth_states(30, seed=seed)
            states[:4] = states[4]  # static head
            ep = robot_episode(states, hz=10.0)
            out = prune_static(ep, 1e-6, gripper_changes_count=True, layout=ROBOT)
            assert len(out) <= len(ep)
            motion = step_motion(ep.states, ep.actions, ROBOT)
            moving_frames = np.flatnonzero(motion >= 1e-6)
            assert len(out) >= len(moving_frames)

    def test_missing_layout(self):
        ep = robot_episode(smooth_states(10), hz=10.0)
        with pytest.raises(ConfigError, match="layout"):
            prune_static(ep, 1e-6, True, None)


class TestRelativize:
    def test_roundtrip_states(self):
        states = smooth_states(25, seed=9)
        ep = robot_episode(states, hz=10.0)
        out = relativize(ep, ROBOT)
        start = [states[0, lo:hi] for lo, hi in ROBOT.pose_slices]
        final = compose_chain(start, out.actions[:-1], ROBOT)
        for i, (lo, hi) in enumerate(ROBOT.pose_slices):
            np.testing.assert_allclose(final[i][:2], states[-1, lo : lo + 2], atol=1e-9)

    def test_final_action_is_hold(self):
        ep = robot_episode(smooth_states(12), hz=10.0)
        last = ep.actions[-1]
        np.testing.assert_allclose(last[[0, 1, 2, 4, 5, 6]], 0.0, atol=1e-15)
        assert last[3] == ep.states[-1, 3]

    def test_human_layout_fingertips_passthrough(self):
        layout = HAND.layout
        T = 6
        states = np.zeros((T, 22))
        states[:, 0] = np.linspace(0.2, 0.5, T)
        states[:, 6:] = np.linspace(0.01, 0.06, T)[:, None]
        actions = derive_relative_actions(states, layout)
        for t in range(T - 1):
            np.testing.assert_array_equal(actions[t, 6:], states[t + 1, 6:])
