import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotrain import pose


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_quat(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def random_pose3(rng):
    return np.concatenate([rng.uniform(-2, 2, 3), random_quat(rng)])


def axis_angle_quat(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis /= np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


class TestPlanar:
    def test_identity(self):
        p = np.array([0.3, 0.7, 1.1])
        np.testing.assert_allclose(pose.relative_action(p, p), np.zeros(3), atol=1e-15)

    def test_pure_translation(self):
        base = np.zeros(3)
        target = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(pose.relative_action(base, target), [1, 0, 0], atol=1e-15)

    def test_translation_in_base_frame(self):
        # base rotated 90 deg: a world +x offset is a -y offset in base frame
        base = np.array([0.0, 0.0, np.pi / 2])
        target = np.array([1.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(
            pose.relative_action(base, target), [0.0, -1.0, 0.0], atol=1e-12
        )

    def test_compose_identity(self):
        p = np.array([0.2, -0.4, 0.5])
        np.testing.assert_allclose(pose.compose(p, np.zeros(3)), p, atol=1e-15)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        base = np.array([*rng.uniform(-2, 2, 2), rng.uniform(-np.pi, np.pi)])
        target = np.array([*rng.uniform(-2, 2, 2), rng.uniform(-np.pi, np.pi)])
        back = pose.compose(base, pose.relative_action(base, target))
        np.testing.assert_allclose(back[:2], target[:2], atol=1e-9)
        assert abs(pose.wrap_angle(back[2] - target[2])) < 1e-9


class TestSpatial:
    def test_relative_rotation_about_z(self):
        # 90 deg then 180 deg about z: the delta is 90 deg about z, which the
        # rotation-matrix oracle must agree with
        base = np.concatenate([np.zeros(3), axis_angle_quat([0, 0, 1], np.pi / 2)])
        target = np.concatenate([np.zeros(3), axis_angle_quat([0, 0, 1], np.pi)])
        delta = pose.relative_action(base, target)
        expected = quat_to_matrix(base[3:]).T @ quat_to_matrix(target[3:])
        np.testing.assert_allclose(quat_to_matrix(delta[3:]), expected, atol=1e-12)
        np.testing.assert_allclose(
            quat_to_matrix(delta[3:]), quat_to_matrix(axis_angle_quat([0, 0, 1], np.pi / 2)),
            atol=1e-12,
        )

    def test_matrix_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            base, target = random_pose3(rng), random_pose3(rng)
            delta = pose.relative_action(base, target)
            np.testing.assert_allclose(
                quat_to_matrix(delta[3:]),
                quat_to_matrix(base[3:]).T @ quat_to_matrix(target[3:]),
                atol=1e-10,
            )
            np.testing.assert_allclose(
                delta[:3], quat_to_matrix(base[3:]).T @ (target[:3] - base[:3]), atol=1e-10
            )

    def test_canonical_w_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            out = pose.compose(random_pose3(rng), random_pose3(rng) * [1, 1, 1, 1, -1, -1, -1])
            assert out[3] >= 0
            assert abs(np.linalg.norm(out[3:]) - 1.0) < 1e-12

    def test_non_unit_quaternion_rejected(self):
        bad = np.array([0, 0, 0, 1.1, 0, 0, 0])
        with pytest.raises(ValueError, match="not unit"):
            pose.compose(bad, pose.identity_pose("3d"))

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        base, target = random_pose3(rng), random_pose3(rng)
        back = pose.compose(base, pose.relative_action(base, target))
        np.testing.assert_allclose(back[:3], target[:3], atol=1e-9)
        # canonical quaternions are identical up to 1e-9
        np.testing.assert_allclose(back[3:], target[3:], atol=1e-9)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="pose"):
        pose.compose(np.zeros(3), np.zeros(7))
    with pytest.raises(ValueError, match="entries"):
        pose.relative_action(np.zeros(4), np.zeros(4))
