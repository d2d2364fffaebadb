"""Quaternion utilities checked against scipy's Rotation as an oracle.

scipy stores quaternions xyzw; ours are wxyz, so tests convert explicitly.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from splatinsert.rotations import (
    axis_angle_to_quat,
    matrix_to_quat,
    quat_angle,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
    quats_to_matrices,
)


def to_scipy(q_wxyz):
    w, x, y, z = q_wxyz
    return Rotation.from_quat([x, y, z, w])


unit_quats = st.builds(
    lambda a, b, c, d: np.array([a, b, c, d]),
    *[st.floats(-1, 1, allow_nan=False) for _ in range(4)],
).filter(lambda q: np.linalg.norm(q) > 1e-3).map(lambda q: q / np.linalg.norm(q))


@given(unit_quats)
@settings(max_examples=50, deadline=None)
def test_quat_to_matrix_matches_scipy(q):
    ours = quat_to_matrix(q)
    ref = to_scipy(q).as_matrix()
    np.testing.assert_allclose(ours, ref, atol=1e-12)


@given(unit_quats, unit_quats)
@settings(max_examples=50, deadline=None)
def test_quat_multiply_matches_matrix_product(q1, q2):
    prod = quat_multiply(q1, q2)
    np.testing.assert_allclose(
        quat_to_matrix(prod), quat_to_matrix(q1) @ quat_to_matrix(q2), atol=1e-12
    )


@given(unit_quats)
@settings(max_examples=50, deadline=None)
def test_conjugate_inverts(q):
    ident = quat_multiply(q, quat_conjugate(q))
    assert quat_angle(ident, np.array([1.0, 0, 0, 0])) < 1e-9


def test_axis_angle_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.normal(size=3)
        q = axis_angle_to_quat(w)
        ref = Rotation.from_rotvec(w).as_matrix()
        np.testing.assert_allclose(quat_to_matrix(q), ref, atol=1e-12)


def test_axis_angle_zero_is_identity():
    q = axis_angle_to_quat(np.zeros(3))
    np.testing.assert_allclose(q, [1.0, 0, 0, 0], atol=1e-15)


def test_matrix_roundtrip_canonical_sign():
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = quat_normalize(rng.normal(size=4))
        back = matrix_to_quat(quat_to_matrix(q))
        assert back[0] >= 0.0
        # same rotation regardless of sign flip
        np.testing.assert_allclose(quat_to_matrix(back), quat_to_matrix(q), atol=1e-9)


def test_quat_rotate_agrees_with_matrix():
    rng = np.random.default_rng(2)
    q = quat_normalize(rng.normal(size=4))
    pts = rng.normal(size=(7, 3))
    np.testing.assert_allclose(quat_rotate(q, pts), pts @ quat_to_matrix(q).T, atol=1e-12)


def test_quat_angle_known_values():
    ident = np.array([1.0, 0, 0, 0])
    q90 = axis_angle_to_quat(np.array([np.pi / 2, 0, 0]))
    assert quat_angle(ident, q90) == pytest.approx(np.pi / 2, abs=1e-12)
    assert quat_angle(ident, -ident) == pytest.approx(0.0, abs=1e-9)


def test_quats_to_matrices_batch():
    rng = np.random.default_rng(3)
    qs = rng.normal(size=(5, 4))
    qs /= np.linalg.norm(qs, axis=1, keepdims=True)
    batch = quats_to_matrices(qs)
    for i in range(5):
        np.testing.assert_allclose(batch[i], quat_to_matrix(qs[i]), atol=1e-14)
