from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from splatinsert.scene import CameraIntrinsics
from splatinsert.splats import SplatModel
from splatinsert.synthetic import generate_scene


@pytest.fixture(scope="session")
def plain_scene(tmp_path_factory) -> Path:
    """Small synthetic scene without an occluder, shared read-only."""
    root = tmp_path_factory.mktemp("scene_plain")
    generate_scene(root, num_frames=8, resolution=96, num_tracks=12, seed=0)
    return root


@pytest.fixture(scope="session")
def occluder_scene(tmp_path_factory) -> Path:
    """Synthetic scene with a box floating in front of the plane."""
    root = tmp_path_factory.mktemp("scene_occ")
    generate_scene(root, num_frames=6, resolution=96, num_tracks=12, seed=1, occluder=True)
    return root


def small_intrinsics(size: int = 64) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=float(size), fy=float(size),
        cx=(size - 1) / 2.0, cy=(size - 1) / 2.0,
        width=size, height=size,
    )


def random_model(rng: np.random.Generator, n: int, spread: float = 0.5) -> SplatModel:
    """Random splats in front of the camera around z=2."""
    positions = np.column_stack([
        rng.uniform(-spread, spread, n),
        rng.uniform(-spread, spread, n),
        rng.uniform(1.5, 2.5, n),
    ])
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    sh = np.zeros((n, 3, 16))
    sh[:, :, 0] = rng.uniform(-0.5, 0.5, (n, 3))
    sh[:, :, 1:] = rng.uniform(-0.05, 0.05, (n, 3, 15))
    return SplatModel(
        positions=positions,
        scales=rng.uniform(0.02, 0.1, (n, 3)),
        rotations=q,
        opacities=rng.uniform(0.3, 0.95, n),
        sh=sh,
    )
