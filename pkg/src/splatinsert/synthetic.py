"""Synthetic test-scene generator.

Produces a complete scene directory with analytically known ground truth: a
textured plane rigidly attached to the object frame and moved by a known pose
sequence under a static camera, a known single light, intrinsic layers that
recompose exactly, a splat-ring object resting just above the plane, and
tracked plane points. An optional camera-fixed occluder quad sits between the
camera and the object.

Camera convention: +z into the scene; visible surface normals have negative z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pfm import write_pfm
from .pose import Pose
from .rotations import axis_angle_to_quat
from .scene import CameraIntrinsics
from .scene_io import write_png
from .shading import linear_to_srgb
from .sh import C0
from .splats import NUM_SH_COEFFS, SplatModel, save_splats

PLANE_EXTENT = 4.0


@dataclass
class GroundTruth:
    intrinsics: CameraIntrinsics
    poses: list  # world (object) -> camera per frame
    light_cam: np.ndarray  # single light vector (direction * intensity), camera frame
    ambient: float
    track_points: np.ndarray  # (N, 3) world coordinates on the plane
    splats: SplatModel
    occluder: dict  # empty when disabled


def _trajectory(num_frames: int) -> list:
    poses = []
    axis = np.array([0.2, -0.3, 1.0])
    axis /= np.linalg.norm(axis)
    for t in range(num_frames):
        phase = 2.0 * np.pi * t / max(num_frames, 1)
        angle = 0.05 * np.sin(phase)
        q = axis_angle_to_quat(axis * angle)
        trans = np.array(
            [0.06 * np.sin(phase), 0.04 * np.cos(phase), 1.5 + 0.08 * np.sin(2.0 * phase)]
        )
        poses.append(Pose(q=q, t=trans))
    return poses


def _albedo_at(xy: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Smooth per-channel texture on plane coordinates, kept inside [0.1, 0.9]."""
    x, y = xy[..., 0], xy[..., 1]
    chans = [
        0.5 + 0.25 * np.sin(3.0 * x + phases[0]) * np.cos(2.0 * y + phases[1]),
        0.5 + 0.25 * np.sin(2.0 * x + phases[2]) * np.cos(3.0 * y + phases[3]),
        0.5 + 0.25 * np.cos(4.0 * x + phases[4]) * np.sin(2.5 * y + phases[5]),
    ]
    return np.clip(np.stack(chans, axis=-1), 0.1, 0.9)


def _plane_normal_world(xy: np.ndarray) -> np.ndarray:
    """Detail-mapped plane normal: flat geometry, smoothly varying normals."""
    x, y = xy[..., 0], xy[..., 1]
    n = np.stack(
        [0.25 * np.sin(5.0 * x), 0.25 * np.cos(4.0 * y), -np.ones_like(x)], axis=-1
    )
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _ring_splats(rng: np.random.Generator, n_splats: int = 36) -> SplatModel:
    angles = np.linspace(0.0, 2.0 * np.pi, n_splats, endpoint=False)
    radius = 0.22
    positions = np.stack(
        [radius * np.cos(angles), radius * np.sin(angles), np.full(n_splats, -0.04)],
        axis=1,
    )
    scales = rng.uniform(0.015, 0.03, size=(n_splats, 3))
    raw_q = rng.normal(size=(n_splats, 4))
    rotations = raw_q / np.linalg.norm(raw_q, axis=1, keepdims=True)
    opacities = rng.uniform(0.7, 0.95, size=n_splats)
    base = np.array([0.75, 0.6, 0.35])
    sh = np.zeros((n_splats, 3, NUM_SH_COEFFS))
    dc_color = np.clip(base + rng.uniform(-0.1, 0.1, size=(n_splats, 3)), 0.05, 0.95)
    sh[:, :, 0] = (dc_color - 0.5) / C0
    sh[:, :, 1:4] = rng.uniform(-0.05, 0.05, size=(n_splats, 3, 3))
    return SplatModel(
        positions=positions, scales=scales, rotations=rotations, opacities=opacities, sh=sh
    )


def _track_points(num_tracks: int, rng: np.random.Generator) -> np.ndarray:
    """Two concentric rings of plane points around the splat ring."""
    pts = []
    for i in range(num_tracks):
        ring = 0.38 if i % 2 == 0 else 0.55
        ang = 2.0 * np.pi * i / num_tracks + rng.uniform(-0.05, 0.05)
        pts.append([ring * np.cos(ang), ring * np.sin(ang), 0.0])
    return np.asarray(pts)


def generate_scene(
    out_dir,
    num_frames: int = 12,
    resolution: int = 128,
    num_tracks: int = 12,
    seed: int = 0,
    occluder: bool = False,
) -> GroundTruth:
    """Write a full synthetic scene directory and return its ground truth."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    res = int(resolution)
    K = CameraIntrinsics(
        fx=float(res), fy=float(res), cx=(res - 1) / 2.0, cy=(res - 1) / 2.0,
        width=res, height=res,
    )
    (root / "intrinsics.json").write_text(json.dumps(K.to_dict(), indent=2))

    poses = _trajectory(num_frames)
    ambient = 0.3
    light_cam = 0.55 * np.array([0.3, -0.2, -0.9]) / np.linalg.norm([0.3, -0.2, -0.9])
    phases = rng.uniform(0.0, 2.0 * np.pi, size=6)

    occ_spec: dict = {}
    if occluder:
        occ_spec = {
            "rows": [int(res * 0.15), int(res * 0.45)],
            "cols": [int(res * 0.15), int(res * 0.55)],
            "depth": 0.9,
            "albedo": 0.45,
        }

    cols, rows = np.meshgrid(np.arange(res, dtype=np.float64), np.arange(res, dtype=np.float64))
    rays = np.stack([(cols - K.cx) / K.fx, (rows - K.cy) / K.fy, np.ones_like(cols)], axis=-1)

    n_world = np.array([0.0, 0.0, -1.0])
    for t, pose in enumerate(poses):
        R = pose.rotation_matrix
        n_cam = R @ n_world
        p0_cam = pose.t  # plane origin in camera coordinates
        denom = rays @ n_cam
        s = (p0_cam @ n_cam) / denom
        depth = s.copy()

        hit_cam = rays * s[..., None]
        world = (hit_cam - pose.t) @ R  # R^T applied from the right
        xy = world[..., :2]

        albedo = _albedo_at(xy, phases)
        normal_world = _plane_normal_world(xy)
        normal_cam = normal_world @ R.T
        gray = ambient + np.maximum(np.einsum("hwc,c->hw", normal_cam, light_cam), 0.0)
        shading = np.repeat(gray[..., None], 3, axis=2)
        residual = np.zeros((res, res, 3))

        if occ_spec:
            r0, r1 = occ_spec["rows"]
            c0, c1 = occ_spec["cols"]
            box = np.zeros((res, res), dtype=bool)
            box[r0:r1, c0:c1] = True
            box &= occ_spec["depth"] < depth
            depth = np.where(box, occ_spec["depth"], depth)
            albedo = np.where(box[..., None], occ_spec["albedo"], albedo)
            n_occ = np.array([0.0, 0.0, -1.0])
            occ_gray = ambient + max(float(n_occ @ light_cam), 0.0)
            shading = np.where(box[..., None], occ_gray, shading)
            normal_cam = np.where(box[..., None], n_occ, normal_cam)

        linear = albedo * shading + residual
        write_png(root / "frames" / f"{t:05d}.png", linear_to_srgb(linear))
        write_pfm(root / "depth" / f"{t:05d}.pfm", depth.astype(np.float32))
        write_pfm(root / "normals" / f"{t:05d}.pfm", normal_cam.astype(np.float32))
        write_pfm(root / "albedo" / f"{t:05d}.pfm", albedo.astype(np.float32))
        write_pfm(root / "shading" / f"{t:05d}.pfm", shading.astype(np.float32))
        write_pfm(root / "residual" / f"{t:05d}.pfm", residual.astype(np.float32))

    track_pts = _track_points(num_tracks, rng)
    points = []
    visible = []
    for pose in poses:
        cam = pose.apply(track_pts)
        u = K.fx * cam[:, 0] / cam[:, 2] + K.cx
        v = K.fy * cam[:, 1] / cam[:, 2] + K.cy
        points.append(np.stack([u, v], axis=1).tolist())
        vis = (0 <= u) & (u < res) & (0 <= v) & (v < res)
        if occ_spec:
            # a tracker loses features that go behind the box
            r0, r1 = occ_spec["rows"]
            c0, c1 = occ_spec["cols"]
            in_box = (v >= r0) & (v < r1) & (u >= c0) & (u < c1)
            vis &= ~(in_box & (occ_spec["depth"] < cam[:, 2]))
        visible.append([bool(b) for b in vis])
    (root / "tracks.json").write_text(json.dumps({"points": points, "visible": visible}))

    splats = _ring_splats(rng)
    save_splats(root / "splats.ply", splats)

    (root / "config.json").write_text(json.dumps({"seed": seed}, indent=2))

    first = poses[0]
    # anchors mimic user picks: only points actually visible in frame 0,
    # otherwise the depth lift would sample the occluder surface
    anchor_px = [p for p, vis in zip(points[0], visible[0]) if vis]
    if len(anchor_px) < 6:
        raise ValueError(f"only {len(anchor_px)} visible track points in frame 0; need >= 6")
    placement = {
        "pose": first.to_dict(),
        "scale": 1.0,
        "anchors": anchor_px,
        "locked": True,
    }
    (root / "placement.json").write_text(json.dumps(placement, indent=2))

    gt = {
        "poses": [p.to_dict() for p in poses],
        "light_cam": light_cam.tolist(),
        "ambient": ambient,
        "track_points": track_pts.tolist(),
        "occluder": occ_spec,
    }
    (root / "gt.json").write_text(json.dumps(gt, indent=2))

    return GroundTruth(
        intrinsics=K,
        poses=poses,
        light_cam=light_cam,
        ambient=ambient,
        track_points=track_pts,
        splats=splats,
        occluder=occ_spec,
    )
