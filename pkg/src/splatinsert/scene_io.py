"""Scene directory loading, validation, and output persistence.

Layout: frames/%05d.png, depth/%05d.pfm, optional normals/albedo/shading/
residual PFM groups, tracks.json, intrinsics.json, splats.ply, config.json.
Optional groups are flagged absent when their directory is missing, never
silently defaulted.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatch,
    IoError,
    MissingFile,
    ParseError,
    ValueOutOfRange,
)
from .pfm import read_pfm, write_pfm
from .scene import (
    CameraIntrinsics,
    ColorSpace,
    DepthMap,
    Frame,
    NormalMap,
    Scene,
    SceneConfig,
    TrackSet,
)
from .splats import load_splats


def read_png(path: Path) -> np.ndarray:
    """8-bit PNG to float64 HxWx3 in [0,1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise MissingFile(str(path)) from None
    except OSError as e:
        raise ParseError(str(path), str(e)) from None
    return arr


def write_png(path: Path, image: np.ndarray) -> None:
    """Float [0,1] HxWx3 to 8-bit PNG; values are clipped then rounded."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(data, mode="RGB" if data.ndim == 3 else "L").save(path)
    except OSError as e:
        raise IoError(f"{path}: {e}") from None


def write_gray_png(path: Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(data, mode="L").save(path)
    except OSError as e:
        raise IoError(f"{path}: {e}") from None


def _load_json(path: Path) -> dict:
    if not path.exists():
        raise MissingFile(str(path))
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(str(path), str(e)) from None


def _check_dims(name: str, shape, K: CameraIntrinsics) -> None:
    if shape[0] != K.height or shape[1] != K.width:
        raise DimensionMismatch(
            f"{name}: {shape[1]}x{shape[0]} vs intrinsics {K.width}x{K.height}"
        )


def _frame_count(frames_dir: Path) -> int:
    if not (frames_dir / "00000.png").exists():
        raise MissingFile(str(frames_dir / "00000.png"))
    t = 0
    while (frames_dir / f"{t:05d}.png").exists():
        t += 1
    return t


def _load_pfm_group(root: Path, name: str, count: int, K: CameraIntrinsics):
    """Load name/%05d.pfm for all frames; None when the directory is absent."""
    group_dir = root / name
    if not group_dir.is_dir():
        return None
    maps = []
    for t in range(count):
        rel = f"{name}/{t:05d}.pfm"
        path = root / rel
        if not path.exists():
            raise MissingFile(rel)
        arr = read_pfm(path)
        _check_dims(rel, arr.shape, K)
        maps.append(arr)
    return maps


def load_tracks(path: Path, count: int, K: CameraIntrinsics) -> TrackSet:
    data = _load_json(path)
    for key in ("points", "visible"):
        if key not in data:
            raise ParseError(str(path), f"missing key {key!r}")
    points = np.asarray(data["points"], dtype=np.float64)
    visible = np.asarray(data["visible"], dtype=bool)
    if points.ndim != 3 or points.shape[2] != 2 or visible.shape != points.shape[:2]:
        raise DimensionMismatch(
            f"{path}: points {points.shape} inconsistent with visible {visible.shape}"
        )
    if points.shape[0] != count:
        raise DimensionMismatch(
            f"{path}: {points.shape[0]} track frames vs {count} video frames"
        )
    u, v = points[..., 0], points[..., 1]
    inside = (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    if np.any(visible & ~inside):
        raise ValueOutOfRange(str(path), "visible track point outside image bounds")
    return TrackSet(points=points, visibility=visible)


def load_scene(scene_dir) -> Scene:
    """Load and cross-validate a full scene directory."""
    root = Path(scene_dir)
    if not root.is_dir():
        raise MissingFile(str(root))

    K = CameraIntrinsics.from_dict(_load_json(root / "intrinsics.json"))

    config_path = root / "config.json"
    config = SceneConfig.from_dict(_load_json(config_path)) if config_path.exists() else SceneConfig()

    count = _frame_count(root / "frames")
    frames = []
    for t in range(count):
        rel = f"frames/{t:05d}.png"
        arr = read_png(root / rel)
        _check_dims(rel, arr.shape, K)
        frames.append(Frame(pixels=arr, color_space=ColorSpace.SRGB, index=t))

    depths = []
    for t in range(count):
        rel = f"depth/{t:05d}.pfm"
        path = root / rel
        if not path.exists():
            raise MissingFile(rel)
        arr = read_pfm(path)
        if arr.ndim != 2:
            raise DimensionMismatch(f"{rel}: expected single channel, got shape {arr.shape}")
        _check_dims(rel, arr.shape, K)
        if np.any(np.isinf(arr)):
            raise ValueOutOfRange(rel, "depth contains non-finite values")
        depths.append(DepthMap.from_array(arr))

    normals = None
    normal_arrays = _load_pfm_group(root, "normals", count, K)
    if normal_arrays is not None:
        normals = []
        for t, arr in enumerate(normal_arrays):
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise DimensionMismatch(f"normals/{t:05d}.pfm: expected 3 channels, got {arr.shape}")
            try:
                normals.append(NormalMap(normals=arr))
            except ValueError as e:
                raise ValueOutOfRange(f"normals/{t:05d}.pfm", str(e)) from None

    albedo = _load_pfm_group(root, "albedo", count, K)
    shading = _load_pfm_group(root, "shading", count, K)
    residual = _load_pfm_group(root, "residual", count, K)

    tracks = load_tracks(root / "tracks.json", count, K)

    splats_path = root / "splats.ply"
    if not splats_path.exists():
        raise MissingFile("splats.ply")
    splats = load_splats(splats_path)

    return Scene(
        root=root,
        intrinsics=K,
        frames=frames,
        depths=depths,
        tracks=tracks,
        splats=splats,
        config=config,
        normals=normals,
        albedo=albedo,
        shading=shading,
        residual=residual,
    )


def save_poses(path: Path, poses: list, rms: Optional[list] = None) -> None:
    records = []
    for t, pose in enumerate(poses):
        rec = {"t": t}
        rec.update(pose.to_dict())
        rec["rms_px"] = float(rms[t]) if rms is not None else 0.0
        records.append(rec)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(records, indent=2))
    except OSError as e:
        raise IoError(f"{path}: {e}") from None


def load_poses(path: Path) -> list:
    from .pose import Pose

    records = _load_json(path)
    records = sorted(records, key=lambda r: r["t"])
    return [Pose.from_dict(r) for r in records]


def save_outputs(
    root,
    stage: str,
    frames: Optional[list] = None,
    soft_masks: Optional[list] = None,
    binary_masks: Optional[list] = None,
    poses: Optional[list] = None,
    rms: Optional[list] = None,
) -> None:
    """Persist one stage's artifacts with deterministic names.

    Frame-like outputs go to <stage>/%05d.png; occlusion masks are written
    both soft (PFM) and binary (PNG); poses land in poses.json.
    """
    root = Path(root)
    stage_dirs = {
        "track": None,
        "occlusion": "occlusion",
        "preview": "preview",
        "enhance": "enhanced",
        "smooth": "rerender",
        "final": "final",
    }
    if stage not in stage_dirs:
        raise ValueError(f"unknown stage {stage!r}")
    try:
        if poses is not None:
            save_poses(root / "poses.json", poses, rms)
        sub = stage_dirs[stage]
        if frames is not None:
            for t, img in enumerate(frames):
                write_png(root / sub / f"{t:05d}.png", img)
        if soft_masks is not None:
            for t, m in enumerate(soft_masks):
                out = root / "occlusion" / f"{t:05d}.pfm"
                out.parent.mkdir(parents=True, exist_ok=True)
                write_pfm(out, m.astype(np.float32))
        if binary_masks is not None:
            for t, m in enumerate(binary_masks):
                write_gray_png(root / "occlusion" / f"{t:05d}.png", m.astype(np.float64))
    except OSError as e:
        raise IoError(f"{stage}: {e}") from None
