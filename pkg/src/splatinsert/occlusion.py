"""Depth-scale alignment, occlusion masks, mask softening, preview compositing."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve1d

from .errors import DegenerateDepth, DimensionMismatch
from .pose import AnchorSet3D, Pose, sample_depth
from .scene import DepthMap


def align_depth_scale(
    depth: DepthMap, anchors2d: np.ndarray, anchors3d: AnchorSet3D, pose: Pose
) -> float:
    """Scale s minimizing sum over anchors of (s*D(x_i) - z_i)^2.

    z_i is the camera-space depth of the lifted anchor under `pose`.
    Closed form: s = sum(D_i * z_i) / sum(D_i^2). Anchors whose sampled
    scene depth is invalid are dropped.
    """
    anchors2d = np.asarray(anchors2d, dtype=np.float64).reshape(-1, 2)
    if anchors2d.shape[0] != len(anchors3d):
        raise DimensionMismatch(
            f"{anchors2d.shape[0]} 2D anchors vs {len(anchors3d)} 3D anchors"
        )
    d = sample_depth(depth, anchors2d)
    z = pose.apply(anchors3d.points)[:, 2]
    ok = np.isfinite(d)
    d, z = d[ok], z[ok]
    denom = float(np.sum(d * d))
    if d.size == 0 or denom <= 0.0:
        raise DegenerateDepth("no anchor with valid scene depth")
    return float(np.sum(d * z) / denom)


def occlusion_map(scene_depth: DepthMap, object_depth: DepthMap, s: float) -> np.ndarray:
    """Binary map: 1 where scaled scene depth is strictly nearer than the object.

    Pixels where either depth is invalid (object absent, scene hole) are 0;
    equal depths resolve to unoccluded.
    """
    if scene_depth.depth.shape != object_depth.depth.shape:
        raise DimensionMismatch(
            f"scene depth {scene_depth.depth.shape} vs object depth {object_depth.depth.shape}"
        )
    if s <= 0:
        raise ValueError(f"scale must be > 0, got {s}")
    return (
        scene_depth.validity
        & object_depth.validity
        & (s * scene_depth.depth < object_depth.depth)
    )


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps with radius ceil(3*sigma)."""
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    # (x/sigma)**2 can overflow for subnormal sigma; exp(-inf) = 0 is the
    # correct limit (delta kernel), so the overflow warning is noise.
    with np.errstate(over="ignore"):
        k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect boundary handling. sigma=0 is identity."""
    img = np.asarray(image, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel1d(sigma)
    out = convolve1d(img, k, axis=0, mode="reflect")
    out = convolve1d(out, k, axis=1, mode="reflect")
    return out


def soften_mask(binary: np.ndarray, sigma: float) -> np.ndarray:
    """Blur a binary mask into [0, 1]. Taps sum to 1, so range is preserved."""
    return np.clip(gaussian_blur(np.asarray(binary, dtype=np.float64), sigma), 0.0, 1.0)


def visible_weight(object_alpha: np.ndarray, occlusion_soft: np.ndarray) -> np.ndarray:
    """Per-pixel blend weight v = alpha * (1 - occlusion_soft)."""
    return np.asarray(object_alpha, dtype=np.float64) * (
        1.0 - np.asarray(occlusion_soft, dtype=np.float64)
    )


def composite_preview(
    scene_rgb: np.ndarray,
    object_rgb: np.ndarray,
    object_alpha: np.ndarray,
    occlusion_soft: np.ndarray,
) -> np.ndarray:
    """Blend object over scene: v*object + (1-v)*scene with v = alpha*(1-occ).

    `object_rgb` must be un-premultiplied color.
    """
    scene = np.asarray(scene_rgb, dtype=np.float64)
    obj = np.asarray(object_rgb, dtype=np.float64)
    if scene.shape != obj.shape:
        raise DimensionMismatch(f"scene {scene.shape} vs object {obj.shape}")
    v = visible_weight(object_alpha, occlusion_soft)[..., None]
    return v * obj + (1.0 - v) * scene
