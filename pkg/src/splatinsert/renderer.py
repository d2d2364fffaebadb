"""CPU rasterizer for 3D Gaussian splats.

Splats are projected with first-order (EWA) covariance propagation, sorted by
camera-space center depth, and alpha-composited front to back over per-splat
bounding boxes. The per-pixel compositing weights can be cached; downstream
color optimization relies on the rendered color being exactly the weighted sum
of per-splat colors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .pose import Pose
from .rotations import quats_to_matrices
from .scene import CameraIntrinsics, DepthMap
from .sh import activate_color, eval_sh
from .splats import SplatModel

ALPHA_CUTOFF = 1.0 / 255.0


@dataclass
class WeightCache:
    """Sparse per-pixel compositing weights: flat pixel index, splat id, weight."""

    pixel: np.ndarray  # (M,) uint32, row-major flat index
    splat: np.ndarray  # (M,) uint32
    weight: np.ndarray  # (M,) float64
    height: int
    width: int

    def replay_color(self, splat_colors: np.ndarray) -> np.ndarray:
        """Recompose the premultiplied color image from cached weights."""
        out = np.zeros((self.height * self.width, 3))
        np.add.at(out, self.pixel, self.weight[:, None] * splat_colors[self.splat])
        return out.reshape(self.height, self.width, 3)

    def replay_alpha(self) -> np.ndarray:
        out = np.zeros(self.height * self.width)
        np.add.at(out, self.pixel, self.weight)
        return out.reshape(self.height, self.width)

    def dump(self, path) -> None:
        """Binary dump as little-endian (pixel u32, splat u32, weight f32) triplets."""
        with open(path, "wb") as f:
            for p, s, w in zip(self.pixel, self.splat, self.weight):
                f.write(struct.pack("<IIf", int(p), int(s), float(w)))


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3) premultiplied by alpha
    alpha: np.ndarray  # (H, W) accumulated opacity in [0, 1]
    depth: np.ndarray  # (H, W) expected camera-space depth, 0 where alpha = 0
    weights: Optional[WeightCache]
    view_dirs: np.ndarray  # (N, 3) per-splat unit view direction, model frame
    splat_colors: np.ndarray  # (N, 3) per-splat composited color

    @property
    def mask(self) -> np.ndarray:
        return self.alpha > 0.0

    def unpremultiplied(self, eps: float = 1e-12) -> np.ndarray:
        """Color with the alpha factor divided out; 0 where alpha ~ 0."""
        a = self.alpha[..., None]
        return np.where(a > eps, self.color / np.maximum(a, eps), 0.0)

    def depth_map(self) -> DepthMap:
        return DepthMap(depth=self.depth.astype(np.float32), validity=self.alpha > 0.0)


@njit(cache=True)
def _composite(means, conics, opacs, colors, zvals, ids, bboxes, h, w, keep, pix_out, sp_out, w_out):
    color = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    depth = np.zeros((h, w))
    trans = np.ones((h, w))
    count = 0
    for i in range(means.shape[0]):
        ux = means[i, 0]
        uy = means[i, 1]
        ca = conics[i, 0]
        cb = conics[i, 1]
        cc = conics[i, 2]
        for py in range(bboxes[i, 2], bboxes[i, 3] + 1):
            dy = py - uy
            for px in range(bboxes[i, 0], bboxes[i, 1] + 1):
                t = trans[py, px]
                if t <= 0.0:
                    continue
                dx = px - ux
                q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                if q > 9.0:  # 3-sigma truncation
                    continue
                a = opacs[i] * np.exp(-0.5 * q)
                if a < ALPHA_CUTOFF:
                    continue
                if a > 1.0:
                    a = 1.0
                wgt = a * t
                color[py, px, 0] += wgt * colors[i, 0]
                color[py, px, 1] += wgt * colors[i, 1]
                color[py, px, 2] += wgt * colors[i, 2]
                alpha[py, px] += wgt
                depth[py, px] += wgt * zvals[i]
                trans[py, px] = t * (1.0 - a)
                if keep:
                    pix_out[count] = py * w + px
                    sp_out[count] = ids[i]
                    w_out[count] = wgt
                    count += 1
    return color, alpha, depth, count


def render(
    model: SplatModel,
    K: CameraIntrinsics,
    pose: Pose,
    keep_weights: bool = False,
    activate: bool = True,
    near: float = 1e-6,
) -> RenderOutput:
    """Rasterize the model under a world-to-camera pose.

    With activate=False the per-splat color is the raw SH radiance, making the
    output linear in the coefficients. Splats behind the camera are dropped;
    an all-culled render returns zeros.
    """
    h, w = K.height, K.width
    n = len(model)
    R = pose.rotation_matrix
    cam = model.positions @ R.T + pose.t
    z = cam[:, 2]

    cam_center = pose.inverse_apply(np.zeros(3))
    delta = model.positions - cam_center
    norms = np.linalg.norm(delta, axis=1, keepdims=True)
    view_dirs = delta / np.maximum(norms, 1e-12)

    radiance = eval_sh(model.sh, view_dirs)
    splat_colors = activate_color(radiance) if activate else radiance

    infront = z > near
    if not np.any(infront):
        empty = WeightCache(
            pixel=np.empty(0, np.uint32),
            splat=np.empty(0, np.uint32),
            weight=np.empty(0),
            height=h,
            width=w,
        ) if keep_weights else None
        return RenderOutput(
            color=np.zeros((h, w, 3)),
            alpha=np.zeros((h, w)),
            depth=np.zeros((h, w)),
            weights=empty,
            view_dirs=view_dirs,
            splat_colors=splat_colors,
        )

    # 2D covariance: J @ (R Sigma3 R^T) @ J^T per splat
    Rs = quats_to_matrices(model.rotations)
    M = Rs * model.scales[:, None, :]
    sigma3 = M @ M.transpose(0, 2, 1)
    sigma_cam = np.einsum("ij,njk,lk->nil", R, sigma3, R)
    x, y = cam[:, 0], cam[:, 1]
    zs = np.where(infront, z, 1.0)  # placeholder for culled rows
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = K.fx / zs
    J[:, 0, 2] = -K.fx * x / zs**2
    J[:, 1, 1] = K.fy / zs
    J[:, 1, 2] = -K.fy * y / zs**2
    sigma2 = np.einsum("nij,njk,nlk->nil", J, sigma_cam, J)
    a = sigma2[:, 0, 0]
    b = sigma2[:, 0, 1]
    c = sigma2[:, 1, 1]
    det = a * c - b * b

    u = K.fx * x / zs + K.cx
    v = K.fy * y / zs + K.cy
    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))

    ok = infront & (det > 0) & np.isfinite(det) & np.isfinite(u) & np.isfinite(v)
    x0 = np.maximum(np.floor(u - radius), 0).astype(np.int64)
    x1 = np.minimum(np.ceil(u + radius), w - 1).astype(np.int64)
    y0 = np.maximum(np.floor(v - radius), 0).astype(np.int64)
    y1 = np.minimum(np.ceil(v + radius), h - 1).astype(np.int64)
    ok &= (x0 <= x1) & (y0 <= y1)

    ids = np.nonzero(ok)[0]
    order = np.lexsort((ids, z[ids]))  # depth ascending, splat-id tiebreak
    ids = ids[order]

    if keep_weights:
        cap = int(np.sum((x1[ids] - x0[ids] + 1) * (y1[ids] - y0[ids] + 1)))
        pix_out = np.empty(max(cap, 1), np.uint32)
        sp_out = np.empty(max(cap, 1), np.uint32)
        w_out = np.empty(max(cap, 1), np.float64)
    else:
        pix_out = np.empty(1, np.uint32)
        sp_out = np.empty(1, np.uint32)
        w_out = np.empty(1, np.float64)

    conics = np.stack([c[ids] / det[ids], -b[ids] / det[ids], a[ids] / det[ids]], axis=1)
    color, alpha, depth_acc, count = _composite(
        np.stack([u[ids], v[ids]], axis=1),
        conics,
        model.opacities[ids].astype(np.float64),
        splat_colors[ids],
        z[ids],
        ids.astype(np.uint32),
        np.stack([x0[ids], x1[ids], y0[ids], y1[ids]], axis=1),
        h,
        w,
        keep_weights,
        pix_out,
        sp_out,
        w_out,
    )
    depth = np.where(alpha > 0, depth_acc / np.maximum(alpha, 1e-300), 0.0)
    cache = None
    if keep_weights:
        cache = WeightCache(
            pixel=pix_out[:count].copy(),
            splat=sp_out[:count].copy(),
            weight=w_out[:count].copy(),
            height=h,
            width=w,
        )
    return RenderOutput(
        color=color,
        alpha=alpha,
        depth=depth,
        weights=cache,
        view_dirs=view_dirs,
        splat_colors=splat_colors,
    )
