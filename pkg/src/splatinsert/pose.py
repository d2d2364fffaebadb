"""Object pose tracking: 2D anchor lifting, per-frame PnP, pose smoothing.

Conventions, used everywhere:
  - Pose maps world (object) coordinates to camera: p_cam = R @ X + T.
  - Projection: u = fx * x/z + cx, v = fy * y/z + cy after that transform.
  - Back-projection of pixel (u, v) at depth d: d * K^-1 @ [u, v, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Degenerate, InvalidDepth
from .rotations import (
    axis_angle_to_quat,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
)
from .scene import CameraIntrinsics, DepthMap


@dataclass(frozen=True)
class Pose:
    """Rigid world-to-camera transform: unit quaternion (w,x,y,z) + translation."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(np.asarray(self.q, dtype=np.float64)))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(q=np.array([1.0, 0, 0, 0]), t=np.zeros(3))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """World -> camera for (..., 3) points."""
        return quat_rotate(self.q, points) + self.t

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        """Camera -> world for (..., 3) points."""
        return quat_rotate(quat_conjugate(self.q), np.asarray(points, dtype=np.float64) - self.t)

    def compose_increment(self, omega: np.ndarray, dt: np.ndarray) -> "Pose":
        """Left-compose a small motion: p -> exp(omega) p + dt.

        The increment acts on the whole transformed point, so the stored
        translation rotates along with it.
        """
        dq = axis_angle_to_quat(omega)
        return Pose(q=quat_multiply(dq, self.q), t=quat_rotate(dq, self.t) + dt)

    def to_dict(self) -> dict:
        return {"q": [float(v) for v in self.q], "T": [float(v) for v in self.t]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(q=np.array(d["q"], dtype=np.float64), t=np.array(d["T"], dtype=np.float64))


@dataclass(frozen=True)
class AnchorSet3D:
    """World-frame 3D anchor points, one per selected track."""

    points: np.ndarray  # (N, 3)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"expected Nx3, got {p.shape}")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class PnPResult:
    pose: Pose
    rms_px: float
    converged: bool
    iterations: int


def project(points_world: np.ndarray, K: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """Project (N, 3) world points to (N, 2) pixels."""
    p = pose.apply(points_world)
    z = p[:, 2]
    return np.stack([K.fx * p[:, 0] / z + K.cx, K.fy * p[:, 1] / z + K.cy], axis=1)


def sample_depth(depth: DepthMap, uv: np.ndarray) -> np.ndarray:
    """Nearest-pixel depth at float coordinates; NaN where invalid/outside."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    h, w = depth.depth.shape
    out = np.full(uv.shape[0], np.nan)
    cols = np.round(uv[:, 0]).astype(int)
    rows = np.round(uv[:, 1]).astype(int)
    inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    ci, ri = cols[inside], rows[inside]
    ok = depth.validity[ri, ci]
    vals = np.where(ok, depth.depth[ri, ci], np.nan)
    out[inside] = vals
    return out


def lift_points(anchors2d: np.ndarray, depth: DepthMap, K: CameraIntrinsics, p1: Pose) -> AnchorSet3D:
    """Back-project first-frame 2D anchors to 3D world points.

    X_i = P1^-1 applied to d_i * K^-1 [u_i, v_i, 1].
    """
    anchors2d = np.asarray(anchors2d, dtype=np.float64).reshape(-1, 2)
    d = sample_depth(depth, anchors2d)
    for i, di in enumerate(d):
        if not np.isfinite(di):
            raise InvalidDepth(i)
    rays = np.stack(
        [
            (anchors2d[:, 0] - K.cx) / K.fx,
            (anchors2d[:, 1] - K.cy) / K.fy,
            np.ones(len(anchors2d)),
        ],
        axis=1,
    )
    cam = rays * d[:, None]
    return AnchorSet3D(points=p1.inverse_apply(cam))


def _check_not_collinear(points: np.ndarray) -> None:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if len(s) < 2 or s[1] < 1e-9 * max(s[0], 1.0):
        raise Degenerate("anchor points are collinear")


def solve_pnp(
    anchors3d: AnchorSet3D,
    observed2d: np.ndarray,
    K: CameraIntrinsics,
    init: Pose,
    max_iters: int = 100,
    rel_tol: float = 1e-10,
    converged_rms_px: float = 5.0,
) -> PnPResult:
    """Levenberg-Marquardt minimization of summed squared reprojection error.

    The update is an axis-angle increment left-composed onto the rotation plus
    an additive translation step. Damping starts at 1e-3, x10 on a rejected
    step, /10 on an accepted one. The accepted-step cost sequence is
    monotonically non-increasing by construction.
    """
    X = anchors3d.points
    obs = np.asarray(observed2d, dtype=np.float64).reshape(-1, 2)
    n = X.shape[0]
    if obs.shape[0] != n:
        raise ValueError(f"{n} anchors but {obs.shape[0]} observations")
    if n < 4:
        raise Degenerate(f"need >= 4 correspondences, got {n}")
    _check_not_collinear(X)
    if not (np.all(np.isfinite(init.q)) and np.all(np.isfinite(init.t))):
        raise ValueError("initial pose is not finite")

    def residuals(pose: Pose) -> np.ndarray:
        return (project(X, K, pose) - obs).ravel()

    def jacobian(pose: Pose) -> np.ndarray:
        # rows: [du_0 dv_0 du_1 ...], cols: [omega_x omega_y omega_z tx ty tz]
        p = pose.apply(X)
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        J = np.zeros((2 * n, 6))
        du_dp = np.stack([K.fx / z, np.zeros(n), -K.fx * x / z**2], axis=1)
        dv_dp = np.stack([np.zeros(n), K.fy / z, -K.fy * y / z**2], axis=1)
        # d(exp(omega) p)/d omega at omega=0 is -[p]_x
        dp_dw = np.zeros((n, 3, 3))
        dp_dw[:, 0, 1] = z
        dp_dw[:, 0, 2] = -y
        dp_dw[:, 1, 0] = -z
        dp_dw[:, 1, 2] = x
        dp_dw[:, 2, 0] = y
        dp_dw[:, 2, 1] = -x
        J[0::2, :3] = np.einsum("nk,nkj->nj", du_dp, dp_dw)
        J[1::2, :3] = np.einsum("nk,nkj->nj", dv_dp, dp_dw)
        J[0::2, 3:] = du_dp
        J[1::2, 3:] = dv_dp
        return J

    pose = init
    r = residuals(pose)
    cost = float(r @ r)
    lam = 1e-3
    iters = 0
    for iters in range(1, max_iters + 1):
        J = jacobian(pose)
        JTJ = J.T @ J
        g = J.T @ r
        try:
            step = np.linalg.solve(JTJ + lam * np.eye(6), -g)
        except np.linalg.LinAlgError:
            raise Degenerate("normal equations singular") from None
        candidate = pose.compose_increment(step[:3], step[3:])
        r_new = residuals(candidate)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            rel_change = (cost - cost_new) / max(cost, 1e-300)
            pose, r, cost = candidate, r_new, cost_new
            lam = max(lam / 10.0, 1e-12)
            if rel_change < rel_tol:
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break
    rms = float(np.sqrt(cost / (2 * n)))
    return PnPResult(pose=pose, rms_px=rms, converged=rms <= converged_rms_px, iterations=iters)


def smooth_poses(poses: list, sigma_t: float = 3.0, sigma_r: float = 0.05) -> list:
    """Bilateral smoothing of a pose sequence.

    Weights combine temporal distance (sigma_t, frames) with translation
    distance to the center pose (sigma_r, meters). Translations get the
    weighted mean; rotations a sign-aligned weighted quaternion mean,
    renormalized. Windows truncate at the sequence ends.
    """
    if sigma_t <= 0 or sigma_r <= 0:
        raise ValueError("sigmas must be > 0")
    n = len(poses)
    if n == 0:
        return []
    radius = max(1, int(np.ceil(3.0 * sigma_t)))
    out = []
    for i in range(n):
        lo, hi = max(0, i - radius), min(n - 1, i + radius)
        center_t = poses[i].t
        center_q = poses[i].q
        t_acc = np.zeros(3)
        q_acc = np.zeros(4)
        w_sum = 0.0
        for k in range(lo, hi + 1):
            dt = (k - i) / sigma_t
            dr = np.linalg.norm(poses[k].t - center_t) / sigma_r
            w = float(np.exp(-0.5 * (dt * dt + dr * dr)))
            qk = poses[k].q
            if np.dot(qk, center_q) < 0:
                qk = -qk
            t_acc += w * poses[k].t
            q_acc += w * qk
            w_sum += w
        out.append(Pose(q=q_acc / w_sum, t=t_acc / w_sum))
    return out
