"""Real spherical harmonics up to degree 3 for view-dependent splat color."""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

NUM_COEFFS = 16


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Evaluate the 16 degree-<=3 basis functions at unit directions (N, 3) -> (N, 16)."""
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    B = np.empty((d.shape[0], NUM_COEFFS))
    B[:, 0] = C0
    B[:, 1] = -C1 * y
    B[:, 2] = C1 * z
    B[:, 3] = -C1 * x
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    B[:, 4] = C2[0] * xy
    B[:, 5] = C2[1] * yz
    B[:, 6] = C2[2] * (2.0 * zz - xx - yy)
    B[:, 7] = C2[3] * xz
    B[:, 8] = C2[4] * (xx - yy)
    B[:, 9] = C3[0] * y * (3.0 * xx - yy)
    B[:, 10] = C3[1] * xy * z
    B[:, 11] = C3[2] * y * (4.0 * zz - xx - yy)
    B[:, 12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    B[:, 13] = C3[4] * x * (4.0 * zz - xx - yy)
    B[:, 14] = C3[5] * z * (xx - yy)
    B[:, 15] = C3[6] * x * (xx - 3.0 * yy)
    return B


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Raw radiance for coefficients (N, 3, 16) at per-splat directions (N, 3)."""
    B = sh_basis(dirs)
    return np.einsum("ncj,nj->nc", np.asarray(coeffs, dtype=np.float64), B)


def activate_color(radiance: np.ndarray) -> np.ndarray:
    """Map raw SH radiance to display color: clamp(radiance + 0.5, 0, 1)."""
    return np.clip(np.asarray(radiance, dtype=np.float64) + 0.5, 0.0, 1.0)
