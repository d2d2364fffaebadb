"""Color-space transforms, intrinsic frames, region partition, enhancement, losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptyMask, ImageTooSmall
from .scene import expand_px_default

GAMMA = 2.2
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)


def srgb_to_linear(frame: np.ndarray) -> np.ndarray:
    """Decode display values to linear intensity: v^2.2."""
    return np.power(np.asarray(frame, dtype=np.float64), GAMMA)


def linear_to_srgb(frame: np.ndarray) -> np.ndarray:
    """Encode linear intensity for display: clamp to [0,1], then v^(1/2.2)."""
    return np.power(np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0), 1.0 / GAMMA)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 grayscale of an (..., 3) array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ np.asarray(LUMA_WEIGHTS)


def recompose(albedo: np.ndarray, shading: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """Linear image from intrinsic layers: A*S + R elementwise."""
    A = np.asarray(albedo, dtype=np.float64)
    S = np.asarray(shading, dtype=np.float64)
    R = np.asarray(residual, dtype=np.float64)
    if not (A.shape == S.shape == R.shape):
        raise DimensionMismatch(f"albedo {A.shape}, shading {S.shape}, residual {R.shape}")
    return A * S + R


@dataclass
class IntrinsicFrame:
    """Linear image with its albedo/shading/residual factorization."""

    linear: np.ndarray
    albedo: np.ndarray
    shading: np.ndarray
    residual: np.ndarray

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        self.shading = np.asarray(self.shading, dtype=np.float64)
        self.residual = np.asarray(self.residual, dtype=np.float64)
        shapes = {a.shape for a in (self.linear, self.albedo, self.shading, self.residual)}
        if len(shapes) != 1:
            raise DimensionMismatch(f"intrinsic layer shapes differ: {shapes}")

    def check(self, tol: float = 1e-5) -> None:
        err = np.max(np.abs(recompose(self.albedo, self.shading, self.residual) - self.linear))
        if err > tol:
            raise ValueError(f"intrinsic layers do not recompose: max error {err:.2e} > {tol}")


@dataclass
class RegionMasks:
    """Bracelet / background / surrounding partition; the three sum to 1."""

    bracelet: np.ndarray
    background: np.ndarray
    surrounding: np.ndarray


def partition_regions(bracelet_mask: np.ndarray, expand_px: Optional[int] = None) -> RegionMasks:
    """Split the image around the bracelet.

    Background is binary: 1 outside the bounding box of {mask > 0.5} expanded
    by expand_px and clipped to the image. Surrounding is the remainder
    1 - M - M_bg, so the partition sums to 1 by construction. expand_px=None
    picks a default proportional to the mask's bounding-box diagonal.
    """
    M = np.asarray(bracelet_mask, dtype=np.float64)
    rows, cols = np.nonzero(M > 0.5)
    if rows.size == 0:
        raise EmptyMask("no bracelet pixels above 0.5")
    if expand_px is None:
        expand_px = expand_px_default(M)
    if expand_px < 0:
        raise ValueError("expand_px must be >= 0")
    h, w = M.shape
    r0 = max(int(rows.min()) - expand_px, 0)
    r1 = min(int(rows.max()) + expand_px, h - 1)
    c0 = max(int(cols.min()) - expand_px, 0)
    c1 = min(int(cols.max()) + expand_px, w - 1)
    bg = np.ones_like(M)
    bg[r0 : r1 + 1, c0 : c1 + 1] = 0.0
    return RegionMasks(bracelet=M, background=bg, surrounding=1.0 - M - bg)


def region_shadings(shading: np.ndarray, masks: RegionMasks):
    """Per-region shading layers (S_bracelet, S_bg, S_surr) via mask products."""
    S = np.asarray(shading, dtype=np.float64)
    def apply(m):
        return S * (m[..., None] if S.ndim == 3 else m)
    return apply(masks.bracelet), apply(masks.background), apply(masks.surrounding)


@dataclass
class EnhanceResult:
    srgb: np.ndarray  # refined sRGB frame in [0,1]
    relight_clamped: int  # pixels clamped to 0 after relight
    shadow_clamped: int  # pixels clamped to 0 after shadow synthesis


def enhance_frame(frame: IntrinsicFrame, masks: RegionMasks, normals, enhancer) -> EnhanceResult:
    """Run the enhancement chain on one frame.

    relight -> shadow -> diffuse recombination -> gamma encode -> sRGB refine.
    Background shading passes through untouched; the stored residual is added
    back only in the background region and dropped elsewhere.
    """
    s_brac, s_bg, s_surr = region_shadings(frame.shading, masks)

    s_relit = np.asarray(enhancer.relight(s_brac, s_bg, normals), dtype=np.float64)
    relight_clamped = int(np.count_nonzero(s_relit < 0))
    s_relit = np.maximum(s_relit, 0.0)

    s_enhanced = np.asarray(enhancer.shadow(s_relit, s_bg, s_surr), dtype=np.float64)
    shadow_clamped = int(np.count_nonzero(s_enhanced < 0))
    s_enhanced = np.maximum(s_enhanced, 0.0)

    bg = masks.background[..., None]
    s_enhanced = bg * frame.shading + (1.0 - bg) * s_enhanced

    diffuse = frame.albedo * s_enhanced + bg * frame.residual
    diffuse_srgb = linear_to_srgb(diffuse)
    refined = np.asarray(enhancer.refine_srgb(diffuse_srgb, frame.albedo, s_enhanced), dtype=np.float64)

    # hard guarantee: background pixels come straight from the input frame
    out = bg * linear_to_srgb(frame.linear) + (1.0 - bg) * np.clip(refined, 0.0, 1.0)
    return EnhanceResult(srgb=out, relight_clamped=relight_clamped, shadow_clamped=shadow_clamped)


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute difference."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionMismatch(f"pred {p.shape} vs target {t.shape}")
    return float(np.mean(np.abs(p - t)))


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def multiscale_grad_loss(pred: np.ndarray, target: np.ndarray, k_scales: int) -> float:
    """Sum over k_scales octaves of mean L1 between forward-difference gradients.

    Each octave halves resolution by 2x2 average pooling.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionMismatch(f"pred {p.shape} vs target {t.shape}")
    if k_scales < 1:
        raise ValueError("k_scales must be >= 1")
    if min(p.shape[0], p.shape[1]) < 2**k_scales:
        raise ImageTooSmall(f"min side {min(p.shape[:2])} < 2^{k_scales}")
    total = 0.0
    for _ in range(k_scales):
        diff = p - t
        gx = diff[:, 1:] - diff[:, :-1]
        gy = diff[1:, :] - diff[:-1, :]
        total += float(np.mean(np.abs(gx)) + np.mean(np.abs(gy)))
        p, t = _downsample2(p), _downsample2(t)
    return total
