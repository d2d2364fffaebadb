"""Windowed SH color optimization, keyframe interpolation, final blending.

Only the spherical-harmonics coefficients move; geometry is frozen, so the
per-frame compositing weights are constants and the pre-activation problem is
linear. The color activation clamp is treated as a stop-gradient.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InterpolatorFailure
from .pfm import read_pfm, write_pfm
from .pose import Pose
from .renderer import WeightCache, render
from .scene import CameraIntrinsics
from .sh import sh_basis
from .splats import SplatModel


@dataclass(frozen=True)
class SmoothingWindow:
    size: int  # W, even
    weights: np.ndarray  # W+1 values summing to 1

    def __post_init__(self):
        if self.size % 2 != 0 or self.size < 0:
            raise ValueError(f"window size must be even and >= 0, got {self.size}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.size + 1,):
            raise ValueError(f"expected {self.size + 1} weights, got {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def offsets(self) -> np.ndarray:
        half = self.size // 2
        return np.arange(-half, half + 1)


def gaussian_window(w: int, sigma: float) -> SmoothingWindow:
    """Normalized Gaussian weights over offsets -W/2..W/2."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if w % 2 != 0 or w < 0:
        raise ValueError(f"window size must be even and >= 0, got {w}")
    half = w // 2
    k = np.arange(-half, half + 1, dtype=np.float64)
    vals = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return SmoothingWindow(size=w, weights=vals / vals.sum())


@dataclass
class OptimizerState:
    """Adam moments over the SH coefficient tensor, with split DC/AC rates."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr_dc: float = 1e-2
    lr_ac: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: SplatModel, lr_dc: float = 1e-2, lr_ac: float = 1e-4) -> "OptimizerState":
        shape = model.sh.shape
        return cls(m=np.zeros(shape), v=np.zeros(shape), lr_dc=lr_dc, lr_ac=lr_ac)

    def update(self, sh: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.step += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.step)
        vhat = self.v / (1.0 - self.beta2**self.step)
        lr = np.full(sh.shape, self.lr_ac)
        lr[:, :, 0] = self.lr_dc
        return sh - lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class FrameCache:
    """Per-video-frame constants for the photometric objective."""

    pix_compact: np.ndarray  # cache entry -> compact active-pixel index
    splat: np.ndarray  # cache entry -> splat id
    weight: np.ndarray  # cache entry -> compositing weight
    basis: np.ndarray  # (N, 16) SH basis at this frame's view directions
    target: np.ndarray  # (U, 3) refined frame at active pixels
    occ_factor: np.ndarray  # (U,) 1 - occlusion_soft at active pixels
    bg_term: np.ndarray  # (U, 3) (1 - v) * background at active pixels
    n_active: int


def build_frame_cache(
    model: SplatModel,
    K: CameraIntrinsics,
    pose: Pose,
    target: np.ndarray,
    occ_soft: Optional[np.ndarray] = None,
    bg: Optional[np.ndarray] = None,
) -> Optional[FrameCache]:
    """Render once with weights kept and bind the frame's constant tensors.

    Returns None when no splat lands on the frame.
    """
    out = render(model, K, pose, keep_weights=True)
    cache: WeightCache = out.weights
    if cache.pixel.size == 0:
        return None
    uniq, inv = np.unique(cache.pixel, return_inverse=True)
    rows, cols = np.divmod(uniq.astype(np.int64), K.width)
    tgt = np.asarray(target, dtype=np.float64)[rows, cols]
    if occ_soft is None:
        occf = np.ones(uniq.size)
    else:
        occf = 1.0 - np.asarray(occ_soft, dtype=np.float64)[rows, cols]
    if bg is None:
        bgterm = np.zeros((uniq.size, 3))
    else:
        alpha = out.alpha[rows, cols]
        v = alpha * occf
        bgterm = (1.0 - v)[:, None] * np.asarray(bg, dtype=np.float64)[rows, cols]
    return FrameCache(
        pix_compact=inv,
        splat=cache.splat.astype(np.int64),
        weight=cache.weight,
        basis=sh_basis(out.view_dirs),
        target=tgt,
        occ_factor=occf,
        bg_term=bgterm,
        n_active=int(uniq.size),
    )


def _frame_loss_and_grad(sh: np.ndarray, fc: FrameCache):
    """Photometric MSE over active pixels and its gradient w.r.t. sh."""
    radiance = np.einsum("ncj,nj->nc", sh, fc.basis)
    colors = radiance + 0.5
    unclamped = (colors > 0.0) & (colors < 1.0)
    colors = np.clip(colors, 0.0, 1.0)

    c_px = np.zeros((fc.n_active, 3))
    np.add.at(c_px, fc.pix_compact, fc.weight[:, None] * colors[fc.splat])
    pred = fc.occ_factor[:, None] * c_px + fc.bg_term
    resid = pred - fc.target
    denom = fc.n_active * 3
    loss = float(np.sum(resid * resid)) / denom

    d_pred = 2.0 * resid / denom
    d_cpx = fc.occ_factor[:, None] * d_pred
    grad_colors = np.zeros((sh.shape[0], 3))
    np.add.at(grad_colors, fc.splat, fc.weight[:, None] * d_cpx[fc.pix_compact])
    grad_colors = grad_colors * unclamped
    grad = grad_colors[:, :, None] * fc.basis[:, None, :]
    return loss, grad


@dataclass
class OptimizeResult:
    model: SplatModel
    loss: float
    iterations: int
    converged: bool


def optimize_sh_colors(
    model: SplatModel,
    refined_frames: list,
    poses: list,
    K: CameraIntrinsics,
    t: int,
    window: SmoothingWindow,
    opt: Optional[OptimizerState] = None,
    max_iters: int = 500,
    rel_tol: float = 1e-8,
    occ_maps: Optional[list] = None,
    bg_frames: Optional[list] = None,
    frame_caches: Optional[dict] = None,
) -> OptimizeResult:
    """Fit SH coefficients to the refined frames around frame t.

    The objective is the window-weighted mean-squared color error at pixels
    the render touches. Gradients flow only through the cached weights; the
    returned model shares geometry arrays with the input (never mutated).
    When occlusion/background are given, the prediction per pixel is
    (1-occ)*C + (1-v)*bg, matching the preview compositing equation.
    """
    n_frames = len(refined_frames)
    idx = [t + int(o) for o in window.offsets]
    keep = [(i, w) for i, w in zip(idx, window.weights) if 0 <= i < n_frames]
    if not keep:
        raise ValueError(f"frame {t} has no in-range window frames")
    wsum = sum(w for _, w in keep)

    caches = []
    for i, w in keep:
        if frame_caches is not None and i in frame_caches:
            fc = frame_caches[i]
        else:
            fc = build_frame_cache(
                model,
                K,
                poses[i],
                refined_frames[i],
                occ_maps[i] if occ_maps is not None else None,
                bg_frames[i] if bg_frames is not None else None,
            )
            if frame_caches is not None:
                frame_caches[i] = fc
        if fc is not None:
            caches.append((fc, w / wsum))
    if not caches:
        return OptimizeResult(model=model.copy(), loss=0.0, iterations=0, converged=True)

    if opt is None:
        opt = OptimizerState.for_model(model)

    def total(sh):
        loss = 0.0
        grad = np.zeros_like(sh)
        for fc, w in caches:
            l, g = _frame_loss_and_grad(sh, fc)
            loss += w * l
            grad += w * g
        return loss, grad

    sh = model.sh.copy()
    loss, grad = total(sh)
    best_sh, best_loss = sh.copy(), loss
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        sh = opt.update(sh, grad)
        new_loss, grad = total(sh)
        if new_loss < best_loss:
            best_loss, best_sh = new_loss, sh.copy()
        if abs(loss - new_loss) < rel_tol * max(loss, 1e-300):
            loss = new_loss
            converged = True
            break
        loss = new_loss
    return OptimizeResult(
        model=model.with_sh(best_sh), loss=best_loss, iterations=iters, converged=converged
    )


def keyframe_indices(n: int, stride: int) -> list:
    """Every stride-th index plus the last frame."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ks = list(range(0, n, stride))
    if ks[-1] != n - 1:
        ks.append(n - 1)
    return ks


def crossfade(frame_a: np.ndarray, frame_b: np.ndarray, fraction: float) -> np.ndarray:
    """Linear blend: (1-f)*a + f*b."""
    return (1.0 - fraction) * np.asarray(frame_a, dtype=np.float64) + fraction * np.asarray(
        frame_b, dtype=np.float64
    )


def interpolate_shadow_frames(
    refined: list,
    keyframe_stride: int,
    interp: Optional[Callable] = None,
) -> list:
    """Keep keyframes, synthesize the rest with the plug-in (default cross-fade).

    The plug-in is called as interp(keyframe_a, keyframe_b, fraction).
    """
    n = len(refined)
    ks = keyframe_indices(n, keyframe_stride)
    fn = interp if interp is not None else crossfade
    out = []
    for t in range(n):
        if t in ks:
            out.append(refined[t])
            continue
        a = max(k for k in ks if k < t)
        b = min(k for k in ks if k > t)
        frac = (t - a) / (b - a)
        out.append(fn(refined[a], refined[b], frac))
    return out


class ExternalInterpolator:
    """Run a configured command per in-between frame.

    The two keyframes go to a scratch directory as key1.pfm / key2.pfm with a
    meta.json holding the blend fraction; the command gets the directory as
    its last argument and must write out.pfm. Nonzero exit or missing output
    raises InterpolatorFailure.
    """

    def __init__(self, command: str):
        self.command = command

    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray, fraction: float) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="interp_") as tmp:
            d = Path(tmp)
            write_pfm(d / "key1.pfm", np.asarray(frame_a, dtype=np.float32))
            write_pfm(d / "key2.pfm", np.asarray(frame_b, dtype=np.float32))
            (d / "meta.json").write_text(json.dumps({"fraction": fraction}))
            proc = subprocess.run(
                shlex.split(self.command) + [str(d)], capture_output=True, text=True
            )
            if proc.returncode != 0:
                raise InterpolatorFailure(
                    f"command exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            out = d / "out.pfm"
            if not out.exists():
                raise InterpolatorFailure("command wrote no out.pfm")
            return read_pfm(out).astype(np.float64)


def blend_final(mask: np.ndarray, rerender: np.ndarray, interp: np.ndarray) -> np.ndarray:
    """Per-pixel convex blend: mask*rerender + (1-mask)*interp."""
    m = np.asarray(mask, dtype=np.float64)
    r = np.asarray(rerender, dtype=np.float64)
    i = np.asarray(interp, dtype=np.float64)
    if r.shape != i.shape:
        raise ValueError(f"rerender {r.shape} vs interp {i.shape}")
    if m.ndim == r.ndim - 1:
        m = m[..., None]
    return m * r + (1.0 - m) * i
