"""Shading enhancers: identity, analytic single-light, and external-process adapter.

Every enhancer exposes three deterministic single-pass calls:
  relight(S_bracelet, S_bg, normals)      -> relit bracelet shading
  shadow(S_relit, S_bg, S_surr)           -> full shading with contact shadow
  refine_srgb(I_diffuse, albedo, S_enh)   -> refined sRGB frame
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from scipy.ndimage import shift as nd_shift

from .errors import EnhancerFailure
from .occlusion import gaussian_blur
from .pfm import read_pfm, write_pfm
from .shading import luminance


class IdentityEnhancer:
    """Pass-through chain; the output frame reproduces the input."""

    stateless = True

    def relight(self, s_bracelet, s_bg, normals):
        return s_bracelet

    def shadow(self, s_relit, s_bg, s_surr):
        return s_relit + s_bg + s_surr

    def refine_srgb(self, i_diffuse, albedo, s_enhanced):
        return i_diffuse


class AnalyticLambertianEnhancer:
    """Single-light Lambertian model fit to the background shading.

    relight() estimates ambient a and light vector l (direction times
    intensity) by alternating least squares on background pixels with valid
    normals: the active set {N.l > 0} is fixed, the linear system solved for
    (a, l), and the set recomputed until stable. The bracelet region is then
    re-shaded as a + max(0, N.l)^alpha. shadow() darkens the surrounding
    region with a blurred bracelet silhouette pushed along the image-plane
    light direction.
    """

    stateless = False

    def __init__(
        self,
        alpha: float = 1.0,
        shadow_strength: float = 0.5,
        shadow_shift_px: float = 8.0,
        shadow_sigma_px: float = 3.0,
        max_fit_iters: int = 50,
    ):
        self.alpha = alpha
        self.shadow_strength = shadow_strength
        self.shadow_shift_px = shadow_shift_px
        self.shadow_sigma_px = shadow_sigma_px
        self.max_fit_iters = max_fit_iters
        self.ambient = 0.0
        self.light = np.array([0.0, 0.0, -1.0])

    def _fit_light(self, gray: np.ndarray, normals: np.ndarray, valid: np.ndarray):
        s = gray[valid]
        n = normals[valid]
        a, light = float(s.mean()) if s.size else 0.0, np.array([0.0, 0.0, -1.0])
        active = n @ light > 0
        for _ in range(self.max_fit_iters):
            rows = np.concatenate([np.ones((n.shape[0], 1)), n * active[:, None]], axis=1)
            coef, *_ = np.linalg.lstsq(rows, s, rcond=None)
            a, light = float(coef[0]), coef[1:]
            new_active = n @ light > 0
            if np.array_equal(new_active, active):
                break
            active = new_active
        return a, light

    def relight(self, s_bracelet, s_bg, normals):
        gray_bg = luminance(s_bg)
        valid = normals.validity & (gray_bg > 0)
        if np.count_nonzero(valid) >= 4:
            self.ambient, self.light = self._fit_light(gray_bg, normals.normals, valid)
        mask = luminance(np.asarray(s_bracelet)) > 0
        ndotl = np.einsum("hwc,c->hw", normals.normals.astype(np.float64), self.light)
        relit = self.ambient + np.maximum(ndotl, 0.0) ** self.alpha
        out = np.where((mask & normals.validity)[..., None], relit[..., None], s_bracelet)
        return out * mask[..., None]

    def shadow(self, s_relit, s_bg, s_surr):
        silhouette = (luminance(np.asarray(s_relit)) > 0).astype(np.float64)
        lx, ly = self.light[0], self.light[1]
        norm = float(np.hypot(lx, ly))
        if norm > 1e-9:
            dx = -lx / norm * self.shadow_shift_px
            dy = -ly / norm * self.shadow_shift_px
            silhouette = nd_shift(silhouette, (dy, dx), order=1, mode="constant", cval=0.0)
        shadow_map = gaussian_blur(silhouette, self.shadow_sigma_px)
        darkened = s_surr * (1.0 - self.shadow_strength * np.clip(shadow_map, 0.0, 1.0))[..., None]
        return s_relit + s_bg + darkened

    def refine_srgb(self, i_diffuse, albedo, s_enhanced):
        return i_diffuse


class ExternalEnhancer:
    """Adapter running a configured command per call.

    The three condition images go to a fresh directory as cond1.pfm,
    cond2.pfm, cond3.pfm with a meta.json naming the stage and frame; the
    command is invoked with that directory as its last argument and must
    write out.pfm there. A nonzero exit or missing output raises
    EnhancerFailure.
    """

    stateless = True

    def __init__(self, command: str, frame_index: int = 0):
        self.command = command
        self.frame_index = frame_index

    def _call(self, stage: str, cond1, cond2, cond3) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="enhancer_") as tmp:
            d = Path(tmp)
            write_pfm(d / "cond1.pfm", np.asarray(cond1, dtype=np.float32))
            write_pfm(d / "cond2.pfm", np.asarray(cond2, dtype=np.float32))
            write_pfm(d / "cond3.pfm", np.asarray(cond3, dtype=np.float32))
            (d / "meta.json").write_text(
                json.dumps({"stage": stage, "frame": self.frame_index})
            )
            proc = subprocess.run(
                shlex.split(self.command) + [str(d)],
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise EnhancerFailure(
                    f"{stage}: command exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            out = d / "out.pfm"
            if not out.exists():
                raise EnhancerFailure(f"{stage}: command wrote no out.pfm")
            return read_pfm(out).astype(np.float64)

    def relight(self, s_bracelet, s_bg, normals):
        return self._call("relight", s_bracelet, s_bg, normals.normals)

    def shadow(self, s_relit, s_bg, s_surr):
        return self._call("shadow", s_relit, s_bg, s_surr)

    def refine_srgb(self, i_diffuse, albedo, s_enhanced):
        return self._call("refine_srgb", i_diffuse, albedo, s_enhanced)


def make_enhancer(spec: str):
    """Build an enhancer from a config string: identity, lambertian, external:<cmd>."""
    if spec == "identity":
        return IdentityEnhancer()
    if spec == "lambertian":
        return AnalyticLambertianEnhancer()
    if spec.startswith("external:"):
        cmd = spec[len("external:") :]
        if not cmd.strip():
            raise ValueError("external enhancer needs a command")
        return ExternalEnhancer(cmd)
    raise ValueError(f"unknown enhancer {spec!r}")
