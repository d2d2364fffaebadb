"""Scene domain types: camera, frames, depth, tracks, normals, config.

A Scene is immutable after load; all layers are validated against the camera
intrinsics' width/height at construction time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, ValueOutOfRange


class ColorSpace(enum.Enum):
    SRGB = "sRGB"
    LINEAR = "LinearRGB"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueOutOfRange("intrinsics", f"focal lengths must be > 0, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueOutOfRange("intrinsics", f"principal point ({self.cx}, {self.cy}) outside image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
        )


@dataclass(frozen=True)
class Frame:
    """One video frame, values in [0, 1], shape (H, W, 3)."""

    pixels: np.ndarray
    color_space: ColorSpace
    index: int = 0

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueOutOfRange(f"frame {self.index}", f"expected HxWx3, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueOutOfRange(f"frame {self.index}", "non-finite pixel values")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueOutOfRange(f"frame {self.index}", f"pixels outside [0,1]: [{p.min()}, {p.max()}]")

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class DepthMap:
    """Metric depth (meters) with a per-pixel validity mask."""

    depth: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        d, v = self.depth, self.validity
        if d.shape != v.shape or d.ndim != 2:
            raise ValueOutOfRange("depth", f"depth {d.shape} / validity {v.shape} mismatch")
        valid = d[v]
        if valid.size and (not np.all(np.isfinite(valid)) or valid.min() <= 0):
            raise ValueOutOfRange("depth", "valid entries must be finite and > 0")

    @classmethod
    def from_array(cls, depth: np.ndarray) -> "DepthMap":
        depth = np.asarray(depth, dtype=np.float32)
        validity = np.isfinite(depth) & (depth > 0)
        return cls(depth=depth, validity=validity)


@dataclass(frozen=True)
class TrackSet:
    """2D point tracks: points (T, N, 2) pixel coords, visibility (T, N) bool."""

    points: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        p, v = self.points, self.visibility
        if p.ndim != 3 or p.shape[2] != 2 or v.shape != p.shape[:2]:
            raise ValueOutOfRange("tracks", f"points {p.shape} / visibility {v.shape} malformed")

    @property
    def num_frames(self) -> int:
        return self.points.shape[0]

    @property
    def num_points(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class NormalMap:
    """Unit surface normals in the camera frame, (H, W, 3); zero rows mark invalid."""

    normals: np.ndarray

    def __post_init__(self):
        n = self.normals
        if n.ndim != 3 or n.shape[2] != 3:
            raise ValueOutOfRange("normals", f"expected HxWx3, got {n.shape}")
        norms = np.linalg.norm(n, axis=2)
        bad = np.abs(norms[norms > 0.5] - 1.0) > 1e-4
        if np.any(bad):
            raise ValueOutOfRange("normals", f"{int(bad.sum())} normals off unit length by > 1e-4")

    @property
    def validity(self) -> np.ndarray:
        return np.linalg.norm(self.normals, axis=2) > 0.5


# Explicit defaults; config files may override any subset but unknown keys
# are rejected so typos surface immediately.
@dataclass
class SceneConfig:
    seed: int = 0
    # pose tracking
    min_anchors: int = 6
    pnp_max_iters: int = 100
    smooth_sigma_t: float = 3.0     # frames
    smooth_sigma_r: float = 0.05    # meters
    # occlusion
    occlusion_blur_sigma: float = 2.0   # px
    # shading / enhancement
    mask_expand_px: int | None = None   # None -> 25% of bracelet bbox diagonal
    enhancer: str = "identity"          # identity | lambertian | external:<cmd>
    # temporal smoothing
    window_size: int = 4                # frames, even
    window_sigma: float = 1.5           # frames
    keyframe_stride: int = 10
    interpolator: str | None = None     # external command; None -> cross-fade
    sh_max_iters: int = 500
    lr_dc: float = 1e-2
    lr_ac: float = 1e-4
    # augmentation
    aug_num_lights: int = 4
    aug_tau: float = 0.2
    aug_alpha_range: tuple = (1.0, 6.0)
    aug_beta_range: tuple = (0.0, 1.0)
    aug_gamma_range: tuple = (0.5, 1.5)
    aug_flip_prob: float = 0.5
    aug_blur_radius: float = 15.0       # px
    aug_blur_sigma: float = 4.0         # px
    aug_patch_count_range: tuple = (1, 4)
    aug_amp_range: tuple = (-0.4, 0.1)
    aug_sigma_range: tuple = (5.0, 25.0)
    # optional placement embedded in config (UI placement.json wins if present)
    placement: dict | None = None

    def __post_init__(self):
        if self.window_size < 0 or self.window_size % 2 != 0:
            raise ConfigError(f"window_size must be even and >= 0, got {self.window_size}")
        if self.keyframe_stride < 1:
            raise ConfigError("keyframe_stride must be >= 1")
        if self.min_anchors < 4:
            raise ConfigError("min_anchors must be >= 4")
        for name in ("aug_alpha_range", "aug_beta_range", "aug_gamma_range",
                     "aug_amp_range", "aug_sigma_range", "aug_patch_count_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is not ordered: {lo} > {hi}")
        if not (0.0 <= self.aug_flip_prob <= 1.0):
            raise ConfigError("aug_flip_prob must be in [0, 1]")
        if self.aug_tau <= 0:
            raise ConfigError("aug_tau must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for name in ("aug_alpha_range", "aug_beta_range", "aug_gamma_range",
                     "aug_amp_range", "aug_sigma_range", "aug_patch_count_range"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass
class Scene:
    """All pipeline inputs for one clip. Immutable after load."""

    root: str
    intrinsics: CameraIntrinsics
    frames: list        # list[Frame], sRGB
    depths: list        # list[DepthMap]
    tracks: TrackSet
    splats: "object"    # SplatModel (splats module); kept loose to avoid a cycle
    config: SceneConfig = field(default_factory=SceneConfig)
    normals: list | None = None     # list[NormalMap] or None when absent
    albedo: list | None = None      # list[np.ndarray] linear (H, W, 3)
    shading: list | None = None
    residual: list | None = None

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def has_intrinsic_layers(self) -> bool:
        return self.albedo is not None and self.shading is not None and self.residual is not None


def expand_px_default(mask: np.ndarray) -> int:
    """Default background-box margin: 25% of the mask bounding-box diagonal."""
    ys, xs = np.nonzero(mask > 0.5)
    if ys.size == 0:
        return 0
    h = int(ys.max() - ys.min() + 1)
    w = int(xs.max() - xs.min() + 1)
    return int(round(0.25 * math.hypot(h, w)))
