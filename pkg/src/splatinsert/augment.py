"""Training-pair synthesis: shading degradation and contact-shadow corruption.

All randomness flows through counter-based Philox streams keyed by
(seed, stage, pair index), so any pair can be regenerated in isolation and
emission is byte-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .occlusion import gaussian_blur
from .pfm import write_pfm
from .scene import NormalMap
from .shading import IntrinsicFrame, RegionMasks, luminance

STAGE_CODES = {"relight": 0, "shadow": 1}


@dataclass
class AugmentationParams:
    m_lights: int = 4
    tau: float = 0.2
    alpha_range: tuple = (1.0, 6.0)
    beta_range: tuple = (0.0, 1.0)
    gamma_range: tuple = (0.5, 1.5)
    flip_prob: float = 0.5
    blur_radius: float = 15.0
    blur_sigma: float = 4.0
    k_range: tuple = (1, 4)
    amp_range: tuple = (-0.4, 0.1)
    sigma_range: tuple = (5.0, 25.0)

    def __post_init__(self):
        for name in ("alpha_range", "beta_range", "gamma_range", "k_range", "amp_range", "sigma_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not ordered: {lo} > {hi}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0,1], got {self.flip_prob}")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.m_lights < 1:
            raise ValueError("m_lights must be >= 1")


def pair_rng(seed: int, stage: str, index: int) -> np.random.Generator:
    """Independent stream for one training pair."""
    ss = np.random.SeedSequence((seed, STAGE_CODES[stage], index))
    return np.random.Generator(np.random.Philox(ss))


def sample_light_direction(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the camera-side hemisphere.

    Camera-frame normals of visible surfaces point toward the camera
    (negative z with +z into the scene), so lights that can illuminate them
    have z < 0.
    """
    z = rng.uniform(0.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    r = np.sqrt(max(1.0 - z * z, 0.0))
    return np.array([r * np.cos(phi), r * np.sin(phi), -z])


def synth_shading(normals: NormalMap, light: np.ndarray, alpha: float) -> np.ndarray:
    """Lambertian-style grayscale shading (max(0, N.L))^alpha; 0 on invalid normals."""
    ndotl = np.einsum("hwc,c->hw", normals.normals.astype(np.float64), np.asarray(light, dtype=np.float64))
    out = np.maximum(ndotl, 0.0) ** alpha
    return np.where(normals.validity, out, 0.0)


def softmax(z: np.ndarray, tau: float) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    scaled = (z - z.max()) / tau
    e = np.exp(scaled)
    return e / e.sum()


def sample_blend_weights(m: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Softmax-with-temperature weights over m uniform scores; sums to 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return softmax(rng.uniform(0.0, 1.0, size=m), tau)


def blend_synthetic(s_gray: np.ndarray, synth_list, weights: np.ndarray, beta: float) -> np.ndarray:
    """Convex blend of the original shading with a weighted synthetic mixture."""
    synth = sum(w * s for w, s in zip(weights, synth_list))
    return beta * np.asarray(s_gray, dtype=np.float64) + (1.0 - beta) * synth


def scale_shading(s_gray: np.ndarray, gamma: float) -> np.ndarray:
    """Rescale contrast about the mid-range value m = (max + min)/2."""
    s = np.asarray(s_gray, dtype=np.float64)
    if gamma == 1.0:
        return s.copy()
    m = 0.5 * (float(s.max()) + float(s.min()))
    return (s - m) * gamma + m


def flip_shading(s_gray: np.ndarray) -> np.ndarray:
    """Invert brightness relationships: S_max - S + S_min."""
    s = np.asarray(s_gray, dtype=np.float64)
    return (float(s.max()) + float(s.min())) - s


def blur_near_mask(s_gray: np.ndarray, mask: np.ndarray, r: float, sigma_b: float) -> np.ndarray:
    """Gaussian-blur only pixels within Euclidean distance r of the mask.

    Pixels farther than r keep their original bits.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if sigma_b <= 0:
        raise ValueError("sigma_b must be > 0")
    s = np.asarray(s_gray, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return s.copy()
    dist = distance_transform_edt(~m)
    return np.where(dist <= r, gaussian_blur(s, sigma_b), s)


def add_shadow_patches(
    s_gray: np.ndarray, mask: np.ndarray, params: AugmentationParams, rng: np.random.Generator
) -> np.ndarray:
    """Add K random Gaussian bumps near the mask, clamped to stay >= 0.

    Centers land on pixels within max(sigma_range) of the mask; amplitudes
    are drawn from amp_range (mostly negative, i.e. darkening).
    """
    s = np.asarray(s_gray, dtype=np.float64).copy()
    m = np.asarray(mask, dtype=bool)
    k = int(rng.integers(params.k_range[0], params.k_range[1] + 1))
    if k == 0 or not m.any():
        return s
    dist = distance_transform_edt(~m)
    cand_rows, cand_cols = np.nonzero(dist <= params.sigma_range[1])
    h, w = s.shape
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(k):
        j = int(rng.integers(0, cand_rows.size))
        cy, cx = int(cand_rows[j]), int(cand_cols[j])
        amp = rng.uniform(*params.amp_range)
        sig = rng.uniform(*params.sigma_range)
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        s += amp * np.exp(-d2 / (2.0 * sig * sig))
    return np.maximum(s, 0.0)


@dataclass
class TrainingPair:
    inputs: dict
    target: np.ndarray
    meta: dict


def make_training_pair(
    frame: IntrinsicFrame,
    masks: RegionMasks,
    normals: NormalMap,
    params: AugmentationParams,
    stage: str,
    rng: np.random.Generator,
) -> TrainingPair:
    """Build one (degraded input, clean target) shading pair for a stage.

    relight: the full grayscale shading goes through blend with synthetic
    single-light maps, contrast scaling, and an optional brightness flip;
    input and target are then restricted to the bracelet region.
    shadow: the shading is blurred near the bracelet and peppered with
    Gaussian patches; the clean map is the target.
    """
    if stage not in STAGE_CODES:
        raise ValueError(f"unknown stage {stage!r}")
    s_gray = luminance(frame.shading)
    mask_binary = masks.bracelet > 0.5
    meta: dict = {"stage": stage, "tau": params.tau}

    if stage == "relight":
        alpha = float(rng.uniform(*params.alpha_range))
        lights = [sample_light_direction(rng) for _ in range(params.m_lights)]
        weights = sample_blend_weights(params.m_lights, params.tau, rng)
        beta = float(rng.uniform(*params.beta_range))
        gamma = float(rng.uniform(*params.gamma_range))
        do_flip = bool(rng.random() < params.flip_prob)

        synths = [synth_shading(normals, L, alpha) for L in lights]
        chain = blend_synthetic(s_gray, synths, weights, beta)
        chain = scale_shading(chain, gamma)
        if do_flip:
            chain = flip_shading(chain)
        degraded = chain * masks.bracelet
        target = s_gray * masks.bracelet
        meta.update(
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            flipped=do_flip,
            weights=[float(w) for w in weights],
            lights=[[float(v) for v in L] for L in lights],
        )
        inputs = {
            "input_shading": degraded,
            "input_background": s_gray * masks.background,
            "input_normals": normals.normals.astype(np.float64),
        }
        return TrainingPair(inputs=inputs, target=target, meta=meta)

    degraded = blur_near_mask(s_gray, mask_binary, params.blur_radius, params.blur_sigma)
    k = int(rng.integers(params.k_range[0], params.k_range[1] + 1))
    degraded = add_shadow_patches(degraded, mask_binary, replace(params, k_range=(k, k)), rng)
    meta.update(r=params.blur_radius, sigma_b=params.blur_sigma, k_patches=k)
    inputs = {
        "input_shading": degraded,
        "input_mask": masks.bracelet.astype(np.float64),
    }
    return TrainingPair(inputs=inputs, target=s_gray, meta=meta)


def emit_training_pairs(
    frames,
    masks_per_frame,
    normals_per_frame,
    params: AugmentationParams,
    stage: str,
    count: int,
    seed: int,
    out_root: Path,
    frame_ids=None,
) -> list:
    """Write `count` pairs under out_root/pairs/{stage}/{id}/ and return their dirs.

    frame_ids, when given, maps list positions back to original frame numbers
    for the metadata (the frame lists may be a filtered subset).
    """
    out_dirs = []
    n = len(frames)
    for i in range(count):
        rng = pair_rng(seed, stage, i)
        t = i % n
        pair = make_training_pair(
            frames[t], masks_per_frame[t], normals_per_frame[t], params, stage, rng
        )
        d = Path(out_root) / "pairs" / stage / f"{i:05d}"
        d.mkdir(parents=True, exist_ok=True)
        for name, arr in pair.inputs.items():
            write_pfm(d / f"{name}.pfm", arr.astype(np.float32))
        write_pfm(d / "target.pfm", pair.target.astype(np.float32))
        frame_id = frame_ids[t] if frame_ids is not None else t
        pair.meta.update(seed=seed, index=i, frame=frame_id)
        (d / "meta.json").write_text(json.dumps(pair.meta, indent=2, sort_keys=True))
        out_dirs.append(d)
    return out_dirs
