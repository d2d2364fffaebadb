"""Pipeline orchestration: track -> occlusion -> preview -> enhance -> smooth -> final.

Every stage persists its artifacts under the scene directory so stages can be
re-run independently; a stage that needs an upstream artifact reads it from
disk. All outputs are deterministic functions of the inputs and config, so
re-runs are byte-identical. metrics.json carries only deterministic values;
timings live on the returned PipelineRun.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .augment import AugmentationParams, emit_training_pairs
from .enhancers import ExternalEnhancer, make_enhancer
from .errors import ConfigError, EmptyMask, EngineError, StageError
from .occlusion import (
    align_depth_scale,
    composite_preview,
    occlusion_map,
    soften_mask,
    visible_weight,
)
from .pfm import read_pfm, write_pfm
from .pose import AnchorSet3D, Pose, lift_points, solve_pnp, smooth_poses
from .renderer import render
from .scene import DepthMap, Scene, SceneConfig
from .scene_io import (
    load_poses,
    load_scene,
    read_png,
    save_poses,
    write_gray_png,
    write_png,
)
from .shading import (
    IntrinsicFrame,
    enhance_frame,
    partition_regions,
    recompose,
    srgb_to_linear,
)
from .smoothing import (
    ExternalInterpolator,
    OptimizerState,
    blend_final,
    gaussian_window,
    interpolate_shadow_frames,
    optimize_sh_colors,
)

STAGES = ("track", "occlusion", "preview", "enhance", "smooth", "final")


@dataclass
class PlacementState:
    """User-controlled initial pose, anchor picks, and lock flag."""

    pose: Pose
    scale: float = 1.0
    anchors: list = field(default_factory=list)
    locked: bool = False

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "scale": float(self.scale),
            "anchors": [[float(u), float(v)] for u, v in self.anchors],
            "locked": bool(self.locked),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementState":
        return cls(
            pose=Pose.from_dict(d["pose"]),
            scale=float(d.get("scale", 1.0)),
            anchors=[list(map(float, p)) for p in d.get("anchors", [])],
            locked=bool(d.get("locked", False)),
        )


def load_placement(root: Path) -> Optional[PlacementState]:
    path = Path(root) / "placement.json"
    if not path.exists():
        return None
    return PlacementState.from_dict(json.loads(path.read_text()))


def save_placement(root: Path, state: PlacementState) -> None:
    (Path(root) / "placement.json").write_text(json.dumps(state.to_dict(), indent=2))


@dataclass
class StageStatus:
    name: str
    status: str = "pending"  # pending | done | failed
    seconds: float = 0.0
    error: str = ""


@dataclass
class PipelineRun:
    scene_dir: str
    statuses: dict
    metrics: dict

    @property
    def ok(self) -> bool:
        return all(s.status != "failed" for s in self.statuses.values())


def flicker_metric(frames: list, mask: np.ndarray) -> float:
    """Mean over consecutive pairs of the masked mean absolute difference."""
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("flicker mask is empty")
    vals = []
    for a, b in zip(frames[:-1], frames[1:]):
        diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
        vals.append(float(np.mean(diff[m])))
    return float(np.mean(vals))


def anchor_track_indices(scene: Scene, anchors: list) -> list:
    """Match each anchor to its nearest first-frame track point."""
    first = scene.tracks.points[0]
    out = []
    for u, v in anchors:
        d2 = np.sum((first - np.array([u, v])) ** 2, axis=1)
        out.append(int(np.argmin(d2)))
    return out


def track_poses(scene: Scene, placement: PlacementState, config: SceneConfig):
    """Per-frame PnP chain from a locked placement.

    Lifts the anchors on frame 0, maps them to tracks, and solves each frame
    warm-started from the previous one. Returns (raw poses, rms list,
    converged list, lifted anchors, track indices).
    """
    if len(placement.anchors) < config.min_anchors:
        raise ConfigError(
            f"need >= {config.min_anchors} anchors, placement has {len(placement.anchors)}"
        )
    anchors3d = lift_points(
        np.asarray(placement.anchors, dtype=np.float64),
        scene.depths[0],
        scene.intrinsics,
        placement.pose,
    )
    idx = anchor_track_indices(scene, placement.anchors)
    poses, rms, converged = [], [], []
    current = placement.pose
    for t in range(scene.num_frames):
        observed = scene.tracks.points[t][idx]
        vis = scene.tracks.visibility[t][idx]
        result = solve_pnp(
            AnchorSet3D(points=anchors3d.points[vis]),
            observed[vis],
            scene.intrinsics,
            init=current,
            max_iters=config.pnp_max_iters,
        )
        current = result.pose
        poses.append(result.pose)
        rms.append(result.rms_px)
        converged.append(result.converged)
    return poses, rms, converged, anchors3d, idx


class _SceneLock:
    """Exclusive per-scene-directory lock file."""

    def __init__(self, root: Path):
        self.path = Path(root) / ".engine.lock"
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StageError("lock", f"another run holds {self.path}") from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)
        return False


class _Runner:
    """Holds shared state across stages of one run."""

    def __init__(self, scene: Scene, config: SceneConfig, placement: PlacementState):
        self.scene = scene
        self.config = config
        self.placement = placement
        self.root = Path(scene.root)
        self.model = scene.splats.scaled(placement.scale)
        self.metrics: dict = {}
        self._poses: Optional[list] = None
        self._renders: dict = {}

    # -- shared artifacts ------------------------------------------------

    def poses(self) -> list:
        if self._poses is None:
            path = self.root / "poses.json"
            if not path.exists():
                raise StageError("poses", "poses.json missing; run the track stage first")
            self._poses = load_poses(path)
        return self._poses

    def render_at(self, t: int):
        if t not in self._renders:
            self._renders[t] = render(self.model, self.scene.intrinsics, self.poses()[t])
        return self._renders[t]

    def anchors3d(self) -> AnchorSet3D:
        return lift_points(
            np.asarray(self.placement.anchors, dtype=np.float64),
            self.scene.depths[0],
            self.scene.intrinsics,
            self.placement.pose,
        )

    def anchor_track_indices(self) -> list:
        return anchor_track_indices(self.scene, self.placement.anchors)

    def occlusion_soft(self, t: int) -> np.ndarray:
        path = self.root / "occlusion" / f"{t:05d}.pfm"
        if not path.exists():
            raise StageError("occlusion", f"missing {path.name}; run the occlusion stage first")
        return read_pfm(path).astype(np.float64)

    def object_alpha(self, t: int) -> np.ndarray:
        path = self.root / "alpha" / f"{t:05d}.pfm"
        if not path.exists():
            raise StageError("preview", f"missing alpha/{t:05d}.pfm; run the preview stage first")
        return read_pfm(path).astype(np.float64)

    def stage_frames(self, sub: str, stage: str) -> list:
        out = []
        for t in range(self.scene.num_frames):
            path = self.root / sub / f"{t:05d}.png"
            if not path.exists():
                raise StageError(stage, f"missing {sub}/{t:05d}.png; run the {stage} stage first")
            out.append(read_png(path))
        return out

    # -- stages ----------------------------------------------------------

    def run_track(self) -> None:
        cfg = self.config
        poses, rms, converged, _, _ = track_poses(self.scene, self.placement, cfg)
        smoothed = smooth_poses(poses, cfg.smooth_sigma_t, cfg.smooth_sigma_r)
        save_poses(self.root / "poses.json", smoothed, rms)
        self._poses = smoothed
        self._renders.clear()
        self.metrics["pnp"] = {"rms_px": rms, "converged": converged}

    def run_occlusion(self) -> None:
        anchors3d = self.anchors3d()
        idx = self.anchor_track_indices()
        scales = []
        for t, pose in enumerate(self.poses()):
            ro = self.render_at(t)
            observed = self.scene.tracks.points[t][idx]
            vis = self.scene.tracks.visibility[t][idx]
            s = align_depth_scale(
                self.scene.depths[t],
                observed[vis],
                AnchorSet3D(points=anchors3d.points[vis]),
                pose,
            )
            scales.append(s)
            binary = occlusion_map(self.scene.depths[t], ro.depth_map(), s)
            soft = soften_mask(binary, self.config.occlusion_blur_sigma)
            write_pfm(self.root / "occlusion" / f"{t:05d}.pfm", soft.astype(np.float32))
            write_gray_png(self.root / "occlusion" / f"{t:05d}.png", binary.astype(np.float64))
        self.metrics["depth_scale"] = scales

    def run_preview(self) -> None:
        for t in range(self.scene.num_frames):
            ro = self.render_at(t)
            occ = self.occlusion_soft(t)
            preview = composite_preview(
                self.scene.frames[t].pixels, ro.unpremultiplied(), ro.alpha, occ
            )
            write_png(self.root / "preview" / f"{t:05d}.png", preview)
            write_png(self.root / "object" / f"{t:05d}.png", ro.unpremultiplied())
            write_pfm(self.root / "alpha" / f"{t:05d}.pfm", ro.alpha.astype(np.float32))

    def _preview_intrinsic(self, t: int, preview: np.ndarray) -> IntrinsicFrame:
        """Factor a composited preview frame into intrinsic layers.

        The object region's albedo is the rendered color (linearized); shading
        is solved so that albedo * shading + residual reproduces the preview's
        linear image exactly.
        """
        scene = self.scene
        v = visible_weight(self.object_alpha(t), self.occlusion_soft(t))[..., None]
        lin_preview = srgb_to_linear(preview)
        obj_lin = srgb_to_linear(read_png(self.root / "object" / f"{t:05d}.png"))
        residual = (1.0 - v) * scene.residual[t].astype(np.float64)
        albedo = v * obj_lin + (1.0 - v) * scene.albedo[t].astype(np.float64)
        numer = lin_preview - residual
        eps = 1e-6
        safe = albedo >= eps
        shading = np.where(safe, numer / np.maximum(albedo, eps), 0.0)
        residual = np.where(safe, residual, residual + numer)
        return IntrinsicFrame(linear=lin_preview, albedo=albedo, shading=shading, residual=residual)

    def run_enhance(self) -> None:
        scene = self.scene
        if not scene.has_intrinsic_layers:
            raise StageError("enhance", "scene lacks albedo/shading/residual layers")
        if scene.normals is None:
            raise StageError("enhance", "scene lacks normal maps")
        enhancer = make_enhancer(self.config.enhancer)
        relight_clamped, shadow_clamped, skipped = [], [], []
        previews = self.stage_frames("preview", "preview")
        for t in range(scene.num_frames):
            if isinstance(enhancer, ExternalEnhancer):
                enhancer.frame_index = t
            frame = self._preview_intrinsic(t, previews[t])
            mask = visible_weight(self.object_alpha(t), self.occlusion_soft(t))
            try:
                masks = partition_regions(mask, self.config.mask_expand_px)
            except EmptyMask:
                # object invisible in this frame: nothing to enhance
                write_png(self.root / "enhanced" / f"{t:05d}.png", previews[t])
                relight_clamped.append(0)
                shadow_clamped.append(0)
                skipped.append(t)
                continue
            result = enhance_frame(frame, masks, scene.normals[t], enhancer)
            write_png(self.root / "enhanced" / f"{t:05d}.png", result.srgb)
            relight_clamped.append(result.relight_clamped)
            shadow_clamped.append(result.shadow_clamped)
        self.metrics["enhance"] = {
            "relight_clamped": relight_clamped,
            "shadow_clamped": shadow_clamped,
            "skipped_frames": skipped,
        }

    def run_smooth(self) -> None:
        cfg = self.config
        scene = self.scene
        enhanced = self.stage_frames("enhanced", "enhance")
        poses = self.poses()
        occ = [self.occlusion_soft(t) for t in range(scene.num_frames)]
        bg = [f.pixels for f in scene.frames]
        window = gaussian_window(cfg.window_size, cfg.window_sigma)
        caches: dict = {}
        model = self.model
        losses, iters, conv = [], [], []
        union_mask = np.zeros(occ[0].shape, dtype=bool)
        for t in range(scene.num_frames):
            result = optimize_sh_colors(
                model,
                enhanced,
                poses,
                scene.intrinsics,
                t,
                window,
                opt=OptimizerState.for_model(model, cfg.lr_dc, cfg.lr_ac),
                max_iters=cfg.sh_max_iters,
                occ_maps=occ,
                bg_frames=bg,
                frame_caches=caches,
            )
            model = result.model
            losses.append(result.loss)
            iters.append(result.iterations)
            conv.append(result.converged)
            ro = render(model, scene.intrinsics, poses[t])
            rerender = composite_preview(scene.frames[t].pixels, ro.unpremultiplied(), ro.alpha, occ[t])
            write_png(self.root / "rerender" / f"{t:05d}.png", rerender)
            union_mask |= ro.alpha > 0.5
        self.metrics["smooth"] = {"loss": losses, "iterations": iters, "converged": conv}
        if union_mask.any() and scene.num_frames >= 2:
            rerendered = self.stage_frames("rerender", "smooth")
            self.metrics["flicker"] = {
                "enhanced": flicker_metric(enhanced, union_mask),
                "rerender": flicker_metric(rerendered, union_mask),
            }

    def run_final(self) -> None:
        cfg = self.config
        scene = self.scene
        enhanced = self.stage_frames("enhanced", "enhance")
        rerendered = self.stage_frames("rerender", "smooth")
        interp = ExternalInterpolator(cfg.interpolator) if cfg.interpolator else None
        interpolated = interpolate_shadow_frames(enhanced, cfg.keyframe_stride, interp)
        for t in range(scene.num_frames):
            v = visible_weight(self.object_alpha(t), self.occlusion_soft(t))
            final = blend_final(v, rerendered[t], interpolated[t])
            write_png(self.root / "final" / f"{t:05d}.png", final)
        self.metrics["final"] = {"frames": scene.num_frames}


def run_augmentation(scene_dir, stage: str, count: int, seed: Optional[int] = None) -> list:
    """Emit `count` training pairs for a denoise/relight stage under scene_dir/pairs/.

    The bracelet region of each frame comes from rendering the placed model at
    the tracked pose (poses.json) when available, else at the static placement
    pose. Frames where the render lands outside the image are skipped.
    """
    scene = load_scene(scene_dir)
    if scene.shading is None or scene.normals is None:
        raise ConfigError("augmentation needs shading/, normals/ layers in the scene")
    if scene.albedo is None or scene.residual is None:
        raise ConfigError("augmentation needs albedo/, residual/ layers in the scene")
    config = scene.config
    placement = load_placement(Path(scene_dir))
    if placement is None and config.placement is not None:
        placement = PlacementState.from_dict(config.placement)
    if placement is None:
        raise ConfigError("no placement: provide placement.json or config.placement")
    if seed is None:
        seed = config.seed

    poses_path = Path(scene_dir) / "poses.json"
    if poses_path.exists():
        poses = load_poses(poses_path)
    else:
        poses = [placement.pose] * scene.num_frames
    model = scene.splats.scaled(placement.scale)

    frames, masks_list, normals_list, frame_ids = [], [], [], []
    for t in range(scene.num_frames):
        ro = render(model, scene.intrinsics, poses[t])
        mask = (ro.alpha > 0.5).astype(np.float64)
        try:
            masks = partition_regions(mask, config.mask_expand_px)
        except EmptyMask:
            continue
        frame = IntrinsicFrame(
            linear=recompose(scene.albedo[t], scene.shading[t], scene.residual[t]),
            albedo=scene.albedo[t],
            shading=scene.shading[t],
            residual=scene.residual[t],
        )
        frames.append(frame)
        masks_list.append(masks)
        normals_list.append(scene.normals[t])
        frame_ids.append(t)
    if not frames:
        raise EmptyMask("model renders outside every frame; check placement")

    params = AugmentationParams(
        m_lights=config.aug_num_lights,
        tau=config.aug_tau,
        alpha_range=config.aug_alpha_range,
        beta_range=config.aug_beta_range,
        gamma_range=config.aug_gamma_range,
        flip_prob=config.aug_flip_prob,
        blur_radius=config.aug_blur_radius,
        blur_sigma=config.aug_blur_sigma,
        k_range=config.aug_patch_count_range,
        amp_range=config.aug_amp_range,
        sigma_range=config.aug_sigma_range,
    )
    return emit_training_pairs(
        frames,
        masks_list,
        normals_list,
        params,
        stage,
        count,
        seed,
        Path(scene_dir),
        frame_ids=frame_ids,
    )


def run_pipeline(
    scene_dir,
    stages: Optional[list] = None,
    config_overrides: Optional[dict] = None,
    config_path: Optional[str] = None,
) -> PipelineRun:
    """Execute the requested stages in dependency order.

    A failed stage marks itself failed and blocks everything after it.
    Placement must be locked, either via placement.json or the config.
    """
    scene = load_scene(scene_dir)
    config = scene.config
    if config_path is not None:
        config = SceneConfig.from_dict(json.loads(Path(config_path).read_text()))
    if config_overrides:
        config = replace(config, **config_overrides)

    placement = load_placement(Path(scene_dir))
    if placement is None and config.placement is not None:
        placement = PlacementState.from_dict(config.placement)
    if placement is None:
        raise ConfigError("no placement: provide placement.json or config.placement")
    if not placement.locked:
        raise ConfigError("placement is not locked")

    requested = list(STAGES) if stages is None else list(stages)
    unknown = set(requested) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stages: {sorted(unknown)}")
    ordered = [s for s in STAGES if s in requested]

    statuses = {s: StageStatus(name=s) for s in ordered}
    runner = _Runner(scene, config, placement)
    with _SceneLock(Path(scene_dir)):
        blocked = False
        for name in ordered:
            st = statuses[name]
            if blocked:
                st.status = "failed"
                st.error = "blocked by earlier failure"
                continue
            start = time.perf_counter()
            try:
                getattr(runner, f"run_{name}")()
                st.status = "done"
            except EngineError as e:
                st.status = "failed"
                st.error = f"{type(e).__name__}: {e}"
                blocked = True
            st.seconds = time.perf_counter() - start
        metrics_path = Path(scene_dir) / "metrics.json"
        metrics_path.write_text(json.dumps(runner.metrics, indent=2, sort_keys=True))
    return PipelineRun(scene_dir=str(scene_dir), statuses=statuses, metrics=runner.metrics)
