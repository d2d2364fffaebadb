"""HTTP placement service for interactive object insertion.

The service owns a single PlacementState per scene directory. Reads are
concurrent; mutations serialize through a lock and checkpoint placement.json
immediately, so a CLI run can pick up the session without the service.
"""

from __future__ import annotations

import io
import threading
from pathlib import Path
from typing import Optional

import numpy as np
import uvicorn
from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from .errors import EngineError, MissingFile
from .occlusion import align_depth_scale, composite_preview, occlusion_map, soften_mask
from .pipeline import PlacementState, load_placement, save_placement, track_poses
from .pose import AnchorSet3D, Pose, lift_points, smooth_poses
from .renderer import render
from .scene import CameraIntrinsics
from .scene_io import load_scene
from .splats import SplatModel


class PoseBody(BaseModel):
    q: list
    T: list
    scale: Optional[float] = None


class AnchorsBody(BaseModel):
    points: list


class _Session:
    """Mutable placement session; everything else about the scene is read-only."""

    def __init__(self, root: Path, scene):
        self.root = root
        self.scene = scene
        self.lock = threading.Lock()
        placement = load_placement(root)
        if placement is None and scene.config.placement is not None:
            placement = PlacementState.from_dict(scene.config.placement)
        if placement is None:
            placement = PlacementState(pose=Pose.identity())
        self.placement = placement
        # solve products, all-or-none
        self.solved_poses: Optional[list] = None
        self.rms_px: Optional[list] = None
        self.converged: Optional[list] = None
        self.anchors3d: Optional[AnchorSet3D] = None
        self.track_idx: Optional[list] = None

    def checkpoint(self) -> None:
        save_placement(self.root, self.placement)

    def clear_solve(self) -> None:
        self.solved_poses = None
        self.rms_px = None
        self.converged = None
        self.anchors3d = None
        self.track_idx = None

    def model(self) -> SplatModel:
        return self.scene.splats.scaled(self.placement.scale)

    def pose_for(self, t: int) -> Pose:
        if self.solved_poses is not None:
            return self.solved_poses[t]
        return self.placement.pose

    def status(self) -> dict:
        pose = self.placement.pose.to_dict()
        out = {
            "frames": self.scene.num_frames,
            "width": self.scene.intrinsics.width,
            "height": self.scene.intrinsics.height,
            "pose": pose,
            "scale": self.placement.scale,
            "anchors": [list(a) for a in self.placement.anchors],
            "min_anchors": self.scene.config.min_anchors,
            "locked": self.placement.locked,
            "solved": self.solved_poses is not None,
            "rms_px": self.rms_px,
            "converged": self.converged,
        }
        if self.rms_px:
            out["mean_rms_px"] = float(np.mean(self.rms_px))
        else:
            out["mean_rms_px"] = None
        return out


def _png_bytes(rgb: np.ndarray) -> bytes:
    arr = np.clip(rgb, 0.0, 1.0)
    img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _warm_renderer() -> None:
    # pay the JIT cost at startup, not on the first preview request
    model = SplatModel(
        positions=np.array([[0.0, 0.0, 2.0]]),
        scales=np.full((1, 3), 0.1),
        rotations=np.array([[1.0, 0.0, 0.0, 0.0]]),
        opacities=np.array([0.9]),
        sh=np.zeros((1, 3, 16)),
    )
    k = CameraIntrinsics(fx=8.0, fy=8.0, cx=3.5, cy=3.5, width=8, height=8)
    render(model, k, Pose.identity())


def make_app(scene_dir) -> FastAPI:
    root = Path(scene_dir)
    scene = load_scene(root)
    session = _Session(root, scene)
    _warm_renderer()
    app = FastAPI(title="placement service")

    @app.exception_handler(EngineError)
    async def _engine_error(request, exc):
        code = 404 if isinstance(exc, MissingFile) else 422
        return JSONResponse(status_code=code, content={"error": str(exc)})

    def check_frame(t: int) -> Optional[JSONResponse]:
        if not 0 <= t < scene.num_frames:
            return JSONResponse(
                status_code=404,
                content={"error": f"frame {t} out of range [0, {scene.num_frames})"},
            )
        return None

    @app.get("/frame/{t}")
    def get_frame(t: int):
        err = check_frame(t)
        if err:
            return err
        data = (root / "frames" / f"{t:05d}.png").read_bytes()
        return Response(content=data, media_type="image/png")

    @app.get("/depth/{t}")
    def get_depth(t: int):
        err = check_frame(t)
        if err:
            return err
        data = (root / "depth" / f"{t:05d}.pfm").read_bytes()
        return Response(content=data, media_type="application/octet-stream")

    @app.get("/preview/{t}")
    def get_preview(t: int):
        err = check_frame(t)
        if err:
            return err
        pose = session.pose_for(t)
        ro = render(session.model(), scene.intrinsics, pose)
        occ = np.zeros(ro.alpha.shape)
        s = _depth_scale_or_none(session, t, pose)
        if s is not None:
            occ_bin = occlusion_map(scene.depths[t], ro.depth_map(), s)
            occ = soften_mask(occ_bin, scene.config.occlusion_blur_sigma)
        preview = composite_preview(
            scene.frames[t].pixels, ro.unpremultiplied(), ro.alpha, occ
        )
        return Response(content=_png_bytes(preview), media_type="image/png")

    @app.post("/pose")
    def post_pose(body: PoseBody):
        with session.lock:
            if session.placement.locked:
                return JSONResponse(status_code=409, content={"error": "placement is locked"})
            if len(body.q) != 4 or len(body.T) != 3:
                return JSONResponse(
                    status_code=422, content={"error": "q must have 4 entries, T must have 3"}
                )
            q = np.asarray(body.q, dtype=np.float64)
            if not np.isfinite(q).all() or np.linalg.norm(q) < 1e-12:
                return JSONResponse(status_code=422, content={"error": "q is not a valid rotation"})
            scale = session.placement.scale if body.scale is None else float(body.scale)
            if scale <= 0:
                return JSONResponse(status_code=422, content={"error": "scale must be > 0"})
            session.placement.pose = Pose(q=q, t=np.asarray(body.T, dtype=np.float64))
            session.placement.scale = scale
            session.clear_solve()
            session.checkpoint()
            return session.status()

    @app.post("/anchors")
    def post_anchors(body: AnchorsBody):
        with session.lock:
            if session.placement.locked:
                return JSONResponse(status_code=409, content={"error": "placement is locked"})
            pts = []
            w, h = scene.intrinsics.width, scene.intrinsics.height
            for p in body.points:
                if len(p) != 2:
                    return JSONResponse(
                        status_code=422, content={"error": "anchors must be [u, v] pairs"}
                    )
                u, v = float(p[0]), float(p[1])
                if not (0 <= u < w and 0 <= v < h):
                    return JSONResponse(
                        status_code=422,
                        content={"error": f"anchor ({u}, {v}) outside {w}x{h} image"},
                    )
                pts.append([u, v])
            session.placement.anchors = pts
            session.clear_solve()
            session.checkpoint()
            return session.status()

    @app.post("/solve")
    def post_solve():
        with session.lock:
            need = scene.config.min_anchors
            if len(session.placement.anchors) < need:
                return JSONResponse(
                    status_code=409, content={"error": f"need >= {need} anchors"}
                )
            poses, rms, converged, anchors3d, idx = track_poses(
                scene, session.placement, scene.config
            )
            session.solved_poses = smooth_poses(
                poses, scene.config.smooth_sigma_t, scene.config.smooth_sigma_r
            )
            session.rms_px = rms
            session.converged = converged
            session.anchors3d = anchors3d
            session.track_idx = idx
            return session.status()

    @app.post("/lock")
    def post_lock():
        with session.lock:
            session.placement.locked = True
            session.checkpoint()
            return session.status()

    @app.get("/status")
    def get_status():
        return session.status()

    return app


def _depth_scale_or_none(session: _Session, t: int, pose: Pose) -> Optional[float]:
    """Depth alignment scale for occluding the preview, when enough is known.

    After a solve the tracked anchor pixels at frame t are available; before
    one, frame 0 can still use the raw picks. Alignment failures (bad depth,
    degenerate anchors) just disable occlusion rather than failing the preview.
    """
    scene = session.scene
    try:
        if session.solved_poses is not None:
            idx = session.track_idx
            observed = scene.tracks.points[t][idx]
            vis = scene.tracks.visibility[t][idx]
            return align_depth_scale(
                scene.depths[t],
                observed[vis],
                AnchorSet3D(points=session.anchors3d.points[vis]),
                pose,
            )
        if t == 0 and session.placement.anchors:
            anchors2d = np.asarray(session.placement.anchors, dtype=np.float64)
            anchors3d = lift_points(anchors2d, scene.depths[0], scene.intrinsics, pose)
            return align_depth_scale(scene.depths[0], anchors2d, anchors3d, pose)
    except EngineError:
        return None
    return None


def serve_api(scene_dir, port: int, host: str = "127.0.0.1") -> None:
    """Run the placement service until interrupted."""
    app = make_app(scene_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
