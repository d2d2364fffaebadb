"""Insert a 3D splat object into a captured video with tracking, occlusion,
shading-aware enhancement, and temporally smoothed color optimization."""

__version__ = "0.1.0"

from .pipeline import PipelineRun, PlacementState, run_augmentation, run_pipeline
from .pose import Pose, solve_pnp
from .renderer import render
from .scene import CameraIntrinsics, SceneConfig
from .scene_io import load_scene
from .server import make_app, serve_api
from .splats import SplatModel, load_splats, save_splats
from .synthetic import generate_scene

__all__ = [
    "CameraIntrinsics",
    "PipelineRun",
    "PlacementState",
    "Pose",
    "SceneConfig",
    "SplatModel",
    "__version__",
    "generate_scene",
    "load_scene",
    "load_splats",
    "make_app",
    "render",
    "run_augmentation",
    "run_pipeline",
    "save_splats",
    "serve_api",
    "solve_pnp",
]
