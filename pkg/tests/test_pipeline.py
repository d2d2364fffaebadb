"""End-to-end pipeline behavior: staging, persistence, determinism, metrics."""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from oracles import direct_flicker
from splatinsert.errors import ConfigError, EmptyMask, StageError
from splatinsert.pipeline import (
    PlacementState,
    flicker_metric,
    load_placement,
    run_augmentation,
    run_pipeline,
    save_placement,
)
from splatinsert.scene_io import load_poses
from splatinsert.synthetic import generate_scene


def make_scene(tmp_path, name="scene", frames=4, res=64, seed=0, **kw):
    d = tmp_path / name
    generate_scene(d, num_frames=frames, resolution=res, seed=seed, **kw)
    return d


def tree_digest(root: Path, skip=(".engine.lock",)) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip:
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# -- flicker metric ---------------------------------------------------------


def test_flicker_identical_frames():
    frames = [np.full((6, 6, 3), 0.5)] * 4
    mask = np.ones((6, 6), dtype=bool)
    assert flicker_metric(frames, mask) == 0.0


def test_flicker_alternating():
    a = np.zeros((4, 4, 3))
    b = np.ones((4, 4, 3))
    mask = np.ones((4, 4), dtype=bool)
    assert flicker_metric([a, b, a, b], mask) == pytest.approx(1.0)


def test_flicker_matches_direct():
    rng = np.random.default_rng(0)
    frames = [rng.random((8, 8, 3)) for _ in range(5)]
    mask = rng.random((8, 8)) > 0.4
    assert flicker_metric(frames, mask) == pytest.approx(
        direct_flicker(frames, mask), abs=1e-12
    )


def test_flicker_validation():
    mask = np.ones((4, 4), dtype=bool)
    with pytest.raises(ValueError):
        flicker_metric([np.zeros((4, 4, 3))], mask)
    with pytest.raises(EmptyMask):
        flicker_metric([np.zeros((4, 4, 3))] * 2, np.zeros((4, 4), dtype=bool))


# -- full runs --------------------------------------------------------------


def test_full_run_green(tmp_path):
    scene = make_scene(tmp_path)
    run = run_pipeline(scene)
    assert run.ok
    assert all(s.status == "done" for s in run.statuses.values())
    for sub in ("preview", "enhanced", "rerender", "final"):
        assert len(list((scene / sub).glob("*.png"))) == 4, sub
    metrics = json.loads((scene / "metrics.json").read_text())
    assert set(metrics) >= {"pnp", "depth_scale", "enhance", "smooth", "final"}
    assert len(metrics["pnp"]["rms_px"]) == 4
    assert len(metrics["depth_scale"]) == 4
    # synthetic tracks are exact: sub-pixel reprojection everywhere
    assert max(metrics["pnp"]["rms_px"]) < 0.5
    assert all(abs(s - 1.0) < 0.05 for s in metrics["depth_scale"])
    assert metrics["final"]["frames"] == 4
    assert not (scene / ".engine.lock").exists()


def test_track_only_writes_poses(tmp_path):
    scene = make_scene(tmp_path)
    run = run_pipeline(scene, stages=["track"])
    assert run.ok
    assert set(run.statuses) == {"track"}
    poses = load_poses(scene / "poses.json")
    assert len(poses) == 4
    assert not (scene / "preview").exists()


def test_rerun_byte_identical(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    run_pipeline(scene)
    first = tree_digest(scene)
    run_pipeline(scene)
    assert tree_digest(scene) == first


def test_stage_order_enforced(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    # occlusion before track: poses.json is missing
    run = run_pipeline(scene, stages=["occlusion"])
    assert not run.ok
    assert "poses.json" in run.statuses["occlusion"].error


def test_failed_stage_blocks_downstream(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    run_pipeline(scene, stages=["track", "occlusion", "preview"])
    shutil.rmtree(scene / "albedo")  # enhance can no longer build layers
    run = run_pipeline(scene, stages=["enhance", "smooth", "final"])
    assert not run.ok
    assert run.statuses["enhance"].status == "failed"
    assert "albedo" in run.statuses["enhance"].error
    assert run.statuses["smooth"].status == "failed"
    assert run.statuses["smooth"].error == "blocked by earlier failure"
    assert run.statuses["final"].status == "failed"


def test_unknown_stage_rejected(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    with pytest.raises(ConfigError, match="unknown stages"):
        run_pipeline(scene, stages=["track", "render"])


def test_unlocked_placement_rejected(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    placement = load_placement(scene)
    placement.locked = False
    save_placement(scene, placement)
    with pytest.raises(ConfigError, match="locked"):
        run_pipeline(scene)


def test_missing_placement_rejected(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    (scene / "placement.json").unlink()
    cfg = json.loads((scene / "config.json").read_text())
    assert "placement" not in cfg
    with pytest.raises(ConfigError, match="placement"):
        run_pipeline(scene)


def test_placement_from_config(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    placement = load_placement(scene)
    cfg = json.loads((scene / "config.json").read_text())
    cfg["placement"] = placement.to_dict()
    (scene / "config.json").write_text(json.dumps(cfg))
    (scene / "placement.json").unlink()
    run = run_pipeline(scene, stages=["track"])
    assert run.ok


def test_concurrent_run_lock(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    (scene / ".engine.lock").write_text("1234")
    with pytest.raises(StageError, match="lock"):
        run_pipeline(scene, stages=["track"])
    (scene / ".engine.lock").unlink()
    assert run_pipeline(scene, stages=["track"]).ok


def test_config_overrides(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    run = run_pipeline(
        scene, stages=["track"], config_overrides={"min_anchors": 100}
    )
    assert not run.ok
    assert "100" in run.statuses["track"].error


def test_anchor_floor_enforced(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    placement = load_placement(scene)
    placement.anchors = placement.anchors[:5]
    save_placement(scene, placement)
    run = run_pipeline(scene, stages=["track"])
    assert run.statuses["track"].status == "failed"
    assert "need >= 6 anchors" in run.statuses["track"].error


# -- augmentation entry point -------------------------------------------------


def test_run_augmentation_emits_pairs(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    run_pipeline(scene, stages=["track"])
    dirs = run_augmentation(scene, "relight", count=4, seed=11)
    assert len(dirs) == 4
    assert all(d.parent == scene / "pairs" / "relight" for d in dirs)
    meta = json.loads((dirs[0] / "meta.json").read_text())
    assert meta["seed"] == 11
    assert meta["stage"] == "relight"


def test_run_augmentation_without_poses_uses_placement(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    dirs = run_augmentation(scene, "shadow", count=2)
    assert len(dirs) == 2
    meta = json.loads((dirs[1] / "meta.json").read_text())
    # seed falls back to the scene config
    cfg_seed = json.loads((scene / "config.json").read_text()).get("seed", 0)
    assert meta["seed"] == cfg_seed


def test_run_augmentation_requires_layers(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    shutil.rmtree(scene / "shading")
    with pytest.raises(ConfigError, match="shading"):
        run_augmentation(scene, "relight", count=1)


def test_run_augmentation_requires_placement(tmp_path):
    scene = make_scene(tmp_path, frames=3, res=48)
    (scene / "placement.json").unlink()
    with pytest.raises(ConfigError, match="placement"):
        run_augmentation(scene, "relight", count=1)
