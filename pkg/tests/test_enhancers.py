"""Enhancer implementations: identity, analytic single-light, external process."""

from __future__ import annotations

import numpy as np
import pytest

from splatinsert.enhancers import (
    AnalyticLambertianEnhancer,
    ExternalEnhancer,
    IdentityEnhancer,
    make_enhancer,
)
from splatinsert.errors import EnhancerFailure
from splatinsert.scene import NormalMap


def test_identity_semantics():
    e = IdentityEnhancer()
    rng = np.random.default_rng(0)
    sb, sg, ss = rng.random((3, 4, 4, 3))
    assert e.relight(sb, sg, None) is sb
    np.testing.assert_allclose(e.shadow(sb, sg, ss), sb + sg + ss, atol=0)
    assert e.refine_srgb(sb, None, None) is sb


def random_normals(rng, h, w):
    n = rng.normal(size=(h, w, 3))
    n /= np.linalg.norm(n, axis=2, keepdims=True)
    return n


def test_lambertian_fit_recovers_light():
    rng = np.random.default_rng(1)
    h = w = 24
    ambient, light = 0.2, np.array([0.3, -0.2, -0.9])
    normals = random_normals(rng, h, w)

    bg_mask = np.ones((h, w), dtype=bool)
    bg_mask[8:16, 8:16] = False  # carve out a bracelet hole
    shade = ambient + np.maximum(normals @ light, 0.0)
    s_bg = np.where(bg_mask[..., None], shade[..., None], 0.0) * np.ones(3)
    s_bracelet = np.where(~bg_mask[..., None], 0.5, 0.0) * np.ones(3)

    e = AnalyticLambertianEnhancer(alpha=1.0)
    out = e.relight(s_bracelet, s_bg, NormalMap(normals=normals))

    assert e.ambient == pytest.approx(ambient, abs=1e-8)
    np.testing.assert_allclose(e.light, light, atol=1e-8)
    # bracelet pixels re-shaded with the fitted model
    expected = ambient + np.maximum(normals @ light, 0.0)
    inside = ~bg_mask
    np.testing.assert_allclose(out[inside], expected[inside, None] * np.ones(3), atol=1e-7)
    # pixels outside the bracelet mask stay zero
    assert np.all(out[bg_mask] == 0.0)


def test_lambertian_alpha_exponent():
    rng = np.random.default_rng(2)
    h = w = 16
    normals = random_normals(rng, h, w)
    bg_mask = np.ones((h, w), dtype=bool)
    bg_mask[5:10, 5:10] = False
    light = np.array([0.1, 0.1, -1.0])
    shade = 0.3 + np.maximum(normals @ light, 0.0)
    s_bg = np.where(bg_mask[..., None], shade[..., None] * np.ones(3), 0.0)
    s_b = np.where(~bg_mask[..., None], np.ones(3), 0.0)

    e = AnalyticLambertianEnhancer(alpha=2.0)
    out = e.relight(s_b, s_bg, NormalMap(normals=normals))
    inside = ~bg_mask
    expected = e.ambient + np.maximum(normals @ e.light, 0.0) ** 2.0
    np.testing.assert_allclose(out[inside], expected[inside, None] * np.ones(3), atol=1e-7)


def test_lambertian_shadow_cast_away_from_light():
    h = w = 32
    e = AnalyticLambertianEnhancer(
        shadow_strength=0.5, shadow_shift_px=4.0, shadow_sigma_px=0.0
    )
    e.light = np.array([1.0, 0.0, -0.5])  # light from +x: shadow falls toward -x
    s_relit = np.zeros((h, w, 3))
    s_relit[14:18, 20:24] = 1.0
    s_bg = np.zeros((h, w, 3))
    s_surr = np.ones((h, w, 3))

    out = e.shadow(s_relit, s_bg, s_surr)
    # shifted silhouette darkens the surround 4px to the left of the block
    np.testing.assert_allclose(out[14:18, 16:20], 0.5 + s_relit[14:18, 16:20], atol=1e-12)
    # far corner untouched
    np.testing.assert_allclose(out[0:4, 0:4], 1.0, atol=1e-12)
    # the lit block itself sits on a darkened surround (overlap region aside)
    assert out[15, 21, 0] == pytest.approx(1.0 + 1.0, abs=1e-12)


def test_lambertian_shadow_vertical_light_no_shift():
    h = w = 16
    e = AnalyticLambertianEnhancer(
        shadow_strength=1.0, shadow_shift_px=5.0, shadow_sigma_px=0.0
    )
    e.light = np.array([0.0, 0.0, -1.0])  # no image-plane component
    s_relit = np.zeros((h, w, 3))
    s_relit[6:10, 6:10] = 1.0
    out = e.shadow(s_relit, np.zeros_like(s_relit), np.ones_like(s_relit))
    # shadow lands directly under the silhouette
    assert out[7, 7, 0] == pytest.approx(1.0 + 0.0, abs=1e-12)
    assert out[0, 0, 0] == pytest.approx(1.0, abs=1e-12)


def write_doubler_script(tmp_path):
    script = tmp_path / "double.py"
    script.write_text(
        "import sys\n"
        "from pathlib import Path\n"
        "from splatinsert.pfm import read_pfm, write_pfm\n"
        "d = Path(sys.argv[1])\n"
        "img = read_pfm(d / 'cond1.pfm')\n"
        "write_pfm(d / 'out.pfm', img * 2)\n"
    )
    return script


def test_external_roundtrip(tmp_path):
    script = write_doubler_script(tmp_path)
    e = ExternalEnhancer(f"python3 {script}")
    rng = np.random.default_rng(3)
    s = rng.random((6, 8, 3)).astype(np.float32).astype(np.float64)
    out = e.shadow(s, np.zeros_like(s), np.zeros_like(s))
    np.testing.assert_allclose(out, 2.0 * s, atol=1e-7)


def test_external_meta_and_conditions(tmp_path):
    # echo back cond3 and assert the meta stage reached the process
    script = tmp_path / "check.py"
    script.write_text(
        "import json, sys\n"
        "from pathlib import Path\n"
        "from splatinsert.pfm import read_pfm, write_pfm\n"
        "d = Path(sys.argv[1])\n"
        "meta = json.loads((d / 'meta.json').read_text())\n"
        "assert meta['stage'] == 'relight', meta\n"
        "assert 'frame' in meta\n"
        "write_pfm(d / 'out.pfm', read_pfm(d / 'cond3.pfm'))\n"
    )
    e = ExternalEnhancer(f"python3 {script}", frame_index=7)
    n = np.zeros((4, 4, 3))
    n[..., 2] = -1.0
    out = e.relight(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), NormalMap(normals=n))
    np.testing.assert_allclose(out, n, atol=1e-7)


def test_external_nonzero_exit():
    e = ExternalEnhancer("python3 -c 'import sys; sys.exit(3)'")
    with pytest.raises(EnhancerFailure, match="exited 3"):
        e.refine_srgb(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))


def test_external_missing_output():
    e = ExternalEnhancer("python3 -c 'pass'")
    with pytest.raises(EnhancerFailure, match="out.pfm"):
        e.refine_srgb(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))


def test_make_enhancer_dispatch():
    assert isinstance(make_enhancer("identity"), IdentityEnhancer)
    assert isinstance(make_enhancer("lambertian"), AnalyticLambertianEnhancer)
    ext = make_enhancer("external:mycmd --flag")
    assert isinstance(ext, ExternalEnhancer)
    assert ext.command == "mycmd --flag"
    with pytest.raises(ValueError):
        make_enhancer("external:")
    with pytest.raises(ValueError):
        make_enhancer("nonsense")
