"""Command-line entry points: run the pipeline, serve placement, emit training pairs."""

from __future__ import annotations

import sys

import click

from .errors import EngineError
from .pipeline import run_augmentation, run_pipeline
from .server import serve_api


@click.group()
def main() -> None:
    """Video object insertion engine."""


@main.command()
@click.argument("scene_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--stages", default=None, help="Comma-separated subset of track,occlusion,preview,enhance,smooth,final.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Config JSON replacing the scene's config.json.")
@click.option("--enhancer", default=None, help="identity | lambertian | external:<cmd>")
@click.option("--seed", default=None, type=int, help="Override the scene seed.")
def run(scene_dir, stages, config_path, enhancer, seed) -> None:
    """Run pipeline stages on SCENE_DIR."""
    overrides = {}
    if enhancer is not None:
        overrides["enhancer"] = enhancer
    if seed is not None:
        overrides["seed"] = seed
    stage_list = [s.strip() for s in stages.split(",") if s.strip()] if stages else None
    try:
        result = run_pipeline(
            scene_dir,
            stages=stage_list,
            config_overrides=overrides or None,
            config_path=config_path,
        )
    except EngineError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    for name, st in result.statuses.items():
        line = f"{name}: {st.status} ({st.seconds:.2f}s)"
        if st.error:
            line += f" -- {st.error}"
        click.echo(line)
    sys.exit(0 if result.ok else 1)


@main.command()
@click.argument("scene_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--port", required=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(scene_dir, port, host) -> None:
    """Serve the placement API for SCENE_DIR."""
    try:
        serve_api(scene_dir, port=port, host=host)
    except EngineError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


@main.command()
@click.argument("scene_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--stage", required=True, type=click.Choice(["relight", "shadow"]))
@click.option("--count", required=True, type=int)
@click.option("--seed", default=None, type=int, help="Defaults to the scene seed.")
def augment(scene_dir, stage, count, seed) -> None:
    """Write COUNT training pairs for STAGE under SCENE_DIR/pairs/."""
    if count <= 0:
        click.echo("error: --count must be positive", err=True)
        sys.exit(1)
    try:
        dirs = run_augmentation(scene_dir, stage, count, seed)
    except EngineError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(f"wrote {len(dirs)} pairs under {dirs[0].parent}")


if __name__ == "__main__":
    main()
