"""Command-line client: thin wrappers over the same orchestration the API uses."""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .config import load_config
from .errors import NudgexError
from .pipeline import Pipeline, PipelineRun


def _build_pipeline(ctx: click.Context) -> Pipeline:
    config = load_config(ctx.obj.get("config"), data_root=ctx.obj.get("data_root"))
    return Pipeline(config)


def _finish(run: PipelineRun) -> None:
    for item in run.items:
        suffix = f" ({item.reason})" if item.reason else ""
        click.echo(f"{item.status:5s} {item.item_id}{suffix}")
    click.echo(
        f"{run.stage}: {run.ok_count} ok, {run.skip_count} skipped, {run.error_count} errored"
    )
    if run.errored:
        sys.exit(1)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="TOML config file.")
@click.option("--data-root", type=click.Path(path_type=Path), default=None,
              help="Data root directory (overrides config).")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path], data_root: Optional[Path]):
    """Mining-site captioning pipeline and RAG query tool."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = config_path
    ctx.obj["data_root"] = data_root


@main.command()
@click.argument("sites", type=click.Path(exists=True, path_type=Path))
@click.option("--dossiers", type=click.Path(exists=True, file_okay=False, path_type=Path),
              default=None, help="Directory of <site_id>.md dossier files.")
@click.pass_context
def ingest(ctx: click.Context, sites: Path, dossiers: Optional[Path]):
    """Ingest a CSV/JSONL site file and optional dossier directory."""
    _finish(_build_pipeline(ctx).ingest(sites, dossiers))


@main.command()
@click.option("--site", default=None, help="Limit to one site id.")
@click.pass_context
def acquire(ctx: click.Context, site: Optional[str]):
    """Plan and fetch candidate scenes for catalog sites."""
    _finish(_build_pipeline(ctx).acquire(site_id=site))


@main.command()
@click.option("--site", default=None, help="Limit to one site id.")
@click.pass_context
def caption(ctx: click.Context, site: Optional[str]):
    """Generate caption candidates for approved scenes."""
    _finish(_build_pipeline(ctx).caption(site_id=site))


@main.command()
@click.option("--site", default=None, help="Limit to one site id.")
@click.pass_context
def judge(ctx: click.Context, site: Optional[str]):
    """Score caption candidates and gate them."""
    _finish(_build_pipeline(ctx).judge(site_id=site))


@main.command("rag-index")
@click.pass_context
def rag_index(ctx: click.Context):
    """Embed accepted captions into the retrieval index."""
    _finish(_build_pipeline(ctx).rag_index())


@main.command()
@click.argument("question")
@click.option("--k", type=int, default=None, help="Number of chunks to retrieve.")
@click.option("--country", default=None, help="Two-letter country filter.")
@click.pass_context
def query(ctx: click.Context, question: str, k: Optional[int], country: Optional[str]):
    """Ask the RAG store a question and print the grounded answer."""
    result = _build_pipeline(ctx).query(question, k=k, country=country)
    click.echo(result.answer_text)
    click.echo("")
    click.echo("cited sites: " + (", ".join(result.cited_site_ids) or "none"))
    click.echo("evidence:")
    for hit in result.hits_used:
        click.echo(f"  [{hit.chunk.site_id}] score {hit.score:.3f}: {hit.chunk.text[:80]}")


@main.command("review-scene")
@click.argument("scene_id")
@click.argument("verdict", type=click.Choice(["approved", "rejected"]))
@click.option("--reviewer", required=True)
@click.pass_context
def review_scene(ctx: click.Context, scene_id: str, verdict: str, reviewer: str):
    """Record the human verdict for a pending scene."""
    asset = _build_pipeline(ctx).review_scene(scene_id, verdict, reviewer)
    click.echo(json.dumps(asset.to_json(), sort_keys=True, indent=2))


@main.command("review-caption")
@click.argument("caption_id")
@click.argument("verdict", type=click.Choice(["approved", "rejected"]))
@click.option("--reviewer", required=True)
@click.pass_context
def review_caption(ctx: click.Context, caption_id: str, verdict: str, reviewer: str):
    """Record the human verdict for a judge-accepted caption."""
    updated = _build_pipeline(ctx).review_caption(caption_id, verdict, reviewer)
    click.echo(json.dumps(updated.to_json(), sort_keys=True, indent=2))


@main.command()
@click.option("--bind", default=None, help="host:port to bind (overrides config).")
@click.pass_context
def serve(ctx: click.Context, bind: Optional[str]):
    """Run the HTTP API (and the web UI when built)."""
    import uvicorn

    from .api import create_app

    pipeline = _build_pipeline(ctx)
    address = bind or pipeline.config.service.bind
    host, _, port = address.partition(":")
    app = create_app(pipeline)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8088))


def entrypoint():  # pragma: no cover - console_scripts shim
    try:
        main()
    except NudgexError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
