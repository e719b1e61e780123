"""Thin command-line client over the HTTP service.

Every subcommand speaks the service API. By default the app runs
in-process over an ASGI transport so no server needs to be up for
batch use; point --server (or DRIVEBENCH_SERVER) at a running
`drivebench serve` instance to go over the network instead.

Exit codes: 0 success, 1 fatal config or I/O error, 2 run completed
but some frames hit transport or image errors.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_FRAME_ERRORS = 2

_POLL_INTERVAL_S = 0.2


def _make_client(server: str | None) -> httpx.AsyncClient:
    if server:
        return httpx.AsyncClient(base_url=server, timeout=None)
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    return httpx.AsyncClient(
        transport=transport, base_url="http://drivebench.local", timeout=None
    )


def _fail(message: str) -> int:
    click.echo(f"error: {message}", err=True)
    return EXIT_FATAL


def _detail(response: httpx.Response) -> str:
    try:
        return response.json().get("detail", response.text)
    except (json.JSONDecodeError, ValueError, AttributeError):
        return response.text


def _plural(n: int, noun: str) -> str:
    return f"{n} {noun}" + ("" if n == 1 else "s")


@click.group()
@click.option(
    "--server",
    envvar="DRIVEBENCH_SERVER",
    default=None,
    help="Base URL of a running service; default runs the app in-process.",
)
@click.pass_context
def main(ctx, server):
    """Drive vision-language models through driving scenarios and score them."""
    ctx.obj = {"server": server}


@main.command()
@click.option("--dataroot", required=True, help="Dataset root with the metadata tables.")
@click.option("--scenes", "scenes_path", required=True, help="File with one scene per line.")
@click.option("--out", required=True, help="Scenario JSONL to write.")
@click.pass_context
def ingest(ctx, dataroot, scenes_path, out):
    """Convert dataset scenes into a self-contained scenario file."""

    async def _run() -> int:
        if not Path(scenes_path).is_file():
            return _fail(f"scene list not found: {scenes_path}")
        async with _make_client(ctx.obj["server"]) as client:
            response = await client.post(
                "/ingest",
                json={"dataroot": dataroot, "scenes_path": scenes_path, "out": out},
            )
            if response.status_code != 200:
                return _fail(_detail(response))
            body = response.json()
            click.echo(
                f"{_plural(body['scenes'], 'scene')}, {_plural(body['frames'], 'frame')}"
            )
            click.echo(f"wrote {body['out']}")
            return EXIT_OK

    ctx.exit(asyncio.run(_run()))


@main.command()
@click.option("--config", "config_path", required=True, help="Run config JSON.")
@click.option("--resume", is_flag=True, help="Skip frames already in the run ledger.")
@click.option("--limit", type=int, default=None, help="Only the first N frames.")
@click.option(
    "--normalize",
    is_flag=True,
    help="Also write results.normalized.jsonl with latency fields zeroed.",
)
@click.pass_context
def run(ctx, config_path, resume, limit, normalize):
    """Execute the three-stage pipeline over a scenario file."""

    async def _run() -> int:
        try:
            raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except OSError as exc:
            return _fail(str(exc))
        except json.JSONDecodeError as exc:
            return _fail(f"config is not valid JSON: {exc}")
        async with _make_client(ctx.obj["server"]) as client:
            response = await client.post(
                "/runs",
                json={
                    "config": raw,
                    "resume": resume,
                    "limit": limit,
                    "normalize": normalize,
                },
            )
            if response.status_code not in (200, 202):
                return _fail(_detail(response))
            run_id = response.json()["run_id"]
            last_done = -1
            while True:
                status = (await client.get(f"/runs/{run_id}")).json()
                if status["frames_done"] != last_done and status["frames_in_scope"]:
                    last_done = status["frames_done"]
                    click.echo(
                        f"\r{run_id}: {last_done}/{status['frames_in_scope']} frames",
                        nl=False,
                    )
                if status["state"] in ("done", "failed"):
                    break
                await asyncio.sleep(_POLL_INTERVAL_S)
            click.echo()
            if status["state"] == "failed":
                return _fail(status["error"] or "run failed")
            click.echo(
                f"completed {status['frames_done']}/{status['frames_in_scope']} "
                f"frames ({status['newly_run']} new) -> {status['results_path']}"
            )
            if status["frame_errors"]:
                click.echo(
                    f"warning: {_plural(status['frame_errors'], 'frame')} hit "
                    "transport or image errors",
                    err=True,
                )
                return EXIT_FRAME_ERRORS
            return EXIT_OK

    ctx.exit(asyncio.run(_run()))


@main.command()
@click.option(
    "--runs",
    "run_dirs",
    required=True,
    multiple=True,
    help="Run directory; repeat for multi-model reports.",
)
@click.option("--out", required=True, help="Report output directory.")
@click.option(
    "--allow-mixed-decisions",
    is_flag=True,
    help="Co-filter runs even when their decision records differ.",
)
@click.pass_context
def report(ctx, run_dirs, out, allow_mixed_decisions):
    """Render tables, CSV, and trajectory overlays from finished runs."""

    async def _run() -> int:
        async with _make_client(ctx.obj["server"]) as client:
            response = await client.post(
                "/reports",
                json={
                    "runs": list(run_dirs),
                    "out": out,
                    "allow_mixed_decisions": allow_mixed_decisions,
                },
            )
            if response.status_code != 200:
                return _fail(_detail(response))
            body = response.json()
            click.echo(
                f"retained {body['retained']}/{body['universe']} frames "
                f"({body['retention_rate']:.1f}%)"
            )
            click.echo(f"report: {body['report_path']}")
            return EXIT_OK

    ctx.exit(asyncio.run(_run()))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8320, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
