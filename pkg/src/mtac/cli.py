"""Command-line surface: synth, train, evaluate, audit, report, serve.

Every data command is a thin client over the HTTP service. By default the
app is run in-process (no server needed); pass --server to point the same
commands at a remote instance. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import click
from pydantic import ValidationError

from . import service
from .trainer import BRANCH_PRESETS, TrainConfig

NOISE_GRID = (0.0, 0.1, 0.2, 0.3)
BRANCH_CHOICES = tuple(BRANCH_PRESETS)
EDGE_CHOICES = ("data", "random", "fixed")
OUT_ROOT_ENV = "MTAC_OUT_ROOT"


class Client:
    """POST helper that maps HTTP statuses onto the CLI exit-code contract."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient

            self._client = TestClient(service.app, raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except Exception as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            raise SystemExit(1)
        if resp.status_code in (400, 422):
            click.echo(f"error: {_detail(resp)}", err=True)
            raise SystemExit(2)
        if resp.status_code != 200:
            click.echo(f"error: {_detail(resp)}", err=True)
            raise SystemExit(1)
        return resp.json()


def _detail(resp) -> str:
    try:
        detail = resp.json().get("detail")
    except Exception:
        return resp.text
    if isinstance(detail, str):
        return detail
    return json.dumps(detail)


def _resolve_out(out: str | None, default_name: str) -> str:
    if out:
        return out
    root = os.environ.get(OUT_ROOT_ENV)
    if not root:
        raise click.UsageError(f"pass --out or set {OUT_ROOT_ENV}")
    return str(Path(root) / default_name)


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"{path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise click.UsageError(f"{path} must hold a JSON object")
    return raw


@click.group()
@click.option("--server", default=None, metavar="URL", help="Talk to a running service instead of in-process.")
@click.pass_context
def main(ctx, server):
    """Noise-robust multi-task emotion classification experiments."""
    ctx.obj = Client(server)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON with generator fields plus optional n_per_class / n_test_per_class / noise / noise_seed.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides the generator seed from --config.")
@click.pass_obj
def synth(client: Client, config_path, out, seed):
    """Generate a synthetic labeled corpus (plus a flip mask when noise > 0)."""
    raw = _read_json(config_path)
    payload = {
        "out_dir": out,
        "n_per_class": raw.pop("n_per_class", 700),
        "n_test_per_class": raw.pop("n_test_per_class", None),
        "noise": raw.pop("noise", 0.0),
        "noise_seed": raw.pop("noise_seed", None),
    }
    if seed is not None:
        raw["seed"] = seed
    payload["generator"] = raw
    data = client.post("/synth", payload)
    click.echo(f"wrote {data['manifest_path']} ({data['n_train']} train / {data['n_test']} test)")
    if data["mask_path"]:
        click.echo(f"wrote {data['mask_path']} ({data['n_flipped']} flipped labels)")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON with training fields; explicit flags below override it.")
@click.option("--noise", type=float, default=0.0, show_default=True,
              help=f"Label corruption injected before training; standard grid {NOISE_GRID}.")
@click.option("--off-grid", is_flag=True, help="Allow --noise values outside the standard grid.")
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flip mask sidecar when the manifest is already corrupted.")
@click.option("--branches", type=click.Choice(BRANCH_CHOICES), default=None,
              help="Branch preset; default 'full' unless --config sets the switches.")
@click.option("--edges", type=click.Choice(EDGE_CHOICES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help=f"Run directory; default is an auto-named folder under ${OUT_ROOT_ENV}.")
@click.pass_obj
def train(client: Client, manifest_path, config_path, noise, off_grid, mask_path, branches, edges, seed, epochs, out):
    """Train one configuration and leave a self-describing run directory."""
    if noise not in NOISE_GRID and not off_grid:
        raise click.UsageError(f"--noise {noise} is outside the standard grid {NOISE_GRID}; pass --off-grid to force")
    cfg = _read_json(config_path)
    if branches is not None:
        cfg.update(BRANCH_PRESETS[branches])
    if edges is not None:
        cfg["edge_mode"] = edges
    if seed is not None:
        cfg["seed"] = seed
    if epochs is not None:
        cfg["epochs"] = epochs
    try:
        config = TrainConfig(**cfg)
    except (ValidationError, ValueError) as exc:
        raise click.UsageError(str(exc))
    out = _resolve_out(out, f"{config.branch_name()}-{config.edge_mode}-n{noise}-s{config.seed}")
    payload = {
        "manifest_path": manifest_path,
        "out_dir": out,
        "mask_path": mask_path,
        "noise": noise,
        "config": config.model_dump(mode="json"),
    }
    data = client.post("/train", payload)
    final = data["final"]
    click.echo(f"run {data['config_hash']} finished: {data['out_dir']}")
    click.echo(f"  test accuracy  {_num(final['test_accuracy'])}")
    click.echo(f"  valence CCC    {_num(final['ccc_valence'])}")
    click.echo(f"  arousal CCC    {_num(final['ccc_arousal'])}")
    if final.get("relabels_total"):
        click.echo(
            f"  relabels       {final['relabels_total']}"
            f" (precision {_num(final['relabel_precision'])}, recall {_num(final['relabel_recall'])})"
        )


@main.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.pass_obj
def evaluate(client: Client, checkpoint_path, manifest_path, split):
    """Score a checkpoint on a manifest split."""
    data = client.post(
        "/evaluate",
        {"checkpoint_path": checkpoint_path, "manifest_path": manifest_path, "split": split},
    )
    click.echo(f"{data['split']} ({data['n']} samples)")
    click.echo(f"  accuracy     {_num(data['accuracy'])}")
    click.echo(f"  valence CCC  {_num(data['ccc_valence'])}")
    click.echo(f"  arousal CCC  {_num(data['ccc_arousal'])}")
    per_class = ", ".join(_num(v) for v in data["per_class_accuracy"])
    click.echo(f"  per class    {per_class}")


@main.command()
@click.option("--audit", "audit_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="relabel-audit.jsonl from a run directory.")
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flip mask with the injected corruption ground truth.")
@click.pass_obj
def audit(client: Client, audit_path, mask_path):
    """Score a run's relabel decisions against the injected-corruption ground truth."""
    data = client.post("/audit", {"audit_path": audit_path, "mask_path": mask_path})
    click.echo(f"decisions {data['n_decisions']}, applied {data['n_applied']}, net corrected {data['n_corrected']}")
    if data["n_flipped"] is not None:
        click.echo(f"injected flips {data['n_flipped']}, corrected to truth {data['n_corrected_to_truth']}")
        click.echo(f"precision {_num(data['precision'])}  recall {_num(data['recall'])}")


@main.command()
@click.option("--runs", multiple=True, required=True, type=click.Path(exists=True, file_okay=False),
              help="Run directories or trees of them; repeatable.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Also write report.txt and report.csv into this directory.")
@click.pass_obj
def report(client: Client, runs, out):
    """Aggregate runs into a strategy table (median over seeds)."""
    csv_path = str(Path(out) / "report.csv") if out else None
    data = client.post("/report", {"roots": list(runs), "csv_path": csv_path})
    click.echo(data["table"], nl=False)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "report.txt").write_text(data["table"], encoding="utf-8")
        click.echo(f"wrote {Path(out) / 'report.txt'} and {csv_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("mtac.service:app", host=host, port=port)


def _num(v) -> str:
    return "-" if v is None else f"{v:.4f}"


if __name__ == "__main__":
    main()
