"""Command-line client for the reduced-order-model service.

The CLI never runs pipeline code itself: every command is a request to the
HTTP API, served either by a remote instance (``--server``) or by an
in-process application when no server is given.  Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import yaml

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_KIND_TO_EXIT = {"config": EXIT_CONFIG, "numerical": EXIT_NUMERICAL, "io": EXIT_IO}


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _fail(kind: str, message: str):
    click.echo(f"error ({kind}):", err=True)
    for line in message.split("; "):
        click.echo(f"  - {line}", err=True)
    sys.exit(_KIND_TO_EXIT.get(kind, EXIT_IO))


def _request(server, method, path, payload=None):
    try:
        client = _client(server)
    except Exception as exc:  # pragma: no cover - import/connect problems
        _fail("io", str(exc))
    try:
        if method == "get":
            resp = client.get(path)
        else:
            resp = client.post(path, json=payload)
    except Exception as exc:
        _fail("io", f"request to {path} failed: {exc}")
    if resp.status_code >= 400:
        try:
            body = resp.json()
            err = body.get("error") or {}
            kind = err.get("kind", "io")
            message = err.get("message")
            if message is None:
                # Validation errors raised by the API layer itself.
                kind = "config"
                message = "; ".join(
                    f"{'.'.join(str(p) for p in item.get('loc', []))}: {item.get('msg')}"
                    for item in body.get("detail", [])
                ) or json.dumps(body)
        except (ValueError, AttributeError):
            kind, message = "io", resp.text
        _fail(kind, message)
    return resp.json()


def _config_payload(config, preset, **overrides):
    if (config is None) == (preset is None):
        _fail("config", "provide exactly one of --config or --preset")
    payload = {}
    if config is not None:
        path = Path(config)
        if not path.exists():
            _fail("io", f"config file not found: {path}")
        try:
            payload["config"] = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            _fail("config", f"not valid YAML/JSON: {exc}")
    else:
        payload["preset"] = preset
    patch = {k: v for k, v in overrides.items() if v is not None}
    if patch:
        payload["overrides"] = patch
    return payload


_common = [
    click.option("--server", default=None, help="Base URL of a running service; "
                 "defaults to an in-process application."),
]


def _add_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


@click.group()
def main():
    """Reduced order models for parametric kinetic transport."""


@main.command()
@click.option("--config", type=click.Path(), default=None, help="Run configuration file.")
@click.option("--preset", default=None, help="Built-in experiment name.")
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--sample-stride", type=int, default=None)
@click.option("--out", default=None, help="Snapshot file destination.")
@_add_options(_common)
def snapshots(config, preset, seed, threads, sample_stride, out, server):
    """Generate the training snapshot matrix."""
    payload = _config_payload(
        config, preset, seed=seed, threads=threads, out=out, sample_stride=sample_stride
    )
    body = _request(server, "post", "/snapshots", payload)
    click.echo(
        f"snapshots: {body['n_dofs']} dofs x {body['n_snapshots']} columns "
        f"({body['n_times']} times x {body['n_params']} parameters)"
    )
    click.echo(f"  file:   {body['path']}")
    click.echo(f"  config: {body['config_hash'][:12]}  ({body['elapsed_s']:.1f} s)")


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--preset", default=None)
@click.option("--snapshots", "snapshots_path", type=click.Path(), default=None,
              help="Snapshot file (defaults to the config io block).")
@click.option("--method", type=click.Choice(["pod", "uniform", "adaptive", "hybrid"]),
              default=None)
@click.option("--pod-tol", type=float, default=None)
@click.option("--k", type=int, default=None, help="Uniform/initial interval count.")
@click.option("--epochs", type=int, default=None, help="Autoencoder training epochs.")
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--out", default=None, help="Bundle directory destination.")
@_add_options(_common)
def build(config, preset, snapshots_path, method, pod_tol, k, epochs, seed, threads, out, server):
    """Build a reduced model bundle from snapshots."""
    payload = _config_payload(
        config, preset, method=method, pod_tol=pod_tol, k=k, epochs=epochs,
        seed=seed, threads=threads, out=out,
    )
    if snapshots_path:
        payload["snapshots_path"] = snapshots_path
    body = _request(server, "post", "/build", payload)
    click.echo(f"build: {body['method']} bundle -> {body['bundle_dir']}")
    edges = body["boundaries"]
    for j, (kind, dim) in enumerate(zip(body["kinds"], body["latent_dims"])):
        click.echo(
            f"  interval {j}: ({edges[j]:g}, {edges[j + 1]:g}]  {kind}  dim={dim}"
        )
    if body["sweep_history"]:
        click.echo("  adaptation sweeps:")
        for i, sweep in enumerate(body["sweep_history"]):
            click.echo(f"    {i}: ranks {sweep['ranks']}")
    click.echo(
        f"  iterations={body['iterations']} converged={body['converged']} "
        f"({body['elapsed_s']:.1f} s)"
    )


@main.command()
@click.option("--bundle", "bundle_dir", type=click.Path(), required=True)
@click.option("--time", "t", type=float, required=True, help="Training sample time.")
@click.option("--mu", required=True, help="Parameter value (comma-separated if vector).")
@click.option("--state/--no-state", default=False, help="Include the full state vector.")
@click.option("--out", type=click.Path(), default=None, help="Write the result as JSON.")
@_add_options(_common)
def predict(bundle_dir, t, mu, state, out, server):
    """Predict one (time, parameter) case from a bundle."""
    try:
        parts = [float(v) for v in str(mu).split(",")]
    except ValueError:
        _fail("config", f"--mu must be numeric, got {mu!r}")
    payload = {
        "bundle_dir": bundle_dir,
        "t": t,
        "mu": parts[0] if len(parts) == 1 else parts,
        "include_state": state,
    }
    body = _request(server, "post", "/predict", payload)
    click.echo(
        f"predict: t={body['t']:g} mu={body['mu']} interval={body['interval']} "
        f"({body['online_us']:.0f} us)"
    )
    if body.get("rho") is not None:
        rho = body["rho"]
        click.echo(f"  rho: n={len(rho)} min={min(rho):.6g} max={max(rho):.6g}")
    if out:
        Path(out).write_text(json.dumps(body))
        click.echo(f"  written: {out}")


@main.command()
@click.option("--config", type=click.Path(), default=None)
@click.option("--preset", default=None)
@click.option("--bundle", "bundle_dir", type=click.Path(), default=None)
@click.option("--snapshots", "snapshots_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None, help="Reports directory destination.")
@click.option("--force", is_flag=True, default=False,
              help="Ignore bundle/snapshot hash mismatches.")
@_add_options(_common)
def evaluate(config, preset, bundle_dir, snapshots_path, seed, out, force, server):
    """Score a bundle against fresh full-order references."""
    payload = _config_payload(config, preset, seed=seed, out=out)
    payload["force"] = force
    if bundle_dir:
        payload["bundle_dir"] = bundle_dir
    if snapshots_path:
        payload["snapshots_path"] = snapshots_path
    body = _request(server, "post", "/evaluate", payload)
    click.echo(f"evaluate: E_f={body['e_f']:.4e}  E_rho={body['e_rho']:.4e} "
               f"over {body['n_cases']} cases")
    for row in body["intervals"]:
        click.echo(
            f"  interval {row['interval']}: ({row['t_start']:g}, {row['t_end']:g}] "
            f"{row['kind']} dim={row['latent_dim']} mean_online={row['mean_online_us']:.0f} us"
        )
    click.echo(f"  rows:    {body['rows_csv']}")
    click.echo(f"  summary: {body['summary_csv']}")


@main.command()
@click.option("--rows", "rows_csv", type=click.Path(), required=True,
              help="Per-case report CSV from evaluate.")
@click.option("--out", type=click.Path(), required=True)
@_add_options(_common)
def report(rows_csv, out, server):
    """Render SVG charts from an evaluation report."""
    body = _request(server, "post", "/report", {"rows_csv": rows_csv, "out_dir": out})
    for f in body["files"]:
        click.echo(f"written: {f}")


@main.command()
@_add_options(_common)
def schema(server):
    """Print the JSON schema of the run configuration."""
    body = _request(server, "get", "/config/schema")
    click.echo(json.dumps(body, indent=2))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
