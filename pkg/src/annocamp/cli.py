"""Operator command line: campaign setup, simulation, reports, subject
labeling, export, and the HTTP server.

Two modes: embedded (the default; commands open the store file directly)
and client (``--server URL --admin-token T``; commands go through the HTTP
API). The simulator is embedded-only since it audits engine internals.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage or validation error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import errors, release
from .analytics import get_report, report_to_csv, report_to_json
from .auth import generate_annotators
from .client import ServiceClient, ServiceError
from .i18n import load_catalogs
from .model import DEFAULT_FEATURE_DIM
from .simulate import run_simulation
from .store import Store

DEFAULT_STORE = "annocamp.db"

_CONFIG_KEYS = {
    "id", "name", "quota", "annotators", "images", "features", "language",
    "categories", "prompt_key", "seed", "feature_dim", "credentials_out",
    "activate",
}


def parse_config(path: Path) -> dict:
    """Plain ``key = value`` campaign config; ``#`` comments allowed."""
    values: dict = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise errors.InvalidConfig(
                f"line {line_no}: expected key = value, got {line!r}"
            )
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise errors.InvalidConfig(f"line {line_no}: unknown key {key!r}", field=key)
        values[key] = value.strip()
    if "name" not in values:
        raise errors.InvalidConfig("config must set name", field="name")
    for int_key in ("quota", "annotators", "seed", "feature_dim"):
        if int_key in values:
            try:
                values[int_key] = int(values[int_key])
            except ValueError:
                raise errors.InvalidConfig(
                    f"{int_key} must be an integer, got {values[int_key]!r}",
                    field=int_key,
                )
    if "quota" not in values:
        raise errors.InvalidConfig("config must set quota", field="quota")
    if "categories" in values:
        values["categories"] = [
            c.strip() for c in values["categories"].split(",") if c.strip()
        ]
    if "activate" in values:
        values["activate"] = values["activate"].lower() in ("1", "true", "yes")
    return values


class Context:
    def __init__(self, store_path, server, admin_token):
        if server and not admin_token:
            raise click.UsageError("--server requires --admin-token")
        self.store_path = store_path
        self.server = server
        self.admin_token = admin_token
        self._store = None

    @property
    def embedded(self) -> bool:
        return self.server is None

    @property
    def store(self) -> Store:
        if self._store is None:
            self._store = Store(self.store_path)
        return self._store

    @property
    def client(self) -> ServiceClient:
        return ServiceClient(self.server, self.admin_token)


pass_context = click.make_pass_decorator(Context)


@click.group()
@click.option("--store", "store_path", default=DEFAULT_STORE, show_default=True,
              help="Store file for embedded mode.")
@click.option("--embedded", is_flag=True, default=False,
              help="Force embedded mode (the default unless --server is set).")
@click.option("--server", default=None, help="Service base URL for client mode.")
@click.option("--admin-token", default=None, help="Admin credential for client mode.")
@click.pass_context
def main(ctx, store_path, embedded, server, admin_token):
    """Annotation campaign operator tools."""
    if embedded and server:
        raise click.UsageError("--embedded and --server are mutually exclusive")
    ctx.obj = Context(store_path, None if embedded else server, admin_token)


def _fail(exc: Exception, code: int) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def run_guarded(fn):
    try:
        fn()
    except (errors.AnnotationError, click.UsageError) as exc:
        _fail(exc, 2)
    except ServiceError as exc:
        _fail(exc, 2 if exc.status < 500 else 1)
    except OSError as exc:
        _fail(exc, 1)


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path))
@pass_context
def setup(ctx, config_file):
    """Create a campaign from a config file and print its id."""
    def inner():
        config = parse_config(config_file)
        n_annotators = config.pop("annotators", 0)
        manifest = config.pop("images", None)
        activate = config.pop("activate", manifest is not None)
        credentials_out = Path(
            config.pop("credentials_out", None)
            or f"{config.get('id', 'campaign')}-credentials.txt"
        )
        if ctx.embedded:
            prompt_key = config.get("prompt_key", "prompt.main")
            if not load_catalogs().has_key(prompt_key):
                raise errors.InvalidConfig(
                    f"prompt key {prompt_key!r} is not in the message catalogs;"
                    " add it to every catalog file first",
                    field="prompt_key",
                )
            campaign = ctx.store.create_campaign(
                config["name"],
                config["quota"],
                categories=config.get("categories"),
                prompt_key=prompt_key,
                language=config.get("language", "en"),
                feature_dim=config.get("feature_dim", DEFAULT_FEATURE_DIM),
                rng_seed=config.get("seed"),
                campaign_id=config.get("id"),
            )
            credentials = [
                (a.username, password)
                for a, password in generate_annotators(
                    ctx.store, campaign.id, n_annotators
                )
            ] if n_annotators else []
            if manifest:
                result = release.ingest_images(
                    ctx.store, campaign.id,
                    config_file.parent / manifest,
                )
                click.echo(
                    f"images: {result.registered} registered,"
                    f" {len(result.duplicates)} duplicates", err=True
                )
            if config.get("features"):
                n = release.attach_features(
                    ctx.store, campaign.id, config_file.parent / config["features"]
                )
                click.echo(f"features: {n} attached", err=True)
            if activate:
                ctx.store.set_campaign_status(campaign.id, "active")
            campaign_id = campaign.id
        else:
            client = ctx.client
            body = {"name": config["name"], "quota": config["quota"]}
            for key in ("categories", "prompt_key", "language", "feature_dim",
                        "id"):
                if key in config:
                    body[key] = config[key]
            if "seed" in config:
                body["rng_seed"] = config["seed"]
            campaign_id = client.create_campaign(body)["id"]
            credentials = [
                (a["username"], a["password"])
                for a in client.generate_annotators(campaign_id, n_annotators)
            ] if n_annotators else []
            if manifest:
                text = (config_file.parent / manifest).read_text(encoding="utf-8")
                result = client.upload_manifest(campaign_id, text)
                click.echo(
                    f"images: {result['registered']} registered,"
                    f" {len(result['duplicates'])} duplicates", err=True
                )
            if activate:
                client.set_status(campaign_id, "active")
        if credentials:
            with open(credentials_out, "w", encoding="utf-8") as handle:
                for username, password in credentials:
                    handle.write(f"{username} {password}\n")
            click.echo(f"credentials: {credentials_out}", err=True)
        click.echo(campaign_id)

    run_guarded(inner)


@main.command()
@click.option("--campaign", required=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--yes-rate", default=0.06, show_default=True, type=float)
@click.option("--annotators", "annotator_count", required=True, type=int)
@click.option("--steps", default=None, type=int,
              help="Total judgment budget (default: images * quota).")
@click.option("--parallelism", default=1, show_default=True, type=int)
@pass_context
def simulate(ctx, campaign, seed, yes_rate, annotator_count, steps, parallelism):
    """Drive synthetic annotators through the workflow and audit invariants."""
    if not ctx.embedded:
        raise click.UsageError("simulate runs in embedded mode only")

    def inner():
        try:
            result = run_simulation(
                ctx.store, campaign, seed, yes_rate, annotator_count,
                step_budget=steps, parallelism=parallelism,
            )
        except ValueError as exc:
            _fail(exc, 2)
        for line in result.summary_lines():
            click.echo(line)
        if result.invariant_failures:
            sys.exit(1)

    run_guarded(inner)


@main.command()
@click.argument("name")
@click.option("--campaign", default=None)
@click.option("--release", "release_file", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Run the report on a release file instead of a campaign.")
@click.option("--exclude", default=None, help="Category to ignore (alpha).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--no-sample", "no_sample_file", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="File of image ids judged only 'no' (chi2, subject-verdict).")
@click.option("--out", default=None, type=click.Path(dir_okay=False, path_type=Path))
@pass_context
def report(ctx, name, campaign, release_file, exclude, fmt, no_sample_file, out):
    """Print an analytics report as CSV or JSON."""
    def inner():
        no_sample = None
        if no_sample_file is not None:
            no_sample = [
                line.strip()
                for line in no_sample_file.read_text(encoding="utf-8").splitlines()
                if line.strip() and not line.startswith("#")
            ]
        if release_file is not None:
            snapshot = release.import_release(release_file)
            rep = get_report(snapshot, name, exclude=exclude, no_sample=no_sample)
            text = report_to_csv(rep) if fmt == "csv" else report_to_json(rep)
        elif campaign is None:
            raise click.UsageError("pass --campaign or --release")
        elif ctx.embedded:
            snapshot = ctx.store.snapshot(campaign)
            rep = get_report(snapshot, name, exclude=exclude, no_sample=no_sample)
            text = report_to_csv(rep) if fmt == "csv" else report_to_json(rep)
        else:
            text = ctx.client.report(
                campaign, name, fmt=fmt, exclude=exclude, no_sample=no_sample
            )
        if out is not None:
            out.write_text(text, encoding="utf-8")
        else:
            click.echo(text, nl=False)

    run_guarded(inner)


@main.command("label-subjects")
@click.option("--campaign", required=True)
@click.argument("labels_file", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path))
@pass_context
def label_subjects(ctx, campaign, labels_file):
    """Apply image_id,subject rows; invalid rows are reported, not fatal."""
    def inner():
        text = labels_file.read_text(encoding="utf-8")
        if ctx.embedded:
            labeled = 0
            rejected = []
            for line in text.splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                image_id, _, subject = line.partition(",")
                try:
                    ctx.store.set_subject_label(
                        campaign, image_id.strip(), subject.strip()
                    )
                    labeled += 1
                except errors.AnnotationError as exc:
                    rejected.append((image_id.strip(), exc.message))
        else:
            body = ctx.client.label_subjects(campaign, text)
            labeled = body["labeled"]
            rejected = [
                (r["image_id"], r["error"]["message"]) for r in body["rejected"]
            ]
        for image_id, message in rejected:
            click.echo(f"rejected {image_id}: {message}", err=True)
        click.echo(f"labeled {labeled}")

    run_guarded(inner)


@main.command()
@click.option("--campaign", required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", default=0, show_default=True, type=int,
              help="Pseudonym seed; same seed gives byte-identical output.")
@click.option("--sidecar", default=None, type=click.Path(dir_okay=False,
                                                         path_type=Path),
              help="Also write feature vectors as a binary float32 matrix.")
@pass_context
def export(ctx, campaign, out, seed, sidecar):
    """Write the anonymized release file (one JSON record per image)."""
    def inner():
        if ctx.embedded:
            count = release.export_release(
                ctx.store, out, campaign_id=campaign, pseudonym_seed=seed,
                sidecar=sidecar,
            )
        else:
            if sidecar is not None:
                raise click.UsageError("--sidecar requires embedded mode")
            with open(out, "w", encoding="utf-8") as handle:
                count = ctx.client.export(campaign, handle, seed=seed)
        click.echo(f"exported {count} records to {out}")

    run_guarded(inner)


@main.command()
@click.option("--campaign", required=True)
@click.argument("status", type=click.Choice(["active", "closed"]))
@pass_context
def status(ctx, campaign, status):
    """Advance a campaign's lifecycle (draft -> active -> closed)."""
    def inner():
        if ctx.embedded:
            current = ctx.store.get_campaign(campaign).status
            order = {"draft": 0, "active": 1, "closed": 2}
            if order[status] < order[current]:
                raise errors.InvalidConfig(
                    f"cannot move campaign from {current} back to {status}"
                )
            ctx.store.set_campaign_status(campaign, status)
        else:
            ctx.client.set_status(campaign, status)
        click.echo(f"{campaign} {status}")

    run_guarded(inner)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True, type=int)
@click.option("--admin-token", "token", required=True)
@click.option("--catalog-dir", default=None,
              type=click.Path(exists=True, file_okay=False))
@pass_context
def serve(ctx, host, port, token, catalog_dir):
    """Run the HTTP service on the embedded store."""
    import uvicorn

    from .service import create_app

    app = create_app(ctx.store, admin_token=token, catalog_dir=catalog_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
