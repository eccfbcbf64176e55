"""Command-line interface for txtrec."""

from __future__ import annotations

import json
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any

import click
import numpy as np
import yaml

from txtrec import __version__
from txtrec.config import RunConfig, load_run_config
from txtrec.errors import ContractError, TxtError
from txtrec.logs import configure_logging

BUNDLE_FILE = "bundle.txtb"
LOSS_TRACE_FILE = "loss_trace.txt"
EVAL_REPORT_FILE = "eval_report.txt"

EXISTING_FILE = click.Path(exists=True, dir_okay=False)
EXISTING_DATA = click.Path(exists=True)


@contextmanager
def _errors() -> Iterator[None]:
    """Turn library errors into one categorized line on stderr and exit code 1."""
    try:
        yield
    except TxtError as e:
        click.echo(f"Error [{e.category}]: {e}", err=True)
        sys.exit(1)
    except (OSError, LookupError) as e:
        click.echo(f"Error [io]: {e}", err=True)
        sys.exit(1)


def _run_config(ctx: click.Context, command: str, overrides: dict[str, Any]) -> RunConfig:
    config_path = ctx.obj.get("config")
    run = load_run_config(Path(config_path) if config_path else None, overrides)
    return replace(run, command=command)


def _echo_json(data: Any) -> None:
    click.echo(json.dumps(data, indent=2))


@click.group()
@click.version_option(version=__version__)
@click.option("--json", "json_output", is_flag=True, help="Output in JSON format")
@click.option("-v", "--verbose", count=True, help="Log progress (-v info, -vv debug)")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="YAML run configuration; flags override its values",
)
@click.pass_context
def main(ctx: click.Context, json_output: bool, verbose: int, config_path: str | None) -> None:
    """Context-aware next-item recommendation.

    Prepare transaction data, train TxT or a baseline, evaluate Top-k
    accuracy and serve recommendations from a versioned model bundle.
    """
    ctx.ensure_object(dict)
    ctx.obj["json"] = json_output
    ctx.obj["config"] = config_path
    configure_logging(verbose)


@main.command("synth")
@click.option("--spec", "spec_name", required=True, help="Spec YAML file or preset name")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output CSV file")
@click.option("--seed", type=int, help="Override the spec's seed")
@click.pass_context
def synth(ctx: click.Context, spec_name: str, out: str, seed: int | None) -> None:
    """Generate a synthetic transaction corpus with a planted rule.

    Writes the CSV and a ``.meta.yaml`` file describing the rule and the
    accuracies it allows.
    """
    from txtrec.data import generate_synthetic, resolve_spec, write_transactions

    with _errors():
        spec = resolve_spec(spec_name)
        corpus = generate_synthetic(spec, seed=seed)
        out_path = Path(out)
        write_transactions(corpus.records, out_path)
        meta_path = out_path.with_suffix(".meta.yaml")
        meta_path.write_text(yaml.safe_dump(corpus.metadata, sort_keys=False), encoding="utf-8")

    if ctx.obj["json"]:
        _echo_json({"out": str(out_path), "metadata": str(meta_path), **corpus.metadata})
    else:
        click.echo(f"Wrote {len(corpus.records)} orders to {out_path}")
        click.echo(f"Rule: {corpus.metadata['rule_text']}")


@main.command("preprocess")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Cache directory")
@click.option("--valid-cutoff", help="Orders at or after this ISO-8601 time go to validation")
@click.option("--min-count", type=int, help="Drop items seen fewer times")
@click.option("--seq-len", type=int, help="Maximum sequence length")
@click.option("--all-prefixes", is_flag=True, default=None, help="One example per order prefix")
@click.pass_context
def preprocess(
    ctx: click.Context,
    data_path: str,
    out: str,
    valid_cutoff: str | None,
    min_count: int | None,
    seq_len: int | None,
    all_prefixes: bool | None,
) -> None:
    """Turn a transaction CSV into vocabularies and an example cache."""
    from txtrec.data import load_dataset

    with _errors():
        run = _run_config(
            ctx,
            "preprocess",
            {
                "paths.data": data_path,
                "paths.out": out,
                "data.valid_cutoff": valid_cutoff,
                "data.min_count": min_count,
                "data.seq_len": seq_len,
                "data.all_prefixes": all_prefixes,
            },
        )
        dataset = load_dataset(
            Path(data_path),
            seq_len=run.data.seq_len,
            min_count=run.data.min_count,
            valid_cutoff=run.data.cutoff,
            all_prefixes=run.data.all_prefixes,
            schema=run.data.context,
        )
        out_dir = Path(out)
        dataset.save(out_dir)
        run.write(out_dir)

    summary = {
        "out": str(out_dir),
        "items": len(dataset.vocabs.items),
        "train_examples": len(dataset.train),
        "valid_examples": len(dataset.valid) if dataset.valid is not None else 0,
        "dropped": dataset.train.dropped,
        "skipped_rows": dataset.skipped,
    }
    if ctx.obj["json"]:
        _echo_json(summary)
    else:
        click.echo(
            f"Prepared {summary['train_examples']} training and "
            f"{summary['valid_examples']} validation examples "
            f"({summary['items']} items) in {out_dir}"
        )
        if dataset.skipped:
            click.echo(f"Skipped {dataset.skipped} malformed rows", err=True)


@main.command("train")
@click.option("--data", "data_path", required=True, type=EXISTING_DATA, help="CSV or cache")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.option("--model", "kind", type=click.Choice(["txt", "rnn", "rnn-latent-cross", "itemcf"]))
@click.option("--workers", type=int, help="Data-parallel workers per step")
@click.option("--epochs", type=int)
@click.option("--batch-size", type=int)
@click.option("--lr", type=float, help="Learning rate")
@click.option("--seed", type=int)
@click.option("--precision", type=click.Choice(["float32", "float64"]))
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]))
@click.option("--clip-norm", type=float, help="Clip gradients to this global norm")
@click.option("--d-embed", type=int, help="Embedding size of the selected model")
@click.option("--valid-cutoff", help="Orders at or after this ISO-8601 time go to validation")
@click.option("--version", "version_tag", help="Bundle version tag (default: content hash)")
@click.option("--created", help="Bundle creation time (default: newest training order)")
@click.pass_context
def train_command(
    ctx: click.Context,
    data_path: str,
    out: str,
    kind: str | None,
    workers: int | None,
    epochs: int | None,
    batch_size: int | None,
    lr: float | None,
    seed: int | None,
    precision: str | None,
    optimizer: str | None,
    clip_norm: float | None,
    d_embed: int | None,
    valid_cutoff: str | None,
    version_tag: str | None,
    created: str | None,
) -> None:
    """Train a model and write its bundle, loss trace and run configuration.

    Writes bundle.txtb, loss_trace.txt and run_config.yaml to OUT, plus
    eval_report.txt when validation data exist.
    """
    from txtrec.data import load_dataset
    from txtrec.models import build_model
    from txtrec.tensor import precision as precision_mode
    from txtrec.train import train

    with _errors():
        overrides: dict[str, Any] = {
            "paths.data": data_path,
            "paths.out": out,
            "model.kind": kind,
            "train.workers": workers,
            "train.epochs": epochs,
            "train.batch_size": batch_size,
            "train.lr": lr,
            "train.seed": seed,
            "train.precision": precision,
            "train.optimizer": optimizer,
            "train.clip_norm": clip_norm,
            "data.valid_cutoff": valid_cutoff,
            "bundle.version": version_tag,
            "bundle.created": created,
        }
        run = _run_config(ctx, "train", overrides)
        if d_embed is not None:
            run = _run_config(
                ctx, "train", {**overrides, f"model.options.{run.model_kind}.d_embed": d_embed}
            )


        dataset = load_dataset(
            Path(data_path),
            seq_len=run.data.seq_len,
            min_count=run.data.min_count,
            valid_cutoff=run.data.cutoff,
            all_prefixes=run.data.all_prefixes,
            schema=run.data.context,
        )
        with precision_mode(run.train.precision):
            model = build_model(run.model_kind, run.model_config(dataset.vocabs), seed=run.seed)
        result = train(
            model, dataset, run.train, version_tag=run.version_tag, created_at=run.created_at
        )

        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.bundle.save(out_dir / BUNDLE_FILE)
        result.trace.write(out_dir / LOSS_TRACE_FILE)
        run.write(out_dir)
        report = result.final_report
        if report is not None:
            report.write(out_dir / EVAL_REPORT_FILE)

    summary: dict[str, Any] = {
        "bundle": str(out_dir / BUNDLE_FILE),
        "version": result.bundle.version_tag,
        "checksum": result.bundle.checksum,
        "kind": result.bundle.kind,
        "steps": len(result.trace.steps),
        "final_loss": result.trace.steps[-1][1] if result.trace.steps else None,
        "validation": report.to_dict() if report is not None else None,
    }
    if ctx.obj["json"]:
        _echo_json(summary)
    else:
        click.echo(f"Trained {summary['kind']} as {summary['version']}")
        click.echo(f"Bundle: {summary['bundle']}")
        if report is not None:
            click.echo(f"Validation top1 {report.top1:.4f}, top3 {report.top3:.4f}")


@main.command("eval")
@click.option("--bundle", "bundle_path", required=True, type=EXISTING_FILE)
@click.option("--data", "data_path", required=True, type=EXISTING_DATA, help="CSV or cache")
@click.option("--k", "ks", type=int, multiple=True, help="Top-k to report (default 1 and 3)")
@click.option("--out", type=click.Path(file_okay=False), help="Directory for the report")
@click.pass_context
def eval_command(
    ctx: click.Context, bundle_path: str, data_path: str, ks: tuple[int, ...], out: str | None
) -> None:
    """Report Top-k accuracy of a bundle on held-out orders."""
    from txtrec.data import examples_for
    from txtrec.metrics import DEFAULT_KS, evaluate
    from txtrec.store import ModelBundle

    with _errors():
        run = _run_config(ctx, "eval", {"paths.data": data_path, "paths.out": out})
        bundle = ModelBundle.load(Path(bundle_path))
        examples = examples_for(Path(data_path), bundle.vocabs, int(bundle.config["seq_len"]))
        report = evaluate(bundle.model(), examples, ks or DEFAULT_KS, model_id=bundle.version_tag)
        if out:
            out_dir = Path(out)
            out_dir.mkdir(parents=True, exist_ok=True)
            report.write(out_dir / EVAL_REPORT_FILE)
            run.write(out_dir)

    if ctx.obj["json"]:
        click.echo(report.to_json())
    else:
        click.echo(report.format_text(), nl=False)


@main.command("predict")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--endpoint", help="Ask a running endpoint at HOST:PORT instead")
@click.option("--item", "items", multiple=True, help="Basket item, in add-to-cart order")
@click.option("--context", "context_pairs", multiple=True, help="Context value as key=value")
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--include-basket", is_flag=True, help="Allow items already in the basket")
@click.pass_context
def predict(
    ctx: click.Context,
    bundle_path: str | None,
    endpoint: str | None,
    items: tuple[str, ...],
    context_pairs: tuple[str, ...],
    k: int,
    include_basket: bool,
) -> None:
    """Recommend the next items for one basket.

    Context keys: timestamp, temperature, weather, store, region.
    """
    from txtrec.serve import RecommendClient, parse_endpoint, predict_top_k, request_from_cli
    from txtrec.store import ModelBundle

    if (bundle_path is None) == (endpoint is None):
        raise click.UsageError("Give exactly one of --bundle and --endpoint")

    with _errors():
        request = request_from_cli(items, context_pairs, k, exclude_basket=not include_basket)
        if endpoint is not None:
            try:
                host, port = parse_endpoint(endpoint)
            except ValueError as e:
                raise click.BadParameter(str(e), param_hint="--endpoint") from e
            with RecommendClient(host, port) as client:
                reply = client.recommend(
                    request.items, request.context, request.k, request.exclude_basket
                )
            if reply.get("status") != "ok":
                error = reply.get("error", {})
                category, message = error.get("category"), error.get("message")
                raise ContractError(f"Endpoint refused the request [{category}]: {message}")
        else:
            assert bundle_path is not None
            if request.k < 1:
                raise ContractError(f"k must be at least 1, got {request.k}")
            reply = predict_top_k(ModelBundle.load(Path(bundle_path)), request).to_dict()

    if ctx.obj["json"]:
        _echo_json(reply)
    else:
        if reply.get("cold_start"):
            click.echo("(empty basket: cold-start recommendation)")
        for rank, rec in enumerate(reply["recommendations"], start=1):
            click.echo(f"{rank}\t{rec['item']}\t{rec['probability']:.6f}")
        click.echo(f"version\t{reply['version']}")


@main.command("serve")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--host", help="Address to bind")
@click.option("--port", type=int, help="Port to bind (0 picks a free one)")
@click.pass_context
def serve_command(
    ctx: click.Context,
    bundle_path: str | None,
    store_dir: str | None,
    host: str | None,
    port: int | None,
) -> None:
    """Serve recommendations over TCP until interrupted.

    With --store the latest published bundle is served and the swap
    operation can switch versions without a restart.
    """
    from txtrec.serve import RecommendationServer, serve
    from txtrec.store import ModelBundle, ModelStore

    if (bundle_path is None) == (store_dir is None):
        raise click.UsageError("Give exactly one of --bundle and --store")

    with _errors():
        run = _run_config(ctx, "serve", {"serve.host": host, "serve.port": port})
        store = ModelStore(Path(store_dir)) if store_dir else None
        if store is not None:
            bundle = store.load_latest()
        else:
            bundle = ModelBundle.load(Path(str(bundle_path)))

        def announce(server: RecommendationServer) -> None:
            bound_host, bound_port = server.address
            click.echo(f"Serving {server.version} on {bound_host}:{bound_port}", err=True)

        serve(bundle, run.serve, store=store, on_ready=announce)


@main.command("dump-attention")
@click.option("--bundle", "bundle_path", required=True, type=EXISTING_FILE)
@click.option("--context", "context_pairs", multiple=True, help="Context value as key=value")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the table here")
@click.pass_context
def dump_attention(
    ctx: click.Context, bundle_path: str, context_pairs: tuple[str, ...], out: str | None
) -> None:
    """Show how context fields attend to each other in a TxT bundle."""
    from txtrec.models import TxTModel
    from txtrec.serve import request_from_cli
    from txtrec.store import ModelBundle

    with _errors():
        bundle = ModelBundle.load(Path(bundle_path))
        model = bundle.model()
        if not isinstance(model, TxTModel):
            raise ContractError(f"Attention dumps need a txt bundle, got {bundle.kind}")
        request = request_from_cli((), context_pairs, k=1)
        tokens = bundle.vocabs.schema.tokens_from_raw(request.context)
        ctx_ids = np.array(bundle.vocabs.encode_context(tokens), dtype=np.int64)
        dump = model.attention_dump(ctx_ids)
        if out:
            Path(out).write_text(dump.to_text(), encoding="utf-8")

    if ctx.obj["json"]:
        _echo_json(
            {
                "fields": list(dump.field_names),
                "tokens": list(tokens),
                "layers": [weights.tolist() for weights in dump.layers],
            }
        )
    elif not out:
        click.echo(dump.to_text(), nl=False)
    else:
        click.echo(f"Wrote attention weights to {out}")


@main.command("publish")
@click.argument("bundle_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def publish(ctx: click.Context, bundle_path: str, store_dir: str) -> None:
    """Add a bundle to a model store as its latest version."""
    from txtrec.store import ModelBundle, ModelStore

    with _errors():
        entry = ModelStore(Path(store_dir)).publish(ModelBundle.load(Path(bundle_path)))

    if ctx.obj["json"]:
        _echo_json(entry.__dict__)
    else:
        click.echo(f"Published {entry.version_tag} to {store_dir}")


@main.command("inspect")
@click.argument("bundle_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def inspect_bundle(ctx: click.Context, bundle_path: str) -> None:
    """Show a bundle's header, metadata and parameter table.

    BUNDLE_PATH is a .txtb file written by train.
    """
    from txtrec.store import ModelBundle, format_human_readable

    with _errors():
        info = ModelBundle.load(Path(bundle_path)).describe()

    if ctx.obj["json"]:
        _echo_json(info)
    else:
        click.echo(format_human_readable(info))


if __name__ == "__main__":
    main()
