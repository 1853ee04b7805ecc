"""Command-line entry points.

Every command exits 0 on success; failures exit nonzero after printing one
machine-readable ``error=<code> detail=...`` line on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import AppConfig, ConfigError, default_mock_config, load_config
from .evaluation import Dimension, EvalError, fleiss_kappa
from .factory import FactoryError, validate_dataset
from .knowledge import StoreError
from .service import ServiceState, ingest_manifest


def _fail(code: str, detail: str, exit_code: int = 1) -> None:
    click.echo(f"error={code} detail={detail}", err=True)
    sys.exit(exit_code)


def _load(config_path: str | None, mock: bool, data_dir: str | None) -> AppConfig:
    if mock and not config_path:
        return default_mock_config(data_dir or "./edurefine-data")
    if not config_path:
        _fail("config-not-found", "supply --config or --mock", exit_code=2)
    try:
        return load_config(config_path)
    except ConfigError as exc:
        _fail("config-not-found", str(exc), exit_code=2)
    raise AssertionError("unreachable")


_config_option = click.option("--config", "config_path", type=str, default=None,
                              help="Path to the YAML config file.")
_mock_option = click.option("--mock", is_flag=True, default=False,
                            help="Run against the built-in deterministic mock backends.")
_data_dir_option = click.option("--data-dir", type=str, default=None,
                                help="Data directory when running with --mock.")


@click.group()
def main() -> None:
    """Tutoring-dialogue refinement, dataset export, and evaluation tooling."""


@main.command()
@_config_option
@_mock_option
@_data_dir_option
@click.option("--manifest", required=True, type=str, help="Corpus manifest (JSON Lines).")
@click.option("--size", type=int, default=None, help="Chunk size override.")
@click.option("--overlap", type=int, default=None, help="Chunk overlap override.")
def ingest(config_path, mock, data_dir, manifest, size, overlap):
    """Ingest a document corpus into the knowledge store."""
    config = _load(config_path, mock, data_dir)
    state = ServiceState(config)
    try:
        report = ingest_manifest(state, manifest, size=size, overlap=overlap)
    except (StoreError, OSError) as exc:
        _fail("ingest-failed", str(exc))
    click.echo(f"chunks_added={report.chunks_added}")
    for kind, count in sorted(report.per_source_counts.items(), key=lambda kv: kv[0].value):
        click.echo(f"source.{kind.value}={count}")


@main.command()
@_config_option
@_mock_option
@_data_dir_option
@click.option("--count", required=True, type=int)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=str, default=None)
@click.option("--parallelism", type=int, default=1)
def generate(config_path, mock, data_dir, count, seed, out_path, parallelism):
    """Produce a preference-pair dataset (JSON Lines)."""
    config = _load(config_path, mock, data_dir)
    state = ServiceState(config)
    if count < 1:
        _fail("invalid-flag", "--count must be >= 1")
    try:
        job_id = state.submit_generation_job(count, seed, parallelism)
        state.jobs.wait_all(timeout=3600)
        status = state.jobs.status(job_id)
    except Exception as exc:
        _fail("generate-failed", str(exc))
    if status["status"] != "done":
        _fail("generate-failed", status.get("error") or "job did not finish")
    report = status["report"]
    produced_path = report["output_path"]
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(Path(produced_path).read_text(encoding="utf-8"),
                                  encoding="utf-8")
        produced_path = out_path
    click.echo(f"produced={report['produced']} failed={report['failed']} path={produced_path}")


@main.command()
@_config_option
@_mock_option
@_data_dir_option
@click.option("--host", type=str, default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, mock, data_dir, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = _load(config_path, mock, data_dir)
    bind_host, _, bind_port = config.http_bind.partition(":")
    app = create_app(config)
    uvicorn.run(app, host=host or bind_host or "127.0.0.1",
                port=port or int(bind_port or 8080))


@main.command("eval-build")
@_config_option
@_mock_option
@_data_dir_option
@click.option("--dataset", required=True, type=str, help="Preference dataset (JSON Lines).")
@click.option("--seed", type=int, default=None)
def eval_build(config_path, mock, data_dir, dataset, seed):
    """Build the blinded evaluation item set from a dataset file."""
    config = _load(config_path, mock, data_dir)
    state = ServiceState(config)
    try:
        count = state.build_eval_set(dataset, seed)
    except Exception as exc:
        _fail("eval-build-failed", str(exc))
    click.echo(f"item_count={count}")


@main.command("eval-assign")
@_config_option
@_mock_option
@_data_dir_option
@click.option("--volunteer", required=True, type=str)
@click.option("--dimension", required=True, type=click.Choice([d.value for d in Dimension]))
def eval_assign(config_path, mock, data_dir, volunteer, dimension):
    """Print a volunteer's blinded assignment as JSON."""
    config = _load(config_path, mock, data_dir)
    state = ServiceState(config)
    try:
        view = state.get_assignment(volunteer, Dimension(dimension))
    except EvalError as exc:
        _fail("no-eval-set", str(exc))
    click.echo(json.dumps(view, ensure_ascii=False))


@main.command()
@_config_option
@_mock_option
@_data_dir_option
@click.option("--dimension", required=True, type=click.Choice([d.value for d in Dimension]))
@click.option("--per-volunteer", is_flag=True, default=False)
def score(config_path, mock, data_dir, dimension, per_volunteer):
    """Report the 0-100 preference score and agreement for a dimension."""
    config = _load(config_path, mock, data_dir)
    state = ServiceState(config)
    try:
        report = state.harness.report(Dimension(dimension), per_volunteer=per_volunteer)
    except EvalError as exc:
        _fail("no-choices", str(exc))
    kappa_repr = "nil" if report.kappa is None else f"{report.kappa:.6f}"
    click.echo(f"dimension={report.dimension.value} n={report.n_choices} "
               f"score={report.score:.6f} kappa={kappa_repr}")


@main.command()
@click.argument("matrix_file", type=click.Path(exists=True, dir_okay=False))
def kappa(matrix_file):
    """Fleiss kappa for a count-matrix file (one item per line, 3 integers)."""
    rows = []
    for line in Path(matrix_file).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        rows.append([int(tok) for tok in line.replace(",", " ").split()])
    if not rows:
        _fail("invalid-matrix", "no rows")
    sums = {sum(r) for r in rows}
    if len(sums) != 1:
        _fail("invalid-matrix", f"rows must share one rater count, got sums {sorted(sums)}")
    try:
        value = fleiss_kappa(rows, sums.pop())
    except EvalError as exc:
        _fail("invalid-matrix", str(exc))
    click.echo(f"{value:.6f}")


@main.command()
@click.argument("dataset_path", type=str)
@click.option("--traces", "traces_dir", type=str, default=None,
              help="Trace directory for provenance checking.")
def validate(dataset_path, traces_dir):
    """Validate a preference dataset file record by record."""
    try:
        report = validate_dataset(dataset_path, traces_dir)
    except FactoryError as exc:
        _fail("unreadable-file", str(exc))
    click.echo(f"valid_count={report.valid_count}")
    for line_no, reason in report.errors:
        click.echo(f"error={reason} line={line_no}", err=True)
    if report.errors:
        sys.exit(1)


if __name__ == "__main__":
    main()
