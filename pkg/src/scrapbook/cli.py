"""Command-line interface: generate, check, evaluate."""

from __future__ import annotations

import dataclasses
import json
import sys

import click

from .checker import check_dataset
from .core import GenerationConfig, load_manifest, load_questions, validate_config
from .evaluator import (APPROACHES, FILTERS, build_report, load_responses,
                        write_report)
from .generate import generate_dataset

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2


@click.group()
def main():
    """Scrapbook dataset generator and evaluation harness."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--jobs", type=int, default=1, show_default=True)
def generate(config_path, out_dir, seed, jobs):
    """Generate a dataset from a JSON config file."""
    try:
        cfg = GenerationConfig.from_file(config_path)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as e:
        click.echo(f"error: cannot load config: {e}", err=True)
        sys.exit(EXIT_USAGE)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    errors = validate_config(cfg)
    if errors:
        for e in errors:
            click.echo(f"invalid config: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        manifest = generate_dataset(cfg, out_dir, jobs=max(1, jobs))
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    click.echo(f"generated {len(manifest['images'])} images, "
               f"{sum(manifest['question_counts'].values())} questions "
               f"-> {out_dir}")


@main.command()
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
def check(dataset_dir):
    """Re-verify every geometric constraint and answer key of a dataset."""
    try:
        violations = check_dataset(dataset_dir)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
        click.echo(f"error: unreadable dataset: {e}", err=True)
        sys.exit(EXIT_USAGE)
    for v in violations:
        click.echo(v)
    if violations:
        click.echo(f"{len(violations)} violation(s)")
        sys.exit(EXIT_VALIDATION)
    click.echo("ok")


@main.command()
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--responses", "responses_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--filter", "filter_name",
              type=click.Choice(["non-absurd", "full"]), default=None,
              help="Restrict the printed summary to one filter.")
@click.option("--star", is_flag=True,
              help="Print the precedence-invalidated variant of the filter.")
@click.option("--approach", type=click.Choice(list(APPROACHES)),
              default="aggregated", show_default=True)
def evaluate(dataset_dir, responses_path, out_dir, filter_name, star, approach):
    """Score a responses.jsonl file against a dataset and write reports."""
    try:
        records = load_questions(dataset_dir)
        manifest = load_manifest(dataset_dir)
        responses = load_responses(responses_path)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    parents = {d["id"]: d.get("parent_id") for d in manifest["images"]}
    report = build_report(records, responses, parents)
    write_report(report, out_dir)

    if filter_name is None:
        shown = list(FILTERS)
    else:
        shown = [filter_name.replace("-", "_") + ("_star" if star else "")]
    for f in shown:
        cell = report["summary"][f][approach]
        click.echo(f"{f:16s} {approach:10s} {cell['corrects']}/{cell['total']} "
                   f"= {cell['accuracy_pct']:.2f}%")
    if report["excluded_missing_forms"]:
        click.echo(f"excluded (missing form responses): "
                   f"{report['excluded_missing_forms']}")


if __name__ == "__main__":
    main()
