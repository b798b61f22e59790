"""Command-line entry point for the adapter."""

from __future__ import annotations

import logging
import sys

import click

from .adapter import AdapterConfig, run_adapter


@click.command()
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "output_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--model", default="stub:yes", show_default=True,
              help="Model identifier; stub:echo, stub:yes or "
                   "stub:constant:<answer>.")
@click.option("--batch-size", type=int, default=8, show_default=True)
@click.option("--max-new-tokens", type=int, default=32, show_default=True)
def main(dataset_dir, output_path, model, batch_size, max_new_tokens):
    """Answer every question of a dataset and append to a responses file."""
    logging.basicConfig(level=logging.INFO)
    try:
        cfg = AdapterConfig(dataset_dir=dataset_dir, output_path=output_path,
                            model=model, batch_size=batch_size,
                            max_new_tokens=max_new_tokens)
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    n = run_adapter(cfg)
    click.echo(f"answered {n} records -> {output_path}")


if __name__ == "__main__":
    main()
