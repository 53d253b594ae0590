"""Command line: ``harnack <subcommand> CONFIG [--seed N] [--out-dir DIR] [--samples N]``.

Exit status 0 when every enabled check passes, 2 when a check fails and 1 on
configuration or runtime errors.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline
from .config import ConfigError, load_config
from .space import write_space_csv

DRIFT_LIMIT = 0.05


def _experiment(config, seed, out_dir, samples):
    cfg = load_config(config)
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    if samples is not None:
        cfg.harnack["samples"] = samples
    return pipeline.Experiment.from_config(cfg), Path(cfg.out_dir)


def _options(f):
    f = click.option("--samples", type=click.IntRange(min=1), default=None,
                     help="Boundary samples per delta.")(f)
    f = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                     help="Directory for CSV and report files.")(f)
    f = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the config seed.")(f)
    f = click.argument("config", type=click.Path(exists=True, dir_okay=False))(f)
    return f


@click.group()
def cli():
    """Harnack-inequality experiments on weighted graphs."""


@cli.command()
@_options
def space(config, seed, out_dir, samples):
    """Export the space as edges.csv and vertices.csv."""
    exp, out = _experiment(config, seed, out_dir, samples)
    out.mkdir(parents=True, exist_ok=True)
    write_space_csv(exp.space, out / "edges.csv", out / "vertices.csv")
    click.echo(f"wrote {out / 'edges.csv'} and {out / 'vertices.csv'}")
    return 0


@cli.command()
@_options
def constants(config, seed, out_dir, samples):
    """Measure the constant ledger and write ledger.csv."""
    exp, out = _experiment(config, seed, out_dir, samples)
    path = pipeline.write_outputs(out, "ledger.csv", pipeline.LEDGER_HEADER, pipeline.ledger_rows(exp.ledger))
    click.echo(f"nu = {exp.ledger.nu:.6g}, tau = {exp.ledger.tau:.6g}; wrote {path}")
    return 0


def _harnack_ok(run) -> bool:
    return run.passed and run.drift < DRIFT_LIMIT


@cli.command()
@_options
def harnack(config, seed, out_dir, samples):
    """Verify the Harnack bound on sampled harmonic functions."""
    exp, out = _experiment(config, seed, out_dir, samples)
    pipeline.write_outputs(out, "ledger.csv", pipeline.LEDGER_HEADER, pipeline.ledger_rows(exp.ledger))
    run = pipeline.run_harnack(exp)
    path = pipeline.write_outputs(out, "harnack.csv", pipeline.HARNACK_HEADER, run.rows)
    click.echo(f"max ratio {max(r.max_ratio for r in run.reports):.6g}, drift {run.drift:.3g}; wrote {path}")
    return 0 if _harnack_ok(run) else 2


@cli.command("moser-bound")
@_options
def moser_bound(config, seed, out_dir, samples):
    """Write the Moser constants (gamma series and bound exponent) to moser.csv."""
    exp, out = _experiment(config, seed, out_dir, samples)
    rows = pipeline.moser_rows(exp.ledger)
    path = pipeline.write_outputs(out, "moser.csv", pipeline.MOSER_HEADER, rows)
    click.echo(f"gamma = {rows[0]['gamma']:.6g}, log bound = {rows[0]['log_bound']:.6g}; wrote {path}")
    return 0


@cli.command()
@_options
def oscillation(config, seed, out_dir, samples):
    """Oscillation profile on a 4-adic radius chain."""
    exp, out = _experiment(config, seed, out_dir, samples)
    pipeline.write_outputs(out, "ledger.csv", pipeline.LEDGER_HEADER, pipeline.ledger_rows(exp.ledger))
    run = pipeline.run_oscillation(exp)
    path = pipeline.write_outputs(out, "oscillation.csv", pipeline.OSC_HEADER, run.rows)
    click.echo(f"steps {'pass' if run.passed else 'FAIL'}, continuity: {run.verdict}; wrote {path}")
    return 0 if run.passed else 2


@cli.command()
@_options
def report(config, seed, out_dir, samples):
    """Run everything and write ledger.csv, harnack.csv, oscillation.csv, report.txt."""
    exp, out = _experiment(config, seed, out_dir, samples)
    pipeline.write_outputs(out, "ledger.csv", pipeline.LEDGER_HEADER, pipeline.ledger_rows(exp.ledger))
    lem = pipeline.run_lemmas(exp)
    harn = pipeline.run_harnack(exp)
    pipeline.write_outputs(out, "harnack.csv", pipeline.HARNACK_HEADER, harn.rows)
    osc = pipeline.run_oscillation(exp)
    pipeline.write_outputs(out, "oscillation.csv", pipeline.OSC_HEADER, osc.rows)
    text = pipeline.format_report(exp, harn, osc, lem)
    (out / "report.txt").write_text(text)
    ok = lem.passed and _harnack_ok(harn) and osc.passed
    click.echo(text, nl=False)
    return 0 if ok else 2


# ``run`` is the full pipeline under its generic name.
cli.add_command(report, "run")


def main(argv=None) -> int:
    try:
        code = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ConfigError, ValueError, RuntimeError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
