"""
Command-line interface for anisores experiments.
"""

from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from anisores.config import EXPERIMENTS, AnisoresConfig
from anisores.exceptions import AnisoresError, ConfigError
from anisores.logging import setup_logging
from anisores.pipeline import ResultStore, emit_plots, run_pipeline
from anisores.validators import apply_overrides, parse_config

app = typer.Typer(help="anisores - transfer operator and horocycle experiments")
console = Console()

_config = AnisoresConfig.from_env()
setup_logging(level=_config.log_level, json_format=_config.log_json)


@app.command()
def run(
    experiment: str = typer.Argument(..., help=f"One of: {', '.join(EXPERIMENTS)}"),
    config: Path = typer.Option(..., "--config", "-c", help="key = value run configuration."),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Overrides run.seed."),
    plots: bool = typer.Option(True, "--plots/--no-plots", help="Emit plot data and script."),
) -> None:
    """Run one experiment; exits 0 iff every acceptance verdict passes."""
    try:
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"Unknown experiment {experiment!r}; choose one of {', '.join(EXPERIMENTS)}",
                key_path="run.experiment",
            )
        try:
            text = config.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read {config}: {e}") from e
        run_config = apply_overrides(
            parse_config(text),
            experiment=experiment,
            seed=seed,
            output=str(out) if out is not None else None,
        )
        store = run_pipeline(run_config, settings=_config)
        if plots and store.series:
            emit_plots(store)
    except ConfigError as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        for violation in e.violations:
            console.print(f"  - {violation}")
        raise typer.Exit(code=2)
    except AnisoresError as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        raise typer.Exit(code=1)

    _render_verdicts(store)
    if not store.passed:
        raise typer.Exit(code=1)


def _render_verdicts(store: ResultStore) -> None:
    manifest = store.manifest
    table = Table(title=f"{manifest.experiment} (config {manifest.config_hash[:12]})")
    table.add_column("Stage", style="cyan")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Verdict", style="bold")
    for v in manifest.verdicts:
        verdict = "[bold green]PASS[/bold green]" if v.passed else "[bold red]FAIL[/bold red]"
        table.add_row(v.stage, v.metric, f"{v.value:.4e}", f"{v.threshold:.3e}", verdict)
    console.print(table)
    for stage, message in manifest.errors.items():
        console.print(f"[bold red]Stage {stage} failed:[/bold red] {message}")
    console.print(f"Results in [cyan]{store.directory}[/cyan]")


if __name__ == "__main__":
    app()
