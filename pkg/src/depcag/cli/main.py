"""
Filename: main.py
Description:
    depcag command-line interface.

        depcag <command> (--config PATH | --preset NAME) [--out PATH] [--seed N]

    Reports go to --out (a bare file name lands in results_dir) or to stdout.
    Exit status: 0 when every requested check passes, 1 on failed checks or
    numerical errors, 2 on invalid configuration.

License: Apache 2.0
"""
import json
import logging
from pathlib import Path
from typing import Annotated, Callable, Optional

import typer

from ..config import config
from ..engine.error import ConfigError, DepcagError
from ..model.reports import Report
from ..model.runconfig import RunConfig, load_run_config, parse_run_config
from ..report.csv_export import export_trajectory
from ..report.store import ReportStore, render
from ..utils.log import run_context, setup_logger
from . import commands
from .commands import ConjugacyCommand, Run
from .presets import PRESETS, preset_document

logger = setup_logger("depcag.cli", level=getattr(logging, config.log_level))

app = typer.Typer(
    name="depcag",
    help="Grobman-Hartman conjugacy for differential equations with piecewise constant argument.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOpt = Annotated[Optional[Path], typer.Option("--config", "-c", help="Run configuration JSON file")]
PresetOpt = Annotated[Optional[str], typer.Option("--preset", "-p", help="Shipped preset name (see `depcag presets`)")]
OutOpt = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output file; a bare name lands in results_dir")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", min=0, help="Override the configuration seed")]


@app.callback()
def main():
    """Log the process settings once per invocation."""
    logger.debug(f"Configuration: log_level={config.log_level}, threads={config.threads}, "
                 f"results_dir={config.results_dir}, picard_tol={config.picard_tol}, "
                 f"samples={config.samples}, inflation={config.inflation}")


def _load(config_path: Optional[Path], preset: Optional[str], seed: Optional[int]) -> RunConfig:
    if (config_path is None) == (preset is None):
        raise ConfigError("", "give exactly one of --config or --preset")
    cfg = load_run_config(config_path) if config_path is not None else parse_run_config(preset_document(preset))
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def _fail(code: int, message: str):
    typer.echo(f"error: {message}", err=True)
    raise typer.Exit(code=code)


def _execute(fn: Callable[[], None], command: str, config_path: Optional[Path] = None,
             preset: Optional[str] = None) -> None:
    """Run a command body inside its log context, mapping errors to exit codes."""
    try:
        with run_context(command=command, config=config_path, preset=preset):
            fn()
    except ConfigError as e:
        logger.error(e.message)
        _fail(2, e.message)
    except DepcagError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        _fail(1, e.message)


def _emit(run: Run, command: str, report: Report, out: Optional[Path]) -> None:
    record = run.record(command, report)
    if out is not None:
        ReportStore().save(record, out)
    else:
        typer.echo(render(record), nl=False)
    passed = getattr(report, "passed", True)
    logger.info(f"{command} finished passed={passed}")
    if not passed:
        raise typer.Exit(code=1)


@app.command()
def check(config_path: ConfigOpt = None, preset: PresetOpt = None,
          out: OutOpt = None, seed: SeedOpt = None):
    """Condition (C) and the scalar theorem hypotheses."""
    def body():
        run = Run(_load(config_path, preset, seed))
        _emit(run, "check", commands.check(run), out)

    _execute(body, "check", config_path, preset)


@app.command()
def dichotomy(config_path: ConfigOpt = None, preset: PresetOpt = None,
              out: OutOpt = None, seed: SeedOpt = None):
    """Continuous (ED1) and discrete (EDP) dichotomy verdicts, side by side."""
    def body():
        run = Run(_load(config_path, preset, seed))
        _emit(run, "dichotomy", commands.dichotomy(run), out)

    _execute(body, "dichotomy", config_path, preset)


@app.command()
def solve(xi: Annotated[list[float], typer.Option("--xi", help="Initial state, one --xi per component")],
          config_path: ConfigOpt = None, preset: PresetOpt = None,
          out: Annotated[Optional[Path], typer.Option("--out", "-o", help="CSV file; stdout when omitted")] = None,
          seed: SeedOpt = None,
          tau: Annotated[float, typer.Option("--tau", help="Initial time")] = 0.0,
          t: Annotated[float, typer.Option("--t", help="Final time (may lie before tau)")] = 1.0):
    """Integrate the configured system and write the trajectory as CSV."""
    def body():
        run = Run(_load(config_path, preset, seed))
        traj = commands.solve(run, xi, tau, t)
        text = export_trajectory(traj, out)
        if out is None:
            typer.echo(text, nl=False)

    _execute(body, "solve", config_path, preset)


@app.command()
def bounded(g: Annotated[list[str], typer.Option("--g", help="Forcing component g_i(t), one --g per component")],
            config_path: ConfigOpt = None, preset: PresetOpt = None,
            out: OutOpt = None, seed: SeedOpt = None,
            t: Annotated[Optional[list[float]], typer.Option("--t", help="Evaluation time; repeat for several")] = None):
    """Bounded solution of the forced linear system, with error bars."""
    def body():
        run = Run(_load(config_path, preset, seed))
        _emit(run, "bounded", commands.bounded(run, g, t or [0.0]), out)

    _execute(body, "bounded", config_path, preset)


@app.command()
def conjugacy(config_path: ConfigOpt = None, preset: PresetOpt = None,
              out: OutOpt = None, seed: SeedOpt = None,
              cmd: Annotated[ConjugacyCommand, typer.Option("--cmd")] = ConjugacyCommand.H,
              t: Annotated[float, typer.Option("--t", help="Time at which the maps are evaluated")] = 0.0,
              xi: Annotated[Optional[list[float]], typer.Option("--xi", help="State, one --xi per component")] = None,
              eps: Annotated[float, typer.Option("--eps", help="Target modulus for --cmd continuity")] = 1e-2,
              L: Annotated[Optional[float], typer.Option("--L", help="Free horizon L for --cmd continuity")] = None):
    """Evaluate or certify the conjugacy maps H and L."""
    def body():
        run = Run(_load(config_path, preset, seed))
        _emit(run, "conjugacy", commands.conjugacy(run, cmd, t, xi or None, eps, L), out)

    _execute(body, "conjugacy", config_path, preset)


@app.command("certify-all")
def certify_all(config_path: ConfigOpt = None, preset: PresetOpt = None,
                out: OutOpt = None, seed: SeedOpt = None):
    """Run every certification check and summarise pass/fail."""
    def body():
        run = Run(_load(config_path, preset, seed))
        _emit(run, "certify-all", commands.certify_all(run), out)

    _execute(body, "certify-all", config_path, preset)


@app.command()
def presets(name: Annotated[Optional[str], typer.Argument(help="Preset to print as JSON")] = None):
    """List the shipped presets, or print one as a configuration document."""
    def body():
        if name is None:
            for preset in sorted(PRESETS):
                typer.echo(preset)
            return
        typer.echo(json.dumps(preset_document(name), indent=2, sort_keys=True))

    _execute(body, "presets")


if __name__ == "__main__":
    app()
