"""Run configuration, execution, sweeps, plots, and the CLI."""

from .config import RunConfig, set_config_field
from .runs import RunRecord, build_splits, execute_run
from .sweep import run_sweep
from .cli import cli

__all__ = ["RunConfig", "set_config_field", "RunRecord", "build_splits", "execute_run",
           "run_sweep", "cli", "emit_plots"]


def emit_plots(run_dirs, out_dir, overlay_ids=None, sweep_csv=None):
    from .plots import emit_plots as _emit

    return _emit(run_dirs, out_dir, overlay_ids=overlay_ids, sweep_csv=sweep_csv)
