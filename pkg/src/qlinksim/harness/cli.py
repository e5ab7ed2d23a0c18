"""Command-line front end: run, sweep, validate, calibrate-feu."""
from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from qlinksim import feu as feu_mod
from qlinksim.harness import config as cfg
from qlinksim.harness.export import export
from qlinksim.harness.runner import run_scenario
from qlinksim.harness.sweep import SUMMARY_COLUMNS, SWEEP_PARAMS, summary_rows, sweep
from qlinksim.harness.validation import validation_experiment


def _scenario_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="INI file with [scenario]/[workload] sections; flags override it."),
        click.option("--preset", type=click.Choice(cfg.PRESETS), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--duration", type=float, default=None, help="Simulated seconds."),
        click.option("--drain", type=float, default=None, help="Extra seconds to let queued requests finish."),
        click.option("--scheduler", type=click.Choice(["fcfs", "wfq"]), default=None),
        click.option("--p-loss", type=float, default=None),
        click.option("--alpha", type=float, default=None, help="Fixed bright-state population."),
        click.option("--workload", default=None,
                     help="Request class (NL, CK, MD) or usage pattern name, e.g. Uniform or mixed-uniform."),
        click.option("--load", default=None, help="Load fraction f, or Low/High/Ultra."),
        click.option("--k-max", type=int, default=None),
        click.option("--origin", type=click.Choice(["A", "B", "random"]), default=None),
        click.option("--f-min", type=float, default=None),
        click.option("--no-fast-forward", is_flag=True, default=False),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _load_value(raw: str | None) -> float | None:
    if raw is None:
        return None
    return cfg.LOADS[raw] if raw in cfg.LOADS else float(raw)


def _build(config_path, preset, seed, duration, drain, scheduler, p_loss, alpha, workload, load, k_max, origin,
           f_min, no_fast_forward) -> tuple[cfg.ScenarioConfig, cfg.WorkloadConfig]:
    scn, wl = cfg.load_config(config_path) if config_path else (cfg.ScenarioConfig(), None)
    updates = {k: v for k, v in (("preset", preset), ("seed", seed), ("duration_s", duration), ("drain_s", drain),
                                 ("scheduler", scheduler), ("p_loss", p_loss), ("alpha_override", alpha))
               if v is not None}
    if no_fast_forward:
        updates["fast_forward"] = False
    scn = replace(scn, **updates)
    f = _load_value(load)
    if workload is not None or wl is None or not wl.loads:
        name = workload or "CK"
        origin_ = origin or "random"
        f_min_ = 0.64 if f_min is None else f_min
        if name in cfg.CLASSES:
            wl = cfg.single_kind(name, 0.99 if f is None else f, k_max or 3, origin_, f_min_)
        else:
            wl = cfg.usage_pattern(name, 0.99 if f is None else f, origin_, f_min_)
    else:
        if origin is not None:
            wl = replace(wl, origin=origin)
        if f_min is not None:
            wl = replace(wl, min_fidelity=f_min)
        if f is not None or k_max is not None:
            wl = replace(wl, loads={k: replace(v, fraction=v.fraction if f is None else f,
                                               k_max=v.k_max if k_max is None else k_max)
                                    for k, v in wl.loads.items()})
    return scn, wl


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose: int) -> None:
    """Simulate a heralded-entanglement link layer."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_scenario_options
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for the exported report.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
def run(out, fmt, **kw) -> None:
    """Run a single scenario and print its summary."""
    scn, wl = _build(**kw)
    rep = run_scenario(scn, wl)
    click.echo(json.dumps({"summary": rep.summary, "invariants": rep.invariants}, indent=1, sort_keys=True))
    if out:
        for p in export(rep, out, fmt):
            click.echo(f"wrote {p}", err=True)
    sys.exit(0 if rep.ok else 1)


@main.command("sweep")
@_scenario_options
@click.option("--param", type=click.Choice(SWEEP_PARAMS), required=True)
@click.option("--values", required=True, help="Comma-separated parameter values.")
@click.option("--seeds", type=int, default=5, help="Number of seeds, starting at --seed.")
@click.option("--workers", type=int, default=1)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV file for the per-run rows.")
def sweep_cmd(param, values, seeds, workers, out, **kw) -> None:
    """Run a grid of one parameter over several seeds."""
    scn, wl = _build(**kw)
    vals = [float(v) for v in values.split(",") if v.strip()]
    results = sweep(scn, wl, param, vals, range(scn.seed, scn.seed + seeds), workers)
    rows = summary_rows(results)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out:
            fh.close()
    sys.exit(0 if all(r[3].ok for r in results) else 1)


@main.command()
@click.option("--preset", type=click.Choice(cfg.PRESETS), default="Lab")
@click.option("--alpha", "alphas", type=float, multiple=True, default=(0.1, 0.2, 0.3, 0.5))
@click.option("--pairs", type=int, default=300)
@click.option("--seed", type=int, default=0)
@click.option("--rotation", type=float, default=0.0, help="Node A's Z rotation in radians.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV file for the correlation table.")
def validate(preset, alphas, pairs, seed, rotation, out) -> None:
    """Fixed-basis correlation experiment on heralded pairs."""
    lp = cfg.link_physics(preset)
    rows = []
    for a in alphas:
        res = validation_experiment(lp, a, pairs, seed=seed, rotation_rad=rotation)
        click.echo(f"alpha={a:.3f} p_succ={res.p_success:.3e}+-{res.p_success_std:.1e} "
                   f"F={res.fidelity:.4f}+-{res.fidelity_std:.4f} model={res.predicted_fidelity:.4f}")
        rows.extend(res.rows())
    if out:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


@main.command("calibrate-feu")
@click.option("--preset", type=click.Choice(cfg.PRESETS), default="Lab")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def calibrate_feu(preset, out) -> None:
    """Print the FEU table: success probability and predicted fidelities per alpha."""
    table = feu_mod.build_table(cfg.link_physics(preset))
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, ["alpha", "p_success", "fidelity_keep", "fidelity_measure"], lineterminator="\n")
        w.writeheader()
        w.writerows(table.rows())
    finally:
        if out:
            fh.close()


if __name__ == "__main__":
    main()
