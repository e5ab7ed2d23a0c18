"""Parameter sweeps over seeds, fanned out to worker processes."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from qlinksim.harness.config import ScenarioConfig, WorkloadConfig
from qlinksim.harness.metrics import MetricsReport
from qlinksim.harness.runner import run_scenario

SWEEP_PARAMS = ("alpha", "f_min", "load", "p_loss")
SUMMARY_COLUMNS = ("param", "value", "seed", "cls", "pairs", "throughput", "fidelity", "latency", "scaled_latency",
                   "ok")


def apply_param(scn: ScenarioConfig, wl: WorkloadConfig, param: str, value: float
                ) -> tuple[ScenarioConfig, WorkloadConfig]:
    if param == "alpha":
        return replace(scn, alpha_override=value), wl
    if param == "f_min":
        return scn, replace(wl, min_fidelity=value)
    if param == "load":
        loads = {k: replace(v, fraction=value if v.fraction > 0 else 0.0) for k, v in wl.loads.items()}
        return scn, replace(wl, loads=loads)
    if param == "p_loss":
        return replace(scn, p_loss=value), wl
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


def _run(job) -> tuple[str, float, int, MetricsReport]:
    param, value, seed, scn, wl = job
    s, w = apply_param(replace(scn, seed=seed), wl, param, value)
    return param, value, seed, run_scenario(s, w)


def sweep(scn: ScenarioConfig, wl: WorkloadConfig, param: str, values, seeds, workers: int = 1
          ) -> list[tuple[str, float, int, MetricsReport]]:
    """Run every (value, seed) combination; results come back sorted by (value, seed)."""
    jobs = [(param, float(v), int(s), scn, wl) for v in values for s in seeds]
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    if workers <= 1:
        results = [_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, jobs))
    return sorted(results, key=lambda r: (r[1], r[2]))


def summary_rows(results) -> list[dict]:
    rows = []
    for param, value, seed, rep in results:
        for cls, s in sorted(rep.summary["classes"].items()):
            rows.append({"param": param, "value": value, "seed": seed, "cls": cls, "pairs": s["pairs"],
                         "throughput": s["throughput"], "fidelity": s["fidelity"], "latency": s["latency"],
                         "scaled_latency": s["scaled_latency"], "ok": rep.ok})
    return rows
