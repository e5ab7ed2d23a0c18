"""Scenario and workload configuration, presets and INI loading."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

from qlinksim import physmodel as pm
from qlinksim.channel import fiber_delay_ns

PRESETS = ("Lab", "QLink")
CALIBRATION_ALPHA = 0.1
CALIBRATION_SLOPE = 1e-3  # target p_succ per unit alpha

# request class -> (request type, priority)
CLASSES = {"NL": ("K", 1), "CK": ("K", 2), "MD": ("M", 3)}

# expected MHP cycles per attempt
CYCLES_PER_ATTEMPT = {"Lab": {"K": 1.1, "M": 1.0}, "QLink": {"K": 16.0, "M": 1.0}}

LOADS = {"Low": 0.7, "High": 0.99, "Ultra": 1.5}


def _preset_arms(preset: str) -> tuple[pm.EmissionConfig, pm.EmissionConfig, int, int]:
    if preset == "Lab":
        arm = pm.EmissionConfig(fiber_km=0.001)
        return arm, arm, 5, 5
    if preset == "QLink":
        base = pm.EmissionConfig(tau_e_ns=6.48, p_zero_phonon=0.46, p_collection=0.014 * 0.3,
                                 fiber_db_per_km=0.5)
        return (replace(base, fiber_km=10.0), replace(base, fiber_km=15.0),
                fiber_delay_ns(10.0), fiber_delay_ns(15.0))
    raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")


@lru_cache(maxsize=32)
def link_physics(preset: str, emission: tuple[tuple[str, float], ...] = (),
                 device: tuple[tuple[str, float], ...] = (), calibrate: bool = True) -> pm.LinkPhysics:
    """Physical parameters of a preset, with overrides, calibrated at alpha = 0.1."""
    a, b, da, db = _preset_arms(preset)
    if emission:
        a = replace(a, **dict(emission))
        b = replace(b, **dict(emission))
    if calibrate:
        a, b = pm.calibrate_collection(a, b, CALIBRATION_ALPHA, CALIBRATION_SLOPE * CALIBRATION_ALPHA)
    dev = replace(pm.DeviceConfig(), **dict(device)) if device else pm.DeviceConfig()
    return pm.LinkPhysics(a, b, dev, da, db)


@dataclass(frozen=True)
class ScenarioConfig:
    preset: str = "Lab"
    seed: int = 0
    duration_s: float = 10.0
    drain_s: float = 0.0
    p_loss: float = 0.0
    p_gen_fail: float = 0.0
    scheduler: str = "fcfs"
    alpha_override: float | None = None
    test_fraction: float = 0.05
    qber_window: int = 2000
    fast_forward: bool = True
    calibrate: bool = True
    queue_sample_s: float = 0.1
    emission: tuple[tuple[str, float], ...] = ()
    device: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.duration_s < 0 or self.drain_s < 0:
            raise ValueError("durations must be non-negative")
        if not 0.0 <= self.p_loss <= 1.0 or not 0.0 <= self.p_gen_fail <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.scheduler not in ("fcfs", "wfq"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.alpha_override is not None and not 0.0 < self.alpha_override < 1.0:
            raise ValueError("alpha_override must lie in (0, 1)")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in [0, 1)")

    def physics(self) -> pm.LinkPhysics:
        return link_physics(self.preset, self.emission, self.device, self.calibrate)


@dataclass(frozen=True)
class ClassLoad:
    fraction: float = 0.0
    k_max: int = 1
    fixed_k: bool = False

    def __post_init__(self):
        if self.fraction < 0:
            raise ValueError("load fraction must be non-negative")
        if not 1 <= self.k_max <= 0xFFFF:
            raise ValueError("k_max out of range")


@dataclass(frozen=True)
class WorkloadConfig:
    loads: dict[str, ClassLoad] = field(default_factory=dict)
    origin: str = "random"  # "A", "B" or "random"
    min_fidelity: float = 0.64
    max_time_s: float = 0.0

    def __post_init__(self):
        for name in self.loads:
            if name not in CLASSES:
                raise ValueError(f"unknown request class {name!r}")
        if self.origin not in ("A", "B", "random"):
            raise ValueError(f"unknown origin pattern {self.origin!r}")
        if not 0.0 <= self.min_fidelity <= 1.0:
            raise ValueError("min_fidelity must lie in [0, 1]")

    def __hash__(self):
        return hash((tuple(sorted(self.loads.items())), self.origin, self.min_fidelity, self.max_time_s))


def single_kind(kind: str, fraction: float = 0.99, k_max: int = 3, origin: str = "random",
                min_fidelity: float = 0.64) -> WorkloadConfig:
    return WorkloadConfig({kind: ClassLoad(fraction, k_max)}, origin=origin, min_fidelity=min_fidelity)


USAGE_PATTERNS = {
    "Uniform": {"NL": (1 / 3, 1), "CK": (1 / 3, 1), "MD": (1 / 3, 1)},
    "MoreNL": {"NL": (4 / 6, 3), "CK": (1 / 6, 3), "MD": (1 / 6, 256)},
    "MoreCK": {"NL": (1 / 6, 3), "CK": (4 / 6, 3), "MD": (1 / 6, 256)},
    "MoreMD": {"NL": (1 / 6, 3), "CK": (1 / 6, 3), "MD": (4 / 6, 256)},
    "NoNLMoreCK": {"NL": (0.0, 3), "CK": (4 / 5, 3), "MD": (1 / 5, 256)},
    "NoNLMoreMD": {"NL": (0.0, 3), "CK": (1 / 5, 3), "MD": (4 / 5, 256)},
}

# mixed patterns of the scheduler comparison, fixed pair counts per request
MIXED_PATTERNS = {
    "mixed-uniform": {"NL": (1 / 3, 2), "CK": (1 / 3, 2), "MD": (1 / 3, 10)},
    "mixed-nonl-moremd": {"NL": (0.0, 2), "CK": (1 / 5, 2), "MD": (4 / 5, 10)},
}


def usage_pattern(name: str, load: float = 0.99, origin: str = "random",
                  min_fidelity: float = 0.64) -> WorkloadConfig:
    if name in USAGE_PATTERNS:
        spec, fixed = USAGE_PATTERNS[name], False
    elif name in MIXED_PATTERNS:
        spec, fixed = MIXED_PATTERNS[name], True
    else:
        raise ValueError(f"unknown usage pattern {name!r}")
    loads = {k: ClassLoad(load * share, min(kmax, 0xFFFF), fixed) for k, (share, kmax) in spec.items()}
    return WorkloadConfig(loads, origin=origin, min_fidelity=min_fidelity)


# ---- INI files ----------------------------------------------------------

def _coerce(raw: str, current):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float) or current is None:
        return None if raw.strip().lower() in ("", "none") else float(raw)
    return raw.strip()


def load_config(path: str | Path) -> tuple[ScenarioConfig, WorkloadConfig]:
    """Read ``[scenario]``, ``[workload]``, ``[emission]`` and ``[device]`` sections.

    Workload classes are given as ``NL = fraction,k_max[,fixed]``; a
    ``pattern`` key selects a usage pattern instead.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise FileNotFoundError(path)
    return parse_config(cp)


def parse_config(cp: configparser.ConfigParser) -> tuple[ScenarioConfig, WorkloadConfig]:
    scn = ScenarioConfig()
    if cp.has_section("scenario"):
        updates = {}
        names = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"emission", "device"}
        for key, raw in cp.items("scenario"):
            if key not in names:
                raise ValueError(f"unknown scenario key {key!r}")
            updates[key] = _coerce(raw, getattr(scn, key)) if key != "alpha_override" else (
                None if raw.strip().lower() in ("", "none") else float(raw))
        scn = replace(scn, **updates)
    for section in ("emission", "device"):
        if cp.has_section(section):
            pairs = tuple(sorted((k, float(v)) for k, v in cp.items(section)))
            scn = replace(scn, **{section: pairs})
    wl = WorkloadConfig()
    if cp.has_section("workload"):
        sec = dict(cp.items("workload"))
        origin = sec.pop("origin", "random")
        f_min = float(sec.pop("min_fidelity", 0.64))
        max_time = float(sec.pop("max_time_s", 0.0))
        pattern = sec.pop("pattern", None)
        load = float(sec.pop("load", 0.99))
        if pattern:
            wl = usage_pattern(pattern, load, origin, f_min)
        loads = dict(wl.loads)
        for cls, raw in sec.items():
            parts = [p.strip() for p in raw.split(",")]
            loads[cls] = ClassLoad(float(parts[0]), int(parts[1]) if len(parts) > 1 else 1,
                                   len(parts) > 2 and parts[2].lower() in ("fixed", "true", "1"))
        wl = WorkloadConfig(loads, origin=origin, min_fidelity=f_min, max_time_s=max_time)
    ScenarioConfig.__post_init__(scn)
    return scn, wl
