"""Carbon-footprint accounting for training runs.

grams CO2e = t * (n_c*P_c*u_c + n_gpu*P_gpu*u_gpu + 0.3725*mem_gb)
             * PUE * CI * 0.001
with t in hours, powers in watts, PUE the data-center efficiency factor and
CI the grid carbon intensity in gCO2e per kWh. The memory term uses the
0.3725 W/GB convention.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

MEMORY_WATTS_PER_GB = 0.3725
DEFAULT_PUE = 1.10
DEFAULT_CARBON_INTENSITY = 475.0  # gCO2e per kWh


@dataclass(frozen=True)
class EnergyParams:
    t_hours: float = 0.0
    n_cores: int = 0
    core_watts: float = 0.0
    core_usage: float = 1.0
    n_gpus: int = 0
    gpu_watts: float = 0.0
    gpu_usage: float = 1.0
    mem_gb: float = 0.0
    pue: float = DEFAULT_PUE
    carbon_intensity: float = DEFAULT_CARBON_INTENSITY

    def __post_init__(self):
        for name in ("t_hours", "n_cores", "core_watts", "n_gpus",
                     "gpu_watts", "mem_gb", "pue", "carbon_intensity"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("core_usage", "gpu_usage"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class EnergyReport:
    grams_co2e: float
    kwh: float
    cpu_watts: float
    gpu_watts: float
    memory_watts: float

    def as_dict(self) -> dict:
        return {
            "grams_co2e": self.grams_co2e,
            "kwh": self.kwh,
            "cpu_w": self.cpu_watts,
            "gpu_w": self.gpu_watts,
            "mem_w": self.memory_watts,
        }


def memory_power(mem_gb: float) -> float:
    if mem_gb < 0:
        raise ValueError("mem_gb must be non-negative")
    return MEMORY_WATTS_PER_GB * mem_gb


def carbon_footprint(p: EnergyParams) -> EnergyReport:
    cpu_w = p.n_cores * p.core_watts * p.core_usage
    gpu_w = p.n_gpus * p.gpu_watts * p.gpu_usage
    mem_w = memory_power(p.mem_gb)
    total_w = cpu_w + gpu_w + mem_w
    kwh = p.t_hours * total_w * 0.001
    grams = kwh * p.pue * p.carbon_intensity
    return EnergyReport(grams_co2e=grams, kwh=kwh, cpu_watts=cpu_w,
                        gpu_watts=gpu_w, memory_watts=mem_w)


def session_report(wall_clock_hours: float, p: EnergyParams,
                   sampled_core_usage: Optional[list[float]] = None,
                   sampled_gpu_usage: Optional[list[float]] = None,
                   epochs: Optional[int] = None
                   ) -> tuple[EnergyReport, Optional[float]]:
    """Footprint for a finished run: t from the wall clock, usage factors
    from samples when given. Returns (report, grams per epoch or None)."""
    if wall_clock_hours < 0:
        raise ValueError("wall clock must be non-negative")
    updates: dict = {"t_hours": wall_clock_hours}
    if sampled_core_usage:
        updates["core_usage"] = sum(sampled_core_usage) / len(sampled_core_usage)
    if sampled_gpu_usage:
        updates["gpu_usage"] = sum(sampled_gpu_usage) / len(sampled_gpu_usage)
    report = carbon_footprint(replace(p, **updates))
    per_epoch = report.grams_co2e / epochs if epochs else None
    return report, per_epoch
