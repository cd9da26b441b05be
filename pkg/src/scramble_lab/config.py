"""Experiment configuration: presets, defaults per experiment, YAML loading."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .spin import Boundary, ModelParams

__all__ = ["EXPERIMENTS", "PRESETS", "ExperimentConfig", "load_config", "preset_values"]

EXPERIMENTS = ("purity-dynamics", "tmi-dynamics", "tmi-saturation", "tmi-spatial", "haar-ref", "fss-fit")

# (J_zz, h_x, h_z); trivial-integrable takes h_z from the config
PRESETS: dict[str, tuple[float, float, float | None]] = {
    "chaotic": (-1.0, 1.05, -0.5),
    "integrable": (-1.0, -1.0, 0.0),
    "trivial-integrable": (1.0, 0.0, None),
}


def preset_values(name: str, h_z: float | None = None) -> tuple[float, float, float]:
    try:
        J, hx, hz = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if hz is None:
        if h_z is None:
            raise ValueError(f"preset {name!r} needs h_z")
        hz = h_z
    return J, hx, hz


@dataclass
class ExperimentConfig:
    experiment: str
    preset: str = "chaotic"
    L: list[int] = field(default_factory=lambda: [8])
    J_zz: float | None = None
    h_x: float | None = None
    h_z: float | None = None
    boundary: str | None = None
    delta_t: float = 1.0
    p_values: list[float] = field(default_factory=lambda: [0.0])
    n_samples: int | dict[int, int] = 100
    master_seed: int = 0
    n_steps: int | None = None
    stride: int | None = None
    extra_steps: list[int] = field(default_factory=list)
    r_values: list[int] | None = None
    output_dir: str = "out"
    memory_budget_bytes: int = 2 * 1024**3
    workers: int = 1
    save_records: bool = True
    # Haar reference
    haar_samples: int = 20
    haar_seed: int = 2023
    haar_cache_dir: str | None = None
    # purity fits
    fit_t_min: int = 1
    fit_t_max: int | None = 50
    # saturation
    saturation_window: float | None = None
    # fss
    saturation_file: str | None = None
    grid_pc: list[float] | None = None
    grid_nu: list[float] | None = None
    fss_p_range: list[float] | None = None
    fss_weighted: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if isinstance(self.L, int):
            self.L = [self.L]
        self.L = [int(x) for x in self.L]
        self.p_values = [float(p) for p in self.p_values]
        if any(not 0.0 <= p <= 1.0 for p in self.p_values):
            raise ValueError("p_values must lie in [0, 1]")
        if isinstance(self.n_samples, dict):
            self.n_samples = {int(k): int(v) for k, v in self.n_samples.items()}
            if any(v < 1 for v in self.n_samples.values()):
                raise ValueError("n_samples must be >= 1")
        elif int(self.n_samples) < 1:
            raise ValueError("n_samples must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")
        preset_values(self.preset, self.h_z)

    def samples_for(self, L: int) -> int:
        if isinstance(self.n_samples, dict):
            return self.n_samples[L]
        return int(self.n_samples)

    def default_boundary(self) -> Boundary:
        if self.boundary is not None:
            return Boundary(self.boundary)
        if self.experiment == "tmi-spatial":
            return Boundary.OPEN
        if self.experiment in ("tmi-dynamics", "tmi-saturation") and self.preset != "chaotic":
            return Boundary.OPEN
        return Boundary.PERIODIC

    def model_params(self, L: int) -> ModelParams:
        J, hx, hz = preset_values(self.preset, self.h_z)
        return ModelParams(
            L=L,
            J_zz=J if self.J_zz is None else self.J_zz,
            h_x=hx if self.h_x is None else self.h_x,
            h_z=hz if self.h_z is None else self.h_z,
            boundary=self.default_boundary(),
            delta_t=self.delta_t,
        )

    def steps_for(self, L: int) -> int:
        if self.n_steps is not None:
            return int(self.n_steps)
        if self.experiment == "purity-dynamics":
            return 50
        if self.experiment == "tmi-spatial":
            return 10
        return 10 * L

    def stride_for(self, L: int) -> int:
        if self.stride is not None:
            return self.stride
        if self.experiment == "tmi-saturation":
            return self.steps_for(L)
        return 1

    def haar_dir(self) -> Path:
        if self.haar_cache_dir is not None:
            return Path(self.haar_cache_dir)
        return Path(self.output_dir) / "haar"

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        """Hash of everything that changes simulated trajectories."""
        d = self.to_dict()
        for key in ("output_dir", "workers", "memory_budget_bytes", "haar_cache_dir", "save_records"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**data)
