"""Run configuration: YAML schema, defaults, validation.

Every key is optional and falls back to the defaults below; unknown keys
at any nesting level are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from .potentials import KernelConfig

SYSTEM_POTENTIALS = ("soft_coulomb",)


@dataclass(frozen=True)
class SpeciesConfig:
    mass: float = 1.0
    potential: str = "soft_coulomb"


@dataclass(frozen=True)
class GridConfig:
    x_min: float = -10.0
    x_max: float = 10.0
    n: int = 401


@dataclass(frozen=True)
class BathConfig:
    enabled: bool = False
    L: int = 64
    omega_max: float = 0.6
    mass: float = 1.0
    coupling_scale: float = 0.3
    coupling_shape: str = "omega"
    mode: str = "quantum_per_walker"
    engine: str = "gaussian"
    topology: str = "replicated"


@dataclass(frozen=True)
class TimeConfig:
    dt_imag: float = 0.01
    dt_real: float = 0.02
    n_prep_steps: int = 3000
    n_thermal_steps: int = 1200    # re-relaxation against the thermalized bath
    n_real_steps: int = 10000


@dataclass(frozen=True)
class PulseConfig:
    amplitude: float = 0.05
    width: float = 0.5
    center: float = 1.5    # 3 * width: unipolar sub-cycle kick


@dataclass(frozen=True)
class ConvergenceConfig:
    tol: float = 0.0       # 0 disables early stopping (fixed step budget)
    window: int = 50


@dataclass(frozen=True)
class SimConfig:
    seed: int = 20260811
    threads: int = 4
    walkers: int = 500
    beta: float = math.inf
    init_spread: float = 0.5   # std of the random initial wave centers
    species: tuple[SpeciesConfig, ...] = (SpeciesConfig(),)
    grid: GridConfig = GridConfig()
    bath: BathConfig = BathConfig()
    time: TimeConfig = TimeConfig()
    pulse: PulseConfig = PulseConfig()
    kernel: KernelConfig = KernelConfig()
    convergence: ConvergenceConfig = ConvergenceConfig()

    def __post_init__(self):
        if self.walkers < 1:
            raise ValueError("walkers must be >= 1")
        if not self.species:
            raise ValueError("need at least one species")
        for s in self.species:
            if s.potential not in SYSTEM_POTENTIALS:
                raise ValueError(f"unknown potential id {s.potential!r}")
        if not (self.beta > 0):
            raise ValueError("beta must be positive (use inf for T = 0)")

    def replace(self, **kw) -> "SimConfig":
        import dataclasses
        return dataclasses.replace(self, **kw)


_SECTION_TYPES = {
    "grid": GridConfig,
    "bath": BathConfig,
    "time": TimeConfig,
    "pulse": PulseConfig,
    "kernel": KernelConfig,
    "convergence": ConvergenceConfig,
}


def _build_section(cls, data: dict, path: str):
    import dataclasses
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown key(s) {sorted(unknown)} in section '{path}'")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        if ftype in ("float", float):
            value = float(value)
        elif ftype in ("int", int):
            value = int(value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> SimConfig:
    """Validate a nested dict against the schema and build a SimConfig."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    known = {"seed", "threads", "walkers", "beta", "init_spread",
             "species"} | set(_SECTION_TYPES)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown top-level key(s): {sorted(unknown)}")

    kwargs = {}
    for key in ("seed", "threads", "walkers"):
        if key in data:
            kwargs[key] = int(data[key])
    if "init_spread" in data:
        kwargs["init_spread"] = float(data["init_spread"])
    if "beta" in data:
        b = data["beta"]
        kwargs["beta"] = math.inf if b in ("inf", ".inf", None) else float(b)
    if "species" in data:
        spl = data["species"]
        if not isinstance(spl, list):
            raise ValueError("species must be a list of mappings")
        kwargs["species"] = tuple(
            _build_section(SpeciesConfig, s, f"species[{i}]")
            for i, s in enumerate(spl))
    for key, cls in _SECTION_TYPES.items():
        if key in data:
            if not isinstance(data[key], dict):
                raise ValueError(f"section '{key}' must be a mapping")
            kwargs[key] = _build_section(cls, data[key], key)
    return SimConfig(**kwargs)


def load_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))


def config_echo(cfg: SimConfig) -> dict:
    """JSON-ready nested dict mirroring the config (inf spelled 'inf')."""
    import dataclasses

    def scrub(x):
        if isinstance(x, float) and math.isinf(x):
            return "inf"
        if isinstance(x, tuple):
            return [scrub(v) for v in x]
        if dataclasses.is_dataclass(x):
            return {f.name: scrub(getattr(x, f.name))
                    for f in dataclasses.fields(x)}
        return x

    return scrub(cfg)
