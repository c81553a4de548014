"""Simulation configuration: nested dataclasses mirrored by a JSON document.

Every section maps to a JSON object of the same name.  Unknown keys and
values that violate a module precondition raise ``ConfigError``, and
``SimConfig.from_dict(cfg.to_dict()) == cfg`` for every valid config.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigError

MODES = ("classical", "relativistic")
KERNELS = ("hard_sphere", "vhs", "constant")
INTEGRATORS = ("euler", "heun")
PROJECTIONS = ("uniform", "density")
EQUILIBRIA = ("none", "maxwellian")
EXPERIMENTS = ("run", "relax", "stability")


def _vec3(value, name: str) -> tuple[float, float, float]:
    try:
        out = tuple(float(v) for v in value)
    except TypeError as exc:
        raise ConfigError(f"{name} must be a 3-vector") from exc
    if len(out) != 3 or not all(math.isfinite(v) for v in out):
        raise ConfigError(f"{name} must be a finite 3-vector, got {value!r}")
    return out


def _positive(value, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _count(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _choice(value, name: str, options) -> str:
    if value not in options:
        raise ConfigError(f"{name} must be one of {options}, got {value!r}")
    return value


@dataclass
class GridConfig:
    length: float = 2.0 * math.pi
    nx: int = 32
    vmax: float = 6.0
    nv: int = 12

    def __post_init__(self):
        self.length = _positive(self.length, "grid.length")
        self.vmax = _positive(self.vmax, "grid.vmax")
        self.nx = _count(self.nx, "grid.nx", 1)
        self.nv = _count(self.nv, "grid.nv", 2)


@dataclass
class KernelConfig:
    model: str = "hard_sphere"
    alpha: float = 1.0
    b0: float = 1.0

    def __post_init__(self):
        _choice(self.model, "kernel.model", KERNELS)
        self.alpha = float(self.alpha)
        if not -3.0 < self.alpha <= 1.0:
            raise ConfigError(f"kernel.alpha must lie in (-3, 1], got {self.alpha}")
        self.b0 = _positive(self.b0, "kernel.b0")


@dataclass
class QuadConfig:
    polar: int = 8
    azimuth: int = 16

    def __post_init__(self):
        self.polar = _count(self.polar, "quad.polar", 1)
        self.azimuth = _count(self.azimuth, "quad.azimuth", 1)


@dataclass
class TransportConfig:
    """Transport settings; ``gauss_correction`` enables the optional E_1 projection after each step."""

    mode: str = "classical"
    cfl_safety: float = 1.0
    gauss_correction: bool = False

    def __post_init__(self):
        _choice(self.mode, "transport.mode", MODES)
        self.cfl_safety = _positive(self.cfl_safety, "transport.cfl_safety")
        if self.cfl_safety > 1.0:
            raise ConfigError("transport.cfl_safety must not exceed 1")
        if not isinstance(self.gauss_correction, bool):
            raise ConfigError("transport.gauss_correction must be a boolean")


@dataclass
class CollisionConfig:
    """Collision sub-step settings.

    ``strength`` multiplies the whole operator (an inverse Knudsen number);
    ``projection`` selects the plain or density-weighted conservative
    projection and ``equilibrium`` the equilibrium-preserving correction.
    """

    enabled: bool = True
    integrator: str = "euler"
    projection: str = "density"
    equilibrium: str = "maxwellian"
    strength: float = 1.0
    max_loss_dt: float = 0.5

    def __post_init__(self):
        if not isinstance(self.enabled, bool):
            raise ConfigError("collision.enabled must be a boolean")
        _choice(self.integrator, "collision.integrator", INTEGRATORS)
        _choice(self.projection, "collision.projection", PROJECTIONS)
        _choice(self.equilibrium, "collision.equilibrium", EQUILIBRIA)
        self.strength = _positive(self.strength, "collision.strength")
        self.max_loss_dt = _positive(self.max_loss_dt, "collision.max_loss_dt")


@dataclass
class ComponentConfig:
    """One Maxwellian population with optional cosine modulations in x.

    ``rho(x) = density (1 + density_amplitude cos(k x))`` and
    ``T(x) = temperature (1 + temperature_amplitude cos(k x))`` with
    ``k = 2 pi mode / L``.
    """

    density: float = 1.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: float = 1.0
    density_amplitude: float = 0.0
    temperature_amplitude: float = 0.0
    mode: int = 1

    def __post_init__(self):
        self.density = _positive(self.density, "initial.components.density")
        self.velocity = _vec3(self.velocity, "initial.components.velocity")
        self.temperature = _positive(self.temperature, "initial.components.temperature")
        self.density_amplitude = float(self.density_amplitude)
        self.temperature_amplitude = float(self.temperature_amplitude)
        if abs(self.density_amplitude) >= 1 or abs(self.temperature_amplitude) >= 1:
            raise ConfigError("modulation amplitudes must be below 1 in magnitude")
        self.mode = _count(self.mode, "initial.components.mode", 0)


@dataclass
class FieldConfig:
    """Initial fields: uniform ``B`` plus an optional transverse wave.

    The wave sets ``E_2 = B_3 = amplitude cos(k x)`` (right-moving in vacuum).
    ``E_1`` is always integrated from the initial charge density.
    """

    B: tuple[float, float, float] = (0.0, 0.0, 0.0)
    wave_amplitude: float = 0.0
    wave_mode: int = 1

    def __post_init__(self):
        self.B = _vec3(self.B, "fields.B")
        self.wave_amplitude = float(self.wave_amplitude)
        self.wave_mode = _count(self.wave_mode, "fields.wave_mode", 0)


@dataclass
class InitialConfig:
    components: list[ComponentConfig] = field(default_factory=lambda: [ComponentConfig()])
    fields: FieldConfig = field(default_factory=FieldConfig)

    def __post_init__(self):
        self.components = [c if isinstance(c, ComponentConfig) else _build(ComponentConfig, c, "initial.components")
                           for c in self.components]
        if not self.components:
            raise ConfigError("initial.components must not be empty")
        if not isinstance(self.fields, FieldConfig):
            self.fields = _build(FieldConfig, self.fields, "initial.fields")


@dataclass
class PerturbationConfig:
    """Second initial datum for the stability experiment.

    The perturbed state is ``f0 (1 + shape(x))`` rescaled so that
    ``||f0_b - f0_a||_1 = l1 * ||f0_a||_1`` where ``shape = cos(2 pi mode x / L)``.
    """

    l1: float = 1e-3
    mode: int = 1

    def __post_init__(self):
        self.l1 = _positive(self.l1, "perturbation.l1")
        self.mode = _count(self.mode, "perturbation.mode", 1)


@dataclass
class CommutatorConfig:
    """Inputs of the commutator schedule study, independent of the solver grids.

    The density is ``(1 + amplitude cos(k x))`` times a Maxwellian; the
    electric field is ``E(x) = (e_amplitude_1 sin kx, e_amplitude_2 cos kx,
    e_amplitude_3 sin kx)`` and ``B`` is constant.
    """

    eps: list[float] = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05, 0.025])
    density: float = 1.0
    velocity: tuple[float, float, float] = (0.3, -0.2, 0.1)
    temperature: float = 1.0
    amplitude: float = 0.5
    wavenumber: float = 1.0
    e_amplitude: tuple[float, float, float] = (0.5, 0.3, 0.0)
    B: tuple[float, float, float] = (0.0, 0.0, 1.0)
    x_center: float = 1.0
    x_half: float = 1.0
    xi_half: float = 1.5
    window_nx: int = 8
    window_nv: int = 9
    order: int = 6

    def __post_init__(self):
        try:
            self.eps = [_positive(e, "commutator.eps") for e in self.eps]
        except TypeError as exc:
            raise ConfigError("commutator.eps must be a list of numbers") from exc
        self.density = _positive(self.density, "commutator.density")
        self.velocity = _vec3(self.velocity, "commutator.velocity")
        self.temperature = _positive(self.temperature, "commutator.temperature")
        self.amplitude = float(self.amplitude)
        if abs(self.amplitude) >= 1:
            raise ConfigError("commutator.amplitude must be below 1 in magnitude")
        self.wavenumber = float(self.wavenumber)
        self.e_amplitude = _vec3(self.e_amplitude, "commutator.e_amplitude")
        self.B = _vec3(self.B, "commutator.B")
        self.x_center = float(self.x_center)
        self.x_half = _positive(self.x_half, "commutator.x_half")
        self.xi_half = _positive(self.xi_half, "commutator.xi_half")
        self.window_nx = _count(self.window_nx, "commutator.window_nx", 1)
        self.window_nv = _count(self.window_nv, "commutator.window_nv", 1)
        self.order = _count(self.order, "commutator.order", 1)


@dataclass
class OutputConfig:
    directory: str = "vmb_out"
    cadence: int = 1
    snapshot_cadence: int = 0
    dissipation: bool = True
    plots: bool = True

    def __post_init__(self):
        self.directory = str(self.directory)
        self.cadence = _count(self.cadence, "output.cadence", 1)
        self.snapshot_cadence = _count(self.snapshot_cadence, "output.snapshot_cadence", 0)
        for key in ("dissipation", "plots"):
            if not isinstance(getattr(self, key), bool):
                raise ConfigError(f"output.{key} must be a boolean")


@dataclass
class SimConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    quad: QuadConfig = field(default_factory=QuadConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    commutator: CommutatorConfig = field(default_factory=CommutatorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    dt: float | str = "auto"
    steps: int = 10
    experiment: str = "run"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            section = _SECTIONS.get(f.name)
            if section is not None:
                setattr(self, f.name, _build(section, getattr(self, f.name), f.name))
        if self.dt != "auto":
            self.dt = _positive(self.dt, "dt")
        self.steps = _count(self.steps, "steps", 0)
        _choice(self.experiment, "experiment", EXPERIMENTS)

    @property
    def mode(self) -> str:
        return self.transport.mode

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return _build(cls, data, "config")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **changes) -> "SimConfig":
        """Copy with top-level keys or dotted section keys (``"grid.nx"``) replaced."""
        data = self.to_dict()
        for key, value in changes.items():
            node = data
            parts = key.replace("__", ".").split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section in {key!r}")
                node = node[p]
            node[parts[-1]] = value
        return SimConfig.from_dict(data)


_SECTIONS = {
    "grid": GridConfig, "kernel": KernelConfig, "quad": QuadConfig,
    "transport": TransportConfig, "collision": CollisionConfig,
    "initial": InitialConfig, "perturbation": PerturbationConfig,
    "commutator": CommutatorConfig, "output": OutputConfig,
}


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _build(cls, data, where: str):
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def load_config(path: str | Path) -> SimConfig:
    """Parse a config file; unreadable files raise ``OSError``, bad content ``ConfigError``."""
    return SimConfig.from_json(Path(path).read_text())


def save_config(config: SimConfig, path: str | Path) -> None:
    Path(path).write_text(config.to_json() + "\n")
