"""Phase-space discretization, distribution storage, moments and functionals.

Space is one periodic dimension of length ``L`` with ``N_x`` cells; velocity
is a uniform Cartesian lattice on ``[-V_max, V_max)^3`` with ``N_v`` nodes per
axis.  Node ``k`` of a velocity axis sits at ``-V_max + k * dv``, so the node
set contains ``-V_max`` but not ``+V_max``: it is symmetric under
``xi -> -xi`` except for the outermost layer at ``-V_max``.

All velocity integrals are plain lattice sums times ``dv**3`` and all space
integrals are sums over cell centers times ``dx``.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import ConfigError, DataError, DegenerateCellError, DomainError

UNIT_BALL_VOLUME = 4.0 * math.pi / 3.0

SNAPSHOT_MAGIC = b"VMBSNAP\x00"
SNAPSHOT_VERSION = 1
MOMENTS_HEADER = ["x", "rho", "jx", "jy", "jz", "ekin", "entropy"]


@dataclass(frozen=True)
class GridParams:
    """Extents and resolutions of the phase-space box."""

    length: float = 2.0 * math.pi
    nx: int = 32
    vmax: float = 6.0
    nv: int = 16


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic 1D grid with cell centers ``x_i = (i + 1/2) dx``."""

    length: float
    nx: int

    def __post_init__(self):
        if not (self.length > 0) or not math.isfinite(self.length):
            raise ConfigError(f"spatial length must be positive, got {self.length}")
        if int(self.nx) != self.nx or self.nx < 1:
            raise ConfigError(f"cell count must be a positive integer, got {self.nx}")

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @cached_property
    def faces(self) -> np.ndarray:
        """Left face of every cell, ``x = i dx``."""
        return np.arange(self.nx) * self.dx

    def distance_to_center(self, x: np.ndarray) -> np.ndarray:
        """Distance from ``x`` (wrapped into ``[0, L)``) to the midpoint ``L/2``."""
        return np.abs(np.mod(x, self.length) - 0.5 * self.length)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform lattice on ``[-V_max, V_max)^3`` with ``nv`` nodes per axis."""

    vmax: float
    nv: int

    def __post_init__(self):
        if not (self.vmax > 0) or not math.isfinite(self.vmax):
            raise ConfigError(f"velocity half-width must be positive, got {self.vmax}")
        if int(self.nv) != self.nv or self.nv < 2:
            raise ConfigError(f"velocity points per axis must be >= 2, got {self.nv}")

    @property
    def dv(self) -> float:
        return 2.0 * self.vmax / self.nv

    @property
    def cell_volume(self) -> float:
        return self.dv**3

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.vmax + np.arange(self.nv) * self.dv

    @cached_property
    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(nv, nv, nv, 3)``."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    @cached_property
    def speed2(self) -> np.ndarray:
        """``|xi|^2`` at every node, shape ``(nv, nv, nv)``."""
        return np.sum(self.mesh**2, axis=-1)

    def index_of(self, xi: Sequence[float]) -> tuple[int, int, int]:
        """Lattice index of a node given its coordinates (must lie on the lattice)."""
        idx = []
        for c in xi:
            k = (c + self.vmax) / self.dv
            kr = int(round(k))
            if abs(k - kr) > 1e-9 or not 0 <= kr < self.nv:
                raise DomainError(f"{tuple(xi)} is not a lattice node")
            idx.append(kr)
        return tuple(idx)


def _check_values(values: np.ndarray, nx: int, nv: int) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape != (nx, nv, nv, nv):
        raise DataError(f"expected shape {(nx, nv, nv, nv)}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DataError("distribution contains non-finite values")
    if values.size and values.min() < 0.0:
        raise DataError(f"distribution has negative values (min {values.min():.3e})")
    return values


@dataclass
class DistributionFunction:
    """Nonnegative phase-space density ``f[i, a, b, c]``."""

    values: np.ndarray
    space: SpatialGrid
    velocity: VelocityGrid

    def __post_init__(self):
        self.values = _check_values(self.values, self.space.nx, self.velocity.nv)

    @classmethod
    def zeros(cls, space: SpatialGrid, velocity: VelocityGrid) -> "DistributionFunction":
        nv = velocity.nv
        return cls(np.zeros((space.nx, nv, nv, nv)), space, velocity)

    def with_values(self, values: np.ndarray) -> "DistributionFunction":
        return DistributionFunction(values, self.space, self.velocity)

    def copy(self) -> "DistributionFunction":
        return self.with_values(self.values.copy())

    @property
    def phase_volume(self) -> float:
        return self.space.dx * self.velocity.cell_volume

    def total_mass(self) -> float:
        return float(self.values.sum() * self.phase_volume)


@dataclass
class Moments:
    """Per-cell velocity moments; every array has leading length ``N_x``."""

    rho: np.ndarray
    j: np.ndarray
    kinetic_energy: np.ndarray
    entropy: np.ndarray


@dataclass(frozen=True)
class MaxwellianParams:
    density: float
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: float = 1.0

    def __post_init__(self):
        if self.density < 0:
            raise DomainError(f"Maxwellian density must be >= 0, got {self.density}")
        if not self.temperature > 0:
            raise DomainError(f"Maxwellian temperature must be > 0, got {self.temperature}")

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """``m(xi)`` for points with trailing axis of length 3."""
        u = np.asarray(self.velocity, dtype=float)
        r2 = np.sum((xi - u) ** 2, axis=-1)
        t = self.temperature
        return self.density * (2.0 * math.pi * t) ** -1.5 * np.exp(-r2 / (2.0 * t))


@dataclass(frozen=True)
class WeightFunction:
    """Spatial weight ``nu(x) >= 0`` with ``sqrt(1 + nu)`` Lipschitz.

    The default rule is the squared distance to the midpoint of the periodic
    cell.  ``sqrt(1 + d^2)`` has slope ``d / sqrt(1 + d^2) < 1``, so it is
    1-Lipschitz with no extra rescaling.
    """

    rule: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, space: SpatialGrid) -> np.ndarray:
        x = space.centers
        if self.rule is None:
            return space.distance_to_center(x) ** 2
        nu = np.asarray(self.rule(x), dtype=float)
        if nu.shape != x.shape or np.any(nu < 0):
            raise DataError("weight function must be nonnegative on every cell")
        return nu

    @classmethod
    def zero(cls) -> "WeightFunction":
        return cls(lambda x: np.zeros_like(x))


RENORMALIZER_FAMILIES = ("beta_delta", "gamma_delta", "log1p", "identity")


@dataclass(frozen=True)
class Renormalizer:
    """Renormalizing function ``beta`` and its derivative.

    ``beta_delta(t) = t / (1 + delta t)``, ``gamma_delta(t) = ln(1 + delta t) / delta``
    and ``log1p(t) = ln(1 + t)``.  ``identity`` is included to express the plain
    equation; it is not admissible since ``beta'(t)(1 + t)`` is unbounded.
    """

    family: str = "beta_delta"
    delta: float = 1.0

    def __post_init__(self):
        if self.family not in RENORMALIZER_FAMILIES:
            raise DomainError(f"unknown renormalizer family {self.family!r}")
        if self.family in ("beta_delta", "gamma_delta") and not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "beta_delta":
            return t / (1.0 + self.delta * t)
        if self.family == "gamma_delta":
            return np.log1p(self.delta * t) / self.delta
        if self.family == "log1p":
            return np.log1p(t)
        return t.copy()

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "beta_delta":
            return 1.0 / (1.0 + self.delta * t) ** 2
        if self.family == "gamma_delta":
            return 1.0 / (1.0 + self.delta * t)
        if self.family == "log1p":
            return 1.0 / (1.0 + t)
        return np.ones_like(t)

    @property
    def admissible(self) -> bool:
        return self.family != "identity"

    def derivative_bound(self) -> float:
        """Exact ``sup_{t >= 0} beta'(t) (1 + t)``.

        For ``beta_delta`` the maximum of ``(1 + t) / (1 + delta t)^2`` is 1 at
        ``t = 0`` when ``delta >= 1/2`` and ``1 / (4 delta (1 - delta))`` at
        ``t = (1 - 2 delta) / delta`` otherwise; both are ``<= max(1, 1/delta)``.
        """
        d = self.delta
        if self.family == "beta_delta":
            return 1.0 if d >= 0.5 else 1.0 / (4.0 * d * (1.0 - d))
        if self.family == "gamma_delta":
            return max(1.0, 1.0 / d)
        if self.family == "log1p":
            return 1.0
        return math.inf


def build_phase_space(config) -> tuple[SpatialGrid, VelocityGrid]:
    """Build the spatial and velocity grids from a config or ``GridParams``."""
    params = getattr(config, "grid", config)
    space = SpatialGrid(float(params.length), _as_count(params.nx, "nx", 1))
    velocity = VelocityGrid(float(params.vmax), _as_count(params.nv, "nv", 2))
    return space, velocity


def point_count(space: SpatialGrid, velocity: VelocityGrid) -> int:
    return space.nx * velocity.nv**3


def _as_count(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def sample_maxwellian(
    params: MaxwellianParams | Sequence[MaxwellianParams],
    space: SpatialGrid,
    velocity: VelocityGrid,
    renormalize: bool = False,
) -> DistributionFunction:
    """Sample a Maxwellian at every lattice node.

    ``params`` is either one set of parameters (a global Maxwellian) or one
    set per spatial cell.  With ``renormalize`` each cell is rescaled so its
    discrete density equals the requested one.
    """
    if isinstance(params, MaxwellianParams):
        params = [params] * space.nx
    if len(params) != space.nx:
        raise DataError(f"need {space.nx} parameter sets, got {len(params)}")
    nv = velocity.nv
    values = np.empty((space.nx, nv, nv, nv))
    cache: dict[MaxwellianParams, np.ndarray] = {}
    for i, p in enumerate(params):
        if p not in cache:
            m = p.evaluate(velocity.mesh)
            if renormalize and p.density > 0:
                m *= p.density / (m.sum() * velocity.cell_volume)
            cache[p] = m
        values[i] = cache[p]
    return DistributionFunction(values, space, velocity)


def compute_moments(f: DistributionFunction) -> Moments:
    v = f.values
    if not np.all(np.isfinite(v)):
        raise DataError("distribution contains non-finite values")
    vol = f.velocity.cell_volume
    mesh = f.velocity.mesh
    rho = v.sum(axis=(1, 2, 3)) * vol
    j = np.einsum("iabc,abcd->id", v, mesh) * vol
    ekin = np.einsum("iabc,abc->i", v, f.velocity.speed2) * vol
    entropy = xlogy(v, v).sum(axis=(1, 2, 3)) * vol
    return Moments(rho=rho, j=j, kinetic_energy=ekin, entropy=entropy)


def fit_moments(cell: np.ndarray, velocity: VelocityGrid) -> MaxwellianParams:
    """Moment-matched Maxwellian of a single velocity slice."""
    vol = velocity.cell_volume
    rho = float(cell.sum() * vol)
    if not rho > 0:
        raise DegenerateCellError("cell has zero mass")
    u = np.einsum("abc,abcd->d", cell, velocity.mesh) * vol / rho
    r2 = np.sum((velocity.mesh - u) ** 2, axis=-1)
    temp = float(np.sum(cell * r2) * vol / (3.0 * rho))
    if not temp > 0:
        raise DegenerateCellError(f"fitted temperature {temp} is not positive")
    return MaxwellianParams(rho, tuple(float(c) for c in u), temp)


def fit_local_maxwellian(f: DistributionFunction, cell: int) -> MaxwellianParams:
    return fit_moments(f.values[cell], f.velocity)


def relative_entropy(cell: np.ndarray, velocity: VelocityGrid) -> float:
    """``sum f ln(f / m) dv^3`` against the moment-matched Maxwellian ``m``.

    ``m`` is sampled on the lattice and rescaled to carry the same discrete
    mass as ``f``, so the value is nonnegative up to rounding.
    """
    params = fit_moments(cell, velocity)
    m = params.evaluate(velocity.mesh)
    m *= params.density / (m.sum() * velocity.cell_volume)
    pos = cell > 0
    return float(np.sum(cell[pos] * np.log(cell[pos] / m[pos])) * velocity.cell_volume)


def apriori_functional(f: DistributionFunction, E: np.ndarray, B: np.ndarray,
                       nu: WeightFunction | None = None) -> float:
    """Entropy-energy functional ``int f (1 + |xi|^2 + nu + |ln f|) + int |E|^2 + |B|^2``.

    ``E`` and ``B`` are ``(N_x, 3)`` arrays; staggering does not matter for the
    squared-norm sum.
    """
    nu = nu or WeightFunction()
    v = f.values
    weight = 1.0 + f.velocity.speed2[None] + nu(f.space)[:, None, None, None]
    abs_log = np.abs(xlogy(v, v))
    particle = float(np.sum(v * weight + abs_log) * f.phase_volume)
    field_part = float((np.sum(np.square(E)) + np.sum(np.square(B))) * f.space.dx)
    return particle + field_part


def interpolation_bound_cell(cell: np.ndarray, velocity: VelocityGrid,
                             f_inf: float | None = None) -> tuple[float, float]:
    """First-moment interpolation inequality for one velocity slice.

    Splitting at radius ``R``: ``int |xi| f <= omega_3 R^4 ||f||_inf + R^{-1} int |xi|^2 f``.
    With ``R = M^{1/5}``, ``M = int |xi|^2 f``, this gives
    ``lhs <= (omega_3 ||f||_inf + 1) M^{4/5}``, which is returned as ``rhs``.
    """
    vol = velocity.cell_volume
    speed2 = velocity.speed2
    lhs = float(np.sum(cell * np.sqrt(speed2)) * vol)
    m2 = float(np.sum(cell * speed2) * vol)
    if m2 <= 0.0:
        return 0.0, 0.0
    f_inf = float(cell.max()) if f_inf is None else f_inf
    rhs = (UNIT_BALL_VOLUME * f_inf + 1.0) * m2**0.8
    return lhs, rhs


def interpolation_bound(f: DistributionFunction, cell: int) -> tuple[float, float]:
    return interpolation_bound_cell(f.values[cell], f.velocity)


# ---------------------------------------------------------------- snapshots

def write_snapshot(path: str | Path, f: DistributionFunction, t: float = 0.0,
                   extra: dict | None = None) -> None:
    """Binary snapshot: magic, header length, JSON header, little-endian f64 data."""
    header = {
        "format": "vmbsim-snapshot",
        "version": SNAPSHOT_VERSION,
        "endianness": "little",
        "dtype": "float64",
        "order": ["x", "xi_a", "xi_b", "xi_c"],
        "shape": list(f.values.shape),
        "space": {"length": f.space.length, "nx": f.space.nx},
        "velocity": {"vmax": f.velocity.vmax, "nv": f.velocity.nv},
        "t": t,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(f.values.astype("<f8", copy=False).tobytes(order="C"))


def read_snapshot(path: str | Path) -> tuple[DistributionFunction, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise DataError(f"{path} is not a snapshot file")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("version") != SNAPSHOT_VERSION:
            raise DataError(f"unsupported snapshot version {header.get('version')}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    space = SpatialGrid(**header["space"])
    velocity = VelocityGrid(**header["velocity"])
    values = data.reshape(header["shape"]).astype(np.float64)
    return DistributionFunction(values, space, velocity), header


def write_moments_csv(path: str | Path, f: DistributionFunction) -> None:
    m = compute_moments(f)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MOMENTS_HEADER)
        for i, x in enumerate(f.space.centers):
            w.writerow([repr(float(x)), repr(float(m.rho[i])), *(repr(float(c)) for c in m.j[i]),
                        repr(float(m.kinetic_energy[i])), repr(float(m.entropy[i]))])
