"""Synthetic bedforms with closed-form ground truth, and the finite-difference Exner oracle.

A wave ``a exp(g t) cos(2 pi x / L - 2 pi t / T + psi) s(y)`` is exactly a
two-mode linear system with discrete eigenvalues ``exp((g -+ 2 pi i / T) dt)``,
so a J-wave field is an exact rank-2J system (plus one ``lambda = 1`` mode for
a nonzero mean bed when the mean is not removed).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import BoundaryTimeIndex, ConfigError, FormatError, GridTooCoarse, InputNotFound
from .flux import check_porosity, check_transect
from .ingest import ElevationField

SCENARIO_DIR = Path(__file__).parent / "scenarios"


class SpanwiseProfile(str, enum.Enum):
    UNIFORM = "Uniform"
    COSINE = "Cosine"


@dataclass(frozen=True)
class WaveSpec:
    amplitude: float
    wavelength: float
    period: float  # seconds; negative period = upstream migration
    decay_rate: float = 0.0  # 1/s
    phase: float = 0.0
    spanwise_profile: SpanwiseProfile = SpanwiseProfile.UNIFORM

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ConfigError(f"wavelength must be > 0, got {self.wavelength}")
        if self.period == 0 or not math.isfinite(self.period):
            raise ConfigError(f"period must be finite and nonzero, got {self.period}")
        if not self.amplitude >= 0:
            raise ConfigError(f"amplitude must be >= 0, got {self.amplitude}")
        object.__setattr__(self, "spanwise_profile", SpanwiseProfile(self.spanwise_profile))

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def angular_frequency(self) -> float:
        return 2.0 * math.pi / self.period

    @property
    def celerity(self) -> float:
        return self.wavelength / self.period

    def eigenvalues(self, dt: float) -> np.ndarray:
        """The wave's two discrete DMD eigenvalues at sampling interval ``dt``."""
        mu = np.exp((self.decay_rate - 1j * self.angular_frequency) * dt)
        return np.array([mu, np.conj(mu)])


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nt: int
    dx: float
    dy: float
    dt: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 1 or self.nt < 3:
            raise ConfigError(f"grid needs nx >= 2, ny >= 1, nt >= 3; got {self.nx}, {self.ny}, {self.nt}")
        if min(self.dx, self.dy, self.dt) <= 0:
            raise ConfigError("grid spacings must be > 0")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    waves: tuple[WaveSpec, ...] = ()
    mean_bed: float = 0.0
    noise_std: float = 0.0
    seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)


def spanwise_factor(spec: WaveSpec, grid: Grid) -> np.ndarray:
    if spec.spanwise_profile is SpanwiseProfile.UNIFORM:
        return np.ones(grid.ny)
    width = grid.ny * grid.dy
    center = grid.y0 + 0.5 * (grid.ny - 1) * grid.dy
    return np.cos(math.pi * (grid.y - center) / width)


def check_resolution(specs, grid: Grid) -> None:
    for spec in specs:
        if spec.wavelength < 4 * grid.dx:
            raise GridTooCoarse(f"wavelength {spec.wavelength} m < 4 dx = {4 * grid.dx} m")
        if abs(spec.period) < 4 * grid.dt:
            raise GridTooCoarse(f"|period| {abs(spec.period)} s < 4 dt = {4 * grid.dt} s")


def wave_values(spec: WaveSpec, grid: Grid, t=None) -> np.ndarray:
    """One wave sampled on the grid, shape ``(nx, ny, len(t))``."""
    t = grid.t if t is None else np.atleast_1d(np.asarray(t, dtype=np.float64))
    x = grid.x[:, None, None]
    s = spanwise_factor(spec, grid)[None, :, None]
    tt = t[None, None, :]
    theta = spec.wavenumber * x - spec.angular_frequency * tt + spec.phase
    return spec.amplitude * np.exp(spec.decay_rate * tt) * np.cos(theta) * s


def generate(specs, grid: Grid, mean_bed: float = 0.0, noise_std: float = 0.0, seed: int = 0) -> ElevationField:
    specs = list(specs)
    check_resolution(specs, grid)
    values = np.full((grid.nx, grid.ny, grid.nt), float(mean_bed))
    for spec in specs:
        values += wave_values(spec, grid)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        values += rng.normal(0.0, noise_std, size=values.shape)
    return ElevationField(values, dx=grid.dx, dy=grid.dy, dt=grid.dt, origin=(grid.x0, grid.y0))


def generate_scenario(scenario: Scenario, seed: int | None = None) -> ElevationField:
    return generate(
        scenario.waves,
        scenario.grid,
        mean_bed=scenario.mean_bed,
        noise_std=scenario.noise_std,
        seed=scenario.seed if seed is None else seed,
    )


def oracle_net_flux(field: ElevationField, porosity: float, y_index: int = 0, x_range=None, t_index: int = 1) -> float:
    """Net streamwise flux from the data alone.

    Central difference in time at ``t_index``, trapezoidal rule in x,
    times ``-(1 - porosity)``.
    """
    porosity = check_porosity(porosity)
    i_min, i_max = check_transect(field.nx, field.ny, y_index, x_range)
    if not 1 <= t_index <= field.nt - 2:
        raise BoundaryTimeIndex(f"t_index must lie in [1, {field.nt - 2}], got {t_index}")
    prof = field.values[i_min : i_max + 1, y_index, :]
    deta = (prof[:, t_index + 1] - prof[:, t_index - 1]) / (2.0 * field.dt)
    return float(-(1.0 - porosity) * np.trapezoid(deta, dx=field.dx))


def analytic_net_flux(specs, grid: Grid, porosity: float, y_index: int = 0, x_range=None, t: float = 0.0) -> float:
    """Exact ``-(1 - porosity) * integral of d(eta)/dt dx`` for a superposition of waves."""
    porosity = check_porosity(porosity)
    i_min, i_max = check_transect(grid.nx, grid.ny, y_index, x_range)
    xa, xb = grid.x[i_min], grid.x[i_max]
    total = 0.0
    for spec in specs:
        k, w, g = spec.wavenumber, spec.angular_frequency, spec.decay_rate
        th_a = k * xa - w * t + spec.phase
        th_b = k * xb - w * t + spec.phase
        int_cos = (math.sin(th_b) - math.sin(th_a)) / k
        int_sin = -(math.cos(th_b) - math.cos(th_a)) / k
        s = spanwise_factor(spec, grid)[y_index]
        total += spec.amplitude * math.exp(g * t) * s * (g * int_cos + w * int_sin)
    return -(1.0 - porosity) * total


# -- scenario files -------------------------------------------------------------

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["grid"],
    "properties": {
        "grid": {
            "type": "object",
            "required": ["nx", "ny", "nt", "dx", "dy", "dt"],
            "properties": {
                "nx": {"type": "integer", "minimum": 2},
                "ny": {"type": "integer", "minimum": 1},
                "nt": {"type": "integer", "minimum": 3},
                "dx": {"type": "number", "exclusiveMinimum": 0},
                "dy": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "x0": {"type": "number"},
                "y0": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "waves": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["amplitude", "wavelength", "period"],
                "properties": {
                    "amplitude": {"type": "number", "minimum": 0},
                    "wavelength": {"type": "number", "exclusiveMinimum": 0},
                    "period": {"type": "number"},
                    "decay_rate": {"type": "number"},
                    "phase": {"type": "number"},
                    "spanwise_profile": {"enum": ["Uniform", "Cosine"]},
                },
                "additionalProperties": False,
            },
        },
        "mean_bed": {"type": "number"},
        "noise_std": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}


def scenario_from_dict(data: dict) -> Scenario:
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid scenario: {exc.message}") from exc
    grid = Grid(**data["grid"])
    waves = tuple(WaveSpec(**w) for w in data.get("waves", []))
    return Scenario(
        grid=grid,
        waves=waves,
        mean_bed=float(data.get("mean_bed", 0.0)),
        noise_std=float(data.get("noise_std", 0.0)),
        seed=int(data.get("seed", 0)),
        meta={"description": data.get("description", "")},
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    waves = []
    for w in scenario.waves:
        d = asdict(w)
        d["spanwise_profile"] = w.spanwise_profile.value
        waves.append(d)
    out = {
        "grid": asdict(scenario.grid),
        "waves": waves,
        "mean_bed": scenario.mean_bed,
        "noise_std": scenario.noise_std,
        "seed": scenario.seed,
    }
    if scenario.meta.get("description"):
        out["description"] = scenario.meta["description"]
    return out


def load_scenario(path) -> Scenario:
    """Read a scenario JSON file; a bare name like ``two_wave`` resolves to a bundled scenario."""
    p = Path(path)
    if not p.exists():
        bundled = SCENARIO_DIR / (p.name if p.suffix == ".json" else p.name + ".json")
        if p.parent == Path(".") and bundled.is_file():
            p = bundled
        else:
            raise InputNotFound(f"no such scenario file: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: {exc}") from exc
    return scenario_from_dict(data)
