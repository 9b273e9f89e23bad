"""Exner-based attribution of net streamwise sediment flux to DMD modes.

Integrating ``(1 - porosity) d(eta)/dt + div(q_s) = 0`` streamwise over a
transect and dropping the spanwise term gives the net streamwise flux

    q_net(y, t) = -(1 - porosity) * integral of d(eta)/dt dx,

and with the modal expansion ``d(eta)/dt = sum_k alpha_k omega_k phi_k exp(omega_k t)``
each mode contributes

    q_k(y, t) = -(1 - porosity) * alpha_k * exp(omega_k t) * omega_k * integral of phi_k dx.

Contributions are reported per conjugate pair (``2 Re q_k``) or per real mode
(``Re q_k``). The x-integral is the trapezoidal rule on the native grid.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dmd import DmdModel
from .errors import (
    ConfigError,
    DegenerateRange,
    ExcludedMode,
    NoContributingModes,
    TransectOutOfRange,
)
from .spectrum import DEFAULT_PERSISTENCE_TOL, ModeSummary, pair_groups, summarize

DEFAULT_POROSITY = 0.4


class RankOrder(str, enum.Enum):
    BY_SPEED_ASCENDING = "BySpeedAscending"
    BY_SPEED_DESCENDING = "BySpeedDescending"
    BY_MAGNITUDE = "ByMagnitude"


class Aggregation(str, enum.Enum):
    MEAN_ABS = "mean_abs"
    RMS = "rms"
    FINAL = "final"


def check_transect(nx: int, ny: int, y_index: int, x_range) -> tuple[int, int]:
    if not 0 <= int(y_index) < ny:
        raise TransectOutOfRange(f"transect {y_index} outside [0, {ny - 1}]")
    if x_range is None:
        return 0, nx - 1
    i_min, i_max = (int(v) for v in x_range)
    if not (0 <= i_min < nx and 0 <= i_max < nx):
        raise TransectOutOfRange(f"x range ({i_min}, {i_max}) outside [0, {nx - 1}]")
    if i_max - i_min < 1:
        raise DegenerateRange(f"x range ({i_min}, {i_max}) spans fewer than two points")
    return i_min, i_max


def check_porosity(porosity: float) -> float:
    porosity = float(porosity)
    if not 0.0 <= porosity < 1.0:
        raise ConfigError(f"porosity must lie in [0, 1), got {porosity}")
    return porosity


@dataclass(frozen=True)
class FluxConfig:
    porosity: float = DEFAULT_POROSITY
    y_index: int = 0
    x_range: tuple[int, int] | None = None  # inclusive grid indices; None = full transect
    times: tuple[float, ...] | None = None  # None = training sample times

    def resolve(self, model: DmdModel) -> tuple[int, int]:
        m, n = model.grid_shape
        check_porosity(self.porosity)
        return check_transect(m, n, self.y_index, self.x_range)

    def sample_times(self, model: DmdModel) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=np.float64)
        return model.dt * np.arange(model.n_train + 1)


@dataclass
class FluxReport:
    """Per-pair flux time series, net flux and cumulative contribution ranking.

    ``groups[i]`` lists the mode indices of pair ``i``; ``per_mode[i]`` is that
    pair's real flux (m^2/s) at each of ``times``.
    """

    times: np.ndarray
    groups: list[tuple[int, ...]]
    per_mode: np.ndarray
    net: np.ndarray
    speeds: np.ndarray
    periods: np.ndarray
    wavelengths: np.ndarray
    magnitudes: np.ndarray
    percent: np.ndarray
    order: RankOrder
    ranking: np.ndarray
    cumulative: np.ndarray
    porosity: float
    y_index: int
    x_range: tuple[int, int]
    aggregation: Aggregation = Aggregation.MEAN_ABS
    warnings: list[str] = field(default_factory=list)


def mode_spatial_integral(model: DmdModel, k: int, y_index: int = 0, x_range=None) -> complex:
    """Trapezoidal integral of mode ``k`` along the transect, in meters x mode units."""
    m, n = model.grid_shape
    i_min, i_max = check_transect(m, n, y_index, x_range)
    profile = model.mode_field(k)[i_min : i_max + 1, y_index]
    return complex(np.trapezoid(profile, dx=model.spacings[0]))


def _spatial_integrals(model: DmdModel, y_index: int, i_min: int, i_max: int) -> np.ndarray:
    m, n = model.grid_shape
    rows = model.modes.reshape(m, n, model.rank)[i_min : i_max + 1, y_index, :]
    return np.trapezoid(rows, dx=model.spacings[0], axis=0)


def _prefactor(porosity: float) -> float:
    return -(1.0 - porosity)


def _scaled(rate, porosity):
    # applied once, last, so porosity changes rescale every flux with a single rounding;
    # adding 0.0 turns -0.0 into 0.0
    return _prefactor(porosity) * rate + 0.0


def _complex_mode_rate(model, k, integral, t):
    """``alpha_k exp(omega_k t) omega_k I_k``: the mode's flux before the porosity prefactor."""
    if model.excluded[k]:
        raise ExcludedMode(f"mode {k} has a zero eigenvalue")
    omega = model.continuous_eigs[k]
    if omega == 0:
        return 0j
    return model.amplitudes[k] * np.exp(omega * t) * omega * integral


def _group_rate(model, group, integrals, t) -> float:
    q = _complex_mode_rate(model, group[0], integrals[group[0]], t)
    if len(group) == 2:
        return float(2.0 * q.real)
    return float(q.real)


def modal_flux(model: DmdModel, k: int, cfg: FluxConfig, t: float) -> float:
    """Real flux contribution (m^2/s) of mode ``k`` at time ``t``.

    For a conjugate pair the pair total ``2 Re q_k`` is returned (the same
    value for both members); a real mode returns ``Re q_k``.
    """
    i_min, i_max = cfg.resolve(model)
    if not 0 <= k < model.rank:
        raise ConfigError(f"mode index {k} outside [0, {model.rank - 1}]")
    group = next(g for g in pair_groups(model) if k in g)
    integrals = _spatial_integrals(model, cfg.y_index, i_min, i_max)
    return float(_scaled(_group_rate(model, group, integrals, t), cfg.porosity))


def _rate_series(model, groups, integrals, times, threads):
    def one(group):
        if any(model.excluded[k] for k in group):
            return np.zeros(times.size)
        return np.array([_group_rate(model, group, integrals, t) for t in times])

    if threads and threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, groups))
    else:
        rows = [one(g) for g in groups]
    return np.array(rows).reshape(len(groups), times.size)


def _excluded_note(model) -> list[str]:
    idx = np.flatnonzero(model.excluded)
    if idx.size == 0:
        return []
    msg = f"ExcludedMode: modes {idx.tolist()} have zero eigenvalues and carry no flux"
    warnings.warn(msg, stacklevel=3)
    return [msg]


def _net_from_rows(rows: np.ndarray) -> np.ndarray:
    # fixed left-to-right summation order over pairs
    net = np.zeros(rows.shape[1])
    for row in rows:
        net = net + row
    return net


def net_flux(model: DmdModel, cfg: FluxConfig, t: float) -> float:
    """Net streamwise flux through the transect at time ``t``: the sum of all pair contributions."""
    i_min, i_max = cfg.resolve(model)
    _excluded_note(model)
    groups = pair_groups(model)
    integrals = _spatial_integrals(model, cfg.y_index, i_min, i_max)
    rates = _rate_series(model, groups, integrals, np.array([float(t)]), threads=1)
    return float(_scaled(_net_from_rows(rates)[0], cfg.porosity))


def time_derivative(model: DmdModel, t: float) -> np.ndarray:
    """Analytic ``d(eta_hat)/dt`` at time ``t`` as a complex vector."""
    keep = ~model.excluded
    coef = np.zeros(model.rank, dtype=np.complex128)
    om = model.continuous_eigs[keep]
    coef[keep] = model.amplitudes[keep] * om * np.exp(om * t)
    return model.modes @ coef


def direct_net_flux(model: DmdModel, cfg: FluxConfig, t: float) -> complex:
    """``-(1 - porosity)`` times the x-integral of the analytic time derivative.

    Same expansion as :func:`net_flux`, integrated after summing the modes;
    the imaginary part is the residual discarded for real data.
    """
    i_min, i_max = cfg.resolve(model)
    m, n = model.grid_shape
    deriv = time_derivative(model, t).reshape(m, n)[i_min : i_max + 1, cfg.y_index]
    return complex(_prefactor(cfg.porosity) * np.trapezoid(deriv, dx=model.spacings[0]))


def _aggregate(rows: np.ndarray, how: Aggregation) -> np.ndarray:
    if rows.shape[1] == 0:
        return np.zeros(rows.shape[0])
    if how is Aggregation.MEAN_ABS:
        return np.abs(rows).mean(axis=1)
    if how is Aggregation.RMS:
        return np.sqrt((rows**2).mean(axis=1))
    return np.abs(rows[:, -1])


def _rank(speeds: np.ndarray, magnitudes: np.ndarray, order: RankOrder) -> np.ndarray:
    idx = np.arange(speeds.size)
    defined = np.isfinite(speeds)
    if order is RankOrder.BY_MAGNITUDE:
        return np.array(sorted(idx, key=lambda i: (-magnitudes[i], i)), dtype=np.int64)
    sign = 1.0 if order is RankOrder.BY_SPEED_ASCENDING else -1.0
    head = sorted(idx[defined], key=lambda i: (sign * speeds[i], i))
    tail = sorted(idx[~defined])  # undefined speeds go last
    return np.array(head + tail, dtype=np.int64)


def cumulative_contribution(
    model: DmdModel,
    cfg: FluxConfig,
    order: RankOrder | str = RankOrder.BY_SPEED_ASCENDING,
    aggregation: Aggregation | str = Aggregation.MEAN_ABS,
    summaries: list[ModeSummary] | None = None,
    persistence_tol: float = DEFAULT_PERSISTENCE_TOL,
    threads: int = 1,
    allow_empty: bool = False,
) -> FluxReport:
    """Build the flux report and rank pair contributions.

    Each pair's contribution magnitude is aggregated over ``cfg.times``
    (time-mean absolute flux by default), normalized to percentages, and
    accumulated in the requested order. Pairs with undefined speed go last.
    ``allow_empty`` returns a report with empty ranking instead of raising
    :class:`NoContributingModes` when every contribution is zero.
    """
    order = RankOrder(order)
    aggregation = Aggregation(aggregation)
    i_min, i_max = cfg.resolve(model)
    times = cfg.sample_times(model)
    notes = _excluded_note(model)
    groups = pair_groups(model)
    integrals = _spatial_integrals(model, cfg.y_index, i_min, i_max)
    rates = _rate_series(model, groups, integrals, times, threads)
    rows = _scaled(rates, cfg.porosity)
    net = _scaled(_net_from_rows(rates), cfg.porosity)

    if summaries is None:
        summaries = summarize(model, tol=persistence_tol, y_index=cfg.y_index)
    speeds = np.array([summaries[g[0]].speed for g in groups], dtype=np.float64)
    periods = np.array([summaries[g[0]].period for g in groups], dtype=np.float64)
    wavelengths = np.array([summaries[g[0]].wavelength for g in groups], dtype=np.float64)

    magnitudes = _aggregate(rows, aggregation)
    total = float(magnitudes.sum())
    if total == 0.0:
        if not allow_empty:
            raise NoContributingModes("every pair contributes exactly zero flux")
        notes.append("NoContributingModes: every pair contributes exactly zero flux")
        percent = np.zeros(len(groups))
        ranking = np.zeros(0, dtype=np.int64)
        cumulative = np.zeros(0)
    else:
        percent = 100.0 * magnitudes / total
        ranking = _rank(speeds, magnitudes, order)
        cumulative = np.cumsum(percent[ranking])
        cumulative[-1] = 100.0

    return FluxReport(
        times=times,
        groups=groups,
        per_mode=rows,
        net=net,
        speeds=speeds,
        periods=periods,
        wavelengths=wavelengths,
        magnitudes=magnitudes,
        percent=percent,
        order=order,
        ranking=ranking,
        cumulative=cumulative,
        porosity=cfg.porosity,
        y_index=int(cfg.y_index),
        x_range=(i_min, i_max),
        aggregation=aggregation,
        warnings=notes,
    )


def slowest_share(report: FluxReport, count: int) -> float:
    """Percent of total contribution carried by the ``count`` slowest pairs with defined speed."""
    defined = np.flatnonzero(np.isfinite(report.speeds))
    slow = sorted(defined, key=lambda i: (report.speeds[i], i))[:count]
    return float(report.percent[slow].sum()) if len(slow) else math.nan
