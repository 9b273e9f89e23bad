"""Eigenvalue classification, periods, DMD power and per-mode migration.

DMD power is taken as ``|alpha_k|^2 ||phi_k||^2``. It does not depend on how
modes are normalized, since ``(c phi_k, alpha_k / c)`` gives the same value.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import hilbert

from .dmd import DmdModel
from .errors import ConfigError, EmptySpectrum, TransectOutOfRange
from .serialize import fmt_float

DEFAULT_PERSISTENCE_TOL = 0.01
PAIR_RTOL = 1e-6
# 3.9 min, 6 min, 1 h -> four period regions
DEFAULT_REGION_EDGES = (234.0, 360.0, 3600.0)
_ZERO_PAD = 8
_MIN_VARIANCE = 1e-14


class Persistence(str, enum.Enum):
    DECAYING = "Decaying"
    PERSISTENT = "Persistent"
    GROWING = "Growing"


@dataclass(frozen=True)
class ModeSummary:
    index: int
    eigenvalue: complex
    omega: complex
    period: float  # seconds; inf for non-oscillatory modes
    power: float
    persistence: Persistence
    wavelength: float  # meters; nan when undefined
    speed: float  # m/s; nan when undefined
    pair_index: int | None
    wavelength_hilbert: float = math.nan
    excluded: bool = False


def classify_eigenvalue(lam: complex, tol: float = DEFAULT_PERSISTENCE_TOL) -> Persistence:
    if not 0.0 < tol < 0.5:
        raise ConfigError(f"persistence tolerance must lie in (0, 0.5), got {tol}")
    mod = abs(lam)
    if mod < 1.0 - tol:
        return Persistence.DECAYING
    if mod > 1.0 + tol:
        return Persistence.GROWING
    return Persistence.PERSISTENT


def mode_period(omega: complex) -> float:
    """Oscillation period ``2 pi / |Im omega|`` in seconds, ``inf`` when ``Im omega == 0``."""
    im = abs(complex(omega).imag)
    if im == 0.0:
        return math.inf
    return 2.0 * math.pi / im


def mode_power(model: DmdModel, k: int) -> float:
    return float(abs(model.amplitudes[k]) ** 2 * np.linalg.norm(model.modes[:, k]) ** 2)


def pair_conjugates(eigs, rtol: float = PAIR_RTOL) -> list[int | None]:
    """Match each complex eigenvalue to its nearest conjugate partner.

    Real eigenvalues and complex ones without a partner within
    ``rtol * |lambda|`` get ``None``.
    """
    eigs = np.asarray(eigs, dtype=np.complex128)
    partner: list[int | None] = [None] * eigs.size
    for k, lam in enumerate(eigs):
        if partner[k] is not None or lam.imag == 0.0:
            continue
        free = [j for j in range(eigs.size) if j != k and partner[j] is None and eigs[j].imag != 0.0]
        if not free:
            continue
        dist = np.abs(eigs[free] - np.conj(lam))
        best = int(np.argmin(dist))
        if dist[best] <= rtol * abs(lam):
            j = free[best]
            partner[k], partner[j] = j, k
    return partner


def pair_groups(model: DmdModel, rtol: float = PAIR_RTOL) -> list[tuple[int, ...]]:
    """Modes grouped into conjugate pairs / singletons, in order of first appearance."""
    partner = pair_conjugates(model.discrete_eigs, rtol)
    groups = []
    seen = set()
    for k, j in enumerate(partner):
        if k in seen:
            continue
        if j is None:
            groups.append((k,))
            seen.add(k)
        else:
            # representative is the member with positive imaginary part
            a, b = (k, j) if model.discrete_eigs[k].imag > 0 else (j, k)
            groups.append((a, b))
            seen.update((k, j))
    return groups


def transect_profile(model: DmdModel, k: int, y_index: int) -> np.ndarray:
    m, n = model.grid_shape
    if not 0 <= y_index < n:
        raise TransectOutOfRange(f"transect {y_index} outside [0, {n - 1}]")
    if not 0 <= k < model.rank:
        raise ConfigError(f"mode index {k} outside [0, {model.rank - 1}]")
    return model.mode_field(k)[:, y_index]


def _peak_wavelength(profile: np.ndarray, dx: float) -> float:
    """Wavelength at the amplitude-spectrum peak of a Hann-windowed, zero-padded profile.

    The peak location is refined by a parabola through the log-magnitudes of
    the three bins around the maximum.
    """
    n = profile.size
    x = profile - profile.mean()
    if np.var(profile) < _MIN_VARIANCE:
        return math.nan
    nfft = _ZERO_PAD * n
    spec = np.abs(np.fft.rfft(x * np.hanning(n), n=nfft))
    # the DC bin shows through whenever there is no oscillation over the window
    coarse = np.abs(np.fft.rfft(x * np.hanning(n)))
    if int(np.argmax(coarse)) == 0:
        return math.nan
    k = int(np.argmax(spec))
    if k == 0:
        return math.nan
    shift = 0.0
    if 0 < k < spec.size - 1 and np.all(spec[k - 1 : k + 2] > 0):
        a, b, c = np.log(spec[k - 1 : k + 2])
        denom = a - 2 * b + c
        if denom != 0:
            shift = 0.5 * (a - c) / denom
    freq = (k + shift) / (nfft * dx)
    return 1.0 / freq if freq > 0 else math.nan


def _hilbert_wavelength(profile: np.ndarray, dx: float) -> float:
    x = profile - profile.mean()
    if np.var(profile) < _MIN_VARIANCE:
        return math.nan
    phase = np.unwrap(np.angle(hilbert(x)))
    rate = float(np.median(np.gradient(phase, dx)))
    if rate == 0.0:
        return math.nan
    return 2.0 * math.pi / abs(rate)


def mode_wavelength(model: DmdModel, k: int, y_index: int = 0) -> float:
    """Dominant streamwise wavelength (m) of ``Re(phi_k)`` along a transect; nan if undefined."""
    m, _ = model.grid_shape
    if m <= 4:
        raise ConfigError(f"need more than 4 streamwise points, got {m}")
    return _peak_wavelength(transect_profile(model, k, y_index).real, model.spacings[0])


def mode_wavelength_hilbert(model: DmdModel, k: int, y_index: int = 0) -> float:
    """Wavelength from the median streamwise rate of the analytic-signal phase."""
    return _hilbert_wavelength(transect_profile(model, k, y_index).real, model.spacings[0])


def mode_speed(summary: ModeSummary) -> float:
    if not (math.isfinite(summary.wavelength) and math.isfinite(summary.period)):
        return math.nan
    return summary.wavelength / summary.period


def summarize(
    model: DmdModel,
    tol: float = DEFAULT_PERSISTENCE_TOL,
    y_index: int = 0,
    pair_rtol: float = PAIR_RTOL,
) -> list[ModeSummary]:
    partner = pair_conjugates(model.discrete_eigs, pair_rtol)
    m, n = model.grid_shape
    if not 0 <= y_index < n:
        raise TransectOutOfRange(f"transect {y_index} outside [0, {n - 1}]")
    out = []
    for k in range(model.rank):
        lam = complex(model.discrete_eigs[k])
        omega = complex(model.continuous_eigs[k])
        excluded = bool(model.excluded[k])
        period = math.inf if excluded else mode_period(omega)
        if m > 4:
            wl = mode_wavelength(model, k, y_index)
            wl_h = mode_wavelength_hilbert(model, k, y_index)
        else:
            wl = wl_h = math.nan
        s = ModeSummary(
            index=k,
            eigenvalue=lam,
            omega=omega,
            period=period,
            power=mode_power(model, k),
            persistence=classify_eigenvalue(lam, tol),
            wavelength=wl,
            speed=math.nan,
            pair_index=partner[k],
            wavelength_hilbert=wl_h,
            excluded=excluded,
        )
        out.append(replace(s, speed=mode_speed(s)))
    return out


def bin_spectrum(summaries, edges=DEFAULT_REGION_EDGES) -> np.ndarray:
    """Count modes per period region, each conjugate pair once.

    ``len(edges) + 1`` regions: ``(-inf, e0), [e0, e1), ..., [e_last, inf]``.
    Infinite periods land in the last region.
    """
    summaries = list(summaries)
    if not summaries:
        raise EmptySpectrum("no modes to bin")
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or np.any(np.diff(edges) <= 0):
        raise ConfigError("region edges must be strictly ascending")
    counts = np.zeros(edges.size + 1, dtype=np.int64)
    for s in summaries:
        if s.pair_index is not None and s.pair_index < s.index:
            continue
        counts[np.searchsorted(edges, s.period, side="right")] += 1
    return counts


def persistence_counts(summaries) -> dict[str, int]:
    counts = {p.value: 0 for p in Persistence}
    for s in summaries:
        counts[s.persistence.value] += 1
    return counts


SUMMARY_COLUMNS = (
    "index",
    "re_lambda",
    "im_lambda",
    "abs_lambda",
    "re_omega",
    "im_omega",
    "period_s",
    "power",
    "persistence",
    "wavelength_m",
    "speed_m_per_s",
    "pair_index",
)


def summary_rows(summaries) -> list[dict]:
    rows = []
    for s in summaries:
        rows.append(
            {
                "index": s.index,
                "re_lambda": s.eigenvalue.real,
                "im_lambda": s.eigenvalue.imag,
                "abs_lambda": abs(s.eigenvalue),
                "re_omega": s.omega.real,
                "im_omega": s.omega.imag,
                "period_s": s.period,
                "power": s.power,
                "persistence": s.persistence.value,
                "wavelength_m": s.wavelength,
                "speed_m_per_s": s.speed,
                "pair_index": s.pair_index,
            }
        )
    return rows


def summaries_to_csv(summaries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in summary_rows(summaries):
        writer.writerow(
            [
                fmt_float(v) if isinstance(v, float) else ("" if v is None else v)
                for v in (row[c] for c in SUMMARY_COLUMNS)
            ]
        )
    return buf.getvalue()
