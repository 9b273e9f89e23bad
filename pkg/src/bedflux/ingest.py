"""Elevation-field data model, file formats and snapshot matrices.

Vectorization is row-major over the (x, y) grid: grid point ``(i, j)`` maps to
row ``i * ny + j`` of the snapshot matrix, so each streamwise row of the
snapshot is stacked in turn. Mode un-vectorization relies on this order, so it
is frozen and recorded in every saved model.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CorruptPayload,
    FormatError,
    FormatVersionMismatch,
    InputNotFound,
    InsufficientSnapshots,
    NonFiniteInput,
)

VECTORIZATION_ORDER = "row-major (x, y)"

BEDGRID_VERSION = 1
_HEADER_RE = re.compile(
    rb"^BEDGRID v(?P<version>\d+) nx=(?P<nx>\d+) ny=(?P<ny>\d+) nt=(?P<nt>\d+) "
    rb"dx=(?P<dx>\S+) dy=(?P<dy>\S+) dt=(?P<dt>\S+) x0=(?P<x0>\S+) y0=(?P<y0>\S+)$"
)
_MAX_HEADER = 4096


@dataclass(frozen=True)
class ElevationField:
    """Bed elevation ``values[i, j, k]`` at x index i, y index j, time index k (meters).

    ``attrs`` carries free-form metadata (e.g. sample times of a reconstructed
    series when they are not uniform).
    """

    values: np.ndarray
    dx: float
    dy: float
    dt: float
    origin: tuple[float, float] = (0.0, 0.0)
    attrs: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ConfigError(f"elevation values must be 3-D (nx, ny, nt), got shape {values.shape}")
        object.__setattr__(self, "values", values)
        nx, ny, nt = values.shape
        if nx < 2 or ny < 1 or nt < 1:
            raise ConfigError(f"grid too small: nx={nx}, ny={ny}, nt={nt}")
        for name in ("dx", "dy", "dt"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if not np.all(np.isfinite(values)):
            raise NonFiniteInput("elevation field contains NaN or Inf")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def nt(self) -> int:
        return self.values.shape[2]

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.ny)

    @property
    def times(self) -> np.ndarray:
        if "times" in self.attrs:
            return np.asarray(self.attrs["times"], dtype=np.float64)
        return self.dt * np.arange(self.nt)


@dataclass(frozen=True)
class SnapshotMatrix:
    """Column-stacked vectorized snapshots, optionally with the temporal mean removed."""

    data: np.ndarray
    m: int
    n: int
    mean_removed: bool
    mean_field: np.ndarray

    @property
    def p(self) -> int:
        return self.data.shape[1]


def vectorize(snapshot: np.ndarray) -> np.ndarray:
    """Stack the rows of an ``m x n`` snapshot into a vector of length ``m*n``."""
    snapshot = np.asarray(snapshot)
    if snapshot.ndim != 2:
        raise ConfigError(f"snapshot must be 2-D, got shape {snapshot.shape}")
    return snapshot.reshape(-1).copy()


def unvectorize(vector: np.ndarray, m: int, n: int) -> np.ndarray:
    vector = np.asarray(vector)
    if vector.shape != (m * n,):
        raise ConfigError(f"vector of shape {vector.shape} cannot be reshaped to ({m}, {n})")
    return vector.reshape(m, n).copy()


def build_snapshot_matrix(field: ElevationField, remove_mean: bool = True) -> SnapshotMatrix:
    values = np.asarray(field.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("elevation field contains NaN or Inf")
    nx, ny, nt = values.shape
    if nt < 3:
        raise InsufficientSnapshots(f"need at least 3 snapshots, got {nt}")
    # (nx, ny, nt) C-order reshape is exactly row-major vectorization per column
    data = np.ascontiguousarray(values.reshape(nx * ny, nt))
    if remove_mean:
        # shift by the row minimum first so rows without variation get an exact mean
        base = data.min(axis=1)
        mean = base + (data - base[:, None]).mean(axis=1)
        data = data - mean[:, None]
    else:
        mean = np.zeros(nx * ny)
        data = data.copy()
    return SnapshotMatrix(data=data, m=nx, n=ny, mean_removed=bool(remove_mean), mean_field=mean)


def split_pair(H: SnapshotMatrix, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H1, H2)``: snapshots ``0..q-1`` and their one-step shift ``1..q``."""
    q = int(q)
    if q < 1 or q > H.p - 1:
        raise InsufficientSnapshots(f"q must lie in [1, {H.p - 1}], got {q}")
    return H.data[:, :q], H.data[:, 1 : q + 1]


def train_count(p: int, train_fraction: float) -> int:
    """Number of snapshot pairs ``q`` for a training fraction of ``p`` snapshots."""
    if not 0.0 < train_fraction <= 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1], got {train_fraction}")
    # guard against 0.98 * 300 = 293.999...
    q = int(np.floor(train_fraction * p + 1e-9))
    q = min(q, p - 1)
    if q < 1:
        raise InsufficientSnapshots(f"train_fraction {train_fraction} of {p} snapshots leaves no pairs")
    return q


# -- BEDGRID ---------------------------------------------------------------


def write_bedgrid(field: ElevationField, path) -> None:
    header = (
        f"BEDGRID v{BEDGRID_VERSION} nx={field.nx} ny={field.ny} nt={field.nt} "
        f"dx={field.dx!r} dy={field.dy!r} dt={field.dt!r} "
        f"x0={field.origin[0]!r} y0={field.origin[1]!r}\n"
    )
    payload = np.ascontiguousarray(field.values.transpose(2, 0, 1), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.tobytes())


def read_bedgrid(path) -> ElevationField:
    path = Path(path)
    if not path.is_file():
        raise InputNotFound(f"no such file: {path}")
    raw = path.read_bytes()
    end = raw.find(b"\n", 0, _MAX_HEADER)
    if end < 0:
        raise CorruptPayload(f"{path}: missing BEDGRID header line")
    header = raw[:end]
    if not header.startswith(b"BEDGRID v"):
        raise FormatError(f"{path}: not a BEDGRID file")
    match = _HEADER_RE.match(header)
    if match is None:
        raise CorruptPayload(f"{path}: malformed BEDGRID header")
    version = int(match["version"])
    if version != BEDGRID_VERSION:
        raise FormatVersionMismatch(f"{path}: BEDGRID v{version}, expected v{BEDGRID_VERSION}")
    nx, ny, nt = (int(match[k]) for k in ("nx", "ny", "nt"))
    try:
        dx, dy, dt, x0, y0 = (float(match[k]) for k in ("dx", "dy", "dt", "x0", "y0"))
    except ValueError as exc:
        raise CorruptPayload(f"{path}: bad number in header") from exc
    body = raw[end + 1 :]
    expected = nx * ny * nt * 8
    if len(body) != expected:
        raise CorruptPayload(f"{path}: payload has {len(body)} bytes, expected {expected}")
    arr = np.frombuffer(body, dtype="<f8").reshape(nt, nx, ny)
    values = np.ascontiguousarray(arr.transpose(1, 2, 0), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput(f"{path}: elevation payload contains NaN or Inf")
    field = ElevationField(values, dx=dx, dy=dy, dt=dt, origin=(x0, y0))
    if nt < 3:
        raise InsufficientSnapshots(f"{path}: need at least 3 snapshots, got {nt}")
    return field


# -- CSV directory ----------------------------------------------------------

CSV_METADATA_NAME = "metadata.json"


def _natural_key(p: Path):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", p.name)]


def read_csv_dir(path) -> ElevationField:
    """Read one CSV per time step (rows = x, columns = y) plus ``metadata.json``.

    Files are ordered by natural sort of their names.
    """
    path = Path(path)
    if not path.is_dir():
        raise InputNotFound(f"no such directory: {path}")
    meta_path = path / CSV_METADATA_NAME
    if not meta_path.is_file():
        raise InputNotFound(f"{path}: missing {CSV_METADATA_NAME}")
    try:
        meta = json.loads(meta_path.read_text())
        dx, dy, dt = float(meta["dx"]), float(meta["dy"]), float(meta["dt"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{meta_path}: needs numeric dx, dy, dt") from exc
    origin = (float(meta.get("x0", 0.0)), float(meta.get("y0", 0.0)))
    files = sorted(path.glob("*.csv"), key=_natural_key)
    if not files:
        raise InputNotFound(f"{path}: no CSV snapshots")
    frames = []
    for f in files:
        try:
            frames.append(np.loadtxt(f, delimiter=",", ndmin=2, dtype=np.float64))
        except ValueError as exc:
            raise FormatError(f"{f}: {exc}") from exc
    if len({fr.shape for fr in frames}) != 1:
        raise FormatError(f"{path}: snapshots have inconsistent shapes")
    values = np.stack(frames, axis=2)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput(f"{path}: snapshots contain NaN or Inf")
    if values.shape[2] < 3:
        raise InsufficientSnapshots(f"{path}: need at least 3 snapshots, got {values.shape[2]}")
    return ElevationField(values, dx=dx, dy=dy, dt=dt, origin=origin)


def write_csv_dir(field: ElevationField, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    width = len(str(field.nt - 1))
    for k in range(field.nt):
        np.savetxt(path / f"snapshot_{k:0{width}d}.csv", field.values[:, :, k], delimiter=",", fmt="%.17g")
    meta = {"dx": field.dx, "dy": field.dy, "dt": field.dt, "x0": field.origin[0], "y0": field.origin[1]}
    (path / CSV_METADATA_NAME).write_text(json.dumps(meta, indent=2) + "\n")


def read_field(path) -> ElevationField:
    """Load a BEDGRID file or a CSV snapshot directory."""
    path = Path(path)
    if path.is_dir():
        return read_csv_dir(path)
    if not path.exists():
        raise InputNotFound(f"no such file or directory: {path}")
    return read_bedgrid(path)
