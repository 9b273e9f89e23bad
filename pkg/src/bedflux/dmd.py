"""Exact dynamic mode decomposition of snapshot pairs.

The fit follows the usual SVD route: ``H1 = U S V*``, reduced operator
``U_r* H2 V_r S_r^-1``, its eigendecomposition, and exact modes
``H2 V_r S_r^-1 W``. Continuous-time eigenvalues use the principal branch of
the logarithm, so eigenvalues near the negative real axis map to
``|Im omega| <= pi / dt``; no unwrapping is attempted.
"""

from __future__ import annotations

import json
import struct
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CorruptPayload,
    FormatVersionMismatch,
    InputNotFound,
    NonUniformTimesWarning,
    RankDeficient,
    ShapeMismatch,
    ZeroEigenvalueWarning,
)
from .ingest import (
    VECTORIZATION_ORDER,
    ElevationField,
    build_snapshot_matrix,
    split_pair,
    train_count,
    unvectorize,
)

DEFAULT_SVD_RTOL = 1e-12
# |lambda| below this fraction of max |lambda| counts as a zero eigenvalue
STATIC_LOG_ATOL = 1e-12
ZERO_EIG_RTOL = 1e-13

AMPLITUDE_METHODS = ("first", "lstsq")


@dataclass(frozen=True, eq=False)
class DmdModel:
    modes: np.ndarray  # (mn, r) complex
    discrete_eigs: np.ndarray  # (r,) complex
    continuous_eigs: np.ndarray  # (r,) complex, NaN for excluded (zero) eigenvalues
    amplitudes: np.ndarray  # (r,) complex
    mean_field: np.ndarray  # (mn,) real
    dt: float
    grid_shape: tuple[int, int]
    spacings: tuple[float, float] = (1.0, 1.0)
    origin: tuple[float, float] = (0.0, 0.0)
    singular_values: np.ndarray | None = None
    n_train: int = 0
    amplitude_method: str = "first"

    @property
    def rank(self) -> int:
        return self.discrete_eigs.shape[0]

    @property
    def excluded(self) -> np.ndarray:
        """Mask of modes with a zero discrete eigenvalue."""
        return ~np.isfinite(self.continuous_eigs)

    def mode_field(self, k: int) -> np.ndarray:
        """Mode ``k`` un-vectorized onto the ``(nx, ny)`` grid."""
        m, n = self.grid_shape
        return unvectorize(self.modes[:, k], m, n)

    def mean_grid(self) -> np.ndarray:
        m, n = self.grid_shape
        return unvectorize(self.mean_field, m, n)


def _thin_svd(H1: np.ndarray):
    # LAPACK gesdd on the tall matrix itself; never form the Gram matrix.
    return np.linalg.svd(H1, full_matrices=False)


def _amplitudes_lstsq(Phi, lam, H1):
    """Amplitudes minimizing ``||H1 - Phi diag(a) Vand||_F`` over all training columns."""
    q = H1.shape[1]
    vand = lam[:, None] ** np.arange(q)[None, :]
    P = (Phi.conj().T @ Phi) * (vand @ vand.conj().T).conj()
    rhs = np.diag(vand @ H1.conj().T @ Phi).conj()
    return np.linalg.solve(P, rhs)


def compute_dmd(
    H1,
    H2,
    dt: float,
    rank: int | None = None,
    mean_field=None,
    grid_shape=None,
    spacings=(1.0, 1.0),
    origin=(0.0, 0.0),
    svd_rtol: float = DEFAULT_SVD_RTOL,
    amplitude_method: str = "first",
) -> DmdModel:
    """Fit an exact DMD model to the snapshot pair ``H2 ~ A H1``.

    Parameters
    ----------
    H1, H2 : ndarray, shape (mn, q)
        Snapshot matrix and its one-step time shift.
    dt : float
        Sampling interval in seconds.
    rank : int or None
        Truncation rank. ``None`` keeps every singular value above
        ``svd_rtol * s_max`` (full numerical rank).
    mean_field : ndarray, optional
        Temporal mean removed from the snapshots; added back on reconstruction.
    grid_shape : (m, n), optional
        Source grid; defaults to ``(mn, 1)``.
    amplitude_method : {"first", "lstsq"}
        ``"first"`` projects the first snapshot with the mode pseudo-inverse.
        ``"lstsq"`` fits amplitudes to all training snapshots at once
        (an extension, meant for robustness studies).

    Returns
    -------
    DmdModel
        Modes ordered by descending ``|alpha_k| * ||phi_k||``.
    """
    H1 = np.asarray(H1, dtype=np.float64)
    H2 = np.asarray(H2, dtype=np.float64)
    if H1.ndim != 2 or H1.shape != H2.shape:
        raise ShapeMismatch(f"H1 {H1.shape} and H2 {H2.shape} must be equal 2-D shapes")
    mn, q = H1.shape
    dt = float(dt)
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    if amplitude_method not in AMPLITUDE_METHODS:
        raise ConfigError(f"unknown amplitude method {amplitude_method!r}")
    if grid_shape is None:
        grid_shape = (mn, 1)
    grid_shape = (int(grid_shape[0]), int(grid_shape[1]))
    if grid_shape[0] * grid_shape[1] != mn:
        raise ShapeMismatch(f"grid {grid_shape} does not match {mn} rows")
    mean_field = np.zeros(mn) if mean_field is None else np.asarray(mean_field, dtype=np.float64)
    if mean_field.shape != (mn,):
        raise ShapeMismatch(f"mean field has shape {mean_field.shape}, expected ({mn},)")

    U, s, Vh = _thin_svd(H1)
    numerical_rank = int(np.count_nonzero(s > svd_rtol * s[0])) if s.size and s[0] > 0 else 0
    if rank is None:
        r = numerical_rank
    else:
        r = int(rank)
        if r < 1 or r > q:
            raise ConfigError(f"rank must lie in [1, {q}], got {r}")
        if r > numerical_rank:
            raise RankDeficient(
                f"requested rank {r} exceeds the {numerical_rank} singular values above "
                f"{svd_rtol:g} * s_max"
            )

    Ur = U[:, :r]
    Vr = Vh[:r].conj().T
    B = (H2 @ Vr) / s[:r]
    Atilde = Ur.conj().T @ B
    lam, W = np.linalg.eig(Atilde)
    Phi = B @ W

    if r:
        zero = np.abs(lam) <= ZERO_EIG_RTOL * np.abs(lam).max()
    else:
        zero = np.zeros(0, dtype=bool)
    if zero.any():
        warnings.warn(
            f"{int(zero.sum())} zero eigenvalue(s); those modes are excluded from continuous-time analysis",
            ZeroEigenvalueWarning,
            stacklevel=2,
        )
    omega = np.full(r, np.nan + 1j * np.nan, dtype=np.complex128)
    log_lam = np.log(lam[~zero])
    # eigenvalues within round-off of 1 are static: snap so their flux is exactly zero
    log_lam[np.abs(log_lam) <= STATIC_LOG_ATOL] = 0.0
    omega[~zero] = log_lam / dt

    if r == 0:
        alpha = np.zeros(0, dtype=np.complex128)
    elif amplitude_method == "first":
        alpha = np.linalg.lstsq(Phi, H1[:, 0].astype(np.complex128), rcond=None)[0]
    else:
        alpha = _amplitudes_lstsq(Phi, lam, H1)

    weight = np.abs(alpha) * np.linalg.norm(Phi, axis=0)
    if r:
        # rounding keeps conjugate partners tied, then positive imaginary part first
        key = np.round(weight / max(weight.max(), np.finfo(float).tiny), 12)
        order = np.lexsort((-lam.imag, -key))
    else:
        order = np.arange(0)

    return DmdModel(
        modes=np.ascontiguousarray(Phi[:, order]),
        discrete_eigs=lam[order],
        continuous_eigs=omega[order],
        amplitudes=alpha[order],
        mean_field=mean_field.copy(),
        dt=dt,
        grid_shape=grid_shape,
        spacings=(float(spacings[0]), float(spacings[1])),
        origin=(float(origin[0]), float(origin[1])),
        singular_values=s.copy(),
        n_train=q,
        amplitude_method=amplitude_method,
    )


def decompose(
    field: ElevationField,
    train_fraction: float = 0.98,
    rank: int | None = None,
    remove_mean: bool = True,
    svd_rtol: float = DEFAULT_SVD_RTOL,
    amplitude_method: str = "first",
) -> DmdModel:
    """Snapshot matrix, training split and DMD fit in one call."""
    H = build_snapshot_matrix(field, remove_mean=remove_mean)
    q = train_count(H.p, train_fraction)
    H1, H2 = split_pair(H, q)
    return compute_dmd(
        H1,
        H2,
        dt=field.dt,
        rank=rank,
        mean_field=H.mean_field,
        grid_shape=(H.m, H.n),
        spacings=(field.dx, field.dy),
        origin=field.origin,
        svd_rtol=svd_rtol,
        amplitude_method=amplitude_method,
    )


def temporal_coefficients(model: DmdModel, t: float) -> np.ndarray:
    """``alpha_k * exp(omega_k t)``; zero-eigenvalue modes count only at ``t == 0``."""
    t = float(t)
    coef = np.zeros(model.rank, dtype=np.complex128)
    keep = ~model.excluded
    coef[keep] = model.amplitudes[keep] * np.exp(model.continuous_eigs[keep] * t)
    if t == 0.0:
        coef[~keep] = model.amplitudes[~keep]
    return coef


def evolve(model: DmdModel, t: float) -> np.ndarray:
    """Complex fluctuation state ``Phi (exp(Omega t) alpha)`` as a vector (mean not added)."""
    return model.modes @ temporal_coefficients(model, t)


def reconstruct(model: DmdModel, t: float) -> np.ndarray:
    """Reconstructed bed elevation at time ``t`` (seconds after the first snapshot)."""
    h = model.mean_field + evolve(model, t).real
    m, n = model.grid_shape
    return unvectorize(h, m, n)


def reconstruct_series(model: DmdModel, times) -> ElevationField:
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if times.ndim != 1 or times.size == 0:
        raise ConfigError("times must be a non-empty 1-D sequence")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ConfigError("times must be strictly ascending")
    attrs = {"times": times.tolist(), "nonuniform_times": False}
    dt = model.dt
    if times.size > 1:
        steps = np.diff(times)
        if np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            dt = float(steps[0])
        else:
            attrs["nonuniform_times"] = True
            warnings.warn("reconstruction times are not uniform; dt set to the model's", NonUniformTimesWarning, stacklevel=2)
    m, n = model.grid_shape
    coefs = np.stack([temporal_coefficients(model, t) for t in times], axis=1)
    flat = model.mean_field[:, None] + (model.modes @ coefs).real
    values = flat.reshape(m, n, times.size)
    return ElevationField(values, dx=model.spacings[0], dy=model.spacings[1], dt=dt, origin=model.origin, attrs=attrs)


# -- persistence -------------------------------------------------------------

MODEL_MAGIC = b"DMDMODEL v"
MODEL_VERSION = 1
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")


def _planes(model: DmdModel):
    sv = model.singular_values if model.singular_values is not None else np.zeros(0)
    return [
        ("modes_re", model.modes.real),
        ("modes_im", model.modes.imag),
        ("discrete_eigs_re", model.discrete_eigs.real),
        ("discrete_eigs_im", model.discrete_eigs.imag),
        ("continuous_eigs_re", model.continuous_eigs.real),
        ("continuous_eigs_im", model.continuous_eigs.imag),
        ("amplitudes_re", model.amplitudes.real),
        ("amplitudes_im", model.amplitudes.imag),
        ("mean_field", model.mean_field),
        ("singular_values", sv),
    ]


def save_model(model: DmdModel, path) -> None:
    planes = _planes(model)
    meta = {
        "format_version": MODEL_VERSION,
        "vectorization_order": VECTORIZATION_ORDER,
        "grid_shape": list(model.grid_shape),
        "spacings": list(model.spacings),
        "origin": list(model.origin),
        "dt": model.dt,
        "rank": model.rank,
        "n_train": model.n_train,
        "amplitude_method": model.amplitude_method,
        "has_singular_values": model.singular_values is not None,
        "arrays": [{"name": name, "shape": list(np.shape(a))} for name, a in planes],
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks = [MODEL_MAGIC + str(MODEL_VERSION).encode("ascii") + b"\n"]
    chunks += [_U64.pack(len(meta_bytes)), meta_bytes, _U32.pack(zlib.crc32(meta_bytes))]
    for _, arr in planes:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        chunks += [_U64.pack(len(raw)), raw, _U32.pack(zlib.crc32(raw))]
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptPayload(f"{self.path}: truncated model file")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def block(self) -> bytes:
        (length,) = _U64.unpack(self.take(_U64.size))
        data = self.take(length)
        (crc,) = _U32.unpack(self.take(_U32.size))
        if zlib.crc32(data) != crc:
            raise CorruptPayload(f"{self.path}: checksum mismatch")
        return data


def load_model(path) -> DmdModel:
    path = Path(path)
    if not path.is_file():
        raise InputNotFound(f"no such model file: {path}")
    buf = path.read_bytes()
    end = buf.find(b"\n", 0, 64)
    if end < 0 or not buf.startswith(MODEL_MAGIC):
        raise CorruptPayload(f"{path}: not a DMDMODEL file")
    version_text = buf[len(MODEL_MAGIC) : end]
    if not version_text.isdigit():
        raise CorruptPayload(f"{path}: bad version field")
    if int(version_text) != MODEL_VERSION:
        raise FormatVersionMismatch(f"{path}: DMDMODEL v{int(version_text)}, expected v{MODEL_VERSION}")
    rd = _Reader(buf, path)
    rd.pos = end + 1
    try:
        meta = json.loads(rd.block().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"{path}: unreadable metadata") from exc
    if meta.get("format_version") != MODEL_VERSION:
        raise FormatVersionMismatch(f"{path}: metadata version {meta.get('format_version')}")
    arrays = {}
    try:
        for spec in meta["arrays"]:
            shape = tuple(spec["shape"])
            raw = rd.block()
            if len(raw) != 8 * int(np.prod(shape, dtype=np.int64)):
                raise CorruptPayload(f"{path}: array {spec['name']} has wrong length")
            arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    except (KeyError, TypeError) as exc:
        raise CorruptPayload(f"{path}: malformed metadata") from exc
    if rd.pos != len(buf):
        raise CorruptPayload(f"{path}: trailing bytes after payload")

    def cplx(name):
        out = np.empty(arrays[name + "_re"].shape, dtype=np.complex128)
        out.real = arrays[name + "_re"]
        out.imag = arrays[name + "_im"]
        return out

    return DmdModel(
        modes=cplx("modes"),
        discrete_eigs=cplx("discrete_eigs"),
        continuous_eigs=cplx("continuous_eigs"),
        amplitudes=cplx("amplitudes"),
        mean_field=arrays["mean_field"],
        dt=float(meta["dt"]),
        grid_shape=tuple(meta["grid_shape"]),
        spacings=tuple(meta["spacings"]),
        origin=tuple(meta["origin"]),
        singular_values=arrays["singular_values"] if meta.get("has_singular_values") else None,
        n_train=int(meta["n_train"]),
        amplitude_method=meta["amplitude_method"],
    )
