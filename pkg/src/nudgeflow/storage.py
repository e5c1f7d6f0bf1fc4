"""Binary snapshot format, trajectory store, and atomic file writes.

Snapshot layout (little-endian): header = magic "NNSF", version u32,
L f64, n u32, lambda_cut f64; body = the (2, n, n) complex128
coefficient array, component-major, each component row-major.

A trajectory is a directory of snapshots named by step index plus an
index CSV with columns step,time,file.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from collections.abc import Iterable

import numpy as np

from .fields import GalerkinCutoff, SpectralField, TorusGrid

__all__ = [
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
    "SnapshotFormatError",
    "save_snapshot",
    "load_snapshot",
    "Trajectory",
    "save_trajectory",
    "load_trajectory",
    "atomic_write_bytes",
    "atomic_write_text",
]

SNAPSHOT_MAGIC = b"NNSF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIdId")
INDEX_NAME = "index.csv"
# Float format guaranteeing exact double round-trip in text outputs.
FLOAT_FMT = "%.17g"


class SnapshotFormatError(ValueError):
    """A snapshot file is malformed or has an unsupported version."""


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write bytes via a temp file + rename so readers never see partials."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_snapshot(
    path: str, field: SpectralField, cutoff: GalerkinCutoff | None = None
) -> None:
    """Serialize a field (and the cutoff it was computed under) to one file."""
    lam = cutoff.lambda_cut if cutoff is not None else field.grid.band_cutoff().lambda_cut
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, float(field.grid.L), field.grid.n, float(lam)
    )
    body = np.ascontiguousarray(field.coeffs).astype("<c16").tobytes()
    atomic_write_bytes(path, header + body)


def load_snapshot(path: str) -> tuple[SpectralField, GalerkinCutoff]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, L, n, lam = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    grid = TorusGrid(L=L, n=int(n))
    expected = _HEADER.size + 2 * n * n * 16
    if len(raw) != expected:
        raise SnapshotFormatError(
            f"{path}: expected {expected} bytes for n={n}, got {len(raw)}"
        )
    c = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(2, n, n)
    field = SpectralField.from_coeffs(grid, c.astype(np.complex128))
    return field, GalerkinCutoff(lam)


class Trajectory:
    """Time-ordered snapshots with exact lookup plus cubic time interpolation.

    Queries at stored times return the stored field; between samples a
    4-point Lagrange polynomial in time is used (linear combinations
    preserve the field invariants exactly).  interpolated_queries counts
    how often interpolation fired so callers can report it.
    """

    _EXACT_RTOL = 1e-9

    def __init__(self, grid: TorusGrid) -> None:
        self.grid = grid
        self.steps: list[int] = []
        self._times: list[float] = []
        self.fields: list[SpectralField] = []
        self.interpolated_queries = 0
        self.exact_queries = 0
        self._times_arr: np.ndarray | None = None

    def append(self, step: int, t: float, field: SpectralField) -> None:
        if field.grid != self.grid:
            raise ValueError("snapshot grid differs from trajectory grid")
        if self._times and t <= self._times[-1]:
            raise ValueError(
                f"snapshot times must increase: got {t} after {self._times[-1]}"
            )
        self.steps.append(int(step))
        self._times.append(float(t))
        self.fields.append(field)
        self._times_arr = None

    @property
    def times(self) -> np.ndarray:
        if self._times_arr is None:
            self._times_arr = np.asarray(self._times, dtype=float)
        return self._times_arr

    def __len__(self) -> int:
        return len(self._times)

    @property
    def t_end(self) -> float:
        return self._times[-1]

    def _exact_index(self, t: float) -> int | None:
        times = self.times
        i = int(np.searchsorted(times, t))
        tol = self._EXACT_RTOL * (1.0 + abs(t))
        for j in (i - 1, i):
            if 0 <= j < len(times) and abs(times[j] - t) <= tol:
                return j
        return None

    def at(self, t: float) -> SpectralField:
        """Field at time t: stored snapshot if t matches, else interpolated."""
        if not self._times:
            raise ValueError("empty trajectory")
        j = self._exact_index(t)
        if j is not None:
            self.exact_queries += 1
            return self.fields[j]
        times = self.times
        tol = self._EXACT_RTOL * (1.0 + abs(t))
        if t < times[0] - tol or t > times[-1] + tol:
            raise ValueError(
                f"time {t} outside stored range [{times[0]}, {times[-1]}]"
            )
        if len(times) < 2:
            raise ValueError("cannot interpolate a single-snapshot trajectory")
        self.interpolated_queries += 1
        width = min(4, len(times))
        i = int(np.searchsorted(times, t, side="right")) - 1
        lo = int(np.clip(i - (width - 1) // 2, 0, len(times) - width))
        xs = times[lo : lo + width]
        out = None
        for m in range(width):
            w = 1.0
            for l in range(width):
                if l != m:
                    w *= (t - xs[l]) / (xs[m] - xs[l])
            term = self.fields[lo + m] * w
            out = term if out is None else out + term
        return out


def _snapshot_name(step: int) -> str:
    return f"step_{step:08d}.nnsf"


def save_trajectory(
    traj: Trajectory, directory: str, cutoff: GalerkinCutoff | None = None
) -> None:
    """Write all snapshots plus the index CSV (index written last)."""
    os.makedirs(directory, exist_ok=True)
    rows = []
    for step, t, field in zip(traj.steps, traj.times, traj.fields):
        name = _snapshot_name(step)
        save_snapshot(os.path.join(directory, name), field, cutoff)
        rows.append((step, t, name))
    lines = ["step,time,file"]
    for step, t, name in rows:
        lines.append(f"{step},{FLOAT_FMT % t},{name}")
    atomic_write_text(os.path.join(directory, INDEX_NAME), "\n".join(lines) + "\n")


def load_trajectory(directory: str) -> tuple[Trajectory, GalerkinCutoff]:
    index_path = os.path.join(directory, INDEX_NAME)
    with open(index_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["step", "time", "file"]:
            raise SnapshotFormatError(
                f"{index_path}: expected header step,time,file, got {reader.fieldnames}"
            )
        rows = [(int(r["step"]), float(r["time"]), r["file"]) for r in reader]
    if not rows:
        raise SnapshotFormatError(f"{index_path}: empty trajectory index")
    traj: Trajectory | None = None
    cut: GalerkinCutoff | None = None
    for step, t, name in rows:
        field, c = load_snapshot(os.path.join(directory, name))
        if traj is None:
            traj = Trajectory(field.grid)
            cut = c
        traj.append(step, t, field)
    assert traj is not None and cut is not None
    return traj, cut


def series_to_csv(header: Iterable[str], rows: Iterable[Iterable[float]]) -> str:
    """Render a numeric table with full-precision floats, ints kept as ints."""
    out = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(FLOAT_FMT % float(v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"
