"""Binary snapshots, CSV series and gnuplot scripts.

Particle snapshot (little-endian)::

    magic  4s   b"QVM1"
    d      u32  spatial dimension
    N      u64  particle count
    L      f64  box length
    time   f64  simulation time
    step   u64  completed steps
    data   f64  N rows of (r_1..r_d, S_x, S_y, S_z)

Field snapshot (little-endian)::

    magic  4s   b"QVH1"
    ndim   u32  grid dimension
    ncomp  u32  velocity components
    dims   u32 x ndim
    dx     f64
    time   f64
    data   f64  density grid, then each velocity component grid, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import ParticleState

PARTICLE_MAGIC = b"QVM1"
FIELD_MAGIC = b"QVH1"
_PARTICLE_HEADER = struct.Struct("<4sIQddQ")


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path, state: ParticleState) -> None:
    n, d = state.positions.shape
    header = _PARTICLE_HEADER.pack(PARTICLE_MAGIC, d, n, state.L, state.time, state.step_count)
    data = np.hstack([state.positions, state.spins]).astype("<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def _read_exact(fh, size: int, what: str) -> bytes:
    buf = fh.read(size)
    if len(buf) != size:
        raise SnapshotFormatError(f"truncated snapshot: expected {size} bytes of {what}, got {len(buf)}")
    return buf


def read_snapshot(path) -> ParticleState:
    with open(path, "rb") as fh:
        head = fh.read(_PARTICLE_HEADER.size)
        if head[:4] != PARTICLE_MAGIC:
            raise SnapshotFormatError(f"unrecognized snapshot format in {path}")
        if len(head) != _PARTICLE_HEADER.size:
            raise SnapshotFormatError("truncated snapshot header")
        _, d, n, L, time, step = _PARTICLE_HEADER.unpack(head)
        raw = _read_exact(fh, n * (d + 3) * 8, "particle data")
        if fh.read(1):
            raise SnapshotFormatError("trailing bytes after particle data")
    data = np.frombuffer(raw, dtype="<f8").reshape(n, d + 3).astype(float)
    return ParticleState(
        positions=np.ascontiguousarray(data[:, :d]),
        spins=np.ascontiguousarray(data[:, d:]),
        L=L,
        time=time,
        step_count=step,
    )


@dataclass
class FieldSnapshot:
    rho: np.ndarray
    V: np.ndarray
    dx: float
    time: float


def write_field_snapshot(path, rho: np.ndarray, V: np.ndarray, dx: float, time: float) -> None:
    rho = np.asarray(rho, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape[1:] != rho.shape:
        raise ValueError("velocity components must match the density grid")
    header = struct.pack("<4sII", FIELD_MAGIC, rho.ndim, V.shape[0])
    header += struct.pack(f"<{rho.ndim}I", *rho.shape)
    header += struct.pack("<dd", dx, time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rho.astype("<f8").tobytes(order="C"))
        fh.write(V.astype("<f8").tobytes(order="C"))


def read_field_snapshot(path) -> FieldSnapshot:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if head[:4] != FIELD_MAGIC:
            raise SnapshotFormatError(f"unrecognized snapshot format in {path}")
        if len(head) != 12:
            raise SnapshotFormatError("truncated snapshot header")
        _, ndim, ncomp = struct.unpack("<4sII", head)
        dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "grid dims"))
        dx, time = struct.unpack("<dd", _read_exact(fh, 16, "grid spacing"))
        size = int(np.prod(dims))
        rho = np.frombuffer(_read_exact(fh, 8 * size, "density"), dtype="<f8").reshape(dims)
        V = np.frombuffer(_read_exact(fh, 8 * size * ncomp, "velocity"), dtype="<f8").reshape(ncomp, *dims)
    return FieldSnapshot(rho.astype(float), V.astype(float), dx, time)


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_series(path, header, rows) -> int:
    """Write a comma-separated file with a header row; returns the number of data rows."""
    count = 0
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
            count += 1
    return count


def read_series(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        body = fh.read()
    if not body.strip():
        return header, np.zeros((0, len(header)))
    data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    return header, data


def write_gnuplot(path, csv_name: str, x: str, ys, title: str = "", style: str = "lines", extra: str = "") -> None:
    """Plot script for a CSV written by :func:`write_series`."""
    Path(path).write_text(
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        f"set title '{title}'\n"
        f"set xlabel '{x}'\n"
        + extra
        + "plot "
        + ", \\\n     ".join(f"'{csv_name}' using '{x}':'{y}' with {style}" for y in ys)
        + "\n"
    )
