"""Periodic cell-list index for fixed-radius neighbour queries.

Neighbourhoods are closed balls (``distance <= r_c``) under the minimum-image
convention and always contain the query particle itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import interaction_volume


@dataclass(frozen=True)
class CellIndex:
    """Particles binned into a regular grid of cells with side ``cell_size >= r_c``.

    ``order`` lists particle ids sorted by cell; the ids of cell ``c`` are
    ``order[cell_start[c]:cell_start[c + 1]]``.
    """

    box_length: float
    cell_size: float
    grid_dims: tuple[int, ...]
    cell_coords: np.ndarray
    order: np.ndarray
    cell_start: np.ndarray
    offsets: np.ndarray

    @property
    def n_particles(self) -> int:
        return int(self.order.size)

    @property
    def cells(self) -> dict[int, np.ndarray]:
        """Mapping of occupied flat cell id to its particle ids."""
        out = {}
        for c in np.flatnonzero(np.diff(self.cell_start)):
            out[int(c)] = self.order[self.cell_start[c] : self.cell_start[c + 1]]
        return out


def build(positions, L: float, r_c: float) -> CellIndex:
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2:
        raise ValueError("positions must have shape (N, d)")
    if r_c > L / 2:
        raise ValueError(f"r_c={r_c} exceeds L/2={L / 2}; minimum image would be ambiguous")
    if not r_c > 0:
        raise ValueError(f"r_c must be > 0, got {r_c}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions contain non-finite coordinates")
    if pos.size and (pos.min() < 0 or pos.max() >= L):
        raise ValueError(f"positions must lie in [0, {L})")

    d = pos.shape[1]
    n_side = max(1, int(math.floor(L / r_c)))
    cell_size = L / n_side
    dims = (n_side,) * d
    coords = np.minimum((pos / cell_size).astype(np.int64), n_side - 1)
    flat = np.ravel_multi_index(coords.T, dims) if len(pos) else np.zeros(0, np.int64)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n_side**d)
    cell_start = np.concatenate(([0], np.cumsum(counts)))

    # with fewer than three cells per side, -1 and +1 can name the same cell
    per_axis = sorted({o % n_side for o in (-1, 0, 1)})
    offsets = np.array(list(itertools.product(per_axis, repeat=d)), dtype=np.int64)
    return CellIndex(
        box_length=float(L),
        cell_size=cell_size,
        grid_dims=dims,
        cell_coords=coords,
        order=order,
        cell_start=cell_start,
        offsets=offsets,
    )


def minimum_image(dr: np.ndarray, L: float) -> np.ndarray:
    return dr - L * np.round(dr / L)


def pairs(idx: CellIndex, positions, r_c: float, ids=None) -> tuple[np.ndarray, np.ndarray]:
    """All ``(i, j)`` with ``i`` in ``ids`` and ``|r_i - r_j| <= r_c``, self pairs included.

    For every ``i`` the partners appear in a fixed order (cell offset, then
    cell slot) that does not depend on which other ids are queried, so sums
    over partners are reproducible bit-for-bit under any chunking of ``ids``.
    """
    pos = np.asarray(positions, dtype=float)
    if ids is None:
        ids = np.arange(idx.n_particles)
    ids = np.asarray(ids, dtype=np.int64)
    dims = np.array(idx.grid_dims)
    base = idx.cell_coords[ids]
    ii, jj = [], []
    for off in idx.offsets:
        cell = np.ravel_multi_index(((base + off) % dims).T, idx.grid_dims)
        start = idx.cell_start[cell]
        cnt = idx.cell_start[cell + 1] - start
        total = int(cnt.sum())
        if total == 0:
            continue
        first = np.repeat(np.cumsum(cnt) - cnt, cnt)
        slot = np.repeat(start, cnt) + np.arange(total) - first
        ii.append(np.repeat(ids, cnt))
        jj.append(idx.order[slot])
    if not ii:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    # stable sort groups partners by i without disturbing their relative order
    perm = np.argsort(i, kind="stable")
    i, j = i[perm], j[perm]
    dr = minimum_image(pos[j] - pos[i], idx.box_length)
    keep = np.einsum("ij,ij->i", dr, dr) <= r_c * r_c
    return i[keep], j[keep]


def neighbors(idx: CellIndex, positions, j: int, r_c: float) -> np.ndarray:
    _, partners = pairs(idx, positions, r_c, ids=[j])
    return np.sort(partners)


def local_mean_spin(idx: CellIndex, positions, spins, j: int, r_c: float) -> np.ndarray:
    nb = neighbors(idx, positions, j, r_c)
    return np.asarray(spins, dtype=float)[nb].mean(axis=0)


def local_mean_spins(idx: CellIndex, positions, spins, r_c: float, ids=None):
    """Neighbourhood mean spin and neighbour count (self included) for each id in ``ids``.

    Returns ``(mean, count)`` with ``mean`` of shape ``(len(ids), 3)``.
    """
    spins = np.asarray(spins, dtype=float)
    if ids is None:
        ids = np.arange(idx.n_particles)
    ids = np.asarray(ids, dtype=np.int64)
    i, j = pairs(idx, positions, r_c, ids=ids)
    k = ids.size
    lookup = np.zeros(idx.n_particles, dtype=np.int64)
    lookup[ids] = np.arange(k)
    row = lookup[i]
    count = np.bincount(row, minlength=k)
    total = np.empty((k, spins.shape[1]))
    for c in range(spins.shape[1]):
        total[:, c] = np.bincount(row, weights=spins[j, c], minlength=k)
    return total / count[:, None], count


def expected_neighbor_count(rho: float, r_c: float, d: int) -> float:
    """Mean number of other particles inside a ball of radius ``r_c`` at density ``rho``."""
    if not (rho > 0 and r_c > 0):
        raise ValueError("rho and r_c must be positive")
    return interaction_volume(r_c, d) * rho


@numba.njit(parallel=True, cache=True)
def _mean_spin_kernel(pos, spins, coords, order, cell_start, offsets, dims, L, r_c):
    n, d = pos.shape
    k = spins.shape[1]
    total = np.zeros((n, k))
    count = np.zeros(n, dtype=np.int64)
    rc2 = r_c * r_c
    for i in numba.prange(n):
        for o in range(offsets.shape[0]):
            cell = 0
            for a in range(d):
                cell = cell * dims[a] + (coords[i, a] + offsets[o, a]) % dims[a]
            for s in range(cell_start[cell], cell_start[cell + 1]):
                j = order[s]
                d2 = 0.0
                for a in range(d):
                    dr = pos[j, a] - pos[i, a]
                    dr -= L * np.round(dr / L)
                    d2 += dr * dr
                if d2 <= rc2:
                    count[i] += 1
                    for c in range(k):
                        total[i, c] += spins[j, c]
    for i in range(n):
        for c in range(k):
            total[i, c] /= count[i]
    return total, count


def local_mean_spins_fast(idx: CellIndex, positions, spins, r_c: float):
    """Compiled equivalent of :func:`local_mean_spins` over all particles.

    Each particle's partner sum runs serially in the same order as
    :func:`pairs`, so the result does not depend on the thread count.
    """
    return _mean_spin_kernel(
        np.ascontiguousarray(positions, dtype=float),
        np.ascontiguousarray(spins, dtype=float),
        idx.cell_coords,
        idx.order,
        idx.cell_start,
        idx.offsets,
        np.array(idx.grid_dims, dtype=np.int64),
        idx.box_length,
        float(r_c),
    )
