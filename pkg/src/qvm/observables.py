"""Order parameter, density profiles, band detection and phase-diagram sweeps."""

from __future__ import annotations

import hashlib
import math
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import neighbors
from .dynamics import IntegratorConfig, ParticleState, run
from .model import ModelParams

log = logging.getLogger(__name__)


def polar_order(spins) -> float:
    """Magnitude of the population-mean spin."""
    spins = np.asarray(spins, dtype=float)
    if spins.shape[0] == 0:
        raise ValueError("polar order of an empty population is undefined")
    return float(np.linalg.norm(spins.mean(axis=0)))


def time_averaged_order(series, transient: int = 0) -> float:
    window = np.asarray(series, dtype=float)[transient:]
    if window.size == 0:
        raise ValueError("no measurements after the transient")
    return float(window.mean())


class OrderRecorder:
    """Recorder collecting the polar order after every call."""

    def __init__(self):
        self.values: list[float] = []

    def __call__(self, state: ParticleState) -> None:
        self.values.append(polar_order(state.spins))


class SnapshotRecorder:
    """Keeps a copy of every ``every``-th state passed to it."""

    def __init__(self, every: int = 1):
        self.every = every
        self.states: list[ParticleState] = []
        self._calls = 0

    def __call__(self, state: ParticleState) -> None:
        if self._calls % self.every == 0:
            self.states.append(state.copy())
        self._calls += 1


@dataclass
class DensityProfile:
    bin_centers: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    direction: np.ndarray
    L: float

    @property
    def bin_width(self) -> float:
        return self.L / self.density.size


def density_profile(positions, direction, n_bins: int, L: float) -> DensityProfile:
    """Histogram of ``r . direction mod L`` in density units (count per slab volume)."""
    if n_bins < 4:
        raise ValueError("n_bins must be >= 4")
    pos = np.asarray(positions, dtype=float)
    e = np.asarray(direction, dtype=float)[: pos.shape[1]]
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ValueError("direction must be nonzero")
    e = e / norm
    s = np.mod(pos @ e, L)
    b = np.minimum((s / (L / n_bins)).astype(np.int64), n_bins - 1)
    counts = np.bincount(b, minlength=n_bins)
    slab = L ** pos.shape[1] / n_bins
    centers = (np.arange(n_bins) + 0.5) * (L / n_bins)
    return DensityProfile(centers, counts / slab, counts, e, float(L))


@dataclass
class BandReport:
    direction: np.ndarray
    profile: np.ndarray
    bands: list[tuple[float, float, float]] = field(default_factory=list)
    contrast: float = 1.0
    period: float = 1.0

    @property
    def lengths(self) -> list[float]:
        """Sorted band extents along the direction."""
        return sorted(((end - start) % self.period) or self.period for start, end, _ in self.bands)


def detect_bands(profile: DensityProfile, threshold_factor: float = 1.5) -> BandReport:
    """Circular runs of bins denser than ``threshold_factor`` times the mean.

    Each band is ``(start, end, mean_density)`` in coordinates along the
    direction; a band crossing the periodic seam has ``end < start``.
    """
    if not threshold_factor > 1:
        raise ValueError("threshold_factor must be > 1")
    rho = np.asarray(profile.density, dtype=float)
    n = rho.size
    width = profile.L / n
    mean = math.fsum(rho) / n  # exact sum: independent of bin order
    contrast = float(rho.max() / mean) if mean > 0 else 1.0
    above = rho > threshold_factor * mean
    bands = []
    if above.all():
        bands.append((0.0, profile.L, float(mean)))
    elif above.any():
        # walk the ring starting just after a below-threshold bin
        first = int(np.flatnonzero(~above)[0])
        run_start = None
        for k in range(1, n + 1):
            b = (first + k) % n
            if above[b] and run_start is None:
                run_start = b
            if run_start is not None and (not above[b] or k == n):
                stop = b  # exclusive
                idx = np.arange(run_start, run_start + (stop - run_start) % n) % n
                bands.append((run_start * width, stop * width, float(rho[idx].mean())))
                run_start = None
        bands.sort(key=lambda t: t[0])
    return BandReport(
        direction=profile.direction,
        profile=rho,
        bands=bands,
        contrast=contrast,
        period=profile.L,
    )


def band_report(state: ParticleState, n_bins: int = 64, threshold_factor: float = 1.5) -> BandReport:
    """Bands along the global order direction of ``state``."""
    direction = state.spins.mean(axis=0)[: state.dims]
    if np.linalg.norm(direction) == 0:
        direction = np.eye(state.dims)[0]
    prof = density_profile(state.positions, direction, n_bins, state.L)
    return detect_bands(prof, threshold_factor)


def velocity_correlation(state: ParticleState, r_max: float, n_bins: int = 20):
    """Binned average of ``S_i . S_j`` over distinct pairs closer than ``r_max``.

    Exploratory only; returns ``(bin_centers, correlation, pair_counts)`` with
    NaN in empty bins.
    """
    idx = neighbors.build(state.positions, state.L, r_max)
    i, j = neighbors.pairs(idx, state.positions, r_max)
    keep = i != j
    i, j = i[keep], j[keep]
    dr = neighbors.minimum_image(state.positions[j] - state.positions[i], state.L)
    r = np.linalg.norm(dr, axis=1)
    dots = np.einsum("ij,ij->i", state.spins[i], state.spins[j])
    edges = np.linspace(0.0, r_max, n_bins + 1)
    b = np.clip(np.digitize(r, edges) - 1, 0, n_bins - 1)
    counts = np.bincount(b, minlength=n_bins)
    sums = np.bincount(b, weights=dots, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(counts > 0, sums / counts, np.nan)
    return 0.5 * (edges[1:] + edges[:-1]), corr, counts


@dataclass
class PhaseDiagram:
    gamma_s_inv_axis: np.ndarray
    xi_axis: np.ndarray
    phi_matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.gamma_s_inv_axis = np.asarray(self.gamma_s_inv_axis, dtype=float)
        self.xi_axis = np.asarray(self.xi_axis, dtype=float)
        self.phi_matrix = np.asarray(self.phi_matrix, dtype=float)
        expected = (self.gamma_s_inv_axis.size, self.xi_axis.size)
        if self.phi_matrix.shape != expected:
            raise ValueError(f"phi_matrix shape {self.phi_matrix.shape} != {expected}")

    def rows(self):
        for a, g in enumerate(self.gamma_s_inv_axis):
            for b, x in enumerate(self.xi_axis):
                yield float(g), float(x), float(self.phi_matrix[a, b])


def grid_seed(base_seed: int, a: int, b: int) -> int:
    """Seed for sweep point ``(a, b)``, derived from the base seed."""
    ss = np.random.SeedSequence([int(base_seed), a, b])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def config_hash(*parts) -> str:
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]


class SweepError(RuntimeError):
    pass


def _sweep_point(args):
    a, b, p, cfg, n_steps, transient, L = args
    try:
        return a, b, run(p, cfg, n_steps, transient, L).mean_order
    except Exception as exc:  # tag the failing grid point
        raise SweepError(f"grid point (gamma_s_inv={1 / p.gamma_s if p.gamma_s else float('inf')}, xi={p.xi_noise}): {exc}") from exc


def sweep_phase_diagram(
    p: ModelParams,
    cfg: IntegratorConfig,
    gamma_s_inv_axis,
    xi_axis,
    n_steps: int,
    transient: int,
    L: float,
    workers: int = 1,
) -> PhaseDiagram:
    """Time-averaged order at every ``(gamma_s^-1, xi)`` grid point.

    Each point runs from its own initial state with a seed from
    :func:`grid_seed`; with ``workers > 1`` points run in separate processes.
    """
    gs_axis = np.asarray(gamma_s_inv_axis, dtype=float)
    xi_axis = np.asarray(xi_axis, dtype=float)
    if gs_axis.size == 0 or xi_axis.size == 0:
        raise ValueError("sweep axes must be nonempty")
    jobs = []
    for a, gsi in enumerate(gs_axis):
        for b, xi in enumerate(xi_axis):
            pa = p.with_(gamma_s=1.0 / gsi, xi_noise=float(xi))
            ca = IntegratorConfig(**{**cfg.__dict__, "seed": grid_seed(cfg.seed, a, b)})
            jobs.append((a, b, pa, ca, n_steps, transient, L))
    phi = np.full((gs_axis.size, xi_axis.size), np.nan)
    if workers > 1 and len(jobs) > 1:
        # spawn: the numba OpenMP runtime aborts if the parent is forked
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]
    for a, b, value in results:
        phi[a, b] = np.nan if value is None else value
    meta = {
        "base_seed": cfg.seed,
        "n_steps": n_steps,
        "transient": transient,
        "L": L,
        "hash": config_hash(p, cfg, n_steps, transient, L),
    }
    return PhaseDiagram(gs_axis, xi_axis, phi, meta)
