"""Explicit finite-difference solvers for the velocity/density field equations.

Two systems live here:

* the full nonlinear velocity equation with the Landau terms, a stress
  tensor made of pressure ``rho/beta`` and viscosity ``rho/(gamma beta)``,
  and the continuity equation in flux form;
* the linearized Goldstone system for the transverse velocity ``V_perp``
  and the density deviation ``delta_rho`` in the frame of the flock.

Fields are periodic. Spatial derivatives are second-order central
differences, time stepping is explicit Euler (Euler-Maruyama with noise).
The flock axis of the Goldstone system is the last grid axis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import HydroCoefficients, ModelParams


class StabilityError(ValueError):
    """Time step violates a stability guard."""


class NegativeDensityError(RuntimeError):
    pass


def ddx(f: np.ndarray, axis: int, dx: float) -> np.ndarray:
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * dx)


def laplacian(f: np.ndarray, dx: float, axes) -> np.ndarray:
    out = np.zeros_like(f)
    for a in axes:
        out += np.roll(f, -1, axis=a) + np.roll(f, 1, axis=a) - 2.0 * f
    return out / dx**2


def wavenumbers(grid_dims, dx: float) -> list[np.ndarray]:
    """Angular wavenumbers of an FFT grid, broadcastable against the grid."""
    ks = []
    d = len(grid_dims)
    for a, n in enumerate(grid_dims):
        shape = [1] * d
        shape[a] = n
        ks.append((2.0 * np.pi * np.fft.fftfreq(n, d=dx)).reshape(shape))
    return ks


def cutoff_spectrum(k_sq, Delta: float, Lambda_cut: float):
    """Target noise spectrum ``Delta * (1 - exp(-k^2 / Lambda^2))``."""
    return Delta * -np.expm1(-np.asarray(k_sq, dtype=float) / Lambda_cut**2)


def sample_cutoff_noise(
    grid_dims,
    dx: float,
    Delta: float,
    Lambda_cut: float,
    dt: float,
    rng: np.random.Generator,
    n_components: int | None = None,
) -> np.ndarray:
    """Real Gaussian vector field with cutoff spectrum, white in time at step ``dt``.

    Every component has DFT coefficients ``c_k = fftn(field)_k`` with
    ``E|c_k|^2 = N * S(k) / (dx^d dt)`` where ``S = cutoff_spectrum`` and ``N``
    the number of sites. The field is drawn as spatially white noise and
    shaped by ``sqrt(S)`` in Fourier space, which keeps Hermitian symmetry
    and makes the ``k = 0`` amplitude exactly zero.

    Returns an array of shape ``(n_components, *grid_dims)``.
    """
    grid_dims = tuple(int(n) for n in grid_dims)
    d = len(grid_dims)
    if n_components is None:
        n_components = d
    axes = tuple(range(1, d + 1))
    k_sq = sum(k**2 for k in wavenumbers(grid_dims, dx))
    amp = np.sqrt(cutoff_spectrum(k_sq, Delta, Lambda_cut) / (dx**d * dt))
    white = rng.standard_normal((n_components, *grid_dims))
    return np.fft.ifftn(np.fft.fftn(white, axes=axes) * amp, axes=axes).real


@dataclass
class HydroFields:
    """Density and velocity on a periodic grid.

    ``V`` has shape ``(d, *grid_dims)``. ``params`` supplies ``m``, ``beta``
    and ``gamma`` for the stress tensor; ``coeffs`` the Landau and noise terms.
    """

    rho: np.ndarray
    V: np.ndarray
    dx: float
    coeffs: HydroCoefficients
    params: ModelParams
    time: float = 0.0

    @property
    def grid_dims(self) -> tuple[int, ...]:
        return self.rho.shape

    def total_mass(self) -> float:
        return float(self.rho.sum() * self.dx ** self.rho.ndim)


def uniform_flock(grid_dims, dx, coeffs: HydroCoefficients, params: ModelParams, rho0=None):
    """Homogeneous ordered state moving along the last axis at speed ``sqrt(lambda_tilde/eta_tilde)``."""
    grid_dims = tuple(grid_dims)
    d = len(grid_dims)
    rho0 = params.rho if rho0 is None else rho0
    V = np.zeros((d, *grid_dims))
    V[-1] = np.sqrt(coeffs.flock_speed_sq)
    return HydroFields(np.full(grid_dims, float(rho0)), V, float(dx), coeffs, params)


def full_rhs(f: HydroFields, noise: np.ndarray | None = None):
    """Time derivatives ``(drho/dt, dV/dt)`` of the full equations."""
    c, p = f.coeffs, f.params
    rho, V, dx = f.rho, f.V, f.dx
    d = rho.ndim
    grad = np.array([[ddx(V[b], a, dx) for b in range(d)] for a in range(d)])  # grad[a, b] = d_a V_b
    speed_sq = np.einsum("a...,a...->...", V, V)
    nu_rho = rho / (p.gamma * p.beta)
    dV = np.empty_like(V)
    for b in range(d):
        advection = sum(V[a] * grad[a, b] for a in range(d))
        pressure = ddx(rho / p.beta, b, dx) / rho
        viscous = sum(ddx(nu_rho * (grad[a, b] + grad[b, a]), a, dx) for a in range(d)) / rho
        force = c.lambda_tilde * V[b] - c.eta_tilde * speed_sq * V[b] - pressure + viscous
        if noise is not None:
            force = force + noise[b]
        dV[b] = -c.lambda1 * advection + force / p.m
    drho = -sum(ddx(rho * V[a], a, dx) for a in range(d))
    return drho, dV


def check_guards(dt: float, dx: float, D: float, max_speed: float) -> None:
    if dt > 0.25 * dx**2 / D:
        raise StabilityError(f"dt={dt} exceeds the diffusive limit 0.25*dx^2/D={0.25 * dx**2 / D}")
    if max_speed > 0 and dt > 0.25 * dx / max_speed:
        raise StabilityError(f"dt={dt} exceeds the advective limit 0.25*dx/max|V|={0.25 * dx / max_speed}")


def full_noise(f: HydroFields, dt: float, rng: np.random.Generator, velocity_term: bool = False):
    """Random force for the full equation.

    The isotropic part has strength ``2 Delta`` with the cutoff spectrum. With
    ``velocity_term`` an extra ``V_a V_b`` part with local strength
    ``2 gamma m / rho`` is added along the local velocity.
    """
    c, p = f.coeffs, f.params
    R = sample_cutoff_noise(f.grid_dims, f.dx, 2.0 * c.Delta, c.Lambda_cut, dt, rng)
    if velocity_term:
        w = sample_cutoff_noise(f.grid_dims, f.dx, 1.0, c.Lambda_cut, dt, rng, n_components=1)[0]
        R = R + np.sqrt(2.0 * p.gamma * p.m / f.rho) * f.V * w
    return R


def step_full(
    f: HydroFields,
    dt: float,
    rng: np.random.Generator | None = None,
    velocity_noise: bool = False,
) -> HydroFields:
    """One explicit step of the full equations; noise is on when ``rng`` is given."""
    max_speed = float(np.sqrt(np.einsum("a...,a...->...", f.V, f.V).max()))
    check_guards(dt, f.dx, f.coeffs.D, max_speed)
    noise = None if rng is None else full_noise(f, dt, rng, velocity_noise)
    drho, dV = full_rhs(f, noise)
    rho = f.rho + dt * drho
    if np.any(rho <= 0):
        site = tuple(int(i) for i in np.unravel_index(int(np.argmin(rho)), rho.shape))
        raise NegativeDensityError(f"non-positive density {rho[site]:.3g} at site {site}, t={f.time + dt:g}")
    return replace(f, rho=rho, V=f.V + dt * dV, time=f.time + dt)


def full_mode_oracle(k: float, dx: float, rho0: float, V0: float, coeffs: HydroCoefficients, params: ModelParams):
    """Growth rates of a density/longitudinal-velocity wave along the flock axis.

    Linearizes the discretized full equations about the uniform flock and
    returns the eigenvalues of the 2x2 symbol acting on ``(delta_rho, delta_V)``.
    """
    c, p = coeffs, params
    ik = 1j * np.sin(k * dx) / dx
    kk = (np.sin(k * dx) / dx) ** 2
    M = np.array(
        [
            [-ik * V0, -ik * rho0],
            [
                -ik / (rho0 * p.beta * p.m),
                -c.lambda1 * V0 * ik + (-2.0 * c.lambda_tilde - 2.0 * kk / (p.gamma * p.beta)) / p.m,
            ],
        ]
    )
    return np.linalg.eigvals(M)


@dataclass
class GoldstoneState:
    """Transverse velocity and density deviation in the co-moving frame.

    ``V_perp`` has shape ``(d - 1, *grid_dims)``; component ``a`` is the
    velocity along grid axis ``a``.
    """

    V_perp: np.ndarray
    delta_rho: np.ndarray
    dx: float
    A_I: float
    B: float
    D: float
    lambda1: float
    time: float = 0.0

    @property
    def grid_dims(self) -> tuple[int, ...]:
        return self.delta_rho.shape

    @classmethod
    def zeros(cls, grid_dims, dx, A_I, B, D, lambda1=0.0) -> "GoldstoneState":
        grid_dims = tuple(grid_dims)
        return cls(
            np.zeros((len(grid_dims) - 1, *grid_dims)),
            np.zeros(grid_dims),
            float(dx),
            A_I,
            B,
            D,
            lambda1,
        )


def goldstone_rhs(s: GoldstoneState, noise=None, advection: bool = False):
    V, dx = s.V_perp, s.dx
    d = s.delta_rho.ndim
    perp = range(d - 1)
    div = sum(ddx(V[a], a, dx) for a in perp)
    dV = np.empty_like(V)
    for b in perp:
        rhs = -s.B * ddx(s.delta_rho, b, dx) + s.D * ddx(div, b, dx) + s.D * laplacian(V[b], dx, range(d))
        if advection:
            rhs = rhs - s.lambda1 * sum(V[a] * ddx(V[b], a, dx) for a in perp)
        if noise is not None:
            rhs = rhs + noise[b]
        dV[b] = rhs
    return -s.A_I * div, dV


def step_goldstone(s: GoldstoneState, dt: float, noise=None, advection: bool = False) -> GoldstoneState:
    """One explicit step; ``noise`` is a ``V_perp``-shaped random force or ``None``."""
    max_speed = float(np.abs(s.V_perp).max()) * np.sqrt(s.V_perp.shape[0]) if advection else 0.0
    check_guards(dt, s.dx, s.D, max_speed)
    drho, dV = goldstone_rhs(s, noise, advection)
    return replace(s, V_perp=s.V_perp + dt * dV, delta_rho=s.delta_rho + dt * drho, time=s.time + dt)


def goldstone_noise(s: GoldstoneState, Delta: float, Lambda_cut: float, dt: float, rng):
    """Transverse random force with real-space strength ``2 Delta``."""
    return sample_cutoff_noise(s.grid_dims, s.dx, 2.0 * Delta, Lambda_cut, dt, rng, n_components=s.V_perp.shape[0])


def discrete_wavenumbers(k: float, dx: float) -> tuple[float, float]:
    """Effective ``k`` of the first-derivative stencil and ``k^2`` of the Laplacian stencil."""
    return np.sin(k * dx) / dx, 4.0 * np.sin(0.5 * k * dx) ** 2 / dx**2


def goldstone_dispersion(k: float, A_I: float, B: float, D: float, dx: float = 0.0):
    """Complex frequencies ``omega = -i D_eff k^2 +/- sqrt(A_I B k^2 - D_eff^2 k^4)``.

    With ``dx > 0`` the stencil symbols of the discrete operator replace ``k``
    and ``k^2`` (longitudinal wave along a transverse axis); ``dx = 0`` gives
    the continuum result. Returned in order of increasing real part.
    """
    if dx > 0:
        k1, k2 = discrete_wavenumbers(k, dx)
        damping = D * (k1**2 + k2)
    else:
        k1 = k
        damping = 2.0 * D * k**2
    half = 0.5 * damping  # D_eff k^2
    root = np.sqrt(complex(A_I * B * k1**2 - half**2))
    return np.array([-1j * half - root, -1j * half + root])


@dataclass
class DispersionPoint:
    k: float
    omega: np.ndarray

    @property
    def sound(self) -> complex:
        """The branch with positive real frequency."""
        return self.omega[np.argmax(self.omega.real)]


def fourier_mode(f: np.ndarray, k: float, axis: int, dx: float) -> complex:
    """Average of ``f * exp(-i k x)`` over the grid, ``x`` along ``axis``."""
    n = f.shape[axis]
    x = np.arange(n) * dx
    line = f.mean(axis=tuple(a for a in range(f.ndim) if a != axis))
    return complex(np.mean(line * np.exp(-1j * k * x)))


def measure_goldstone_dispersion(
    grid_dims,
    mode: int,
    A_I: float,
    B: float,
    D: float,
    dx: float = 1.0,
    dt: float = 0.01,
    n_steps: int = 200,
    amplitude: float = 1e-3,
) -> DispersionPoint:
    """Frequencies of a longitudinal wave along grid axis 0, measured by time stepping.

    Starts from a cosine density perturbation with ``mode`` periods in the box,
    records the Fourier amplitudes of ``delta_rho`` and ``V_perp[0]`` at that
    wavenumber, fits the one-step transfer matrix by least squares and
    converts its eigenvalues ``mu`` to ``omega = i log(mu) / dt``.
    """
    grid_dims = tuple(grid_dims)
    L = grid_dims[0] * dx
    k = 2.0 * np.pi * mode / L
    s = GoldstoneState.zeros(grid_dims, dx, A_I, B, D)
    shape = [1] * len(grid_dims)
    shape[0] = grid_dims[0]
    x = (np.arange(grid_dims[0]) * dx).reshape(shape)
    s.delta_rho = np.broadcast_to(amplitude * np.cos(k * x), grid_dims).copy()
    history = np.empty((n_steps + 1, 2), dtype=complex)
    for n in range(n_steps + 1):
        history[n] = fourier_mode(s.delta_rho, k, 0, dx), fourier_mode(s.V_perp[0], k, 0, dx)
        if n < n_steps:
            s = step_goldstone(s, dt)
    X0, X1 = history[:-1].T, history[1:].T
    T = X1 @ np.linalg.pinv(X0)
    omega = 1j * np.log(np.linalg.eigvals(T)) / dt
    return DispersionPoint(k, omega[np.argsort(omega.real)])


def sound_speed(points: list[DispersionPoint]) -> float:
    """Least-squares slope through the origin of ``Re omega`` against ``k``."""
    k = np.array([pt.k for pt in points])
    w = np.array([pt.sound.real for pt in points])
    return float(k @ w / (k @ k))
