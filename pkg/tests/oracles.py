"""Independent reference implementations shared by the test modules."""

import numpy as np
from scipy.integrate import solve_ivp

from qvm.dynamics import IntegratorConfig, ParticleState, step
from qvm.model import ModelParams


def brute_force_neighbors(positions, L, r_c):
    dr = positions[None, :, :] - positions[:, None, :]
    dr -= L * np.round(dr / L)
    dist = np.sqrt((dr**2).sum(-1))
    return [set(np.flatnonzero(row <= r_c)) for row in dist]


def two_particle_reference(p: ModelParams, S0, T):
    """Noise-free pair that stays inside each other's ball.

    Euler steps followed by renormalization converge to the flow projected onto
    the tangent plane of the sphere, ``dS/dt = f - (S . f) S``.
    """

    def rhs(_, y):
        S = y.reshape(2, 3)
        S_bar = S.mean(axis=0)
        f = -p.J * np.cross(S_bar, S) - p.gamma_s * (S - S_bar)  # J n'/2 with n' = 2
        f -= np.einsum("ij,ij->i", S, f)[:, None] * S
        return f.ravel()

    sol = solve_ivp(rhs, (0.0, T), np.ravel(S0), method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1].reshape(2, 3)


def two_particle_error(p: ModelParams, S0, T, dt):
    cfg = IntegratorConfig(dt=dt)
    s = ParticleState(positions=np.array([[2.0, 2.0, 2.0], [2.3, 2.0, 2.0]]), spins=np.array(S0, float), L=6.0)
    for _ in range(int(round(T / dt))):
        s = step(s, p, cfg)
    return float(np.max(np.abs(s.spins - two_particle_reference(p, S0, T))))


def convergence_order(p: ModelParams, S0, T, dts):
    errs = np.array([two_particle_error(p, S0, T, dt) for dt in dts])
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return float(slope), errs
