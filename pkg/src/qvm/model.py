"""Model parameters and derived mean-field, Landau and hydrodynamic coefficients.

All functions here are pure; they take immutable parameter records and return
new records, so they can be called from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class NoSymmetryBreaking(ValueError):
    """Raised when the ordered-state speed is requested but the quadratic coefficient vanishes."""


def interaction_volume(r_c: float, dims: int) -> float:
    """Volume of the interaction ball of radius ``r_c`` in ``dims`` dimensions."""
    if dims == 2:
        return math.pi * r_c**2
    if dims == 3:
        return 4.0 * math.pi * r_c**3 / 3.0
    raise ValueError(f"dims must be 2 or 3, got {dims}")


@dataclass(frozen=True)
class ModelParams:
    """Microscopic constants of the spin-particle model.

    ``zeta`` defaults to ``u * m``; if given explicitly it must agree with it.
    ``xi_noise`` is the spin noise amplitude used by the particle integrator.
    """

    m: float = 1.0
    u: float = 0.5
    J: float = 1.0
    zeta: float | None = None
    gamma: float = 1.0
    gamma_s: float = 1.0
    beta: float = 1.0
    rho: float = 0.5
    r_c: float = 1.0
    xi_noise: float = 0.1
    kappa: float = 0.0
    dims: int = 3

    def __post_init__(self) -> None:
        if self.zeta is None:
            object.__setattr__(self, "zeta", self.u * self.m)
        self.validate()

    def validate(self) -> None:
        checks = {
            "m": self.m > 0,
            "beta": self.beta > 0,
            "gamma": self.gamma > 0,
            "gamma_s": self.gamma_s >= 0,
            "r_c": self.r_c > 0,
            "rho": self.rho > 0,
            "u": self.u >= 0,
            "xi_noise": self.xi_noise >= 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not (ok and math.isfinite(value)):
                raise ValueError(f"invalid {name}={value!r}: violates {_RULES[name]}")
        if self.dims not in (2, 3):
            raise ValueError(f"invalid dims={self.dims!r}: must be 2 or 3")
        if not math.isclose(self.u * self.m, self.zeta, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError(f"inconsistent zeta={self.zeta!r}: must equal u*m={self.u * self.m!r}")

    @property
    def m_tilde(self) -> float:
        """Renormalized mass ``m + 2 kappa / beta``."""
        return self.m + 2.0 * self.kappa / self.beta

    @property
    def n_prime(self) -> float:
        """Expected number of particles in an interaction ball."""
        return interaction_volume(self.r_c, self.dims) * self.rho

    def with_(self, **changes) -> "ModelParams":
        # zeta follows u and m unless it is changed explicitly
        if ("u" in changes or "m" in changes) and "zeta" not in changes:
            changes["zeta"] = None
        return replace(self, **changes)


_RULES = {
    "m": "m > 0",
    "beta": "beta > 0",
    "gamma": "gamma > 0",
    "gamma_s": "gamma_s >= 0",
    "r_c": "r_c > 0",
    "rho": "rho > 0 (positivity)",
    "u": "u >= 0",
    "xi_noise": "xi_noise >= 0",
}


@dataclass(frozen=True)
class LandauCoefficients:
    lam: float
    eta: float
    F0: float
    m_tilde: float
    V0_sq: float | None

    @property
    def symmetry_broken(self) -> bool:
        return self.V0_sq is not None


@dataclass(frozen=True)
class HydroCoefficients:
    """Coefficients of the velocity/density field equations.

    ``xi_align`` is the proportionality rate in the ``V = xi r`` closure and is
    unrelated to the spin noise amplitude.
    """

    lambda_tilde: float
    lambda1: float
    eta_tilde: float
    B: float
    D: float
    Delta: float
    A_I: float = 1.0
    Lambda_cut: float = 1.0
    xi_align: float = 1.0

    def __post_init__(self) -> None:
        if not self.B > 0:
            raise ValueError(f"invalid B={self.B!r}: must be > 0")
        if not self.D > 0:
            raise ValueError(f"invalid D={self.D!r}: must be > 0")
        if not self.Delta >= 0:
            raise ValueError(f"invalid Delta={self.Delta!r}: must be >= 0")
        if not self.Lambda_cut > 0:
            raise ValueError(f"invalid Lambda_cut={self.Lambda_cut!r}: must be > 0")

    @property
    def flock_speed_sq(self) -> float:
        """Squared speed of the homogeneous ordered state, ``lambda_tilde / eta_tilde``."""
        if self.eta_tilde == 0:
            raise NoSymmetryBreaking("eta_tilde is zero; no finite ordered speed")
        return self.lambda_tilde / self.eta_tilde


def landau_coefficients(p: ModelParams, n_prime: float) -> LandauCoefficients:
    """Quadratic, quartic and constant coefficients of the free-energy density.

    Parameters
    ----------
    p : ModelParams
    n_prime : float
        Expected neighbour count entering the Heisenberg term.

    Returns
    -------
    LandauCoefficients
        ``V0_sq`` is ``None`` when the quadratic coefficient vanishes (``J == 0``),
        meaning there is no spontaneously ordered state.
    """
    if not n_prime > 0:
        raise ValueError(f"n_prime must be > 0, got {n_prime!r}")
    if not p.u > 0:
        raise ValueError(f"u must be > 0 for the Landau expansion, got {p.u!r}")
    m_tilde = p.m_tilde
    if not m_tilde > 0:
        raise ValueError(f"renormalized mass must be > 0, got {m_tilde!r}")
    lam = 3.0 * p.J**2 * n_prime**2 / (8.0 * m_tilde * p.u**4)
    eta = 2.0 * lam**2 * p.beta / 9.0
    F0 = (
        3.0 * math.log(m_tilde * p.beta)
        - math.log(2.0 * math.pi)
        + 2.0 * math.log(p.rho)
        + 2.0 * p.kappa * p.u**2
    ) / (2.0 * p.beta)
    V0_sq = 9.0 / (4.0 * lam * p.beta) if lam > 0 else None
    return LandauCoefficients(lam=lam, eta=eta, F0=F0, m_tilde=m_tilde, V0_sq=V0_sq)


def free_energy_density(c: LandauCoefficients, V_mag_sq, rho_local):
    """``rho * (-lam |V|^2 + eta |V|^4 + F0)``; works elementwise on arrays."""
    V_mag_sq = np.asarray(V_mag_sq, dtype=float)
    if np.any(V_mag_sq < 0):
        raise ValueError("V_mag_sq must be >= 0")
    out = rho_local * (-c.lam * V_mag_sq + c.eta * V_mag_sq**2 + c.F0)
    return float(out) if out.ndim == 0 else out


def meanfield_B(p: ModelParams, mean_spin) -> np.ndarray:
    """Mean field ``(J N' / 2) * mean_spin`` with ``N'`` the expected neighbour count."""
    s = np.asarray(mean_spin, dtype=float)
    if np.linalg.norm(s) > 1.0 + 1e-12:
        raise ValueError("|mean_spin| must be <= 1")
    return 0.5 * p.J * p.n_prime * s


def hydro_coefficients(
    p: ModelParams,
    c: LandauCoefficients,
    xi_align: float = 1.0,
    A_I: float = 1.0,
    Lambda_cut: float = 1.0,
) -> HydroCoefficients:
    return HydroCoefficients(
        lambda_tilde=2.0 * xi_align * c.lam,
        lambda1=1.0 - 2.0 * c.lam,
        eta_tilde=4.0 * xi_align * c.eta,
        B=1.0 / (p.rho * p.beta),
        D=1.0 / (p.gamma * p.m * p.beta),
        Delta=p.gamma / (p.rho * p.beta),
        A_I=A_I,
        Lambda_cut=Lambda_cut,
        xi_align=xi_align,
    )
