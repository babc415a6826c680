"""Renormalization-group recursion relations, their fixed point and the coupling flow.

Flow variables ``(D, Delta, lambda1, B)`` obey, for rescaling exponents
``(z, chi, chi_rho)`` and coupling ``g = lambda1^2 Delta / D^3``::

    dD/dl       = D       (z - 2 + F31 g)
    dDelta/dl   = Delta   (z - 2 chi - 3 + F31 g)
    dlambda1/dl = lambda1 (z + chi - 1)
    dB/dl       = B       (chi_rho - 1 + z - chi)

Combining them gives the closed equation ``dg/dl = g (1 - 2 F31 g)``, whose
stable fixed point is ``g* = 1 / (2 F31)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

# rows: bracket equations; columns: z, chi, chi_rho, F31*g; last entry: right-hand side
_BRACKETS = (
    ((1, 0, 0, 1), 2),
    ((1, -2, 0, 1), 3),
    ((1, 1, 0, 0), 1),
    ((1, -1, 1, 0), 1),
)


@dataclass(frozen=True)
class Exponents:
    z: float
    chi: float
    chi_rho: float
    coupling_at_fp: float

    def bracket_residuals(self) -> np.ndarray:
        x = np.array([self.z, self.chi, self.chi_rho, self.coupling_at_fp])
        return np.array([np.dot(row, x) - rhs for row, rhs in _BRACKETS])


@dataclass(frozen=True)
class RGState:
    D: float
    Delta: float
    lambda1: float
    B: float
    l: float = 0.0

    def __post_init__(self) -> None:
        if not self.D > 0:
            raise ValueError(f"D must be > 0, got {self.D}")
        if not self.Delta >= 0:
            raise ValueError(f"Delta must be >= 0, got {self.Delta}")

    @property
    def lambda_bar_sq(self) -> float:
        return self.lambda1**2 * self.Delta / self.D**3

    def as_array(self) -> np.ndarray:
        return np.array([self.D, self.Delta, self.lambda1, self.B])


def _solve_exact(rows, rhs) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals."""
    n = len(rows)
    a = [[Fraction(v) for v in row] + [Fraction(b)] for row, b in zip(rows, rhs)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[pivot] = a[pivot], a[col]
        pv = a[col][col]
        a[col] = [v / pv for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [v - factor * w for v, w in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def fixed_point_exponents(with_coupling: bool = True) -> Exponents:
    """Exponents that hold every flow variable at its initial value.

    With ``with_coupling=False`` the coupling is switched off: the ``lambda1``
    bracket is dropped (that variable is the coupling being removed) and the
    remaining three brackets are solved with ``F31 g = 0``.
    """
    if with_coupling:
        rows = [r for r, _ in _BRACKETS]
        rhs = [b for _, b in _BRACKETS]
    else:
        kept = (0, 1, 3)
        rows = [_BRACKETS[i][0][:3] + (0,) for i in kept] + [(0, 0, 0, 1)]
        rhs = [_BRACKETS[i][1] for i in kept] + [0]
    z, chi, chi_rho, g = _solve_exact(rows, rhs)
    return Exponents(float(z), float(chi), float(chi_rho), float(g))


def flow_rhs(s: RGState, e: Exponents, F31: float = 1.0) -> np.ndarray:
    """``(dD/dl, dDelta/dl, dlambda1/dl, dB/dl)`` for gauge exponents ``e``."""
    g = F31 * s.lambda_bar_sq
    return np.array(
        [
            s.D * (e.z - 2.0 + g),
            s.Delta * (e.z - 2.0 * e.chi - 3.0 + g),
            s.lambda1 * (e.z + e.chi - 1.0),
            s.B * (e.chi_rho - 1.0 + e.z - e.chi),
        ]
    )


def logistic_coupling(l, g0: float, F31: float = 1.0):
    """Closed-form solution of ``dg/dl = g (1 - 2 F31 g)``."""
    l = np.asarray(l, dtype=float)
    growth = np.exp(l)
    return g0 * growth / (1.0 + 2.0 * F31 * g0 * (growth - 1.0))


class FlowError(RuntimeError):
    pass


@dataclass
class FlowTrajectory:
    l: np.ndarray
    values: np.ndarray  # columns D, Delta, lambda1, B
    coupling: np.ndarray  # lambda1^2 Delta / D^3 from the integrated variables
    coupling_closed: np.ndarray  # integrated alongside from dg/dl = g(1 - 2 F31 g)
    F31: float

    @property
    def consistency_residual(self) -> float:
        """Largest gap between the coupling from the four flows and from the closed equation."""
        return float(np.max(np.abs(self.coupling - self.coupling_closed)))

    def final_state(self) -> RGState:
        D, Delta, lam, B = self.values[-1]
        return RGState(D, Delta, lam, B, float(self.l[-1]))


def integrate_flow(
    initial: RGState,
    F31: float = 1.0,
    l_max: float = 30.0,
    dl: float = 0.01,
    gauge: Exponents | None = None,
) -> FlowTrajectory:
    """Classical fourth-order Runge-Kutta integration of the four recursion relations.

    The flow is integrated in logarithmic variables (``log D``, ``log Delta``,
    ``log |lambda1|``, ``log B``) where every equation is linear in its own
    variable; a vanishing ``Delta``, ``lambda1`` or ``B`` stays exactly zero.
    The step is ``dl`` shrunk by the coupling strength ``max(1, 2 F31 g)``,
    which only matters early in flows that start far above the fixed point.
    """
    if not dl > 0:
        raise ValueError("dl must be > 0")
    e = gauge if gauge is not None else fixed_point_exponents()
    x0 = initial.as_array()
    signs = np.sign(x0)
    live = signs != 0
    y = [math.log(abs(v)) if v != 0 else 0.0 for v in x0]
    r0 = e.z - 2.0
    r1 = e.z - 2.0 * e.chi - 3.0
    r2 = e.z + e.chi - 1.0
    r3 = e.chi_rho - 1.0 + e.z - e.chi
    has_coupling = bool(live[1] and live[2])

    def rhs(y0, y1, y2, gc):
        g = F31 * math.exp(2.0 * y2 + y1 - 3.0 * y0) if has_coupling else 0.0
        return r0 + g, r1 + g, gc * (1.0 - 2.0 * F31 * gc)

    l = initial.l
    l_end = initial.l + l_max
    gc = initial.lambda_bar_sq
    ls, ys, gcs = [l], [list(y)], [gc]
    while l < l_end - 1e-12:
        y0, y1, y2, y3 = y
        g_now = F31 * math.exp(2.0 * y2 + y1 - 3.0 * y0) if has_coupling else 0.0
        h = min(dl / max(1.0, 2.0 * g_now, 2.0 * F31 * gc), l_end - l)
        a0, a1, m1 = rhs(y0, y1, y2, gc)
        b0, b1, m2 = rhs(y0 + 0.5 * h * a0, y1 + 0.5 * h * a1, y2 + 0.5 * h * r2, gc + 0.5 * h * m1)
        c0, c1, m3 = rhs(y0 + 0.5 * h * b0, y1 + 0.5 * h * b1, y2 + 0.5 * h * r2, gc + 0.5 * h * m2)
        d0, d1, m4 = rhs(y0 + h * c0, y1 + h * c1, y2 + h * r2, gc + h * m3)
        y = [
            y0 + h / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0),
            y1 + h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
            y2 + h * r2,
            y3 + h * r3,
        ]
        gc = gc + h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
        l += h
        if not (all(math.isfinite(v) for v in y) and math.isfinite(gc)):
            raise FlowError(f"non-finite flow at l={l:g}")
        ls.append(l)
        ys.append(y)
        gcs.append(gc)
    ys = np.array(ys)
    with np.errstate(over="ignore"):
        values = np.where(live, signs * np.exp(ys), 0.0)
    bad = ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        raise FlowError(f"flow variable overflowed at l={ls[int(np.argmax(bad))]:g}")
    coupling = values[:, 2] ** 2 * values[:, 1] / values[:, 0] ** 3
    return FlowTrajectory(np.array(ls), values, coupling, np.array(gcs), F31)


def long_range_order_verdict(e: Exponents) -> tuple[bool, str]:
    if e.chi < 0:
        return True, f"chi = {e.chi:g} < 0: fluctuations shrink under rescaling, so true long-range order exists"
    return False, f"chi = {e.chi:g} >= 0: no long-range order is implied"


def exponent_report(e: Exponents | None = None, F31: float = 1.0) -> str:
    e = e or fixed_point_exponents()
    ok, why = long_range_order_verdict(e)
    lines = [
        f"z = {e.z:g}",
        f"chi = {e.chi:g}",
        f"chi_rho = {e.chi_rho:g}",
        f"F31*lambda_bar^2 at fixed point = {e.coupling_at_fp:g}",
        f"lambda_bar^2 at fixed point (F31 = {F31:g}) = {e.coupling_at_fp / F31:g}",
        f"long-range order: {'yes' if ok else 'no'} ({why})",
    ]
    return "\n".join(lines) + "\n"
