"""Reticular free energy, its convex splitting and the discrete variational derivatives."""

import math
from dataclasses import dataclass

import numpy as np

from mmcgel.grid import CellField, GridMismatchError, Ax, Ay, Dx, Dy, ax, ay, dx, dy
from mmcgel.params import ModelParams

# Half-width of the excluded band at each end of (0, 1/rho).
DOMAIN_GUARD = 1e-12


class DomainError(ValueError):
    """Concentration outside the admissible interval."""

    def __init__(self, index: tuple[int, ...], value: float, lower: float, upper: float):
        super().__init__(
            f"concentration {value!r} at cell {index} outside [{lower!r}, {upper!r}]"
        )
        self.index = index
        self.value = value


class ScalarEnergyFns:
    """Pointwise S, H, kappa and their first two derivatives.

    All maps act elementwise on numpy arrays (or floats). S and kappa and
    their derivatives refuse arguments outside [guard, 1/rho - guard]. H is
    a polynomial and accepts any finite argument.

    S' and H' are returned with their additive constants dropped, as they
    enter the scheme only through the discrete Laplacian; S and H are the
    complete densities.
    """

    def __init__(self, params: ModelParams, guard: float = DOMAIN_GUARD):
        """Initialize scalar maps.

        Args:
            params: Model constants
            guard: Domain guard half-width
        """
        self.params = params
        self.guard = guard
        self.lower = guard
        self.upper = params.phi_max - guard
        self._c_log = 1.0 / params.tau + 1.0 / params.N

    def check_domain(self, u: np.ndarray | float) -> np.ndarray:
        """Return u as an array, raising DomainError on the first bad entry."""
        arr = np.asarray(u, dtype=np.float64)
        ok = (arr >= self.lower) & (arr <= self.upper)
        if not np.all(ok):
            if arr.ndim == 0:
                raise DomainError((), float(arr), self.lower, self.upper)
            bad = tuple(int(k) for k in np.argwhere(~ok)[0])
            raise DomainError(bad, float(arr[bad]), self.lower, self.upper)
        return arr

    def S(self, u):
        u = self.check_domain(u)
        p = self.params
        w = 1.0 - p.rho * u
        return (
            (u / p.tau) * np.log(p.alpha * u / p.tau)
            + (u / p.N) * np.log(p.beta * u / p.tau)
            + w * np.log(w)
        )

    def dS(self, u):
        """(1/tau + 1/N) ln u - rho ln(1 - rho u)."""
        u = self.check_domain(u)
        rho = self.params.rho
        return self._c_log * np.log(u) - rho * np.log(1.0 - rho * u)

    def dS_constant(self) -> float:
        """The constant dropped from dS: full S'(u) = dS(u) + dS_constant()."""
        p = self.params
        return (
            (math.log(p.alpha / p.tau) + 1.0) / p.tau
            + (math.log(p.beta / p.tau) + 1.0) / p.N
            - p.rho
        )

    def d2S(self, u):
        u = self.check_domain(u)
        rho = self.params.rho
        return self._c_log / u + rho * rho / (1.0 - rho * u)

    def H(self, u):
        p = self.params
        u = np.asarray(u, dtype=np.float64)
        return p.chi * u * (1.0 - p.rho * u)

    def dH(self, u):
        """-2 chi rho u (constant chi dropped)."""
        p = self.params
        return -2.0 * p.chi * p.rho * np.asarray(u, dtype=np.float64)

    def d2H(self, u):
        p = self.params
        return np.full_like(np.asarray(u, dtype=np.float64), -2.0 * p.chi * p.rho)

    def kappa(self, u):
        u = self.check_domain(u)
        return 1.0 / (36.0 * u * (1.0 - u))

    def dkappa(self, u):
        u = self.check_domain(u)
        return (2.0 * u - 1.0) / (36.0 * u**2 * (1.0 - u) ** 2)

    def d2kappa(self, u):
        u = self.check_domain(u)
        return (3.0 * u**2 - 3.0 * u + 1.0) / (18.0 * u**3 * (1.0 - u) ** 3)


@dataclass(frozen=True)
class EnergyReport:
    """Discrete energy with its convex/concave split, F = Fc - Fe."""

    F: float
    Fc: float
    Fe: float


def _gradient_terms(phi: CellField):
    """D_x phi, D_y phi and a_x((D_x phi)^2) + a_y((D_y phi)^2)."""
    dxphi = Dx(phi)
    dyphi = Dy(phi)
    return dxphi, dyphi, ax(dxphi * dxphi) + ay(dyphi * dyphi)


def discrete_energy(phi: CellField, p: ModelParams) -> EnergyReport:
    """Evaluate F, Fc and Fe at phi.

    Fc collects S and the de Gennes gradient term, Fe = -hx hy sum H.

    Raises:
        DomainError: If any cell leaves (0, 1/rho)
    """
    fns = ScalarEnergyFns(p)
    u = phi.values
    _, _, grad = _gradient_terms(phi)

    area = phi.geometry.cell_area
    fc = area * math.fsum((fns.S(u) + fns.kappa(u) * grad.values).ravel())
    fe = -area * math.fsum(fns.H(u).ravel())
    return EnergyReport(F=fc - fe, Fc=fc, Fe=fe)


def var_deriv_Fc(phi: CellField, p: ModelParams) -> CellField:
    """delta Fc = S'(phi) + kappa'(phi) grad^2 - 2 d_x(A_x kappa D_x phi) - 2 d_y(A_y kappa D_y phi)."""
    fns = ScalarEnergyFns(p)
    u = phi.values
    g = phi.geometry
    dxphi, dyphi, grad = _gradient_terms(phi)
    kap = CellField._wrap(fns.kappa(u), g)

    local = CellField._wrap(fns.dS(u) + fns.dkappa(u) * grad.values, g)
    return local - 2.0 * dx(Ax(kap) * dxphi) - 2.0 * dy(Ay(kap) * dyphi)


def var_deriv_Fe(phi: CellField, p: ModelParams) -> CellField:
    """delta Fe = -H'(phi) = 2 chi rho phi."""
    fns = ScalarEnergyFns(p)
    return CellField._wrap(-fns.dH(phi.values), phi.geometry)


def chemical_potential(phi_new: CellField, phi_old: CellField, p: ModelParams) -> CellField:
    """Mixed-time chemical potential delta Fc(phi_new) - delta Fe(phi_old)."""
    return var_deriv_Fc(phi_new, p) - var_deriv_Fe(phi_old, p)


def hessian_action(phi: CellField, psi: CellField, p: ModelParams) -> CellField:
    """Apply H(phi) = (1/(hx hy)) Hess Fc(phi) to psi.

    Raises:
        DomainError: If phi leaves (0, 1/rho)
    """
    fns = ScalarEnergyFns(p)
    u = phi.values
    g = phi.geometry
    if psi.geometry != g:
        raise GridMismatchError("phi and psi live on different grids")
    dxphi, dyphi, grad = _gradient_terms(phi)
    dxpsi = Dx(psi)
    dypsi = Dy(psi)

    kap = CellField._wrap(fns.kappa(u), g)
    dkap = fns.dkappa(u)
    dkap_psi = CellField._wrap(dkap * psi.values, g)
    cross = ax(dxphi * dxpsi) + ay(dyphi * dypsi)

    local = CellField._wrap(
        fns.d2S(u) * psi.values
        + fns.d2kappa(u) * psi.values * grad.values
        + 2.0 * dkap * cross.values,
        g,
    )
    flux_x = Ax(dkap_psi) * dxphi + Ax(kap) * dxpsi
    flux_y = Ay(dkap_psi) * dyphi + Ay(kap) * dypsi
    return local - 2.0 * dx(flux_x) - 2.0 * dy(flux_y)
