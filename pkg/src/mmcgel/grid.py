"""Cell- and edge-centred grid functions on a periodic staggered mesh.

Storage convention (0-based numpy indices):

- ``CellField.values[i, j]`` is the value at the cell centre (x_{i+1}, y_{j+1}).
- ``EdgeFieldEW.values[i, j]`` is the value on the east edge of cell (i, j),
  i.e. at (x_{i+3/2}, y_{j+1}). Periodicity identifies the edge left of the
  first cell with the last stored edge, so only m unique edges per row exist.
- ``EdgeFieldNS.values[i, j]`` is the value on the north edge of cell (i, j).

Periodic wrap is done with ``numpy.roll``; there are no ghost cells.
"""

import math
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np

from mmcgel.params import GridGeometry

F = TypeVar("F", bound="GridFunction")


class GridMismatchError(ValueError):
    """Operands live on different grids or on the wrong staggering."""

    pass


class NonFiniteFieldError(ValueError):
    """A grid function holds NaN or Inf."""

    pass


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Read-only m x n array bound to a geometry.

    Supports pointwise arithmetic with scalars and with fields of the same
    kind on the same geometry.
    """

    values: np.ndarray
    geometry: GridGeometry

    # numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.array(self.values, dtype=np.float64))
        self._validate()

    @classmethod
    def _wrap(cls: type[F], arr: np.ndarray, geometry: GridGeometry) -> F:
        """Wrap a freshly computed array without copying it."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "values", arr)
        object.__setattr__(obj, "geometry", geometry)
        obj._validate()
        return obj

    def _validate(self) -> None:
        if self.values.shape != self.geometry.shape:
            raise GridMismatchError(
                f"{type(self).__name__} shape {self.values.shape} does not match "
                f"grid {self.geometry.shape}"
            )
        if not np.isfinite(self.values).all():
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise NonFiniteFieldError(
                f"{type(self).__name__} has non-finite value at {tuple(int(k) for k in bad)}"
            )
        self.values.setflags(write=False)

    @classmethod
    def constant(cls: type[F], geometry: GridGeometry, value: float) -> F:
        return cls._wrap(np.full(geometry.shape, float(value)), geometry)

    @classmethod
    def zeros(cls: type[F], geometry: GridGeometry) -> F:
        return cls.constant(geometry, 0.0)

    def _operand(self, other: object) -> np.ndarray | float:
        if isinstance(other, GridFunction):
            if type(other) is not type(self):
                raise GridMismatchError(
                    f"cannot combine {type(self).__name__} with {type(other).__name__}"
                )
            if other.geometry != self.geometry:
                raise GridMismatchError("operands live on different grids")
            return other.values
        if isinstance(other, (int, float, np.floating, np.integer)):
            return float(other)
        return NotImplemented

    def _binary(self: F, other: object, op: Callable) -> F:
        rhs = self._operand(other)
        if rhs is NotImplemented:
            return NotImplemented
        return type(self)._wrap(op(self.values, rhs), self.geometry)

    def __add__(self: F, other: object) -> F:
        return self._binary(other, np.add)

    def __radd__(self: F, other: object) -> F:
        return self._binary(other, np.add)

    def __sub__(self: F, other: object) -> F:
        return self._binary(other, np.subtract)

    def __rsub__(self: F, other: object) -> F:
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self: F, other: object) -> F:
        return self._binary(other, np.multiply)

    def __rmul__(self: F, other: object) -> F:
        return self._binary(other, np.multiply)

    def __truediv__(self: F, other: object) -> F:
        return self._binary(other, np.divide)

    def __neg__(self: F) -> F:
        return type(self)._wrap(-self.values, self.geometry)

    def max_abs(self) -> float:
        """Max-norm of the stored values."""
        return float(np.max(np.abs(self.values)))


class CellField(GridFunction):
    """Cell-centred grid function (phi, psi, mu, xi, ...)."""

    @classmethod
    def from_function(
        cls,
        geometry: GridGeometry,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ) -> "CellField":
        """Sample func(x, y) at the cell centres."""
        x, y = np.meshgrid(geometry.x_centers(), geometry.y_centers(), indexing="ij")
        return cls._wrap(np.asarray(func(x, y), dtype=np.float64) + np.zeros(geometry.shape), geometry)


class EdgeFieldEW(GridFunction):
    """East-west edge-centred grid function (unique edges only)."""

    pass


class EdgeFieldNS(GridFunction):
    """North-south edge-centred grid function (unique edges only)."""

    pass


def _require(field: GridFunction, kind: type) -> GridGeometry:
    if not isinstance(field, kind):
        raise GridMismatchError(f"expected {kind.__name__}, got {type(field).__name__}")
    return field.geometry


def _same_grid(a: GridFunction, b: GridFunction, kind: type) -> GridGeometry:
    geometry = _require(a, kind)
    if _require(b, kind) != geometry:
        raise GridMismatchError("operands live on different grids")
    return geometry


# Edge to centre


def ax(f: EdgeFieldEW) -> CellField:
    """a_x f_{i,j} = (f_{i+1/2,j} + f_{i-1/2,j}) / 2."""
    g = _require(f, EdgeFieldEW)
    return CellField._wrap(0.5 * (f.values + np.roll(f.values, 1, axis=0)), g)


def dx(f: EdgeFieldEW) -> CellField:
    """d_x f_{i,j} = (f_{i+1/2,j} - f_{i-1/2,j}) / h_x."""
    g = _require(f, EdgeFieldEW)
    return CellField._wrap((f.values - np.roll(f.values, 1, axis=0)) / g.hx, g)


def ay(f: EdgeFieldNS) -> CellField:
    """a_y g_{i,j} = (g_{i,j+1/2} + g_{i,j-1/2}) / 2."""
    g = _require(f, EdgeFieldNS)
    return CellField._wrap(0.5 * (f.values + np.roll(f.values, 1, axis=1)), g)


def dy(f: EdgeFieldNS) -> CellField:
    """d_y g_{i,j} = (g_{i,j+1/2} - g_{i,j-1/2}) / h_y."""
    g = _require(f, EdgeFieldNS)
    return CellField._wrap((f.values - np.roll(f.values, 1, axis=1)) / g.hy, g)


# Centre to edge


def Ax(phi: CellField) -> EdgeFieldEW:
    """A_x phi_{i+1/2,j} = (phi_{i+1,j} + phi_{i,j}) / 2."""
    g = _require(phi, CellField)
    return EdgeFieldEW._wrap(0.5 * (np.roll(phi.values, -1, axis=0) + phi.values), g)


def Dx(phi: CellField) -> EdgeFieldEW:
    """D_x phi_{i+1/2,j} = (phi_{i+1,j} - phi_{i,j}) / h_x."""
    g = _require(phi, CellField)
    return EdgeFieldEW._wrap((np.roll(phi.values, -1, axis=0) - phi.values) / g.hx, g)


def Ay(phi: CellField) -> EdgeFieldNS:
    """A_y phi_{i,j+1/2} = (phi_{i,j+1} + phi_{i,j}) / 2."""
    g = _require(phi, CellField)
    return EdgeFieldNS._wrap(0.5 * (np.roll(phi.values, -1, axis=1) + phi.values), g)


def Dy(phi: CellField) -> EdgeFieldNS:
    """D_y phi_{i,j+1/2} = (phi_{i,j+1} - phi_{i,j}) / h_y."""
    g = _require(phi, CellField)
    return EdgeFieldNS._wrap((np.roll(phi.values, -1, axis=1) - phi.values) / g.hy, g)


def laplacian(phi: CellField) -> CellField:
    """Five-point periodic Laplacian, d_x(D_x phi) + d_y(D_y phi)."""
    return dx(Dx(phi)) + dy(Dy(phi))


# Inner products and reductions. Sums go through math.fsum so they are
# correctly rounded and independent of summation order.


def _weighted_sum(values: np.ndarray, geometry: GridGeometry) -> float:
    return geometry.cell_area * math.fsum(values.ravel())


def inner_h(phi: CellField, psi: CellField) -> float:
    """(phi, psi)_h = hx hy sum phi psi."""
    g = _same_grid(phi, psi, CellField)
    return _weighted_sum(phi.values * psi.values, g)


def inner_ew(f: EdgeFieldEW, g: EdgeFieldEW) -> float:
    """[f, g]_ew in its unique-edge form hx hy sum f g.

    Equal to hx hy sum a_x(f g) since a_x of a periodic edge field preserves the sum.
    """
    geometry = _same_grid(f, g, EdgeFieldEW)
    return _weighted_sum(f.values * g.values, geometry)


def inner_ns(f: EdgeFieldNS, g: EdgeFieldNS) -> float:
    """[f, g]_ns in its unique-edge form hx hy sum f g."""
    geometry = _same_grid(f, g, EdgeFieldNS)
    return _weighted_sum(f.values * g.values, geometry)


def norm_h(phi: CellField) -> float:
    return math.sqrt(inner_h(phi, phi))


def mean(phi: CellField) -> float:
    """Grid average (1/mn) sum phi."""
    g = _require(phi, CellField)
    return math.fsum(phi.values.ravel()) / (g.m * g.n)


def midline_profile(phi: CellField) -> tuple[np.ndarray, np.ndarray]:
    """Profile phi(x_i, Ly/2) along the horizontal midline.

    For odd n the middle row lies on y = Ly/2; for even n the two rows
    straddling it are averaged.

    Returns:
        (x centres, profile values)
    """
    g = _require(phi, CellField)
    mid = g.n // 2
    if g.n % 2:
        profile = phi.values[:, mid].copy()
    else:
        profile = 0.5 * (phi.values[:, mid - 1] + phi.values[:, mid])
    return g.x_centers(), profile
