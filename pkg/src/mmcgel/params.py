"""Model constants of the reticular free energy and the grid geometry."""

import math
from dataclasses import dataclass, field

import numpy as np

# D is normalised to one throughout.
DIFFUSION = 1.0


class ParameterError(ValueError):
    """Invalid model or geometry parameter."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ModelParams:
    """Model constants with the derived reticular-energy parameters (immutable).

    alpha, beta, tau and rho are computed from M and N on construction and
    are never passed in.
    """

    chi: float
    M: float
    N: float
    epsilon: float = 0.0
    alpha: float = field(init=False)
    beta: float = field(init=False)
    tau: float = field(init=False)
    rho: float = field(init=False)
    D: float = field(init=False, default=DIFFUSION)

    def __post_init__(self) -> None:
        for name in ("M", "N", "chi"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(name, f"must be > 0 (got {value!r})")
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ParameterError("epsilon", f"must be >= 0 (got {self.epsilon!r})")

        root_pi_m = math.sqrt(math.pi * self.M)
        alpha = math.pi * (math.sqrt(self.M / math.pi) + self.N / 2.0) ** 2
        tau = root_pi_m * self.N

        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", alpha / root_pi_m)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "rho", 1.0 + self.M / tau)

    @property
    def phi_max(self) -> float:
        """Upper end 1/rho of the admissible concentration interval."""
        return 1.0 / self.rho


@dataclass(frozen=True)
class GridGeometry:
    """Uniform periodic cell-centred mesh on (0, Lx) x (0, Ly)."""

    Lx: float
    Ly: float
    m: int
    n: int

    def __post_init__(self) -> None:
        for name in ("Lx", "Ly"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(name, f"must be > 0 (got {value!r})")
        for name in ("m", "n"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 2:
                raise ParameterError(name, f"must be an integer >= 2 (got {value!r})")

    @property
    def hx(self) -> float:
        return self.Lx / self.m

    @property
    def hy(self) -> float:
        return self.Ly / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def x_centers(self) -> np.ndarray:
        """Cell-centre abscissae x_i = (i - 1/2) hx, i = 1..m."""
        return (np.arange(self.m) + 0.5) * self.hx

    def y_centers(self) -> np.ndarray:
        """Cell-centre ordinates y_j = (j - 1/2) hy, j = 1..n."""
        return (np.arange(self.n) + 0.5) * self.hy


def derive_params(M: float, N: float, chi: float, epsilon: float = 0.0) -> ModelParams:
    """Build ModelParams from the four free constants.

    Args:
        M: Relative microsphere volume
        N: Degree of polymerization
        chi: Huggins interaction parameter
        epsilon: Noise strength

    Returns:
        ModelParams with alpha, beta, tau, rho derived from M and N

    Raises:
        ParameterError: If a constant is out of range (names the field)
    """
    return ModelParams(chi=float(chi), M=float(M), N=float(N), epsilon=float(epsilon))
