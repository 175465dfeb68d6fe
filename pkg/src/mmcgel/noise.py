"""Discrete conservative noise from keyed, counter-based normal draws."""

import math
from dataclasses import dataclass

import numpy as np

from mmcgel.grid import CellField, Dx, Dy, ax, ay
from mmcgel.params import GridGeometry

# Stream ids keep noise draws and initial-condition draws apart.
FIELD_R1 = 1
FIELD_R2 = 2
STREAM_INITIAL = 0x1D17

RNG_IDENTITY = (
    "numpy.random.Philox(SeedSequence[seed, sample, step, field]) + "
    f"Generator.standard_normal (ziggurat), numpy {np.__version__}"
)


class NoiseError(ValueError):
    """Invalid noise request."""

    pass


@dataclass(frozen=True)
class NoiseLineage:
    """Key of one noise increment: (run seed, sample index, step index)."""

    seed: int
    sample: int = 0
    step: int = 0

    def at_step(self, step: int) -> "NoiseLineage":
        return NoiseLineage(self.seed, self.sample, step)


@dataclass(frozen=True)
class NoiseDraw:
    """Independent standard normal fields r1, r2 for one step."""

    r1: CellField
    r2: CellField
    lineage: NoiseLineage


def keyed_generator(*key: int) -> np.random.Generator:
    """Philox generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def draw_normals(geometry: GridGeometry, lineage: NoiseLineage) -> NoiseDraw:
    """Draw r1, r2 for the step that advances t_k to t_{k+1}.

    The same lineage always reproduces the same draw bit for bit.
    """
    fields = []
    for field_id in (FIELD_R1, FIELD_R2):
        rng = keyed_generator(lineage.seed, lineage.sample, lineage.step, field_id)
        fields.append(CellField._wrap(rng.standard_normal(geometry.shape), geometry))
    return NoiseDraw(r1=fields[0], r2=fields[1], lineage=lineage)


def noise_from_draw(draw: NoiseDraw, s: float) -> CellField:
    """xi = -sqrt(2) / sqrt(hx hy s) (a_x D_x r1 + a_y D_y r2)."""
    if not s > 0:
        raise NoiseError(f"time step must be > 0 (got {s!r})")
    g = draw.r1.geometry
    scale = -math.sqrt(2.0) / math.sqrt(g.cell_area * s)
    return scale * (ax(Dx(draw.r1)) + ay(Dy(draw.r2)))


def sample_noise(step: int, geometry: GridGeometry, s: float, lineage: NoiseLineage) -> CellField:
    """Noise field xi^{k+1/2} for step index k.

    Args:
        step: Step index k (the step advancing t_k to t_{k+1})
        geometry: Grid geometry
        s: Time step
        lineage: Run seed and sample index; its step is replaced by ``step``

    Returns:
        Cell field with zero grid sum up to round-off

    Raises:
        NoiseError: If s <= 0
    """
    if not s > 0:
        raise NoiseError(f"time step must be > 0 (got {s!r})")
    return noise_from_draw(draw_normals(geometry, lineage.at_step(step)), s)


def stencil_variance(geometry: GridGeometry, s: float) -> float:
    """Exact per-cell variance of xi.

    a_x D_x r at cell i is (r_{i+1} - r_{i-1}) / (2 hx); for m >= 3 the two
    neighbours are distinct, and for m == 2 they coincide and the term vanishes.
    """
    vx = 0.0 if geometry.m == 2 else 2.0 / (4.0 * geometry.hx**2)
    vy = 0.0 if geometry.n == 2 else 2.0 / (4.0 * geometry.hy**2)
    return 2.0 / (geometry.cell_area * s) * (vx + vy)
