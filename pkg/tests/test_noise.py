"""Tests for the discrete conservative noise."""

import math

import numpy as np
import pytest

from mmcgel.grid import CellField, mean
from mmcgel.noise import (
    NoiseDraw,
    NoiseError,
    NoiseLineage,
    draw_normals,
    noise_from_draw,
    sample_noise,
    stencil_variance,
)
from mmcgel.params import GridGeometry

GRID = GridGeometry(Lx=8.0, Ly=8.0, m=8, n=8)


def collect(draws: int, s: float = 0.01, seed: int = 5) -> np.ndarray:
    lineage = NoiseLineage(seed=seed)
    return np.stack([sample_noise(k, GRID, s, lineage).values for k in range(draws)])


def test_zero_draw_gives_zero_noise():
    zero = CellField.zeros(GRID)
    draw = NoiseDraw(r1=zero, r2=zero, lineage=NoiseLineage(seed=0))
    assert noise_from_draw(draw, 0.01).max_abs() == 0.0


def test_every_draw_sums_to_zero():
    lineage = NoiseLineage(seed=42, sample=3)
    for k in range(200):
        assert abs(math.fsum(sample_noise(k, GRID, 0.01, lineage).values.ravel())) <= 1e-13


def test_same_lineage_is_bit_identical():
    a = sample_noise(17, GRID, 0.001, NoiseLineage(seed=9, sample=2))
    b = sample_noise(17, GRID, 0.001, NoiseLineage(seed=9, sample=2, step=99))
    np.testing.assert_array_equal(a.values, b.values)


def test_distinct_keys_give_distinct_draws():
    base = sample_noise(4, GRID, 0.01, NoiseLineage(seed=1)).values
    assert not np.array_equal(base, sample_noise(5, GRID, 0.01, NoiseLineage(seed=1)).values)
    assert not np.array_equal(base, sample_noise(4, GRID, 0.01, NoiseLineage(seed=1, sample=1)).values)
    assert not np.array_equal(base, sample_noise(4, GRID, 0.01, NoiseLineage(seed=2)).values)
    draw = draw_normals(GRID, NoiseLineage(seed=1, step=4))
    assert not np.array_equal(draw.r1.values, draw.r2.values)


def test_noise_scales_with_step():
    lineage = NoiseLineage(seed=3)
    coarse = sample_noise(0, GRID, 0.04, lineage)
    fine = sample_noise(0, GRID, 0.01, lineage)
    np.testing.assert_allclose(fine.values, 2.0 * coarse.values, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("s", [0.0, -0.01])
def test_non_positive_step_rejected(s):
    with pytest.raises(NoiseError):
        sample_noise(0, GRID, s, NoiseLineage(seed=0))


def test_stencil_variance_closed_form():
    assert stencil_variance(GRID, 0.01) == pytest.approx(2.0 / 0.01 * (0.5 + 0.5))
    narrow = GridGeometry(Lx=1.0, Ly=8.0, m=2, n=8)
    assert stencil_variance(narrow, 1.0) == pytest.approx(2.0 / 0.5 * 0.5)
    zero = CellField.zeros(narrow)
    draw = draw_normals(narrow, NoiseLineage(seed=0))
    # the x-stencil cancels on a two-cell period
    only_x = NoiseDraw(r1=draw.r1, r2=zero, lineage=draw.lineage)
    assert noise_from_draw(only_x, 1.0).max_abs() == 0.0


def test_pooled_statistics():
    samples = collect(20000)
    expected = stencil_variance(GRID, 0.01)
    assert samples.var(axis=0).mean() == pytest.approx(expected, rel=0.03)
    stderr = math.sqrt(expected / samples.shape[0])
    assert np.all(np.abs(samples.mean(axis=0)) < 4.5 * stderr)


def test_independent_across_steps():
    cell = (3, 3)
    draws = 2000
    now = np.empty(draws)
    later = np.empty(draws)
    for sample in range(draws):
        lineage = NoiseLineage(seed=11, sample=sample)
        now[sample] = sample_noise(6, GRID, 0.01, lineage).values[cell]
        later[sample] = sample_noise(7, GRID, 0.01, lineage).values[cell]
    assert abs(np.corrcoef(now, later)[0, 1]) <= 4.0 / math.sqrt(draws)


@pytest.mark.slow
def test_per_cell_statistics_full():
    samples = collect(100000)
    expected = stencil_variance(GRID, 0.01)
    stderr = math.sqrt(expected / samples.shape[0])
    assert np.all(np.abs(samples.mean(axis=0)) < 4.0 * stderr)
    np.testing.assert_allclose(samples.var(axis=0), expected, rtol=0.03)
    assert max(abs(math.fsum(draw.ravel())) for draw in samples) <= 1e-13
