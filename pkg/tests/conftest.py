"""Shared fixtures."""

from pathlib import Path
from typing import Callable

import numpy as np
import pytest
import yaml

from mmcgel.grid import CellField
from mmcgel.params import GridGeometry, ModelParams, derive_params


@pytest.fixture
def params() -> ModelParams:
    """Hydrogel constants used throughout the experiments."""
    return derive_params(M=0.16, N=4.34, chi=2.37)


@pytest.fixture
def grid8() -> GridGeometry:
    return GridGeometry(Lx=8.0, Ly=8.0, m=8, n=8)


@pytest.fixture
def grid16() -> GridGeometry:
    return GridGeometry(Lx=16.0, Ly=16.0, m=16, n=16)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def make_state(rng) -> Callable[..., CellField]:
    """Random in-domain concentration field."""

    def make(geometry: GridGeometry, lo: float = 0.2, hi: float = 0.6) -> CellField:
        return CellField(rng.uniform(lo, hi, geometry.shape), geometry)

    return make


@pytest.fixture
def make_field(rng) -> Callable[[GridGeometry], CellField]:
    """Random standard-normal periodic field."""

    def make(geometry: GridGeometry) -> CellField:
        return CellField(rng.standard_normal(geometry.shape), geometry)

    return make


@pytest.fixture
def write_config(tmp_path) -> Callable[[dict | str], Path]:
    """Write a YAML run configuration and return its path."""
    counter = iter(range(1000))

    def write(data: dict | str) -> Path:
        path = tmp_path / f"config_{next(counter)}.yaml"
        text = data if isinstance(data, str) else yaml.safe_dump(data, sort_keys=False)
        path.write_text(text, encoding="utf-8")
        return path

    return write
