"""Tests for time integration, the step controller, ensembles and mesh studies."""

import math
from dataclasses import replace

import numpy as np
import pytest

from mmcgel import stepper
from mmcgel.energy import EnergyReport
from mmcgel.grid import CellField
from mmcgel.models import InitialCondition, RunConfig, RunSettings, TimeStepPolicy
from mmcgel.params import GridGeometry, ModelParams, ParameterError
from mmcgel.solver import NewtonIterationError
from mmcgel.stepper import (
    EnergyIncreaseError,
    EnsembleError,
    RegimeLatch,
    SimulationError,
    alpha_k,
    energy_derivative,
    energy_rise,
    initial_condition,
    next_step_size,
    profile_difference,
    restrict_initial,
    run,
    run_ensemble,
    run_mesh_study,
    second_derivative,
)

POLICY = TimeStepPolicy(mode="adaptive")
MODEL = ModelParams(chi=2.37, M=0.16, N=4.34)


def small_config(geometry: GridGeometry, **time) -> RunConfig:
    return RunConfig(
        model=MODEL,
        grid=geometry,
        time=TimeStepPolicy(**{"T": 0.05, "s_const": 0.01, **time}),
        initial=InitialCondition(base=0.4, amplitude=0.05),
        run=RunSettings(seed=7),
    )


def noisy_config(geometry: GridGeometry, seed: int = 3) -> RunConfig:
    return RunConfig(
        model=replace(MODEL, epsilon=1e-3),
        grid=geometry,
        time=TimeStepPolicy(T=0.03, s_const=0.01),
        initial=InitialCondition(base=0.4, amplitude=0.05),
        run=RunSettings(seed=seed, n_samples=3, workers=2),
    )


def test_energy_derivative_of_constant(grid8):
    assert energy_derivative(CellField.constant(grid8, 1.7)) == 0.0


def test_energy_derivative_never_positive(grid8, make_field):
    for _ in range(20):
        assert energy_derivative(make_field(grid8)) <= 0.0


def test_energy_derivative_of_cosine():
    g = GridGeometry(Lx=10.0, Ly=6.0, m=20, n=12)
    mu = CellField.from_function(g, lambda x, y: np.cos(2 * np.pi * x / g.Lx))
    expected = -g.Lx * g.Ly * (2.0 / g.hx**2) * math.sin(math.pi * g.hx / g.Lx) ** 2
    assert energy_derivative(mu) == pytest.approx(expected, rel=1e-12)


def test_second_derivative():
    assert second_derivative(-2.0, -1.0, 0.5) == -2.0


def test_alpha_k():
    assert alpha_k(0.0, POLICY) == 1e5
    assert alpha_k(7.0, POLICY) == 1e5
    assert alpha_k(-1.0, POLICY) == pytest.approx(1.1e6)


def test_next_step_size():
    assert next_step_size(0.0, 1e5, POLICY) == POLICY.s_max
    assert next_step_size(1e9, 1e5, POLICY) == POLICY.s_min
    assert next_step_size(-0.01, 1e5, POLICY) == pytest.approx(0.1 / math.sqrt(11.0), rel=1e-14)
    assert POLICY.s_min <= next_step_size(-0.5, 1e5, POLICY) <= POLICY.s_max


def test_latch_needs_to_arm_before_engaging():
    latch = RegimeLatch(3.0)
    assert not latch.observe(1.0)
    assert not latch.armed
    assert latch.regime == 1


def test_latch_engages_once_after_sharp_decay():
    latch = RegimeLatch(3.0)
    assert not latch.observe(-5.0)
    assert latch.armed
    assert not latch.observe(-3.0)  # at the threshold: not below it
    assert latch.observe(-2.0)
    assert latch.regime == 2
    assert not latch.observe(-10.0)
    assert latch.engaged


def test_uniform_initial_condition(grid8):
    phi = initial_condition(InitialCondition(kind="uniform", base=0.3), grid8, seed=1)
    assert np.all(phi.values == 0.3)


def test_disturbed_initial_condition_is_bounded_and_keyed(grid16):
    spec = InitialCondition(base=0.6, amplitude=0.15)
    a = initial_condition(spec, grid16, seed=4)
    assert np.all(np.abs(a.values - 0.6) <= 0.15)
    np.testing.assert_array_equal(a.values, initial_condition(spec, grid16, seed=4).values)
    assert not np.array_equal(a.values, initial_condition(spec, grid16, seed=5).values)


def test_restrict_by_two():
    fine = GridGeometry(Lx=4.0, Ly=4.0, m=4, n=4)
    coarse = GridGeometry(Lx=4.0, Ly=4.0, m=2, n=2)
    phi = CellField(np.arange(16.0).reshape(4, 4), fine)
    np.testing.assert_array_equal(restrict_initial(phi, coarse).values, [[0.0, 2.0], [8.0, 10.0]])


def test_restrict_by_three():
    fine = GridGeometry(Lx=6.0, Ly=6.0, m=6, n=6)
    coarse = GridGeometry(Lx=6.0, Ly=6.0, m=2, n=2)
    phi = CellField(np.arange(36.0).reshape(6, 6), fine)
    np.testing.assert_array_equal(restrict_initial(phi, coarse).values, [[7.0, 10.0], [25.0, 28.0]])


def test_restrict_needs_divisible_grids(grid8):
    with pytest.raises(ParameterError):
        restrict_initial(CellField.zeros(grid8), GridGeometry(Lx=8.0, Ly=8.0, m=3, n=4))


def test_uniform_adaptive_run_stays_at_largest_step(grid8):
    config = replace(
        small_config(grid8, mode="adaptive", T=0.3),
        initial=InitialCondition(kind="uniform", base=0.3),
    )
    traj = run(config)
    assert traj.status == "completed"
    assert traj.steps == 3
    assert all(r.s == 0.1 for r in traj.records[1:])
    assert all(r.Uprime == 0.0 for r in traj.records)
    np.testing.assert_array_equal(traj.final.values, 0.3)


def test_constant_mode_run(grid16):
    traj = run(small_config(grid16))
    assert traj.steps == 5
    assert traj.records[0].alpha is None
    assert traj.records[3].t == 3 * 0.01
    energies = traj.energies
    assert np.all(np.diff(energies) <= 1e-10 * abs(energies[0]))
    masses = [r.mass for r in traj.records]
    assert max(masses) - min(masses) <= 1e-11
    assert all(r.newton_iters >= 1 for r in traj.records[1:])


def test_snapshot_at_first_crossing(grid8):
    config = replace(small_config(grid8), run=RunSettings(seed=7, snapshot_times=(0.025, 0.0)))
    traj = run(config)
    assert [(s.scheduled, s.k) for s in traj.snapshots] == [(0.0, 0), (0.025, 3)]


def test_max_steps(grid8):
    traj = run(small_config(grid8, T=1.0, max_steps=3))
    assert traj.steps == 3


def test_adaptive_noise_rejected(grid8):
    config = replace(noisy_config(grid8), time=POLICY)
    with pytest.raises(ParameterError):
        run(config)


def test_energy_increase_stops_deterministic_run(grid8, monkeypatch):
    real = stepper.discrete_energy
    calls = iter(range(100))

    def rising(phi, p):
        e = real(phi, p)
        bump = float(next(calls))
        return EnergyReport(F=e.F + bump, Fc=e.Fc + bump, Fe=e.Fe)

    monkeypatch.setattr(stepper, "discrete_energy", rising)
    with pytest.raises(EnergyIncreaseError) as exc:
        run(small_config(grid8))
    assert exc.value.step == 1
    assert exc.value.trajectory.status == "failed"
    assert len(exc.value.trajectory.records) == 1


def test_solver_failure_is_wrapped(grid8, monkeypatch):
    def failing(*args, **kwargs):
        raise NewtonIterationError("no convergence")

    monkeypatch.setattr(stepper, "newton_solve", failing)
    with pytest.raises(SimulationError) as exc:
        run(small_config(grid8))
    assert exc.value.step == 1
    assert isinstance(exc.value.__cause__, NewtonIterationError)
    assert exc.value.trajectory.final is not None


def test_ensemble_of_one_matches_run(grid8):
    config = noisy_config(grid8)
    result = run_ensemble(config, n_samples=1)
    np.testing.assert_array_equal(result.mean_energy, run(config).energies)


def test_ensemble_reproducible_and_independent_of_workers(grid8):
    config = noisy_config(grid8)
    a = run_ensemble(config)
    b = run_ensemble(config, workers=1)
    np.testing.assert_array_equal(a.mean_energy, b.mean_energy)
    assert len(a.trajectories) == 3
    assert not np.array_equal(a.trajectories[0].energies, a.trajectories[1].energies)
    np.testing.assert_allclose(a.times, [0.0, 0.01, 0.02, 0.03], rtol=1e-14)


def test_ensemble_needs_noise(grid8):
    with pytest.raises(ParameterError):
        run_ensemble(small_config(grid8))


def test_ensemble_reports_failing_sample(grid8, monkeypatch):
    real = stepper.run

    def flaky(config, phi0=None, observer=None, sample=0):
        if sample == 1:
            raise SimulationError("diverged", step=2)
        return real(config, phi0=phi0, observer=observer, sample=sample)

    monkeypatch.setattr(stepper, "run", flaky)
    with pytest.raises(EnsembleError) as exc:
        run_ensemble(noisy_config(grid8))
    assert exc.value.sample == 1
    assert exc.value.step == 2


def test_energy_rise():
    assert energy_rise(np.array([3.0, 2.0, 4.0, 1.0])) == 1.0
    assert energy_rise(np.array([3.0, 2.0, 1.0])) == 0.0


def test_profile_difference():
    x_fine = np.arange(8) + 0.5
    x_coarse = (np.arange(4) + 0.5) * 2.0
    assert profile_difference((x_fine, np.ones(8)), (x_coarse, np.ones(4)), 8.0) == 0.0
    d = profile_difference((x_fine, np.ones(8)), (x_coarse, np.full(4, 0.5)), 8.0)
    assert d == pytest.approx(math.sqrt(2.0))


def test_small_mesh_study():
    config = small_config(GridGeometry(Lx=8.0, Ly=8.0, m=16, n=16), T=0.02)
    result = run_mesh_study(config, grids=((16, 16), (4, 4), (8, 8)))
    assert [e.geometry.m for e in result.entries] == [4, 8, 16]
    assert len(result.differences) == 2
    assert all(math.isfinite(d) and d >= 0 for d in result.differences)
    assert all(e.trajectory.steps == 2 for e in result.entries)
