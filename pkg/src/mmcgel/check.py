"""Self-check: operator, energy, solver and controller invariants on a tiny grid."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from mmcgel.energy import ScalarEnergyFns, discrete_energy, hessian_action, var_deriv_Fc
from mmcgel.grid import (
    Ax,
    CellField,
    Dx,
    EdgeFieldEW,
    ax,
    dx,
    inner_ew,
    inner_h,
    laplacian,
    mean,
)
from mmcgel.models import RunConfig, TimeStepPolicy
from mmcgel.noise import NoiseLineage, keyed_generator, sample_noise
from mmcgel.params import GridGeometry
from mmcgel.solver import newton_operator, newton_solve, residual
from mmcgel.stepper import alpha_k, next_step_size, run

logger = logging.getLogger(__name__)

CHECK_GRID = GridGeometry(Lx=8.0, Ly=8.0, m=8, n=8)
# Stream for the random states used by the checks.
STREAM_CHECK = 0xC4EC


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _random_state(rng: np.random.Generator, g: GridGeometry, lo: float = 0.2, hi: float = 0.55) -> CellField:
    return CellField._wrap(rng.uniform(lo, hi, g.shape), g)


def _random_field(rng: np.random.Generator, g: GridGeometry) -> CellField:
    return CellField._wrap(rng.standard_normal(g.shape), g)


def check_adjoints(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    g = CHECK_GRID
    worst = 0.0
    for _ in range(20):
        phi = _random_field(rng, g)
        f = EdgeFieldEW._wrap(rng.standard_normal(g.shape), g)
        worst = max(
            worst,
            _rel(inner_ew(f, Ax(phi)), inner_h(ax(f), phi)),
            _rel(inner_ew(f, Dx(phi)), -inner_h(dx(f), phi)),
        )
    return CheckResult("operator adjoints", worst <= 1e-12, f"max rel. error {worst:.2e}")


def check_laplacian_symmetry(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    g = CHECK_GRID
    worst = 0.0
    for _ in range(20):
        a, b = _random_field(rng, g), _random_field(rng, g)
        worst = max(worst, _rel(inner_h(a, laplacian(b)), inner_h(laplacian(a), b)))
    return CheckResult("laplacian symmetry", worst <= 1e-12, f"max rel. error {worst:.2e}")


def check_gradient(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    """Finite-difference gradient of Fc against var_deriv_Fc plus the dropped constant."""
    p = config.model
    g = CHECK_GRID
    phi = _random_state(rng, g)
    psi = _random_field(rng, g)
    t = 1e-6
    fd = (discrete_energy(phi + t * psi, p).Fc - discrete_energy(phi - t * psi, p).Fc) / (2 * t)
    full = var_deriv_Fc(phi, p) + ScalarEnergyFns(p).dS_constant()
    err = _rel(fd, inner_h(full, psi))
    return CheckResult("energy gradient", err <= 1e-5, f"rel. error {err:.2e}")


def check_hessian(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    p = config.model
    g = CHECK_GRID
    phi = _random_state(rng, g)
    a, b = _random_field(rng, g), _random_field(rng, g)
    sym = _rel(inner_h(a, hessian_action(phi, b, p)), inner_h(hessian_action(phi, a, p), b))
    quad = inner_h(a, hessian_action(phi, a, p))
    ok = sym <= 1e-10 and quad >= -1e-10 * inner_h(a, a)
    return CheckResult("hessian symmetric and PSD", ok, f"asymmetry {sym:.2e}, (psi,H psi)={quad:.4g}")


def check_jacobian(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    p = config.model
    g = CHECK_GRID
    phi = _random_state(rng, g)
    prev = _random_state(rng, g)
    psi = _random_field(rng, g)
    s, t = 0.1, 1e-6
    fd = (residual(phi + t * psi, prev, s, 0.0, None, p) - residual(phi - t * psi, prev, s, 0.0, None, p)) / (2 * t)
    jv = newton_operator(phi, psi, s, p)
    err = (fd - jv).max_abs() / jv.max_abs()
    return CheckResult("newton operator", err <= 1e-5, f"rel. error {err:.2e}")


def check_noise(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    g = CHECK_GRID
    lineage = NoiseLineage(seed=config.run.seed)
    worst = max(abs(math.fsum(sample_noise(k, g, 0.01, lineage).values.ravel())) for k in range(50))
    again = sample_noise(7, g, 0.01, lineage).values
    same = np.array_equal(again, sample_noise(7, g, 0.01, lineage).values)
    return CheckResult("noise conservative and reproducible", worst <= 1e-10 and same, f"max |sum xi| {worst:.2e}")


def check_step(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    """One deterministic solve at several step sizes: energy decays, mass stays."""
    p = replace(config.model, epsilon=0.0) if config.model.epsilon else config.model
    phi = _random_state(rng, CHECK_GRID, 0.45, 0.75)
    notes = []
    ok = True
    for s in (0.001, 0.1, 1.0):
        nxt, _ = newton_solve(phi, s, 0.0, None, p, config.solver)
        f0 = discrete_energy(phi, p).F
        f1 = discrete_energy(nxt, p).F
        drift = abs(mean(nxt) - mean(phi))
        ok &= f1 <= f0 + 1e-10 * max(1.0, abs(f0)) and drift <= 1e-11
        notes.append(f"s={s:g}: dF={f1 - f0:.3e} dmass={drift:.1e}")
    return CheckResult("energy decay and mass per step", ok, "; ".join(notes))


def check_controller(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    policy = TimeStepPolicy(mode="adaptive")
    ok = (
        alpha_k(0.0, policy) == policy.alpha_min
        and math.isclose(alpha_k(-1.0, policy), 1.1e6)
        and alpha_k(7.0, policy) == policy.alpha_min
        and next_step_size(0.0, 1e5, policy) == policy.s_max
        and next_step_size(1e9, 1e5, policy) == policy.s_min
        and math.isclose(next_step_size(-0.01, 1e5, policy), 0.1 / math.sqrt(11.0))
    )
    return CheckResult("step controller formulas", ok, "alpha_k and next_step_size examples")


def check_run(config: RunConfig, rng: np.random.Generator) -> CheckResult:
    """A short constant-state run stays a fixed point."""
    small = replace(
        config,
        grid=CHECK_GRID,
        model=replace(config.model, epsilon=0.0) if config.model.epsilon else config.model,
        time=TimeStepPolicy(mode="adaptive", T=0.3),
        run=replace(config.run, snapshot_times=()),
    )
    traj = run(small, phi0=CellField.constant(CHECK_GRID, 0.3))
    ok = all(r.Uprime == 0.0 and (r.k == 0 or r.s == small.time.s_max) for r in traj.records)
    return CheckResult("uniform state fixed point", ok, f"{traj.steps} steps at s_max")


CHECKS: tuple[Callable[[RunConfig, np.random.Generator], CheckResult], ...] = (
    check_adjoints,
    check_laplacian_symmetry,
    check_gradient,
    check_hessian,
    check_jacobian,
    check_noise,
    check_step,
    check_controller,
    check_run,
)


def run_checks(config: RunConfig) -> list[CheckResult]:
    """Run every check; a check that raises counts as a failure."""
    rng = keyed_generator(config.run.seed, STREAM_CHECK)
    results = []
    for check in CHECKS:
        try:
            result = check(config, rng)
        except Exception as e:
            result = CheckResult(check.__name__.removeprefix("check_"), False, f"{type(e).__name__}: {e}")
        logger.debug(f"{result.name}: {'PASS' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results
