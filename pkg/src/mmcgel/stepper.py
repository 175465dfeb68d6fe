"""Time integration, the adaptive step controller, ensembles and mesh studies."""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from mmcgel.energy import EnergyReport, ScalarEnergyFns, chemical_potential, discrete_energy
from mmcgel.grid import CellField, Dx, Dy, inner_ew, inner_ns, mean, midline_profile
from mmcgel.models import InitialCondition, RunConfig, StepRecord, TimeStepPolicy
from mmcgel.noise import STREAM_INITIAL, NoiseLineage, keyed_generator, sample_noise
from mmcgel.params import GridGeometry, ParameterError
from mmcgel.solver import SolverError, newton_solve

logger = logging.getLogger(__name__)

# Relative slack when comparing accumulated times against T and snapshot times.
TIME_EPS = 1e-9


class SimulationError(RuntimeError):
    """A run stopped early; carries the partial trajectory and failing step."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None, step: int | None = None):
        super().__init__(message)
        self.trajectory = trajectory
        self.step = step


class EnergyIncreaseError(SimulationError):
    """Deterministic energy rose by more than the configured tolerance."""

    pass


class EnsembleError(SimulationError):
    """An ensemble member failed."""

    def __init__(self, message: str, sample: int, cause: SimulationError | None = None):
        super().__init__(
            message,
            trajectory=cause.trajectory if cause else None,
            step=cause.step if cause else None,
        )
        self.sample = sample


class RunObserver(Protocol):
    """Receives records and snapshots as a run produces them."""

    def on_record(self, record: StepRecord) -> None: ...

    def on_snapshot(self, snapshot: "Snapshot") -> None: ...


@dataclass(frozen=True)
class Snapshot:
    """Field captured at the first step whose time reaches a scheduled time."""

    scheduled: float
    t: float
    k: int
    phi: CellField


@dataclass
class Trajectory:
    """Records, snapshots and terminal state of one run."""

    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    final: CellField | None = None
    status: str = "running"
    sample: int = 0
    regime_switch_step: int | None = None

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.F for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def steps(self) -> int:
        return max(len(self.records) - 1, 0)


# Energy-derivative estimators and the step controller


def energy_derivative(mu: CellField) -> float:
    """U' = -([D_x mu, D_x mu]_ew + [D_y mu, D_y mu]_ns), never positive."""
    gx = Dx(mu)
    gy = Dy(mu)
    return -(inner_ew(gx, gx) + inner_ns(gy, gy))


def second_derivative(u1: float, u1_prev: float, s: float) -> float:
    """Backward difference (U'_k - U'_{k-1}) / s_k."""
    return (u1 - u1_prev) / s


def alpha_k(u2: float, policy: TimeStepPolicy) -> float:
    """Regime-1 weight: alpha_min if U'' >= 0, else alpha_min - A U''."""
    if u2 >= 0:
        return policy.alpha_min
    return policy.alpha_min - policy.A * u2


def next_step_size(u1: float, alpha: float, policy: TimeStepPolicy) -> float:
    """max(s_min, s_max / sqrt(1 + alpha U'^2)), clamped to [s_min, s_max]."""
    s = policy.s_max / math.sqrt(1.0 + alpha * u1 * u1)
    return min(policy.s_max, max(policy.s_min, s))


class RegimeLatch:
    """One-way switch to the large-step regime after the sharp energy decay.

    The latch arms once |U'| exceeds the threshold and engages the first
    time |U'| falls below it afterwards. It never disengages.
    """

    def __init__(self, threshold: float):
        self.threshold = threshold
        self.armed = False
        self.engaged = False

    def observe(self, u1: float) -> bool:
        """Feed U'; returns True only on the call that engages the latch."""
        if self.engaged:
            return False
        if abs(u1) > self.threshold:
            self.armed = True
        elif self.armed and abs(u1) < self.threshold:
            self.engaged = True
            return True
        return False

    @property
    def regime(self) -> int:
        return 2 if self.engaged else 1


# Initial data


def initial_condition(spec: InitialCondition, geometry: GridGeometry, seed: int) -> CellField:
    """Build the initial concentration field.

    ``disturbed_uniform`` adds i.i.d. uniform noise on [-amplitude, amplitude]
    drawn from a keyed stream separate from the noise stream.
    """
    if spec.kind == "uniform":
        return CellField.constant(geometry, spec.base)
    rng = keyed_generator(seed, STREAM_INITIAL)
    disturbance = rng.uniform(-spec.amplitude, spec.amplitude, size=geometry.shape)
    return CellField._wrap(spec.base + disturbance, geometry)


def restrict_initial(phi: CellField, coarse: GridGeometry) -> CellField:
    """Subsample a fine field at the fine cell nearest each coarse centre.

    Raises:
        ParameterError: If the coarse grid does not divide the fine grid
    """
    fine = phi.geometry
    if (fine.Lx, fine.Ly) != (coarse.Lx, coarse.Ly):
        raise ParameterError("grid", "restriction needs equal domain sizes")
    if fine.m % coarse.m or fine.n % coarse.n:
        raise ParameterError(
            "grid", f"{coarse.m}x{coarse.n} does not divide {fine.m}x{fine.n}"
        )
    rx = fine.m // coarse.m
    ry = fine.n // coarse.n
    ix = np.arange(coarse.m) * rx + (rx - 1) // 2
    iy = np.arange(coarse.n) * ry + (ry - 1) // 2
    return CellField._wrap(phi.values[np.ix_(ix, iy)].copy(), coarse)


def profile_difference(
    fine: tuple[np.ndarray, np.ndarray],
    coarse: tuple[np.ndarray, np.ndarray],
    period: float,
) -> float:
    """Grid-restricted L2 distance between two midline profiles.

    The fine profile is interpolated periodically onto the coarse centres.
    """
    x_f, p_f = fine
    x_c, p_c = coarse
    on_coarse = np.interp(x_c, x_f, p_f, period=period)
    h = period / len(x_c)
    return math.sqrt(h * math.fsum((on_coarse - p_c) ** 2))


def energy_rise(series: np.ndarray) -> float:
    """Largest excursion of an energy series above its starting value."""
    series = np.asarray(series)
    return float(np.max(series) - series[0])


# Single trajectory


def _snapshot_due(t: float, scheduled: float) -> bool:
    return t >= scheduled - TIME_EPS * max(1.0, abs(scheduled))


def run(
    config: RunConfig,
    phi0: CellField | None = None,
    observer: RunObserver | None = None,
    sample: int = 0,
) -> Trajectory:
    """Integrate from t = 0 to T.

    Args:
        config: Run configuration
        phi0: Initial field (built from ``config.initial`` if omitted)
        observer: Receives every record and snapshot as it is produced
        sample: Sample index used to key the noise stream

    Returns:
        Completed Trajectory

    Raises:
        SimulationError: On a solver failure (partial trajectory attached)
        EnergyIncreaseError: If a deterministic step raises the energy
        DomainError: If the initial field is outside (0, 1/rho)
        ParameterError: If adaptive stepping is combined with noise
    """
    p = config.model
    policy = config.time
    geometry = config.grid
    if config.stochastic and policy.adaptive:
        raise ParameterError("time.mode", "adaptive stepping unsupported with noise")

    phi = initial_condition(config.initial, geometry, config.run.seed) if phi0 is None else phi0
    ScalarEnergyFns(p).check_domain(phi.values)

    lineage = NoiseLineage(seed=config.run.seed, sample=sample)
    pending = sorted(set(config.run.snapshot_times))
    trajectory = Trajectory(sample=sample)
    latch = RegimeLatch(policy.switch_threshold)

    def emit(record: StepRecord, field_: CellField) -> None:
        trajectory.records.append(record)
        if observer is not None:
            observer.on_record(record)
        while pending and _snapshot_due(record.t, pending[0]):
            snap = Snapshot(scheduled=pending.pop(0), t=record.t, k=record.k, phi=field_)
            trajectory.snapshots.append(snap)
            logger.info(f"Snapshot t={snap.scheduled:g} taken at step {snap.k} (t={snap.t:.6g})")
            if observer is not None:
                observer.on_snapshot(snap)

    def choose_alpha(u1: float, u2: float) -> float | None:
        if not policy.adaptive:
            return None
        if latch.observe(u1):
            trajectory.regime_switch_step = k
            logger.info(f"Regime 2 engaged at step {k} (t={t:.6g}, U'={u1:.4g})")
        return policy.alpha_regime2 if latch.engaged else alpha_k(u2, policy)

    def next_s(u1: float, alpha: float | None) -> float:
        return policy.s_const if alpha is None else next_step_size(u1, alpha, policy)

    k = 0
    t = 0.0
    energy: EnergyReport = discrete_energy(phi, p)
    u1 = energy_derivative(chemical_potential(phi, phi, p))
    mass0 = mean(phi)
    alpha = choose_alpha(u1, 0.0)
    emit(
        StepRecord(
            k=0, t=0.0, s=0.0, F=energy.F, Fc=energy.Fc, Fe=energy.Fe,
            Uprime=u1, Udoubleprime=0.0, alpha=alpha, mass=mass0, regime=latch.regime,
        ),
        phi,
    )
    s = next_s(u1, alpha)
    t_end = policy.T * (1.0 - TIME_EPS)

    while t < t_end and (policy.max_steps is None or k < policy.max_steps):
        xi = sample_noise(k, geometry, s, lineage) if config.stochastic else None
        try:
            phi_new, report = newton_solve(phi, s, p.epsilon, xi, p, config.solver)
        except SolverError as e:
            trajectory.final = phi
            trajectory.status = "failed"
            raise SimulationError(
                f"step {k + 1} (s={s:g}) failed: {e}", trajectory=trajectory, step=k + 1
            ) from e

        new_energy = discrete_energy(phi_new, p)
        if not config.stochastic:
            slack = policy.energy_tolerance * max(1.0, abs(energy.F))
            if new_energy.F > energy.F + slack:
                trajectory.final = phi_new
                trajectory.status = "failed"
                raise EnergyIncreaseError(
                    f"energy rose from {energy.F!r} to {new_energy.F!r} at step {k + 1}",
                    trajectory=trajectory,
                    step=k + 1,
                )

        u1_new = energy_derivative(chemical_potential(phi_new, phi, p))
        u2 = second_derivative(u1_new, u1, s)
        k += 1
        t = k * s if not policy.adaptive else t + s
        alpha = choose_alpha(u1_new, u2)
        emit(
            StepRecord(
                k=k, t=t, s=s, F=new_energy.F, Fc=new_energy.Fc, Fe=new_energy.Fe,
                Uprime=u1_new, Udoubleprime=u2, alpha=alpha,
                newton_iters=report.newton_iters, gmres_iters=report.total_gmres_iters,
                damping_events=report.damping_events, final_step_norm=report.final_step_norm,
                final_residual_norm=report.final_residual_norm, mass=mean(phi_new),
                regime=latch.regime,
            ),
            phi_new,
        )
        logger.debug(
            f"step {k}: t={t:.6g} s={s:.4g} F={new_energy.F:.10g} U'={u1_new:.4g} "
            f"newton={report.newton_iters} gmres={report.total_gmres_iters}"
        )
        phi, energy, u1 = phi_new, new_energy, u1_new
        s = next_s(u1, alpha)

    trajectory.final = phi
    trajectory.status = "completed"
    return trajectory


# Ensembles


@dataclass
class EnsembleResult:
    trajectories: list[Trajectory]
    times: np.ndarray
    mean_energy: np.ndarray

    @property
    def rise(self) -> float:
        return energy_rise(self.mean_energy)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_ensemble(
    config: RunConfig,
    n_samples: int | None = None,
    workers: int | None = None,
    observer_factory: Callable[[int], RunObserver | None] | None = None,
) -> EnsembleResult:
    """Run independent stochastic samples and average their energy series.

    All samples start from the same initial field; they differ only in the
    sample index keying their noise. The mean is reduced in sample order
    after every sample has finished.

    Args:
        config: Stochastic constant-step configuration
        n_samples: Number of samples (``config.run.n_samples`` if omitted)
        workers: Thread count (``config.run.workers`` or available cores)
        observer_factory: Builds the observer for a given sample index

    Returns:
        EnsembleResult with the per-sample trajectories and mean energy

    Raises:
        ParameterError: If epsilon is zero or the time mode is adaptive
        EnsembleError: If any sample fails (lowest failing index reported)
    """
    if not config.stochastic:
        raise ParameterError("model.epsilon", "an ensemble needs epsilon > 0")
    if config.time.adaptive:
        raise ParameterError("time.mode", "adaptive stepping unsupported with noise")

    n = n_samples or config.run.n_samples
    workers = workers or config.run.workers or default_workers()
    phi0 = initial_condition(config.initial, config.grid, config.run.seed)
    logger.info(f"Ensemble: {n} samples on {min(workers, n)} worker(s)")

    def one(sample: int) -> Trajectory:
        observer = observer_factory(sample) if observer_factory else None
        traj = run(config, phi0=phi0, observer=observer, sample=sample)
        logger.info(f"Sample {sample} finished: {traj.steps} steps, F={traj.records[-1].F:.10g}")
        return traj

    with ThreadPoolExecutor(max_workers=min(workers, n)) as pool:
        futures = [pool.submit(one, i) for i in range(n)]
        trajectories = []
        for i, fut in enumerate(futures):
            try:
                trajectories.append(fut.result())
            except SimulationError as e:
                for other in futures[i + 1 :]:
                    other.cancel()
                raise EnsembleError(f"sample {i} failed: {e}", sample=i, cause=e) from e

    length = min(len(tr.records) for tr in trajectories)
    mean_energy = np.array(
        [math.fsum(tr.records[j].F for tr in trajectories) / n for j in range(length)]
    )
    times = trajectories[0].times[:length]
    return EnsembleResult(trajectories, times, mean_energy)


# Mesh studies


@dataclass
class MeshStudyEntry:
    geometry: GridGeometry
    trajectory: Trajectory
    profile: tuple[np.ndarray, np.ndarray]


@dataclass
class MeshStudyResult:
    entries: list[MeshStudyEntry]
    differences: list[float]  # between successive grids, coarse to fine

    @property
    def converging(self) -> bool:
        return all(b < a for a, b in zip(self.differences, self.differences[1:]))


def run_mesh_study(
    config: RunConfig,
    grids: tuple[tuple[int, int], ...] | None = None,
    observer_factory: Callable[[GridGeometry], RunObserver | None] | None = None,
) -> MeshStudyResult:
    """Repeat a run on several grids from shared fine-grid initial data.

    The initial field is generated on the finest grid and restricted to
    every other grid. Midline profiles of the final states are compared
    between successive grids.
    """
    grids = tuple(sorted(grids or config.mesh_study.grids))
    geometries = [replace(config.grid, m=m, n=n) for m, n in grids]
    finest = geometries[-1]
    phi_fine = initial_condition(config.initial, finest, config.run.seed)

    entries = []
    for geometry in geometries:
        logger.info(f"Mesh study: running {geometry.m}x{geometry.n}")
        phi0 = phi_fine if geometry == finest else restrict_initial(phi_fine, geometry)
        observer = observer_factory(geometry) if observer_factory else None
        traj = run(replace(config, grid=geometry), phi0=phi0, observer=observer)
        entries.append(MeshStudyEntry(geometry, traj, midline_profile(traj.final)))

    differences = [
        profile_difference(fine.profile, coarse.profile, config.grid.Lx)
        for coarse, fine in zip(entries, entries[1:])
    ]
    for (coarse, fine), d in zip(zip(entries, entries[1:]), differences):
        logger.info(
            f"Mesh study: |{coarse.geometry.m}x{coarse.geometry.n} - "
            f"{fine.geometry.m}x{fine.geometry.n}| = {d:.6e}"
        )
    return MeshStudyResult(entries, differences)
