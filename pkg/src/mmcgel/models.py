"""Data models for mmcgel runs: configuration sections and run-time records."""

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

from mmcgel.energy import DOMAIN_GUARD
from mmcgel.params import GridGeometry, ModelParams, ParameterError

TimeMode = Literal["constant", "adaptive"]
InitialKind = Literal["disturbed_uniform", "uniform"]


def _positive(name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(name, f"must be > 0 (got {value!r})")


def _positive_int(name: str, value: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ParameterError(name, f"must be an integer >= 1 (got {value!r})")


@dataclass(frozen=True)
class NewtonSettings:
    """Tolerances and limits of one Newton-GMRES step solve (immutable)."""

    tol_newton: float = 1e-9  # max-norm of the Newton step
    max_newton_iters: int = 50
    tol_gmres: float = 1e-8  # relative 2-norm residual
    gmres_restart: int = 40
    max_gmres_restarts: int = 25
    domain_guard: float = DOMAIN_GUARD

    def __post_init__(self) -> None:
        for name in ("tol_newton", "tol_gmres", "domain_guard"):
            _positive(name, getattr(self, name))
        for name in ("max_newton_iters", "gmres_restart", "max_gmres_restarts"):
            _positive_int(name, getattr(self, name))


@dataclass(frozen=True)
class TimeStepPolicy:
    """Time-step selection and the integration horizon (immutable).

    In constant mode every step is ``s_const``. In adaptive mode the next
    step is ``max(s_min, s_max / sqrt(1 + alpha U'^2))`` where alpha comes
    from the backward-difference U'' until the regime-2 latch engages, and
    is ``alpha_regime2`` afterwards.
    """

    mode: TimeMode = "constant"
    T: float = 1.0
    s_const: float = 0.001
    s_min: float = 0.001
    s_max: float = 0.1
    alpha_min: float = 1e5
    A: float = 1e6
    switch_threshold: float = 3.0
    alpha_regime2: float = 100.0
    max_steps: int | None = None
    energy_tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if self.mode not in ("constant", "adaptive"):
            raise ParameterError("mode", f"must be 'constant' or 'adaptive' (got {self.mode!r})")
        for name in ("T", "s_const", "s_min", "s_max", "alpha_min", "switch_threshold", "alpha_regime2"):
            _positive(name, getattr(self, name))
        if not math.isfinite(self.A) or self.A < 0:
            raise ParameterError("A", f"must be >= 0 (got {self.A!r})")
        if self.s_min > self.s_max:
            raise ParameterError("s_min", f"must be <= s_max ({self.s_min!r} > {self.s_max!r})")
        if self.max_steps is not None:
            _positive_int("max_steps", self.max_steps)
        if not math.isfinite(self.energy_tolerance) or self.energy_tolerance < 0:
            raise ParameterError("energy_tolerance", f"must be >= 0 (got {self.energy_tolerance!r})")

    @property
    def adaptive(self) -> bool:
        return self.mode == "adaptive"


@dataclass(frozen=True)
class InitialCondition:
    """Initial concentration: a uniform base plus an optional random disturbance."""

    kind: InitialKind = "disturbed_uniform"
    base: float = 0.6
    amplitude: float = 0.15  # disturbance drawn uniformly from [-amplitude, amplitude]

    def __post_init__(self) -> None:
        if self.kind not in ("disturbed_uniform", "uniform"):
            raise ParameterError(
                "kind", f"must be 'disturbed_uniform' or 'uniform' (got {self.kind!r})"
            )
        _positive("base", self.base)
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise ParameterError("amplitude", f"must be >= 0 (got {self.amplitude!r})")


@dataclass(frozen=True)
class RunSettings:
    """Seed, sampling and output options (immutable)."""

    seed: int = 0
    n_samples: int = 1
    snapshot_times: tuple[float, ...] = field(default_factory=tuple)
    output_dir: str | None = None
    workers: int | None = None  # None = available cores

    def __post_init__(self) -> None:
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ParameterError("seed", f"must be an integer >= 0 (got {self.seed!r})")
        _positive_int("n_samples", self.n_samples)
        for t in self.snapshot_times:
            if not math.isfinite(t) or t < 0:
                raise ParameterError("snapshot_times", f"must be finite and >= 0 (got {t!r})")
        if self.workers is not None:
            _positive_int("workers", self.workers)


@dataclass(frozen=True)
class MeshStudySettings:
    """Grids of a mesh-refinement study, as (m, n) pairs."""

    grids: tuple[tuple[int, int], ...] = ((32, 32), (64, 64))

    def __post_init__(self) -> None:
        if len(self.grids) < 2:
            raise ParameterError("grids", "a mesh study needs at least two grids")


@dataclass(frozen=True)
class RunConfig:
    """Top-level run configuration (immutable)."""

    model: ModelParams = field(default_factory=lambda: ModelParams(chi=2.37, M=0.16, N=4.34))
    grid: GridGeometry = field(default_factory=lambda: GridGeometry(Lx=50.0, Ly=50.0, m=64, n=64))
    time: TimeStepPolicy = field(default_factory=TimeStepPolicy)
    initial: InitialCondition = field(default_factory=InitialCondition)
    solver: NewtonSettings = field(default_factory=NewtonSettings)
    run: RunSettings = field(default_factory=RunSettings)
    mesh_study: MeshStudySettings = field(default_factory=MeshStudySettings)

    @property
    def stochastic(self) -> bool:
        return self.model.epsilon > 0


# Runtime records


@dataclass(frozen=True)
class StepSolveReport:
    """Ledger of one Newton-GMRES step solve."""

    newton_iters: int
    total_gmres_iters: int
    final_step_norm: float
    final_residual_norm: float
    damping_events: int


@dataclass(frozen=True)
class StepRecord:
    """State at t_k and the diagnostics of the step that produced it.

    ``s`` is the size of the step from t_{k-1} to t_k (0 for k = 0).
    ``alpha`` is the controller weight used to choose the next step; it is
    None in constant-step mode.
    """

    k: int
    t: float
    s: float
    F: float
    Fc: float
    Fe: float
    Uprime: float
    Udoubleprime: float
    alpha: float | None
    newton_iters: int = 0
    gmres_iters: int = 0
    damping_events: int = 0
    final_step_norm: float = 0.0
    final_residual_norm: float = 0.0
    mass: float = 0.0
    regime: int = 1

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return asdict(self)


@dataclass
class RunManifest:
    """Provenance of a run, written as JSON at run end."""

    command: str
    config: dict
    code_version: str
    rng_identity: str
    started_at: str
    finished_at: str = ""
    status: str = "running"
    outputs: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    error: dict | None = None

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return asdict(self)
