"""Batch runner: sets up logging and writers, executes a run and writes its manifest."""

import logging
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from mmcgel import __version__
from mmcgel.config_yaml import YAMLConfig, config_to_dict, resolve_output_dir
from mmcgel.export import (
    EnergyCSVWriter,
    GraymapWriter,
    ProfileCSVWriter,
    SnapshotCSVWriter,
    WriterError,
    WriterManager,
    write_manifest,
    write_series_csv,
)
from mmcgel.models import RunConfig, RunManifest
from mmcgel.noise import RNG_IDENTITY
from mmcgel.params import GridGeometry
from mmcgel.stepper import (
    energy_rise,
    run,
    run_ensemble,
    run_mesh_study,
)

logger = logging.getLogger(__name__)


def setup_logging(quiet: bool = False, verbose: bool = False) -> None:
    """Configure the root logger once for the CLI."""
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class SimulationRunner:
    """Runs one CLI command against an output directory."""

    def __init__(
        self,
        config_path: Path | str,
        seed: int | None = None,
        output_dir: str | None = None,
        workers: int | None = None,
    ):
        """Initialize runner.

        Args:
            config_path: YAML run configuration
            seed: Overrides run.seed
            output_dir: Overrides run.output_dir and $MMCGEL_OUTPUT_DIR
            workers: Overrides run.workers for ensembles

        Raises:
            ConfigError: If the configuration is invalid
        """
        self.yaml_config = YAMLConfig(config_path)
        config = self.yaml_config.load()
        run_settings = config.run
        if seed is not None:
            run_settings = replace(run_settings, seed=seed)
        if workers is not None:
            run_settings = replace(run_settings, workers=workers)
        self.output_dir = resolve_output_dir(config, output_dir)
        self.config: RunConfig = replace(
            config, run=replace(run_settings, output_dir=str(self.output_dir))
        )
        self.manifest: RunManifest | None = None

    def _start(self, command: str) -> RunManifest:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            command=command,
            config=config_to_dict(self.config),
            code_version=f"mmcgel {__version__}",
            rng_identity=RNG_IDENTITY,
            started_at=_now(),
        )
        resolved = YAMLConfig(self.output_dir / "config.yaml").save(self.config)
        self.manifest.outputs[resolved.name] = "yaml"

        p = self.config.model
        g = self.config.grid
        logger.info(f"mmcgel {__version__}: {command}")
        logger.info("=" * 40)
        logger.info(f"Model: chi={p.chi} M={p.M} N={p.N} epsilon={p.epsilon} (rho={p.rho:.6g})")
        logger.info(f"Grid: {g.m}x{g.n} on (0,{g.Lx})x(0,{g.Ly})")
        logger.info(f"Time: {self.config.time.mode}, T={self.config.time.T}, seed={self.config.run.seed}")
        return self.manifest

    def _index(self, paths: list[Path]) -> None:
        for path in paths:
            rel = path.relative_to(self.output_dir).as_posix()
            self.manifest.outputs[rel] = path.suffix.lstrip(".")

    def _finish(self, status: str, error: Exception | None = None) -> Path:
        self.manifest.status = status
        self.manifest.finished_at = _now()
        if error is not None:
            self.manifest.error = {"type": type(error).__name__, "message": str(error)}
            step = getattr(error, "step", None)
            if step is not None:
                self.manifest.error["step"] = step
            sample = getattr(error, "sample", None)
            if sample is not None:
                self.manifest.error["sample"] = sample
            failures = getattr(error, "failures", None)
            if failures:
                self.manifest.error["writers"] = [
                    {"writer": name, "message": message} for name, message in failures
                ]
        path = write_manifest(self.manifest, self.output_dir / "manifest.json")
        logger.info(f"Manifest: {path}")
        return path

    def _check_writers(self, managers: list[WriterManager]) -> None:
        """Fail the run if any writer dropped output.

        Raises:
            WriterError: After the manifest is written with status failed
        """
        failures = [failure for manager in managers for failure in manager.failures]
        if failures:
            error = WriterError(failures)
            logger.error(f"Outputs incomplete: {error}")
            self._finish("failed", error)
            raise error

    def _trajectory_writers(self, directory: Path, snapshots: bool = True) -> WriterManager:
        manager = WriterManager()
        manager.add_writer(EnergyCSVWriter(directory / "energy.csv", directory / "ledger.csv"))
        if snapshots:
            manager.add_writer(SnapshotCSVWriter(directory / "snapshots"))
            manager.add_writer(GraymapWriter(directory / "snapshots", self.config.model.phi_max))
        return manager

    def run_single(self) -> None:
        """Single trajectory.

        Raises:
            SimulationError: After partial outputs and the manifest are written
            WriterError: If a writer failed
        """
        self._start("run")
        started = time.perf_counter()
        manager = self._trajectory_writers(self.output_dir)
        try:
            with manager:
                trajectory = run(self.config, observer=manager)
        except Exception as e:
            logger.error(f"Run aborted: {e}")
            self._index(manager.written)
            self._finish("failed", e)
            raise
        self._index(manager.written)
        self._check_writers([manager])

        last = trajectory.records[-1]
        self.manifest.summary = {
            "steps": trajectory.steps,
            "final_t": last.t,
            "final_F": last.F,
            "regime_switch_step": trajectory.regime_switch_step,
            "wall_seconds": round(time.perf_counter() - started, 3),
        }
        logger.info(f"Finished {trajectory.steps} steps, t={last.t:.6g}, F={last.F:.12g}")
        self._finish("completed")

    def run_ensemble(self) -> None:
        """n_samples trajectories plus the mean energy series.

        Raises:
            EnsembleError: After the manifest is written
            WriterError: If a writer failed
        """
        self._start("ensemble")
        managers: dict[int, WriterManager] = {}

        def factory(sample: int) -> WriterManager:
            manager = self._trajectory_writers(self.output_dir / f"sample_{sample}", snapshots=False)
            managers[sample] = manager
            return manager

        def close_all() -> None:
            for sample in sorted(managers):
                self._index(managers[sample].close())

        try:
            result = run_ensemble(self.config, observer_factory=factory)
        except Exception as e:
            logger.error(f"Ensemble aborted: {e}")
            close_all()
            self._finish("failed", e)
            raise
        close_all()
        self._check_writers([managers[sample] for sample in sorted(managers)])

        path = write_series_csv(
            self.output_dir / "mean_energy.csv", ["t", "mean_F"], result.times, result.mean_energy
        )
        self._index([path])
        rises = [energy_rise(tr.energies) for tr in result.trajectories]
        self.manifest.summary = {
            "n_samples": len(result.trajectories),
            "steps": len(result.mean_energy) - 1,
            "mean_energy_rise": result.rise,
            "max_sample_energy_rise": max(rises),
            "mean_F_final": float(result.mean_energy[-1]),
        }
        logger.info(
            f"Ensemble done: mean F {result.mean_energy[0]:.10g} -> {result.mean_energy[-1]:.10g}, "
            f"rise {result.rise:.3e}"
        )
        self._finish("completed")

    def run_mesh_study(self) -> None:
        """Repeat the run over mesh_study.grids from shared initial data.

        Raises:
            SimulationError: After the manifest is written
            WriterError: If a writer failed
        """
        self._start("mesh-study")
        managers: list[WriterManager] = []

        def factory(geometry: GridGeometry) -> WriterManager:
            label = f"{geometry.m}x{geometry.n}"
            manager = self._trajectory_writers(self.output_dir / f"grid_{label}")
            manager.add_writer(ProfileCSVWriter(self.output_dir / f"midline_{label}.csv"))
            managers.append(manager)
            return manager

        def close_all() -> None:
            for manager in managers:
                self._index(manager.close())

        try:
            result = run_mesh_study(self.config, observer_factory=factory)
        except Exception as e:
            logger.error(f"Mesh study aborted: {e}")
            close_all()
            self._finish("failed", e)
            raise
        close_all()
        self._check_writers(managers)

        labels = [f"{e.geometry.m}x{e.geometry.n}" for e in result.entries]
        path = write_series_csv(
            self.output_dir / "mesh_study.csv",
            ["coarse_m", "coarse_n", "fine_m", "fine_n", "l2_difference"],
            [e.geometry.m for e in result.entries[:-1]],
            [e.geometry.n for e in result.entries[:-1]],
            [e.geometry.m for e in result.entries[1:]],
            [e.geometry.n for e in result.entries[1:]],
            result.differences,
        )
        self._index([path])
        self.manifest.summary = {
            "grids": labels,
            "differences": result.differences,
            "converging": result.converging,
        }
        logger.info(f"Mesh study converging: {result.converging}")
        self._finish("completed")
