"""mmcgel - energy-stable phase-field simulation of macromolecular microsphere composite hydrogels.

Convex-splitting finite differences for the stochastic Cahn-Hilliard
equation with the reticular free energy, solved by Newton-GMRES.
"""

__version__ = "1.0.0"

from mmcgel.models import RunConfig, StepRecord
from mmcgel.params import GridGeometry, ModelParams, derive_params
from mmcgel.stepper import Trajectory, run, run_ensemble, run_mesh_study

__all__ = [
    "GridGeometry",
    "ModelParams",
    "RunConfig",
    "StepRecord",
    "Trajectory",
    "derive_params",
    "run",
    "run_ensemble",
    "run_mesh_study",
]
