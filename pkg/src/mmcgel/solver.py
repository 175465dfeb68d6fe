"""One implicit time step: residual, Newton operator, restarted GMRES and damped Newton."""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mmcgel.energy import DOMAIN_GUARD, ScalarEnergyFns, chemical_potential, hessian_action
from mmcgel.grid import CellField, laplacian, mean
from mmcgel.models import NewtonSettings, StepSolveReport
from mmcgel.params import ModelParams

logger = logging.getLogger(__name__)

# Smallest damping factor tried before the step is abandoned.
LAMBDA_MIN = 2.0**-30

LinearOperator = Callable[[CellField], CellField]


class SolverError(RuntimeError):
    """A step solve failed; ``report`` holds the ledger gathered so far."""

    def __init__(self, message: str, report: StepSolveReport | None = None):
        super().__init__(message)
        self.report = report


class NewtonIterationError(SolverError):
    """Newton did not reach tol_newton within max_newton_iters."""

    pass


class DampingFloorError(SolverError):
    """No damping factor >= LAMBDA_MIN kept the iterate in the domain."""

    pass


class GMRESConvergenceError(SolverError):
    """GMRES did not reach tol_gmres within the allowed restarts."""

    def __init__(
        self,
        message: str,
        solution: CellField,
        residual: float,
        iterations: int,
        report: StepSolveReport | None = None,
    ):
        super().__init__(message, report)
        self.solution = solution
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class GMRESResult:
    solution: CellField
    iterations: int
    relative_residual: float


def residual(
    phi: CellField,
    phi_prev: CellField,
    s: float,
    epsilon: float,
    xi: CellField | None,
    p: ModelParams,
) -> CellField:
    """R(phi) = phi - phi_prev - s Lap_h(dFc(phi) - dFe(phi_prev)) - s eps xi.

    ``xi`` is ignored when ``epsilon`` is zero.
    """
    r = phi - phi_prev - s * laplacian(chemical_potential(phi, phi_prev, p))
    if epsilon > 0 and xi is not None:
        r = r - (s * epsilon) * xi
    return r


def newton_operator(phi: CellField, psi: CellField, s: float, p: ModelParams) -> CellField:
    """Jacobian of the residual at phi applied to psi: psi - s Lap_h(H(phi) psi)."""
    return psi - s * laplacian(hessian_action(phi, psi, p))


def _norm2(v: np.ndarray) -> float:
    return float(np.sqrt(np.dot(v, v)))


def _back_substitute(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - np.dot(h[i, i + 1 : k], y[i + 1 : k])) / h[i, i]
    return y


def gmres(
    apply: LinearOperator,
    rhs: CellField,
    settings: NewtonSettings,
    x0: CellField | None = None,
) -> GMRESResult:
    """Solve apply(x) = rhs by restarted GMRES.

    Arnoldi uses modified Gram-Schmidt and the small least-squares problem
    is reduced with Givens rotations. Convergence is judged on the true
    residual recomputed at the end of each cycle.

    Args:
        apply: Linear operator on cell fields
        rhs: Right-hand side
        settings: Uses tol_gmres, gmres_restart and max_gmres_restarts
        x0: Initial guess (zero if omitted)

    Returns:
        GMRESResult with the solution, total inner iterations and the
        achieved relative residual ||apply(x) - rhs||_2 / ||rhs||_2

    Raises:
        GMRESConvergenceError: If the tolerance is not met after
            max_gmres_restarts cycles (carries the last iterate)
    """
    geometry = rhs.geometry
    shape = geometry.shape
    b = rhs.values.ravel()
    b_norm = _norm2(b)
    if b_norm == 0.0:
        return GMRESResult(CellField.zeros(geometry), 0, 0.0)

    def op(v: np.ndarray) -> np.ndarray:
        return apply(CellField._wrap(v.reshape(shape).copy(), geometry)).values.ravel()

    restart = settings.gmres_restart
    x = np.zeros_like(b) if x0 is None else x0.values.ravel().copy()
    r = b - op(x)
    r_norm = _norm2(r)
    target = settings.tol_gmres * b_norm
    iterations = 0

    for cycle in range(settings.max_gmres_restarts):
        if r_norm <= target:
            break

        basis = np.zeros((restart + 1, b.size))
        hess = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        g[0] = r_norm
        basis[0] = r / r_norm

        k = 0
        for j in range(restart):
            w = op(basis[j])
            for i in range(j + 1):
                hess[i, j] = np.dot(w, basis[i])
                w = w - hess[i, j] * basis[i]
            hess[j + 1, j] = _norm2(w)
            breakdown = hess[j + 1, j] <= 1e-14 * abs(hess[j, j]) or hess[j + 1, j] == 0.0
            if not breakdown:
                basis[j + 1] = w / hess[j + 1, j]

            for i in range(j):
                upper = cs[i] * hess[i, j] + sn[i] * hess[i + 1, j]
                hess[i + 1, j] = -sn[i] * hess[i, j] + cs[i] * hess[i + 1, j]
                hess[i, j] = upper
            denom = math.hypot(hess[j, j], hess[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = hess[j, j] / denom, hess[j + 1, j] / denom
            hess[j, j] = denom
            hess[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            iterations += 1
            k = j + 1
            if abs(g[j + 1]) <= target or breakdown:
                break

        if hess[k - 1, k - 1] == 0.0:
            k -= 1
        if k > 0:
            y = _back_substitute(hess[:k, :k], g[:k])
            x = x + basis[:k].T @ y
        r = b - op(x)
        r_norm = _norm2(r)
        logger.debug(f"GMRES cycle {cycle + 1}: {iterations} iterations, rel. residual {r_norm / b_norm:.3e}")

    solution = CellField._wrap(x.reshape(shape), geometry)
    relative = r_norm / b_norm
    if r_norm > target:
        raise GMRESConvergenceError(
            f"GMRES stalled at relative residual {relative:.3e} after "
            f"{settings.max_gmres_restarts} restarts ({iterations} iterations)",
            solution=solution,
            residual=relative,
            iterations=iterations,
        )
    return GMRESResult(solution, iterations, relative)


def newton_solve(
    phi_prev: CellField,
    s: float,
    epsilon: float,
    xi: CellField | None,
    p: ModelParams,
    settings: NewtonSettings,
    initial_guess: CellField | None = None,
) -> tuple[CellField, StepSolveReport]:
    """Advance one step by damped Newton with GMRES inner solves.

    Each Newton correction is shifted by a constant so that its mean equals
    -mean(R); the Newton operator preserves means, so this only removes the
    mass drift left by the inexact inner solve.

    Args:
        phi_prev: State at t_k
        s: Time step
        epsilon: Noise strength
        xi: Noise field for this step (ignored when epsilon is zero)
        p: Model constants
        settings: Newton and GMRES tolerances
        initial_guess: Starting iterate (phi_prev if omitted)

    Returns:
        (phi at t_{k+1}, StepSolveReport)

    Raises:
        NewtonIterationError: If tol_newton is not reached in max_newton_iters
        DampingFloorError: If damping cannot keep the iterate in the domain
        GMRESConvergenceError: If an inner solve fails
        DomainError: If phi_prev or the initial guess is outside the domain
    """
    fns = ScalarEnergyFns(p, guard=max(settings.domain_guard, DOMAIN_GUARD))
    fns.check_domain(phi_prev.values)
    x = phi_prev if initial_guess is None else initial_guess
    fns.check_domain(x.values)

    iters = 0
    gmres_iters = 0
    damping_events = 0
    step_norm = math.inf
    res_norm = math.inf

    def ledger() -> StepSolveReport:
        return StepSolveReport(iters, gmres_iters, step_norm, res_norm, damping_events)

    def apply(v: CellField) -> CellField:
        return newton_operator(x, v, s, p)

    while iters < settings.max_newton_iters:
        r = residual(x, phi_prev, s, epsilon, xi, p)
        res_norm = r.max_abs()
        try:
            inner = gmres(apply, -r, settings)
        except GMRESConvergenceError as e:
            gmres_iters += e.iterations
            e.report = ledger()
            raise
        gmres_iters += inner.iterations

        step = inner.solution
        step = step + (-mean(r) - mean(step))
        step_norm = step.max_abs()

        lam = 1.0
        trial = x + step
        while not _in_domain(trial.values, fns):
            lam *= 0.5
            damping_events += 1
            if lam < LAMBDA_MIN:
                raise DampingFloorError(
                    f"damping factor fell below 2^-30 at Newton iteration {iters + 1}",
                    ledger(),
                )
            trial = x + lam * step
        if lam < 1.0:
            logger.warning(f"Newton step damped to lambda={lam:.3e} at iteration {iters + 1}")

        x = trial
        iters += 1
        logger.debug(
            f"Newton {iters}: |R|_inf={res_norm:.3e} |p|_inf={step_norm:.3e} "
            f"gmres={inner.iterations} lambda={lam:g}"
        )
        if step_norm < settings.tol_newton:
            res_norm = residual(x, phi_prev, s, epsilon, xi, p).max_abs()
            return x, ledger()

    raise NewtonIterationError(
        f"Newton did not converge in {settings.max_newton_iters} iterations "
        f"(last |p|_inf={step_norm:.3e})",
        ledger(),
    )


def _in_domain(values: np.ndarray, fns: ScalarEnergyFns) -> bool:
    return bool(np.all((values >= fns.lower) & (values <= fns.upper)))
