"""Damped Newton solver for the nonlinear momentum balance.

Each Newton step factorizes the symmetric saddle-point Jacobian after
symmetric constraint elimination and backtracks on the euclidean norm of
the reduced system residual.  The default initial guess solves the
linear (p = 2) problem once; if plain Newton stalls, the solver retries
with a short continuation ladder in the exponent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (assemble_jacobian, _residual_raw, solver_sign)
from .spaces import Field, SpaceKind, norm, zero_field


class SolverError(Exception):
    """Forward or linear solve failed."""


@dataclass
class SolverConfig:
    """Newton and linear-solve settings.

    Relative tolerance applies to the initial residual norm,
    ``newton_atol`` is the absolute floor.  The line search halves the
    step until the residual norm drops by a (1 - ls_decrease * alpha)
    factor, at most ``ls_max`` times.
    """

    newton_rtol: float = 1e-10
    newton_atol: float = 1e-12
    max_newton: int = 30
    ls_shrink: float = 0.5
    ls_decrease: float = 1e-4
    ls_max: int = 30
    linear_solver: str = "direct"
    iterative_tol: float = 1e-12
    initial_guess: str = "p2_warmstart"
    trace_path: str = None


@dataclass
class SolveReport:
    """Convergence record of one forward solve."""

    converged: bool
    iterations: int
    residual_history: list
    step_lengths: list
    energy_history: list
    final_energy: float
    energy_bound: float
    continuation_used: bool
    wall_time: float


@dataclass
class ForwardSolution:
    velocity: Field
    pressure: Field
    report: SolveReport


def _linear_solve(matrix, rhs, config):
    if config.linear_solver == "direct":
        try:
            lu = spla.splu(matrix.tocsc())
        except RuntimeError as exc:
            raise SolverError("sparse factorization failed: %s" % exc)
        return lu.solve(rhs)
    if config.linear_solver == "iterative":
        x, info = spla.minres(matrix, rhs, rtol=config.iterative_tol,
                              maxiter=20 * matrix.shape[0])
        if info != 0:
            raise SolverError("iterative linear solve did not converge (info=%d)" % info)
        return x
    raise ValueError("unknown linear solver %r" % config.linear_solver)


def _fields_from_system(spaces, x):
    vel = Field(spaces.velocity, x[:spaces.n_u].copy())
    press = Field(spaces.pressure, x[spaces.n_u:].copy())
    return vel, press


def _reduced_residual(spaces, x_hat, rheology, friction, params, sign):
    x = spaces.expand_vector(x_hat)
    vel, press = _fields_from_system(spaces, x)
    raw = _residual_raw(vel, press, rheology, friction, params)
    return spaces.reduce_vector(sign * raw)


def _newton(spaces, x_hat0, rheology, friction, params, config):
    """Damped Newton on the reduced rotated system; returns the iterate,
    histories and a convergence flag."""
    sign = solver_sign(spaces)
    x_hat = x_hat0.copy()
    r = _reduced_residual(spaces, x_hat, rheology, friction, params, sign)
    res = float(np.linalg.norm(r))
    tol = max(config.newton_atol, config.newton_rtol * res)
    residuals = [res]
    steps = []
    energies = [norm(_fields_from_system(spaces, spaces.expand_vector(x_hat))[0],
                     "V2_seminorm")]
    it = 0
    while res > tol and it < config.max_newton:
        vel, press = _fields_from_system(spaces, spaces.expand_vector(x_hat))
        system = assemble_jacobian(vel, rheology, friction, params)
        delta = _linear_solve(system.reduced(), -r, config)
        alpha = 1.0
        accepted = False
        for _ in range(config.ls_max + 1):
            trial = x_hat + alpha * delta
            r_trial = _reduced_residual(spaces, trial, rheology, friction,
                                        params, sign)
            res_trial = float(np.linalg.norm(r_trial))
            if res_trial <= (1.0 - config.ls_decrease * alpha) * res:
                accepted = True
                break
            alpha *= config.ls_shrink
        if not accepted:
            return x_hat, residuals, steps, energies, False
        x_hat, r, res = trial, r_trial, res_trial
        it += 1
        residuals.append(res)
        steps.append(alpha)
        energies.append(norm(_fields_from_system(
            spaces, spaces.expand_vector(x_hat))[0], "V2_seminorm"))
    return x_hat, residuals, steps, energies, res <= tol


def _linear_state(spaces, rheology, friction, params, config):
    """One exact solve of the linear (p = s = 2) problem, used as a warm
    start.  Returns reduced rotated coordinates."""
    linear = replace(params, p=2.0, s=2.0)
    zero_v = zero_field(spaces.velocity)
    zero_p = zero_field(spaces.pressure)
    system = assemble_jacobian(zero_v, rheology, friction, linear)
    sign = solver_sign(spaces)
    raw = _residual_raw(zero_v, zero_p, rheology, friction, linear)
    rhs = spaces.reduce_vector(sign * raw)
    return _linear_solve(system.reduced(), -rhs, config)


def energy_bound(spaces, params):
    """Load-over-viscosity bound on the V2 seminorm of the solution."""
    area = float((0.5 * spaces.det).sum())
    f = np.asarray(params.body_force)
    return float(np.hypot(f[0], f[1]) * np.sqrt(area) / params.mu0)


def _write_trace(path, residuals, steps, energies):
    lines = ["iter,residual,step_length,energy"]
    for k, res in enumerate(residuals):
        step = repr(steps[k - 1]) if k > 0 else "0.0"
        lines.append("%d,%r,%s,%r" % (k, res, step, energies[k]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def solve_forward(rheology, friction, params, config=None, warm_start=None):
    """Solve the nonlinear momentum balance for the given coefficients.

    Parameters
    ----------
    rheology : Field on the vertex space, within the admissible box.
    friction : Field on the bed chain, within the admissible box.
    params : PhysicsParams with delta > 0.
    config : SolverConfig, optional.
    warm_start : (Field, Field), optional
        Previous (velocity, pressure) pair used as the initial guess,
        overriding the configured policy.

    Returns
    -------
    ForwardSolution
        Holds velocity and pressure fields (constraints satisfied
        exactly) and a SolveReport.  Non-convergence is reported via
        ``report.converged``, not an exception; the energy bound is
        asserted on success.
    """
    config = config or SolverConfig()
    spaces = rheology.space.parent
    if rheology.space.kind is not SpaceKind.COEFF_OMEGA_P1:
        raise ValueError("rheology must live on the vertex space")
    if friction.space.kind is not SpaceKind.COEFF_BASAL_P1:
        raise ValueError("friction must live on the bed chain")
    if params.delta <= 0.0:
        raise ValueError("forward solve needs delta > 0")
    if np.any(rheology.values < params.rheology_min) \
            or np.any(rheology.values > params.rheology_max):
        raise ValueError("rheology field leaves the admissible box")
    if np.any(friction.values < 0.0) or np.any(friction.values > params.friction_max):
        raise ValueError("friction field leaves the admissible box")

    start = time.perf_counter()
    if warm_start is not None:
        x0 = np.concatenate([warm_start[0].values, warm_start[1].values])
        x_hat0 = spaces.reduce_vector(x0)
    elif config.initial_guess == "p2_warmstart" and params.p != 2.0:
        x_hat0 = _linear_state(spaces, rheology, friction, params, config)
    elif config.initial_guess in ("zero", "p2_warmstart"):
        x_hat0 = np.zeros(spaces.n_sys)
    else:
        raise ValueError("unknown initial guess policy %r" % config.initial_guess)

    x_hat, residuals, steps, energies, ok = _newton(
        spaces, x_hat0, rheology, friction, params, config)
    continuation = False
    if not ok:
        # Continuation ladder in the exponent, warm starting each stage.
        continuation = True
        ladder = [pc for pc in (2.0, 1.8, 1.6) if pc > params.p] + [params.p]
        x_hat = np.zeros(spaces.n_sys)
        for pc in ladder:
            stage = replace(params, p=pc, s=min(params.s, pc))
            x_hat, residuals, steps, energies, ok = _newton(
                spaces, x_hat, rheology, friction, stage, config)
            if not ok:
                break

    x = spaces.expand_vector(x_hat)
    vel, press = _fields_from_system(spaces, x)
    bound = energy_bound(spaces, params)
    final_energy = energies[-1]
    wall = time.perf_counter() - start
    report = SolveReport(ok, len(residuals) - 1, residuals, steps, energies,
                         final_energy, bound, continuation, wall)
    if ok and final_energy > bound * (1.0 + 1e-9):
        raise SolverError("energy bound violated: |v|_V2 = %g exceeds %g"
                          % (final_energy, bound))
    if config.trace_path:
        _write_trace(config.trace_path, residuals, steps, energies)
    return ForwardSolution(vel, press, report)


def solve_system(system, rhs, config=None):
    """Solve ``operator . x = rhs`` for an AssembledSystem after
    constraint elimination; returns the full system vector."""
    config = config or SolverConfig()
    spaces = system.spaces
    rhs_hat = spaces.reduce_vector(rhs)
    x_hat = _linear_solve(system.reduced(), rhs_hat, config)
    return spaces.expand_vector(x_hat)


def solve_linearized(velocity, rheology, friction, rhs, params, config=None):
    """Solve the Jacobian system at the given state for an arbitrary
    dual right-hand side; returns the velocity part as a Field.

    The operator is the symmetric saddle form, so sensitivity solves
    pass the negated coefficient derivative as ``rhs``.
    """
    system = assemble_jacobian(velocity, rheology, friction, params)
    x = solve_system(system, rhs, config)
    return Field(velocity.space.parent.velocity, x[:velocity.space.parent.n_u])
