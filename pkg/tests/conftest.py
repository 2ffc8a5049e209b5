"""Shared fixtures: meshes, parameter sets and solved states.

Session-scoped fixtures are treated as read-only by every test; states
that tests mutate (inversion states, gradient caches) are built inside
the tests themselves.
"""

import numpy as np
import pytest

import pglacier as pg
from pglacier.forward import SolverConfig


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

# Purely vertical gravity on a flat slab is balanced by hydrostatic
# pressure (v = 0 exactly), so sensitivity and identification tests use
# a tilted load that actually drives a flow.
TILTED_FORCE = (0.5, -1.0)


def truth_rheology(spaces):
    # smooth profile inside [0.5, 2]
    return pg.field_from_callable(
        spaces.coeff_omega, lambda x, y: 1.25 + 0.75 * np.sin(np.pi * x))


def truth_friction(spaces):
    # smooth profile inside [0.1, 0.9]
    return pg.field_from_callable(
        spaces.coeff_basal, lambda x, y: 0.5 + 0.4 * np.cos(np.pi * x))


@pytest.fixture(scope="session")
def slab_spaces():
    """8x4 slab on [0, 2] x [0, 1], full surface observed."""
    return pg.build_spaces(pg.generate_slab_mesh(2.0, 1.0, 8, 4))


@pytest.fixture(scope="session")
def fine_spaces():
    """16x8 slab used by the acceptance-scale runs."""
    return pg.build_spaces(pg.generate_slab_mesh(2.0, 1.0, 16, 8))


@pytest.fixture(scope="session")
def tilted_params():
    return pg.PhysicsParams(body_force=TILTED_FORCE)


@pytest.fixture(scope="session")
def tight_solver():
    return SolverConfig(newton_rtol=1e-12, newton_atol=1e-13)


@pytest.fixture(scope="session")
def base_coeffs(slab_spaces):
    return (pg.constant_field(slab_spaces.coeff_omega, 1.0),
            pg.constant_field(slab_spaces.coeff_basal, 0.5))


@pytest.fixture(scope="session")
def base_solution(slab_spaces, tilted_params, tight_solver, base_coeffs):
    rheology, friction = base_coeffs
    solution = pg.solve_forward(rheology, friction, tilted_params, tight_solver)
    assert solution.report.converged
    return solution


@pytest.fixture(scope="session")
def twin_obs(slab_spaces, tilted_params, tight_solver):
    """Noiseless observations from the smooth truth pair on the 8x4 slab."""
    return pg.make_twin_data(truth_rheology(slab_spaces),
                             truth_friction(slab_spaces), tilted_params,
                             solver_config=tight_solver)
