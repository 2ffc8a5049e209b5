"""Command-line entry point.

Subcommands: ``forward`` (solve the momentum balance and write the
velocity/pressure fields), ``invert`` (run the coefficient
identification), ``verify`` (inequality suites with a pass/fail table),
``taylor`` (gradient remainder-decay check) and ``mesh-gen`` (write a
slab mesh).  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 verification failure.

All CSV outputs are deterministic for a fixed config and seed: floats
are written with repr precision and wall-clock times never enter
files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .adjoint import _check_alignment
from .config import ConfigError, load_config, realize_field
from .fieldio import (load_observation, save_field_csv,
                      save_inversion_history, save_vtk)
from .forward import SolverError, solve_forward
from .inversion import (OptimizationConfig, make_twin_data, run_inversion,
                        taylor_test)
from .mesh import MeshError, save_mesh
from .spaces import Field, build_spaces
from .verify import discrete_suite, pointwise_suite


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pglacier",
        description="Nonlinear glacier momentum solver and coefficient "
                    "identification toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("forward", "solve the momentum balance"),
                        ("invert", "identify rheology and friction from "
                                   "surface velocities"),
                        ("verify", "run the inequality verification suites"),
                        ("taylor", "gradient remainder-decay check"),
                        ("mesh-gen", "generate a slab mesh")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="path to the run config")
        p.add_argument("--out", default=None, help="output directory "
                       "(overrides run.out)")
        p.add_argument("--serial", action="store_true",
                       help="force serial execution (the default; kept for "
                            "reproducibility contracts)")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.seed")
    return parser


def _floats(text):
    return [float(t) for t in text.split()]


def _prepare(cfg):
    mesh = cfg.build_mesh()
    spaces = build_spaces(mesh)
    params = cfg.physics()
    length = cfg["mesh.length"]
    rheology = realize_field(cfg["fields.rheology"], spaces.coeff_omega,
                             length, "fields.rheology")
    friction = realize_field(cfg["fields.friction"], spaces.coeff_basal,
                             length, "fields.friction")
    return mesh, spaces, params, rheology, friction


def _load_observation(cfg, spaces, params, solver_config):
    if cfg["observation.source"] == "file":
        obs = load_observation(cfg["observation.path"])
        _check_alignment(spaces, obs)
        return obs
    truth_b = cfg["observation.rheology"]
    truth_f = cfg["observation.friction"]
    if not truth_b or not truth_f:
        raise ConfigError("twin observations need observation.rheology and "
                          "observation.friction field specs",
                          "observation.rheology")
    length = cfg["mesh.length"]
    b_true = realize_field(truth_b, spaces.coeff_omega, length,
                           "observation.rheology")
    f_true = realize_field(truth_f, spaces.coeff_basal, length,
                           "observation.friction")
    return make_twin_data(b_true, f_true, params,
                          noise_sigma=cfg["observation.noise_sigma"],
                          seed=cfg.seed, mode=cfg["observation.mode"],
                          solver_config=solver_config)


def _write_report_csv(path, report):
    rows = [("converged", int(report.converged)),
            ("iterations", report.iterations),
            ("final_residual", repr(report.residual_history[-1])),
            ("final_energy", repr(report.final_energy)),
            ("energy_bound", repr(report.energy_bound)),
            ("continuation_used", int(report.continuation_used))]
    with open(path, "w") as fh:
        fh.write("key,value\n")
        for key, val in rows:
            fh.write("%s,%s\n" % (key, val))


def cmd_forward(cfg, out):
    _, spaces, params, rheology, friction = _prepare(cfg)
    solver = cfg.solver(trace_path=os.path.join(out, "newton_trace.csv"))
    solution = solve_forward(rheology, friction, params, solver)
    save_field_csv(solution.velocity, os.path.join(out, "velocity.csv"))
    save_field_csv(solution.pressure, os.path.join(out, "pressure.csv"))
    save_vtk(spaces.mesh, os.path.join(out, "solution.vtk"),
             scalars={"pressure": solution.pressure},
             vectors={"velocity": solution.velocity})
    _write_report_csv(os.path.join(out, "report.csv"), solution.report)
    if not solution.report.converged:
        print("forward solve did not converge: residual %g after %d iterations"
              % (solution.report.residual_history[-1],
                 solution.report.iterations), file=sys.stderr)
        return 3
    print("forward solve converged in %d iterations, residual %g"
          % (solution.report.iterations, solution.report.residual_history[-1]))
    print("energy %g within bound %g" % (solution.report.final_energy,
                                         solution.report.energy_bound))
    return 0


def cmd_invert(cfg, out):
    _, spaces, params, rheology0, friction0 = _prepare(cfg)
    solver = cfg.solver()
    obs = _load_observation(cfg, spaces, params, solver)
    result = run_inversion(rheology0, friction0, obs, params,
                           cfg.optimization(), solver)
    state = result.state
    save_inversion_history(result.history, os.path.join(out, "history.csv"))
    save_field_csv(state.rheology, os.path.join(out, "rheology.csv"))
    save_field_csv(state.friction, os.path.join(out, "friction.csv"))
    save_field_csv(state.velocity, os.path.join(out, "velocity.csv"))
    save_field_csv(state.adjoint_state, os.path.join(out, "adjoint.csv"))
    save_vtk(spaces.mesh, os.path.join(out, "inversion.vtk"),
             scalars={"rheology": state.rheology, "friction": state.friction},
             vectors={"velocity": state.velocity})
    first, last = result.history[0], result.history[-1]
    print("inversion stopped after %d iterations (%s)"
          % (state.iteration, result.reason))
    print("cost %g -> %g, misfit %g -> %g"
          % (first[1], last[1], first[2], last[2]))
    return 0


def cmd_verify(cfg, out):
    results = pointwise_suite(
        samples=cfg["verify.samples"],
        p_values=_floats(cfg["verify.p_values"]),
        delta_values=_floats(cfg["verify.delta_values"]),
        prime_delta_values=_floats(cfg["verify.prime_delta_values"]),
        seed=cfg.seed)
    _, _, params, rheology, friction = _prepare(cfg)
    results += discrete_suite(rheology, friction, params, cfg.solver(),
                              seed=cfg.seed)
    with open(os.path.join(out, "verify_report.csv"), "w") as fh:
        fh.write("check,passed,detail\n")
        for res in results:
            fh.write("%s,%d,\"%s\"\n" % (res.name, int(res.passed), res.detail))
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 4


def _taylor_directions(cfg, spaces, rng):
    n_omega = spaces.coeff_omega.dof_count
    n_basal = spaces.coeff_basal.dof_count
    for _ in range(cfg["taylor.directions"]):
        db = rng.standard_normal(n_omega)
        df = rng.standard_normal(n_basal)
        yield (Field(spaces.coeff_omega, db / max(np.abs(db).max(), 1.0)),
               Field(spaces.coeff_basal, df / max(np.abs(df).max(), 1.0)))


def _box_margin(field, lo, hi):
    return float(min((field.values - lo).min(), (hi - field.values).min()))


def cmd_taylor(cfg, out):
    _, spaces, params, rheology, friction = _prepare(cfg)
    solver = cfg.solver()
    obs = _load_observation(cfg, spaces, params, solver)
    h_values = _floats(cfg["taylor.h_values"])
    if not h_values:
        raise ConfigError("needs at least one step size", "taylor.h_values")
    h_max = max(h_values)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    slopes = []
    for k, (db, df) in enumerate(_taylor_directions(cfg, spaces, rng)):
        if np.all(db.values == 0.0) and np.all(df.values == 0.0):
            raise ConfigError("zero perturbation direction", "taylor.directions")
        margin = min(_box_margin(rheology, params.rheology_min,
                                 params.rheology_max),
                     _box_margin(friction, 0.0, params.friction_max))
        biggest = h_max * max(np.abs(db.values).max(), np.abs(df.values).max())
        if biggest > margin:
            scale = 0.5 * margin / biggest
            print("direction %d scaled by %g to stay inside the box"
                  % (k, scale))
            db = Field(spaces.coeff_omega, db.values * scale)
            df = Field(spaces.coeff_basal, df.values * scale)
        report = taylor_test(rheology, friction, db, df, obs, params, solver,
                             h_values=h_values)
        slopes.append(report.slope_first)
        for h, r0, r1 in zip(report.h_values, report.remainder_zero,
                             report.remainder_first):
            rows.append((k, h, r0, r1))
        print("direction %d: zero-order slope %s, first-order slope %s"
              % (k, "%.3f" % report.slope_zero if report.slope_zero else "n/a",
                 "%.3f" % report.slope_first if report.slope_first else "n/a"))
    with open(os.path.join(out, "taylor_report.csv"), "w") as fh:
        fh.write("direction,h,remainder_zero,remainder_first\n")
        for k, h, r0, r1 in rows:
            fh.write("%d,%s,%s,%s\n" % (k, repr(float(h)), repr(float(r0)),
                                        repr(float(r1))))
    ok = all(s is not None and s >= 1.8 for s in slopes)
    print("first-order remainder slopes %s threshold 1.8"
          % ("meet" if ok else "miss"))
    return 0 if ok else 4


def cmd_mesh_gen(cfg, out):
    mesh = cfg.build_mesh()
    path = os.path.join(out, "mesh.pgmesh")
    save_mesh(mesh, path)
    print("wrote %s: %d vertices, %d triangles, %d boundary edges"
          % (path, mesh.vertices.shape[0], mesh.triangles.shape[0],
             mesh.num_boundary_edges))
    return 0


_COMMANDS = {"forward": cmd_forward, "invert": cmd_invert,
             "verify": cmd_verify, "taylor": cmd_taylor,
             "mesh-gen": cmd_mesh_gen}


def entry(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["run.seed"] = args.seed
        if args.out is not None:
            cfg.values["run.out"] = args.out
        out = cfg.out_dir
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "effective_config.cfg"), "w") as fh:
            fh.write("\n".join(cfg.echo_lines()) + "\n")
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (MeshError, OSError, ValueError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except SolverError as exc:
        print("solver failure: %s" % exc, file=sys.stderr)
        return 3


def main():
    sys.exit(entry())


if __name__ == "__main__":
    main()
