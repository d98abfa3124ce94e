"""Configuration-driven command line entry point.

Usage: biot-mrfem <config-path> [--out DIR] [--seed N] [--verbose]

The configuration is a flat key=value file with '#' comments and dotted keys,
e.g.::

    mode = convergence
    case = trig
    family = 2
    method = MR
    levels = 4
    params.mu = 1.0
    params.lambda = 1.0
    params.alpha = 1.0
    params.c0 = 0.1
    params.K = 1.0
    params.dt = 0.01

Exit codes: 0 success, 2 configuration error (the message names the offending
key), 3 solver failure. BIOT_MRFEM_THREADS caps the BLAS worker threads.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("BIOT_MRFEM_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_apply_thread_cap()

import numpy as np  # noqa: E402


class ConfigError(Exception):
    """Configuration problem; the message names the offending key."""


def parse_config(path):
    """Parse a flat key=value file with '#' comments into a string dict."""
    cfg = {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        cfg[key] = value
    return cfg


class Config:
    """Typed access to the flat key=value dict; errors name the key."""

    def __init__(self, raw):
        self.raw = dict(raw)
        self.used = set()

    def get(self, key, default=None, required=False):
        if key in self.raw:
            self.used.add(key)
            return self.raw[key]
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def get_float(self, key, default=None, required=False):
        val = self.get(key, required=required)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {val!r}")

    def get_int(self, key, default=None, required=False):
        val = self.get(key, required=required)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected an integer, got {val!r}")

    def get_choice(self, key, choices, default=None, required=False):
        val = self.get(key, default=default, required=required)
        if val is not None and val not in choices:
            raise ConfigError(f"key {key!r}: expected one of {sorted(choices)}, got {val!r}")
        return val

    def prefixed(self, prefix):
        out = {}
        for key, val in self.raw.items():
            if key.startswith(prefix):
                self.used.add(key)
                out[key[len(prefix):]] = val
        return out


def _build_params(cfg):
    from .system import MaterialParams, ParameterError

    kwargs = dict(
        mu=cfg.get_float("params.mu", required=True),
        lam=cfg.get_float("params.lambda", required=True),
        alpha=cfg.get_float("params.alpha", required=True),
        c0=cfg.get_float("params.c0", required=True),
        K=cfg.get_float("params.K", required=True),
        dt=cfg.get_float("params.dt", required=True),
    )
    try:
        return MaterialParams(**kwargs)
    except ParameterError as exc:
        raise ConfigError(f"invalid params.*: {exc}")


def _build_mesh(cfg):
    from .mesh import MeshError, read_mesh, unit_square_mesh

    path = cfg.get("mesh.file")
    if path is not None:
        try:
            return read_mesh(path)
        except (OSError, MeshError) as exc:
            raise ConfigError(f"key 'mesh.file': {exc}")
    n = cfg.get_int("mesh.n", default=8)
    if n < 1:
        raise ConfigError("key 'mesh.n': must be >= 1")
    return unit_square_mesh(n)


def _build_bc(cfg, mesh, case):
    from .mesh import BoundaryConfig, MeshError, all_natural_bc

    mech = cfg.prefixed("bc.mech.")
    flow = cfg.prefixed("bc.flow.")
    bc = all_natural_bc(mesh, u0=case.u0, sigma0=case.sigma0, p0=case.p0)
    tags = set(mesh.boundary_tags.values())
    for key, part, allowed in (("bc.mech", mech, {"r", "u"}), ("bc.flow", flow, {"p", "q"})):
        for tag, side in part.items():
            if tag not in tags:
                raise ConfigError(f"key '{key}.{tag}': tag {tag!r} not on the mesh")
            if side not in allowed:
                raise ConfigError(f"key '{key}.{tag}': expected one of {sorted(allowed)}, got {side!r}")
    bc.mechanics.update(mech)
    bc.flow.update(flow)
    try:
        bc.validate(mesh)
    except MeshError as exc:
        raise ConfigError(f"boundary configuration: {exc}")
    return bc


def _echo_config(cfg, outdir, seed):
    lines = [f"{k} = {cfg.raw[k]}" for k in sorted(cfg.raw)]
    lines.append(f"seed = {seed}")
    with open(os.path.join(outdir, "config.echo.txt"), "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(x):
    return f"{x:.17g}"


def run(config_path, outdir, seed_override=None, verbose=False):
    from . import report
    from .solver import parameter_sweep, solve_minres
    from .system import SolverError, assemble_biot, solve_direct, time_loop
    from .verify import (
        CaseError,
        convergence_study,
        errors_on_mesh,
        make_case,
        solve_case,
        weighted_norm_X,
    )

    cfg = Config(parse_config(config_path))
    mode = cfg.get_choice("mode", {"solve", "timeloop", "convergence", "sweep"}, required=True)
    seed = seed_override if seed_override is not None else cfg.get_int("seed", default=0)
    os.makedirs(outdir, exist_ok=True)
    _echo_config(cfg, outdir, seed)

    def log(msg):
        if verbose:
            print(msg)

    params = _build_params(cfg)
    family = cfg.get_int("family", default=1)
    if family not in (1, 2):
        raise ConfigError("key 'family': expected 1 or 2")
    method = cfg.get_choice("method", {"4F", "MR"}, default="4F")
    tol = cfg.get_float("solver.tol", default=1e-10)
    maxiter = cfg.get_int("solver.max_iter", default=1000)

    if mode == "convergence":
        case_name = cfg.get_choice("case", {"poly", "trig"}, required=True)
        levels = cfg.get_int("levels", default=4)
        n0 = cfg.get_int("mesh.n0", default=4)
        try:
            table = convergence_study(case_name, family, params, levels=levels, method=method, n0=n0)
        except CaseError as exc:
            raise ConfigError(str(exc))
        csv_path = os.path.join(outdir, "errors.csv")
        table.to_csv(csv_path)
        report.plot_convergence(table, os.path.join(outdir, "convergence.png"))
        log(f"final X-norm rate: {table.final_rate():.3f}")
        return

    if mode == "sweep":
        levels = cfg.get("sweep.levels", default="4,8,16")
        try:
            level_list = tuple(int(s) for s in levels.split(","))
        except ValueError:
            raise ConfigError(f"key 'sweep.levels': expected comma-separated integers, got {levels!r}")
        records = parameter_sweep(levels=level_list, family=family, tol=tol,
                                  maxiter=cfg.get_int("solver.max_iter", default=400), seed=seed)
        report.sweep_csv(records, os.path.join(outdir, "sweep.csv"))
        report.plot_sweep(records, os.path.join(outdir, "sweep.png"))
        its = [r.iterations for r in records]
        log(f"iterations: min {min(its)}, max {max(its)}")
        return

    # solve and timeloop modes share the manufactured problem setup
    case_name = cfg.get_choice("case", {"poly", "trig"}, default="poly")
    case = make_case(case_name, params)
    mesh = _build_mesh(cfg)
    bc = _build_bc(cfg, mesh, case)

    if mode == "solve":
        solver_kind = cfg.get_choice("solver.type", {"direct", "minres"}, default="minres")
        lumped = method == "MR"
        if method == "MR":
            from .reduction import solve_condensed

            sys = assemble_biot(mesh, family, params, bc, lumped=True, data=case.problem_data())
            state, _ = solve_condensed(sys)
            solve_info = [("solver", "condensed-direct")]
        else:
            sys = assemble_biot(mesh, family, params, bc, data=case.problem_data())
            if solver_kind == "direct":
                state = solve_direct(sys)
                solve_info = [("solver", "direct")]
            else:
                state, rep = solve_minres(sys, tol=tol, maxiter=maxiter)
                if not rep.converged:
                    raise SolverError(f"MINRES did not converge in {rep.iterations} iterations")
                solve_info = [("solver", "minres"), ("iterations", str(rep.iterations))]
                report.plot_residual_history(rep, os.path.join(outdir, "residuals.png"))
        errs = errors_on_mesh(state, case, blocks=sys.blocks)
        rows = [("ndof", str(sys.ndof)), ("norm_X", _fmt(weighted_norm_X(state, params, sys.blocks)))]
        rows += solve_info + [(k, _fmt(v)) for k, v in errs.items()]
        report.write_csv(os.path.join(outdir, "solve.csv"), ["quantity", "value"], rows)
        sol = np.concatenate([state.r, state.u, state.q, state.p])
        report.write_csv(
            os.path.join(outdir, "solution.csv"),
            ["dof", "value"],
            [(str(i), _fmt(v)) for i, v in enumerate(sol)],
        )
        log(f"solved {sys.ndof} DOFs; X-norm error {errs['err_X']:.3e}")
        return

    # timeloop
    steps = cfg.get_int("timeloop.steps", default=10)
    if steps < 1:
        raise ConfigError("key 'timeloop.steps': must be >= 1")
    scheme = cfg.get_choice("timeloop.scheme", {"backward_euler", "crank_nicolson"},
                            default="backward_euler")
    from .spaces import FieldState
    from .system import build_biot_spaces

    spaces = build_biot_spaces(mesh, family, bc)
    initial = FieldState.zero(spaces, family=family)
    states = time_loop(mesh, family, params, bc, initial, steps,
                       data=case.problem_data(), scheme=scheme, lumped=(method == "MR"))
    times = [(k + 1) * params.dt for k in range(steps)]
    norms = [weighted_norm_X(s, params) for s in states]
    rows = [(str(k), _fmt(times[k]), _fmt(norms[k])) for k in range(steps)]
    report.write_csv(os.path.join(outdir, "timeloop.csv"), ["step", "time", "norm_X"], rows)
    report.plot_timeloop(times, norms, os.path.join(outdir, "timeloop.png"))
    log(f"ran {steps} steps of {scheme}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="biot-mrfem",
        description="Rotation-based mixed finite elements for Biot poroelasticity.",
    )
    parser.add_argument("config", help="path to a key=value configuration file")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    parser.add_argument("--verbose", action="store_true", help="print progress information")
    args = parser.parse_args(argv)

    from .system import SolverError

    try:
        run(args.config, args.out, seed_override=args.seed, verbose=args.verbose)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
