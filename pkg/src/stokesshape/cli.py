"""Command line front end: ``stokesshape {solve,symbol-verify,optimize}``.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 mesh error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import config as config_mod
from .cost import drag, shape_gradient, write_gradient_csv
from .flow import SolverError, StokesSystem, solve_states, write_field_csv
from .geometry import GeometryError, build_ogrid, circle, read_surface_csv, write_mesh_csv
from .optimizer import compare, run
from .symbols import (
    beta_sweep,
    default_fd_step,
    write_probe_csv,
    write_symbol_report_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MESH = 0, 2, 3, 4

log = logging.getLogger("stokesshape")


def initial_surface(cfg):
    if cfg.run.surface == "circle":
        return circle(cfg.mesh.n_surface, cfg.mesh.radius)
    return read_surface_csv(cfg.run.surface)


def _base_mesh(cfg):
    return build_ogrid(initial_surface(cfg), **cfg.mesh_options())


def cmd_solve(cfg):
    out = cfg.run.out_dir
    os.makedirs(out, exist_ok=True)
    header = cfg.header_lines()
    flow_cfg = cfg.flow_config()
    mesh = _base_mesh(cfg)
    flow, adj = solve_states(mesh, flow_cfg, system=StokesSystem(mesh, flow_cfg.mu))
    d = drag(mesh, flow, flow_cfg)
    lift = drag(mesh, flow, flow_cfg, a=(-np.sin(flow_cfg.phi), np.cos(flow_cfg.phi)))
    df = shape_gradient(mesh, flow, adj, flow_cfg)
    write_field_csv(os.path.join(out, "fields.csv"), mesh, flow, adj, header)
    write_gradient_csv(os.path.join(out, "gradient.csv"), mesh.surface, df, header)
    write_mesh_csv(os.path.join(out, "mesh"), mesh, header)
    with open(os.path.join(out, "drag.csv"), "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("drag,drag_coefficient,lift,reynolds,primal_residual,adjoint_residual\n")
        fh.write(
            f"{d:.17g},{d / flow_cfg.force_scale:.17g},{lift:.17g},"
            f"{flow_cfg.reynolds(2 * cfg.mesh.radius):.17g},"
            f"{flow.residual_norm:.3e},{adj.residual_norm:.3e}\n"
        )
    print(f"drag = {d:.10e} N/m (coefficient {d / flow_cfg.force_scale:.6f})")
    return EXIT_OK


def cmd_symbol_verify(cfg, workers=1):
    out = cfg.run.out_dir
    os.makedirs(os.path.join(out, "probes"), exist_ok=True)
    header = cfg.header_lines()
    flow_cfg = cfg.flow_config()
    mesh = _base_mesh(cfg)
    stations = cfg.station_list(mesh.surface.perimeter)
    eps = cfg.symbols.fd_step or default_fd_step(mesh.surface)
    report = beta_sweep(mesh, flow_cfg, cfg.symbols.omegas, stations, eps, workers=workers)
    write_symbol_report_csv(os.path.join(out, "symbol_report.csv"), report, header)
    for k, probe in enumerate(report.probes):
        name = f"probe_w{probe.omega:03d}_s{k // len(report.omegas):03d}.csv"
        lines = list(header) + [f"omega={probe.omega} xi_star={probe.xi_star:.17g} lag={probe.lag}"]
        if probe.error:
            lines.append(f"error={probe.error}")
        write_probe_csv(os.path.join(out, "probes", name), mesh.surface, probe, lines)
    for p in report.failures:
        log.warning("%s", p.error)
    if report.probes and len(report.failures) == len(report.probes):
        return EXIT_SOLVER
    print(f"{len(report.probes) - len(report.failures)}/{len(report.probes)} probes succeeded")
    return EXIT_OK


def _status_code(history):
    return {"mesh-failure": EXIT_MESH, "solver-failure": EXIT_SOLVER}.get(history.status, EXIT_OK)


def cmd_optimize(cfg):
    out = cfg.run.out_dir
    os.makedirs(out, exist_ok=True)
    header = cfg.header_lines()
    flow_cfg = cfg.flow_config()
    surface = initial_surface(cfg)
    if cfg.optimizer.method == "compare":
        h_loc, h_glob, gamma_g = compare(
            surface,
            flow_cfg,
            cfg.optimization_config("local"),
            cfg.optimization_config("global"),
            cfg.mesh_options(),
            out,
            header,
        )
        for name, h in (("local", h_loc), ("global", h_glob)):
            print(f"{name}: {len(h.records) - 1} iterations, drag {h.drags[-1]:.6f} ({h.status})")
        print(f"matched global step length {gamma_g:.6g}")
        return max(_status_code(h_loc), _status_code(h_glob))
    h = run(surface, flow_cfg, cfg.optimization_config(), cfg.mesh_options(), out, header)
    print(f"{len(h.records) - 1} iterations, drag {h.drags[-1]:.6f} ({h.status})")
    if h.message:
        print(h.message, file=sys.stderr)
    return _status_code(h)


def build_parser():
    parser = argparse.ArgumentParser(prog="stokesshape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "primal/adjoint fields, drag and shape gradient"),
        ("symbol-verify", "finite-difference check of the Hessian symbol"),
        ("optimize", "run a design optimization"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", help="output directory (overrides [run] out_dir)")
        p.add_argument("--workers", type=int, default=1, help="parallel FD probes")
        p.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = config_mod.load(args.config)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = config_mod.with_overrides(cfg, args.out, args.seed)
    if args.workers < 1:
        print("config error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "symbol-verify":
            return cmd_symbol_verify(cfg, args.workers)
        return cmd_optimize(cfg)
    except GeometryError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
