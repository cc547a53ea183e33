"""Design loop: steepest descent, global Sobolev smoothing or local smoothing.

Gradients and symbol coefficients are divided by the flow's force scale
``0.5 rho |u|^2 L_ref`` so that the regularization ``eta`` and the step
length are dimensionless. Each update moves node ``j`` by ``gamma p_j``
along its normal, after the direction has been made volume neutral to first
order; the surface is then resampled at uniform arclength, the volume is
restored exactly and the O-grid is re-extruded.
"""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .cost import drag, shape_gradient
from .flow import SolverError, StokesSystem, solve_states
from .geometry import (
    GeometryError,
    SelfIntersectionError,
    SurfaceCurve,
    build_ogrid,
    obstacle_volume,
    regenerate_mesh,
    reparametrize_uniform,
    write_surface_csv,
)
from .smoothing import (
    fallback_beta1,
    local_direction,
    sobolev_smooth,
    write_epsilon_csv,
)
from .symbols import analytic_betas

log = logging.getLogger(__name__)

METHODS = ("steepest", "global", "local")


class VolumeError(GeometryError):
    """Volume restoration did not converge."""


@dataclass(frozen=True)
class OptimizationConfig:
    method: str = "local"
    gamma: float = 1.0
    max_iters: int = 20
    eta: float = 0.2
    sobolev_eps: float = 0.1
    window_width: float = 1.0 / 16
    beta1_mode: str = "analytic"
    fallback_factor: float = 10.0
    fallback_smoothing: float = 1e-4
    volume_tol: float = 1e-8
    grad_tol: float = 1e-10
    divergence_window: int = 5
    snapshot_every: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.beta1_mode not in ("analytic", "fallback"):
            raise ValueError("beta1_mode must be 'analytic' or 'fallback'")
        if not self.gamma > 0:
            raise ValueError("step length gamma must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.method == "local" and not self.eta > 0:
            raise ValueError("eta must be positive for the local method")
        if self.method == "global" and not self.sobolev_eps > 0:
            raise ValueError("sobolev_eps must be positive for the global method")
        if not self.volume_tol > 0:
            raise ValueError("volume_tol must be positive")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    drag: float
    volume: float
    grad_inf_norm: float
    step_inf_norm: float
    method: str


@dataclass
class OptimizationHistory:
    records: list = field(default_factory=list)
    designs: dict = field(default_factory=dict)
    epsilons: dict = field(default_factory=dict)
    status: str = "running"
    message: str = ""

    @property
    def drags(self):
        return np.array([r.drag for r in self.records])

    @property
    def volumes(self):
        return np.array([r.volume for r in self.records])

    def write_csv(self, path, header_lines=()):
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("iter,drag,volume,grad_inf_norm,step_inf_norm,method\n")
            for r in self.records:
                fh.write(
                    f"{r.iter},{r.drag:.17g},{r.volume:.17g},"
                    f"{r.grad_inf_norm:.17g},{r.step_inf_norm:.17g},{r.method}\n"
                )


def normalized_state(mesh, flow_cfg):
    """Drag coefficient, scaled gradient and scaled symbol coefficients."""
    system = StokesSystem(mesh, flow_cfg.mu)
    flow, adj = solve_states(mesh, flow_cfg, system=system)
    scale = flow_cfg.force_scale
    d = drag(mesh, flow, flow_cfg) / scale
    df = shape_gradient(mesh, flow, adj, flow_cfg) / scale
    betas = analytic_betas(mesh, flow, adj, flow_cfg)
    return d, df, betas.beta1 / scale, betas.beta2 / scale


def search_direction(method, df, beta1, beta2, surface, cfg):
    """Search direction and, for the local method, its preconditioner spec."""
    df = np.asarray(df, dtype=float)
    h = surface.mean_spacing
    if method == "steepest":
        return -df, None
    if method == "global":
        return sobolev_smooth(df, cfg.sobolev_eps, h), None
    if method == "local":
        if cfg.beta1_mode == "fallback":
            beta1 = fallback_beta1(beta2, cfg.fallback_factor, cfg.fallback_smoothing, h)
        return local_direction(df, beta1, beta2, cfg.eta, h, surface.perimeter, cfg.window_width)
    raise ValueError(f"unknown method {method!r}")


def volume_project(p, surface):
    """Remove the weighted mean so that ``sum_k p_k w_k = 0``."""
    p = np.asarray(p, dtype=float)
    w = surface.weights
    return p - np.sum(p * w) / np.sum(w)


def offset_surface(surface, c):
    return SurfaceCurve(surface.nodes + c * surface.normals)


def volume_restore(surface, v0, tol=1e-8, max_steps=5):
    """Uniform normal offset restoring the enclosed area to ``v0``.

    Iterates toward ``0.01 * tol`` (the offset update converges quadratically)
    and fails only if ``tol`` itself is missed.
    """
    for _ in range(max_steps + 1):
        v = obstacle_volume(surface)
        if abs(v - v0) <= 0.01 * tol * v0:
            return surface
        surface = offset_surface(surface, (v0 - v) / surface.perimeter)
    if abs(obstacle_volume(surface) - v0) <= tol * v0:
        return surface
    raise VolumeError(f"volume restore did not reach tolerance {tol:g}")


def match_first_step(p_local, p_global, gamma_local):
    """Step length giving the global direction the local one's max-norm."""
    ng = float(np.max(np.abs(p_global)))
    if ng == 0:
        raise ValueError("global search direction is zero")
    return gamma_local * float(np.max(np.abs(p_local))) / ng


def initial_direction(surface, flow_cfg, opt_cfg, mesh_options=None):
    """Volume-projected first search direction on ``surface``."""
    mesh = build_ogrid(surface, **_mesh_kwargs(mesh_options))
    _, df, b1, b2 = normalized_state(mesh, flow_cfg)
    p, _ = search_direction(opt_cfg.method, df, b1, b2, surface, opt_cfg)
    return volume_project(p, surface)


def _mesh_kwargs(mesh_options):
    opts = {"n_rings": 64, "r_far": 40.0}
    opts.update(mesh_options or {})
    return opts


def update_design(surface, p, gamma, v0, volume_tol):
    """Move nodes by ``gamma p`` along the normals, resample and restore volume."""
    moved = SurfaceCurve(surface.nodes + gamma * np.asarray(p)[:, None] * surface.normals)
    if not moved.is_simple():
        raise SelfIntersectionError("design update produced a self-intersecting surface")
    return volume_restore(reparametrize_uniform(moved), v0, volume_tol)


def run(initial, flow_cfg, opt_cfg, mesh_options=None, out_dir=None, header_lines=()):
    """Optimize the obstacle shape; returns an :class:`OptimizationHistory`.

    ``mesh_options`` are passed to :func:`build_ogrid` for the first mesh;
    later meshes keep its stretching. With ``out_dir`` the history, design
    snapshots and (local method) smoothing parameters are written as CSV.
    """
    history = OptimizationHistory()
    surface = volume_restore(reparametrize_uniform(initial), obstacle_volume(initial), opt_cfg.volume_tol)
    v0 = obstacle_volume(initial)
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "designs"), exist_ok=True)
        if opt_cfg.method == "local":
            os.makedirs(os.path.join(out_dir, "epsilons"), exist_ok=True)
    mesh = build_ogrid(surface, **_mesh_kwargs(mesh_options))
    step_norm = 0.0
    rises = 0
    try:
        for it in range(opt_cfg.max_iters + 1):
            try:
                d, df, b1, b2 = normalized_state(mesh, flow_cfg)
            except SolverError as exc:
                history.status, history.message = "solver-failure", str(exc)
                break
            record = IterationRecord(
                it, d, obstacle_volume(surface), float(np.max(np.abs(df))), step_norm, opt_cfg.method
            )
            if history.records and d > history.records[-1].drag:
                rises += 1
            else:
                rises = 0
            history.records.append(record)
            if it % opt_cfg.snapshot_every == 0 or it == opt_cfg.max_iters:
                history.designs[it] = surface.nodes
                if out_dir is not None:
                    write_surface_csv(
                        os.path.join(out_dir, "designs", f"iter_{it:04d}.csv"), surface, header_lines
                    )
            if it == opt_cfg.max_iters:
                history.status = "max-iters"
                break
            if record.grad_inf_norm < opt_cfg.grad_tol:
                history.status = "converged"
                break
            if rises >= opt_cfg.divergence_window:
                history.status = "diverged"
                history.message = f"drag increased {rises} consecutive iterations"
                log.warning(history.message)
                break
            p, spec = search_direction(opt_cfg.method, df, b1, b2, surface, opt_cfg)
            if spec is not None:
                history.epsilons[it] = spec.eps
                if out_dir is not None:
                    write_epsilon_csv(
                        os.path.join(out_dir, "epsilons", f"iter_{it:04d}.csv"), surface, spec, header_lines
                    )
            p = volume_project(p, surface)
            step_norm = opt_cfg.gamma * float(np.max(np.abs(p)))
            try:
                surface = update_design(surface, p, opt_cfg.gamma, v0, opt_cfg.volume_tol)
                mesh = regenerate_mesh(mesh, surface)
            except GeometryError as exc:
                history.status, history.message = "mesh-failure", str(exc)
                log.warning("iteration %d: %s", it, exc)
                break
    finally:
        if out_dir is not None:
            history.write_csv(os.path.join(out_dir, "history.csv"), header_lines)
    return history


def compare(initial, flow_cfg, local_cfg, global_cfg, mesh_options=None, out_dir=None, header_lines=()):
    """Run local and global smoothing with first-step magnitudes matched.

    ``global_cfg.gamma`` is replaced by :func:`match_first_step`. Returns
    ``(local_history, global_history, gamma_global)``.
    """
    start = volume_restore(reparametrize_uniform(initial), obstacle_volume(initial), local_cfg.volume_tol)
    p_loc = initial_direction(start, flow_cfg, local_cfg, mesh_options)
    p_glob = initial_direction(start, flow_cfg, global_cfg, mesh_options)
    gamma_g = match_first_step(p_loc, p_glob, local_cfg.gamma)
    global_cfg = OptimizationConfig(**{**asdict(global_cfg), "gamma": gamma_g})
    sub = (lambda name: None) if out_dir is None else (lambda name: os.path.join(out_dir, name))
    h_loc = run(initial, flow_cfg, local_cfg, mesh_options, sub("local"), header_lines)
    h_glob = run(initial, flow_cfg, global_cfg, mesh_options, sub("global"), header_lines)
    return h_loc, h_glob, gamma_g
