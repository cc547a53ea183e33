"""Drag functional and adjoint shape gradient on the obstacle surface.

With ``n`` the unit normal pointing into the fluid, the drag (the force the
fluid exerts on the obstacle, projected on ``a``) is

    D = int_wall  mu (n . grad) v . a  -  p n . a  dGamma,

using that the symmetric part of the viscous traction reduces to ``mu d_n v``
on a no-slip wall. The shape derivative for a normal displacement ``alpha n``
(into the fluid) is ``dD[alpha] = int df alpha dGamma`` with

    df = mu sum_i (d_n lam_i)(d_n v_i),

where ``lam = -a`` on the wall. The sign is fixed by the finite-difference
tests rather than by convention.
"""
from __future__ import annotations

import numpy as np

from .flow import wall_normal_derivative


def drag(mesh, flow, cfg, a=None):
    """Drag force in physical units (N per unit depth) along ``a`` (default ``cfg.a``)."""
    a = cfg.a if a is None else np.asarray(a, dtype=float)
    surface = mesh.surface
    n = mesh.n_surface
    dv = wall_normal_derivative(mesh, flow.v, order=1)
    viscous = cfg.mu * (dv @ a) * surface.weights
    # the nodal normal measure sums to zero exactly, so constant pressure gives no force
    pressure = flow.p[:n] * (surface.normal_measure @ a)
    return float(np.sum(viscous - pressure))


def drag_coefficient(mesh, flow, cfg):
    """Drag divided by ``cfg.force_scale``."""
    return drag(mesh, flow, cfg) / cfg.force_scale


def shape_gradient(mesh, flow, adj, cfg):
    """Nodal shape gradient ``df_j = mu sum_i d_n lam_i d_n v_i``."""
    dv = wall_normal_derivative(mesh, flow.v, order=1)
    dl = wall_normal_derivative(mesh, adj.lam, order=1)
    return cfg.mu * np.sum(dv * dl, axis=1)


def gradient_vector(df):
    """Pack nodal gradient values into the optimizer's vector (a copy, same order)."""
    return np.array(df, dtype=float, copy=True).ravel()


def directional_derivative(surface, df, alpha):
    """Quadrature pairing ``sum_j df_j alpha_j w_j`` with trapezoid node weights."""
    return float(np.sum(np.asarray(df) * np.asarray(alpha) * surface.weights))


def write_gradient_csv(path, surface, df, header_lines=()):
    """Gradient dump: node index, xi_1, x, y, df."""
    data = np.column_stack(
        [np.arange(len(surface)), surface.xi, surface.nodes[:, 0], surface.nodes[:, 1], df]
    )
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("node,xi1,x,y,df\n")
        np.savetxt(fh, data, delimiter=",", fmt=["%d"] + ["%.17g"] * 4)
