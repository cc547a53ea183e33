"""Steady Stokes primal and adjoint solves on an O-grid.

Equal-order P1 velocity/pressure on the triangulated grid with a
Brezzi-Pitkaranta pressure stabilization. The stabilization is written in
residual form (PSPG) so a body force stays consistent; with zero forcing the
two coincide because the Laplacian of a P1 field vanishes cellwise.

The pressure gauge is fixed by a zero-mean constraint. Linear systems are
solved with a sparse LDL^T factorization of the quasi-definite free block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import qdldl

# stabilization constant tau_K = STAB * h_K^2 / mu
STAB = 0.05


class SolverError(RuntimeError):
    """Linear solve failed or left a residual above tolerance."""


@dataclass(frozen=True)
class FlowConfig:
    """Physical parameters of the flow problem.

    ``phi`` only rotates the drag direction ``a``; the free stream is ``u_inf``.
    ``ref_length`` together with ``rho`` and ``|u_inf|`` gives the force scale
    used to express drag in coefficient units.
    """

    mu: float = 0.798e-3
    u_inf: tuple = (1e-5, 0.0)
    rho: float = 998.2
    phi: float = 0.0
    ref_length: float = 1.0
    tol: float = 1e-8

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("viscosity mu must be positive")
        object.__setattr__(self, "u_inf", tuple(float(u) for u in self.u_inf))

    @property
    def a(self):
        return np.array([np.cos(self.phi), np.sin(self.phi)])

    @property
    def speed(self):
        return float(np.hypot(*self.u_inf))

    @property
    def force_scale(self):
        """Dynamic pressure times reference length, 0.5 rho |u|^2 L_ref."""
        return 0.5 * self.rho * self.speed**2 * self.ref_length

    def reynolds(self, length):
        return self.rho * self.speed * length / self.mu


@dataclass(frozen=True, eq=False)
class FlowState:
    v: np.ndarray
    p: np.ndarray
    residual_norm: float


@dataclass(frozen=True, eq=False)
class AdjointState:
    lam: np.ndarray
    lam_p: np.ndarray
    residual_norm: float


def _p1_gradients(mesh):
    pts = mesh.nodes[mesh.triangles]
    x, y = pts[..., 0], pts[..., 1]
    area = mesh.triangle_areas
    # grad phi_i = (y_j - y_k, x_k - x_j) / 2A, (i, j, k) cyclic
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return gx / (2 * area[:, None]), gy / (2 * area[:, None]), area


@dataclass(frozen=True, eq=False)
class StokesOperator:
    """Assembled saddle-point matrix and the pieces needed to build right-hand sides.

    The matrix is assembled for unit viscosity; see :class:`StokesSystem`.
    """

    matrix: sp.csr_matrix
    mass: np.ndarray
    n_nodes: int
    tau: np.ndarray = field(repr=False)
    gx: np.ndarray = field(repr=False)
    gy: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)


def _blocks(mesh, mu):
    """Stiffness, divergence and stabilization blocks plus element data."""
    n = mesh.n_nodes
    tri = mesh.triangles
    gx, gy, area = _p1_gradients(mesh)
    tau = STAB * 2.0 * area / mu

    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    k_loc = (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]) * area[
        :, None, None
    ]
    stiff = sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n))
    # B[q, v] = -(phi_q, d_x phi_v)
    shape3 = (len(tri), 3, 3)
    bx_loc = -(area[:, None, None] / 3.0) * np.broadcast_to(gx[:, None, :], shape3)
    by_loc = -(area[:, None, None] / 3.0) * np.broadcast_to(gy[:, None, :], shape3)
    bx = sp.coo_matrix((bx_loc.ravel(), (rows, cols)), shape=(n, n))
    by = sp.coo_matrix((by_loc.ravel(), (rows, cols)), shape=(n, n))
    stab = sp.coo_matrix(((k_loc * tau[:, None, None]).ravel(), (rows, cols)), shape=(n, n))
    mass = np.zeros(n)
    np.add.at(mass, tri.ravel(), np.repeat(area / 3.0, 3))
    return stiff, bx, by, stab, mass, (tau, gx, gy, area, tri)


def assemble_stokes(mesh, mu=1.0):
    """Assemble the symmetric stabilized Stokes operator.

    Unknown layout ``[v1 (n), v2 (n), p (n)]`` with blocks
    ``[[mu K, 0, Bx^T], [0, mu K, By^T], [Bx, By, -C]]``. The zero-mean
    pressure constraint is handled by the solver, its weights are ``mass``.
    """
    stiff, bx, by, stab, mass, elem = _blocks(mesh, mu)
    a = sp.bmat(
        [[mu * stiff, None, bx.T], [None, mu * stiff, by.T], [bx, by, -stab]], format="csr"
    )
    return StokesOperator(a, mass, mesh.n_nodes, *elem)


def assemble_adjoint(mesh, mu=1.0):
    """Adjoint operator for ``-mu Lap(lam) - grad(lam_p) = f, div(lam) = 0``.

    Layout ``[lam1, lam2, lam_p]``. The adjoint pressure gradient enters
    the momentum rows with the opposite sign, and so does the stabilization.
    """
    stiff, bx, by, stab, _, _ = _blocks(mesh, mu)
    return sp.bmat(
        [[mu * stiff, None, -bx.T], [None, mu * stiff, -by.T], [bx, by, stab]], format="csr"
    )


def _load_vector(op, mesh, forcing, scale=1.0):
    """Right-hand side for a body force ``forcing(x, y) -> (f1, f2)``, times ``scale``."""
    n = op.n_nodes
    rhs = np.zeros(3 * n)
    if forcing is None:
        return rhs
    pts = mesh.nodes[op.triangles]
    mids = 0.5 * (pts[:, [0, 1, 2]] + pts[:, [1, 2, 0]])
    f1, f2 = forcing(mids[..., 0], mids[..., 1])
    f1 = scale * np.broadcast_to(np.asarray(f1, float), mids.shape[:2])
    f2 = scale * np.broadcast_to(np.asarray(f2, float), mids.shape[:2])
    # edge-midpoint rule; vertex i touches the midpoints of edges (i, i+1) and (i-1, i)
    w = op.area[:, None] / 3.0
    for comp, f in ((0, f1), (1, f2)):
        loc = 0.5 * w * (f + np.roll(f, 1, axis=1))
        np.add.at(rhs[comp * n : (comp + 1) * n], op.triangles.ravel(), loc.ravel())
    # residual-form stabilization: -tau (f, grad q) on the continuity row
    fbar1 = (op.area / 3.0) * f1.sum(axis=1)
    fbar2 = (op.area / 3.0) * f2.sum(axis=1)
    loc = -op.tau[:, None] * (op.gx * fbar1[:, None] + op.gy * fbar2[:, None])
    np.add.at(rhs[2 * n : 3 * n], op.triangles.ravel(), loc.ravel())
    return rhs


class StokesSystem:
    """Factorized operator with the O-grid's wall/far-field Dirichlet split.

    The system is assembled for unit viscosity: velocities are unchanged and
    the physical pressure is ``mu`` times the computed one. The free block is
    symmetric quasi-definite once one pressure unknown is removed, so it is
    factorized by a sparse LDL^T after symmetric diagonal scaling. The
    multiplier of the zero-mean constraint follows from the compatibility
    condition of the free block (its null vector is the constant pressure),
    and the mean is removed afterwards. The primal and adjoint problems share
    one factorization: substituting ``lam_p = -q`` turns the adjoint operator
    into the primal one.
    """

    refine_steps = 3

    def __init__(self, mesh, mu):
        self.mesh = mesh
        self.mu = float(mu)
        self.op = assemble_stokes(mesh, 1.0)
        n = mesh.n_nodes
        ids = np.concatenate([mesh.wall_ids, mesh.farfield_ids])
        self.fixed = np.concatenate([ids, ids + n])
        self.free = np.setdiff1d(np.arange(3 * n), self.fixed)
        a = self.op.matrix
        a_f = a[self.free]
        self._a_ff = a_f[:, self.free].tocsc()
        self._a_fd = a_f[:, self.fixed].tocsc()
        self._p_free = np.searchsorted(self.free, 2 * n + np.arange(n))
        # pin the pressure at the last far-field node
        self._pin = self._p_free[mesh.farfield_ids[-1]]
        keep = np.ones(len(self.free), dtype=bool)
        keep[self._pin] = False
        self._keep = np.flatnonzero(keep)
        a_red = self._a_ff[self._keep][:, self._keep]
        d = np.abs(a_red.diagonal())
        if np.any(d == 0):
            raise SolverError("zero diagonal in reduced Stokes block")
        self._scale = 1.0 / np.sqrt(d)
        dm = sp.diags(self._scale)
        self._a_red = a_red.tocsc()
        try:
            self._ldl = qdldl.Solver(sp.triu(dm @ a_red @ dm, format="csc"))
        except Exception as exc:  # qdldl raises ValueError on zero pivots
            raise SolverError(f"singular Stokes system: {exc}") from exc

    def _solve_reduced(self, b):
        s = self._scale
        y = s * self._ldl.solve(s * b)
        for _ in range(self.refine_steps):
            y += s * self._ldl.solve(s * (b - self._a_red @ y))
        return y

    def solve(self, wall_velocity, far_velocity, forcing=None, boundary_fn=None):
        """Solve with Dirichlet data; returns (velocity (n, 2), pressure (n,), residual)."""
        mesh = self.mesh
        n = mesh.n_nodes
        ids = np.concatenate([mesh.wall_ids, mesh.farfield_ids])
        bc = np.zeros((n, 2))
        if boundary_fn is not None:
            bx, by = boundary_fn(mesh.nodes[ids, 0], mesh.nodes[ids, 1])
            bc[ids, 0], bc[ids, 1] = bx, by
        else:
            bc[mesh.wall_ids] = wall_velocity
            bc[mesh.farfield_ids] = far_velocity
        x = np.zeros(3 * n)
        x[self.fixed] = np.concatenate([bc[ids, 0], bc[ids, 1]])
        rhs = _load_vector(self.op, mesh, forcing, 1.0 / self.mu)
        b = rhs[self.free] - self._a_fd @ x[self.fixed]
        mass = self.op.mass
        # multiplier from compatibility: the constant pressure annihilates the block
        lam = b[self._p_free].sum() / mass.sum()
        b[self._p_free] -= lam * mass
        y = np.zeros(len(self.free))
        y[self._keep] = self._solve_reduced(b[self._keep])
        x[self.free] = y
        p = x[2 * n :]
        p -= mass @ p / mass.sum()
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite Stokes solution")
        res = self._a_ff @ x[self.free] - b
        scale = max(np.linalg.norm(b), np.linalg.norm(self._a_fd @ x[self.fixed]), 1e-300)
        rel = float(np.linalg.norm(res) / scale)
        v = np.column_stack([x[:n], x[n : 2 * n]])
        return v, self.mu * p, rel


def _check(rel, tol, what):
    if rel > tol:
        raise SolverError(f"{what} residual {rel:.3e} above tolerance {tol:.1e}")


def solve_stokes(mesh, cfg, forcing=None, boundary_fn=None, system=None):
    """Primal Stokes flow: v = 0 on the wall, v = u_inf on the far field."""
    system = system or StokesSystem(mesh, cfg.mu)
    v, p, rel = system.solve(np.zeros(2), np.asarray(cfg.u_inf), forcing, boundary_fn)
    _check(rel, cfg.tol, "Stokes")
    return FlowState(v, p, rel)


def solve_adjoint(mesh, cfg, forcing=None, boundary_fn=None, system=None):
    """Adjoint Stokes flow: lam = -a on the wall, lam = 0 on the far field.

    Solves ``-mu Lap(lam) - grad(lam_p) = f, div(lam) = 0`` through the primal
    operator with ``lam_p = -q``.
    """
    system = system or StokesSystem(mesh, cfg.mu)
    lam, q, rel = system.solve(-cfg.a, np.zeros(2), forcing, boundary_fn)
    _check(rel, cfg.tol, "adjoint Stokes")
    return AdjointState(lam, -q, rel)


def solve_states(mesh, cfg, system=None):
    """Primal and adjoint states from a single factorization."""
    system = system or StokesSystem(mesh, cfg.mu)
    return solve_stokes(mesh, cfg, system=system), solve_adjoint(mesh, cfg, system=system)


def _one_sided_weights(d, order):
    """Finite-difference weights at d[0] for the derivative of given order."""
    k = len(d)
    vander = np.vander(d - d[0], k, increasing=True).T
    rhs = np.zeros(k)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(vander, rhs)


def wall_normal_derivative(mesh, values, order=1):
    """Derivative along the xi_2 lines at the wall.

    ``values`` is a nodal field, shape ``(n_nodes,)`` or ``(n_nodes, k)``.
    Order 1 uses a 3-point and order 2 a 4-point one-sided stencil on the
    (possibly nonuniform) ring distances.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if mesh.n_rings < 4:
        raise ValueError("wall stencils need at least 4 rings")
    values = np.asarray(values, dtype=float)
    n = mesh.n_surface
    npts = 3 if order == 1 else 4
    w = _one_sided_weights(mesh.wall_distance[:npts], order)
    out = 0.0
    for m in range(npts):
        out = out + w[m] * values[m * n : (m + 1) * n]
    return out


def write_field_csv(path, mesh, flow=None, adj=None, header_lines=()):
    """Node index, coordinates and primal and/or adjoint fields."""
    cols = [np.arange(mesh.n_nodes), mesh.nodes[:, 0], mesh.nodes[:, 1]]
    names = ["node", "x", "y"]
    if flow is not None:
        cols += [flow.v[:, 0], flow.v[:, 1], flow.p]
        names += ["v1", "v2", "p"]
    if adj is not None:
        cols += [adj.lam[:, 0], adj.lam[:, 1], adj.lam_p]
        names += ["lam1", "lam2", "lam_p"]
    data = np.column_stack(cols)
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        fmt = ["%d"] + ["%.17g"] * (len(names) - 1)
        np.savetxt(fh, data, delimiter=",", fmt=fmt)
