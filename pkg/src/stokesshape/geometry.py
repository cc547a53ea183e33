"""Obstacle surfaces and body-fitted O-grids.

A surface is a closed, counter-clockwise polygon. Its nodes are the design
variables. Normals point into the fluid, i.e. away from the obstacle.

The O-grid is built by extruding the surface along its normals for the first
few rings and blending smoothly into radial rays that end on a far-field
circle. Ring ``m`` of the grid is stored as ``points[m]``; ring 0 is the
surface itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

# rings extruded exactly along the wall normal (needed by the 4-point wall stencils)
NORMAL_RINGS = 3


class GeometryError(ValueError):
    """Base class for invalid surfaces and meshes."""


class SelfIntersectionError(GeometryError):
    """Raised when a surface polygon is not simple."""


class MeshError(GeometryError):
    """Raised when an O-grid has tangled (non-positive area) cells."""


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def signed_area(nodes):
    x, y = nodes[:, 0], nodes[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _segments_intersect(nodes):
    """True if any two non-adjacent edges of the closed polygon intersect."""
    p = nodes
    q = np.roll(nodes, -1, axis=0)
    n = len(p)
    i, j = np.triu_indices(n, k=2)
    # the first and last edges share a vertex
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]
        ) * (c[..., 0] - a[..., 0])

    d1 = orient(p[i], q[i], p[j])
    d2 = orient(p[i], q[i], q[j])
    d3 = orient(p[j], q[j], p[i])
    d4 = orient(p[j], q[j], q[i])
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


@dataclass(frozen=True, eq=False)
class SurfaceCurve:
    """Closed polygon with per-node metric data.

    ``nodes`` are reordered counter-clockwise on construction. Segment ``j``
    joins node ``j`` to node ``j + 1`` (periodic).
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) < 3:
            raise GeometryError("surface needs an (N, 2) array with N >= 3")
        if not np.all(np.isfinite(nodes)):
            raise GeometryError("surface nodes must be finite")
        if signed_area(nodes) < 0:
            # keep node 0 in place, reverse the traversal direction
            nodes = np.concatenate([nodes[:1], nodes[:0:-1]])
        object.__setattr__(self, "nodes", _readonly(nodes))

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def segment_lengths(self):
        return _readonly(
            np.linalg.norm(np.roll(self.nodes, -1, axis=0) - self.nodes, axis=1)
        )

    @property
    def perimeter(self):
        return float(self.segment_lengths.sum())

    @cached_property
    def xi(self):
        """Cumulative arclength of each node, starting at 0 for node 0."""
        return _readonly(np.concatenate([[0.0], np.cumsum(self.segment_lengths)[:-1]]))

    @cached_property
    def weights(self):
        """Node quadrature weights (s_{j-1} + s_j) / 2."""
        s = self.segment_lengths
        return _readonly(0.5 * (np.roll(s, 1) + s))

    @cached_property
    def tangents(self):
        d = np.roll(self.nodes, -1, axis=0) - np.roll(self.nodes, 1, axis=0)
        return _readonly(d / np.linalg.norm(d, axis=1)[:, None])

    @cached_property
    def normals(self):
        # tangent rotated by -90 degrees; outward for a CCW polygon
        t = self.tangents
        return _readonly(np.column_stack([t[:, 1], -t[:, 0]]))

    @cached_property
    def normal_measure(self):
        """Discrete ``n dGamma`` per node; sums to exactly zero over the curve."""
        d = np.roll(self.nodes, -1, axis=0) - np.roll(self.nodes, 1, axis=0)
        return _readonly(0.5 * np.column_stack([d[:, 1], -d[:, 0]]))

    @cached_property
    def centroid(self):
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = 0.5 * cross.sum()
        return _readonly(
            [np.sum((x + xn) * cross) / (6 * a), np.sum((y + yn) * cross) / (6 * a)]
        )

    @property
    def mean_spacing(self):
        return self.perimeter / len(self)

    def is_simple(self):
        return not _segments_intersect(self.nodes)


def circle(n, radius=1.0, center=(0.0, 0.0)):
    """Regular ``n``-gon inscribed in a circle; node 0 sits at angle 0."""
    theta = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([np.cos(theta), np.sin(theta)]) * radius + np.asarray(center)
    return SurfaceCurve(pts)


def obstacle_volume(surface):
    """Area enclosed by the surface (shoelace formula)."""
    return abs(float(signed_area(surface.nodes)))


def fourier_mode(surface, omega, shift=0.0):
    """Real Fourier mode ``cos(omega * theta + shift)`` sampled at the nodes.

    ``theta = 2 pi xi / L`` is the arclength rescaled to a 2 pi period, so an
    integer ``omega`` gives exactly ``omega`` periods around the surface.
    """
    theta = 2 * np.pi * surface.xi / surface.perimeter
    return np.cos(omega * theta + shift)


def perturb_surface(surface, alpha, eps):
    """Move node ``j`` by ``eps * alpha[j]`` along its normal."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (len(surface),):
        raise ValueError(f"alpha must have length {len(surface)}, got {alpha.shape}")
    new = SurfaceCurve(surface.nodes + eps * alpha[:, None] * surface.normals)
    if not new.is_simple():
        raise SelfIntersectionError("perturbed surface intersects itself")
    return new


def reparametrize_uniform(surface):
    """Resample the polygon at uniform arclength, keeping node 0 fixed."""
    n = len(surface)
    closed = np.vstack([surface.nodes, surface.nodes[:1]])
    s = np.concatenate([[0.0], np.cumsum(surface.segment_lengths)])
    target = np.arange(n) * s[-1] / n
    pts = np.column_stack(
        [np.interp(target, s, closed[:, 0]), np.interp(target, s, closed[:, 1])]
    )
    return SurfaceCurve(pts)


def _solve_stretch(first_layer, depth, n_rings):
    if first_layer * n_rings >= depth:
        return 1.0

    def total(s):
        return first_layer * (s**n_rings - 1.0) / (s - 1.0) - depth

    return brentq(total, 1.0 + 1e-12, 10.0, xtol=1e-14)


def _triangulate(n, n_rings):
    m, j = np.meshgrid(np.arange(n_rings), np.arange(n), indexing="ij")
    m, j = m.ravel(), j.ravel()
    jp = (j + 1) % n
    a = m * n + j
    b = m * n + jp
    c = (m + 1) * n + jp
    d = (m + 1) * n + j
    # diagonal direction alternates by quadrant so a circle grid keeps both mirror symmetries
    flip = ((4 * j) // n) % 2 == 1
    t1 = np.where(flip[:, None], np.column_stack([a, d, b]), np.column_stack([a, d, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, d, c]), np.column_stack([a, c, b]))
    return np.vstack([t1, t2])


@dataclass(frozen=True, eq=False)
class OGridMesh:
    """Structured O-grid around a surface.

    ``points`` has shape ``(n_rings + 1, N, 2)``; global node id of ring ``m``,
    surface index ``j`` is ``m * N + j``.
    """

    surface: SurfaceCurve
    points: np.ndarray
    triangles: np.ndarray
    n_rings: int
    r_far: float
    stretch: float
    first_layer: float
    center: np.ndarray
    wall_distance: np.ndarray = field(repr=False)

    @property
    def n_surface(self):
        return len(self.surface)

    @property
    def nodes(self):
        return self.points.reshape(-1, 2)

    @property
    def n_nodes(self):
        return self.points.shape[0] * self.points.shape[1]

    @property
    def wall_ids(self):
        return np.arange(self.n_surface)

    @property
    def farfield_ids(self):
        n = self.n_surface
        return np.arange(self.n_rings * n, (self.n_rings + 1) * n)

    @cached_property
    def triangle_areas(self):
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return _readonly(0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))

    @cached_property
    def line_spacing(self):
        """Spacing h_{j,m} between rings m and m+1 along each xi_2 line, shape (n_rings, N)."""
        return _readonly(np.linalg.norm(np.diff(self.points, axis=0), axis=2))

    def ring(self, m):
        return self.points[m]


def build_ogrid(surface, n_rings, r_far, stretch=None, first_layer=None, center=None):
    """Extrude an O-grid from ``surface`` to a far-field circle of radius ``r_far``.

    Ring distances grow geometrically by ``stretch``. If ``stretch`` is None it
    is solved from ``first_layer`` (default ``L / (4 N)``) so the rings reach
    the far field. Raises MeshError if any cell is tangled.
    """
    n = len(surface)
    if n_rings < 8:
        raise ValueError("an O-grid needs at least 8 rings")
    c = surface.centroid if center is None else np.asarray(center, dtype=float)
    rel = surface.nodes - c
    rho = np.linalg.norm(rel, axis=1)
    if r_far <= 2 * rho.max():
        raise ValueError("far-field radius must exceed twice the obstacle radius")
    depth = r_far - rho.mean()

    if stretch is None:
        if first_layer is None:
            first_layer = surface.perimeter / (4 * n)
        stretch = _solve_stretch(first_layer, depth, n_rings)
    if stretch < 1:
        raise ValueError("stretch ratio must be >= 1")
    if first_layer is None:
        if stretch == 1.0:
            first_layer = depth / n_rings
        else:
            first_layer = depth * (stretch - 1.0) / (stretch**n_rings - 1.0)

    m = np.arange(n_rings + 1)
    if stretch == 1.0:
        dist = first_layer * m
    else:
        dist = first_layer * (stretch**m - 1.0) / (stretch - 1.0)
    t = dist / dist[-1]

    u = np.clip((m - NORMAL_RINGS) / (n_rings - NORMAL_RINGS), 0.0, 1.0)
    blend = u * u * (3.0 - 2.0 * u)

    e = rel / rho[:, None]
    near = surface.nodes[None] + dist[:, None, None] * surface.normals[None]
    far_r = rho[None] + t[:, None] * (r_far - rho[None])
    far = c + far_r[..., None] * e[None]
    pts = (1.0 - blend)[:, None, None] * near + blend[:, None, None] * far
    # ring 0 is the surface exactly
    pts[0] = surface.nodes

    mesh = OGridMesh(
        surface=surface,
        points=_readonly(pts),
        triangles=_triangulate(n, n_rings),
        n_rings=n_rings,
        r_far=float(r_far),
        stretch=float(stretch),
        first_layer=float(first_layer),
        center=_readonly(c),
        wall_distance=_readonly(dist),
    )
    bad = mesh.triangle_areas <= 0
    if np.any(bad):
        raise MeshError(f"{int(bad.sum())} tangled cells in O-grid extrusion")
    return mesh


def regenerate_mesh(mesh, new_surface):
    """Re-extrude ``mesh`` settings around ``new_surface``."""
    if len(new_surface) != mesh.n_surface:
        raise ValueError("new surface must keep the node count")
    return build_ogrid(
        new_surface,
        mesh.n_rings,
        mesh.r_far,
        stretch=mesh.stretch,
        first_layer=mesh.first_layer,
        center=mesh.center,
    )


def write_surface_csv(path, surface, header_lines=()):
    path = Path(path)
    with path.open("w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("x,y\n")
        np.savetxt(fh, surface.nodes, delimiter=",", fmt="%.17g")


def read_surface_csv(path):
    """Read an ``x,y`` polyline; ``#`` comments and a header row are skipped."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if lines and not lines[0].lstrip()[0] in "+-.0123456789":
        lines = lines[1:]
    data = np.loadtxt(lines, delimiter=",", ndmin=2)
    return SurfaceCurve(data[:, :2])


def write_mesh_csv(prefix, mesh, header_lines=()):
    """Dump ``<prefix>_nodes.csv`` and ``<prefix>_cells.csv``."""
    prefix = str(prefix)
    with open(prefix + "_nodes.csv", "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("node,x,y\n")
        ids = np.arange(mesh.n_nodes)
        for i, (x, y) in zip(ids, mesh.nodes):
            fh.write(f"{i},{x:.17g},{y:.17g}\n")
    with open(prefix + "_cells.csv", "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("cell,n0,n1,n2\n")
        for i, tri in enumerate(mesh.triangles):
            fh.write(f"{i},{tri[0]},{tri[1]},{tri[2]}\n")
