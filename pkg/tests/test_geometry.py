import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon

from stokesshape.geometry import (
    GeometryError,
    MeshError,
    SelfIntersectionError,
    SurfaceCurve,
    build_ogrid,
    circle,
    fourier_mode,
    obstacle_volume,
    perturb_surface,
    read_surface_csv,
    regenerate_mesh,
    reparametrize_uniform,
    write_mesh_csv,
    write_surface_csv,
)


def star(n, amp, lobes, radius=1.0):
    th = 2 * np.pi * np.arange(n) / n
    r = radius * (1 + amp * np.cos(lobes * th))
    return SurfaceCurve(np.column_stack([r * np.cos(th), r * np.sin(th)]))


radii = st.lists(st.floats(0.5, 2.0), min_size=5, max_size=40)


def star_from_radii(rs, shift=(0.0, 0.0)):
    rs = np.asarray(rs)
    th = 2 * np.pi * np.arange(len(rs)) / len(rs)
    return SurfaceCurve(np.column_stack([rs * np.cos(th), rs * np.sin(th)]) + shift)


# --- SurfaceCurve -----------------------------------------------------------


def test_clockwise_input_is_reoriented():
    nodes = circle(16).nodes[::-1]
    s = SurfaceCurve(nodes)
    assert np.allclose(s.nodes[0], nodes[0])
    assert np.array_equal(s.nodes, np.roll(circle(16).nodes, 1, axis=0))
    assert obstacle_volume(s) > 0


@settings(max_examples=50, deadline=None)
@given(radii)
def test_metric_invariants(rs):
    s = star_from_radii(rs)
    assert np.allclose(np.linalg.norm(s.tangents, axis=1), 1, atol=1e-12)
    assert np.allclose(np.linalg.norm(s.normals, axis=1), 1, atol=1e-12)
    assert np.all(np.abs(np.sum(s.tangents * s.normals, axis=1)) < 1e-10)
    assert np.all(np.diff(s.xi) > 0)
    assert s.xi[-1] + s.segment_lengths[-1] == pytest.approx(s.perimeter, rel=1e-14)


def test_normals_point_away_from_centroid():
    s = star(128, 0.2, 3)
    rel = s.nodes - s.centroid
    assert np.all(np.sum(rel * s.normals, axis=1) > 0)


def test_normal_measure_sums_to_zero():
    s = star(97, 0.3, 5)
    assert np.allclose(s.normal_measure.sum(axis=0), 0, atol=1e-14)


# --- volume -----------------------------------------------------------------


def test_circle_area_second_order():
    errs = [abs(obstacle_volume(circle(n)) - np.pi) for n in (64, 128, 256)]
    assert errs[2] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.01)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.01)


def test_unit_square_area():
    sq = SurfaceCurve(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float))
    assert obstacle_volume(sq) == 1.0


def test_translation_invariant_area():
    a = obstacle_volume(circle(256))
    b = obstacle_volume(circle(256, center=(3.0, -7.0)))
    assert b == pytest.approx(a, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(radii, st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_area_matches_polygon_clipping_oracle(rs, shift):
    s = star_from_radii(rs, shift)
    assert abs(obstacle_volume(s) - Polygon(s.nodes).area) < 1e-10


# --- circle perimeter and fourier modes ---------------------------------------


def test_circle_perimeter_second_order():
    errs = [abs(circle(n).perimeter - 2 * np.pi) for n in (64, 128, 256)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.01)
    assert errs[2] < 2 * np.pi * np.pi**2 / 6 / 256**2 * 1.01


def test_fourier_mode_dc():
    assert np.all(fourier_mode(circle(64), 0, 0.0) == 1.0)


def test_fourier_mode_closes_after_whole_periods():
    s = circle(256)
    alpha = fourier_mode(s, 60)
    # value at xi = L, one step past the last node
    closing = np.cos(60 * 2 * np.pi * (s.xi[-1] + s.segment_lengths[-1]) / s.perimeter)
    assert abs(closing - alpha[0]) < 1e-10
    assert np.argmax(np.abs(np.fft.rfft(alpha))) == 60


def test_fourier_mode_alignment_shift():
    s = circle(256)
    j = 96  # node at 3 pi / 4
    shift = -3 * 2 * np.pi * s.xi[j] / s.perimeter
    assert fourier_mode(s, 3, shift)[j] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 40), st.floats(-10, 10))
def test_fourier_mode_periodic_start(omega, shift):
    assert abs(fourier_mode(circle(64), omega, shift)[0] - np.cos(shift)) < 1e-12


# --- perturbation -------------------------------------------------------------


def test_zero_perturbation_is_identity():
    s = star(64, 0.1, 3)
    assert np.array_equal(perturb_surface(s, np.zeros(64), 0.3).nodes, s.nodes)


def test_uniform_offset_of_circle():
    p = perturb_surface(circle(256), np.ones(256), 0.1)
    assert np.allclose(np.linalg.norm(p.nodes, axis=1), 1.1, atol=1e-12, rtol=0)


def test_ripple_mode_60():
    s = circle(256)
    alpha = np.cos(60 * (s.xi - 0.06))
    p = perturb_surface(s, alpha, 1e-4)
    r = np.linalg.norm(p.nodes, axis=1) - 1
    assert np.argmax(np.abs(np.fft.rfft(r))) == 60


def test_perturbation_self_intersection():
    s = circle(64)
    alpha = np.zeros(64)
    alpha[0] = -1.0  # push one node through the far side
    with pytest.raises(SelfIntersectionError):
        perturb_surface(s, alpha, 2.5)


def test_alpha_length_checked():
    with pytest.raises(ValueError):
        perturb_surface(circle(16), np.ones(15), 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(1e-6, 1e-2), st.floats(0, 6.3))
def test_plus_minus_perturbations_mirror_base(omega, eps, shift):
    s = star(128, 0.15, 3)
    alpha = fourier_mode(s, omega, shift)
    plus = perturb_surface(s, alpha, eps).nodes
    minus = perturb_surface(s, alpha, -eps).nodes
    assert np.allclose(0.5 * (plus + minus), s.nodes, atol=1e-12, rtol=0)


def test_reparametrize_uniform_spacing():
    s = star(200, 0.2, 4)
    u = reparametrize_uniform(s)
    assert np.array_equal(u.nodes[0], s.nodes[0])
    # spacing is uniform along the original polyline; chords differ only slightly
    assert np.ptp(u.segment_lengths) / u.mean_spacing < 5e-3


# --- O-grid -----------------------------------------------------------------


def test_ring0_is_surface(cylinder_mesh):
    assert np.array_equal(cylinder_mesh.ring(0), cylinder_mesh.surface.nodes)
    assert np.allclose(np.linalg.norm(cylinder_mesh.ring(0), axis=1), 1.0, atol=1e-12)


def test_cylinder_mesh_parameters(cylinder_mesh):
    m = cylinder_mesh
    assert m.points.shape == (65, 256, 2)
    assert m.first_layer == pytest.approx(2 * np.pi / 1024, rel=1e-3)
    assert 1.05 < m.stretch < 1.15
    assert np.all(m.triangle_areas > 0)
    far = np.linalg.norm(m.ring(64), axis=1)
    assert np.allclose(far, 40.0, rtol=1e-12)


def test_first_layer_leaves_along_normal():
    s = star(128, 0.15, 3)
    m = build_ogrid(s, 32, 20.0)
    d = m.ring(1) - m.ring(0)
    d /= np.linalg.norm(d, axis=1)[:, None]
    assert np.max(np.abs(np.sum(d * s.normals, axis=1) - 1)) < 1e-10


def test_wall_distance_geometric():
    m = build_ogrid(circle(64), 16, 20.0, stretch=1.2)
    h = np.diff(m.wall_distance)
    assert np.allclose(h[1:] / h[:-1], 1.2)
    assert np.allclose(m.line_spacing[0], m.first_layer)


def test_tangled_concave_surface():
    s = star(128, 0.6, 12)
    with pytest.raises(MeshError):
        build_ogrid(s, 16, 20.0, first_layer=0.5)


def test_mesh_preconditions():
    with pytest.raises(ValueError):
        build_ogrid(circle(32), 4, 20.0)
    with pytest.raises(ValueError):
        build_ogrid(circle(32), 16, 1.5)
    with pytest.raises(ValueError):
        build_ogrid(circle(32), 16, 20.0, stretch=0.9)


def test_regenerate_identity(medium_mesh):
    again = regenerate_mesh(medium_mesh, medium_mesh.surface)
    assert np.max(np.abs(again.points - medium_mesh.points)) <= 1e-14
    assert np.array_equal(again.triangles, medium_mesh.triangles)


def test_regenerate_inflated_circle(medium_mesh):
    big = perturb_surface(medium_mesh.surface, np.ones(128), 0.2)
    m = regenerate_mesh(medium_mesh, big)
    assert np.allclose(np.linalg.norm(m.ring(0), axis=1), 1.2, atol=1e-12)
    assert m.stretch == medium_mesh.stretch


def test_regenerate_rippled_surface_positive(cylinder_mesh):
    s = cylinder_mesh.surface
    rippled = perturb_surface(s, np.cos(60 * (s.xi - 0.06)), 1e-4)
    m = regenerate_mesh(cylinder_mesh, rippled)
    assert np.all(m.triangle_areas > 0)


def test_regenerate_needs_same_count(small_mesh):
    with pytest.raises(ValueError):
        regenerate_mesh(small_mesh, circle(65))


def test_surface_csv_roundtrip(tmp_path):
    s = star(50, 0.1, 3)
    path = tmp_path / "s.csv"
    write_surface_csv(path, s, ["config_hash=abc"])
    assert path.read_text().startswith("# config_hash=abc\nx,y\n")
    assert np.array_equal(read_surface_csv(path).nodes, s.nodes)


def test_mesh_csv(tmp_path, small_mesh):
    write_mesh_csv(tmp_path / "m", small_mesh, ["h"])
    nodes = np.loadtxt(tmp_path / "m_nodes.csv", delimiter=",", skiprows=2)
    cells = np.loadtxt(tmp_path / "m_cells.csv", delimiter=",", skiprows=2, dtype=int)
    assert np.array_equal(nodes[:, 1:], small_mesh.nodes)
    assert np.array_equal(cells[:, 1:], small_mesh.triangles)


def test_invalid_surface():
    with pytest.raises(GeometryError):
        SurfaceCurve(np.zeros((2, 2)))
    with pytest.raises(GeometryError):
        SurfaceCurve(np.array([[0, 0], [1, np.nan], [0, 1]]))
