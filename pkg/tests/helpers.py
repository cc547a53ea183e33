"""Shared oracles for the test suite."""
import numpy as np

from stokesshape.flow import FlowConfig, StokesSystem, solve_adjoint, solve_stokes
from stokesshape.geometry import build_ogrid, circle


def mirror_index(n):
    """Node index of the reflection y -> -y on a circle grid starting at angle 0."""
    return (-np.arange(n)) % n


def mesh_mirror(mesh):
    """Reflection y -> -y as a permutation of all mesh nodes."""
    n = mesh.n_surface
    return (np.arange(mesh.n_rings + 1)[:, None] * n + mirror_index(n)[None, :]).ravel()


# Manufactured solution: divergence-free velocity, smooth pressure.
def mms_velocity(x, y):
    return np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)


def mms_pressure(x, y):
    return np.sin(x) * np.sin(y)


def mms_forcing_primal(mu):
    # -mu Lap v + grad p
    def f(x, y):
        return (
            2 * mu * np.sin(x) * np.cos(y) + np.cos(x) * np.sin(y),
            -2 * mu * np.cos(x) * np.sin(y) + np.sin(x) * np.cos(y),
        )

    return f


def mms_forcing_adjoint(mu):
    # -mu Lap lam - grad lam_p
    def f(x, y):
        return (
            2 * mu * np.sin(x) * np.cos(y) - np.cos(x) * np.sin(y),
            -2 * mu * np.cos(x) * np.sin(y) - np.sin(x) * np.cos(y),
        )

    return f


def lumped_mass(mesh):
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.triangle_areas / 3, 3))
    return m


def l2_error(mesh, err):
    m = lumped_mass(mesh)
    return float(np.sqrt(np.sum(m[:, None] * np.reshape(err, (len(m), -1)) ** 2)))


def mms_errors(levels, mu=1.0, r_far=4.0):
    """Velocity and pressure L2 errors of primal and adjoint on refined O-grids."""
    cfg = FlowConfig(mu=mu)
    out = []
    for n, nr in levels:
        mesh = build_ogrid(circle(n), nr, r_far, stretch=1.0 + 0.8 / nr)
        system = StokesSystem(mesh, mu)
        st = solve_stokes(mesh, cfg, mms_forcing_primal(mu), mms_velocity, system)
        ad = solve_adjoint(mesh, cfg, mms_forcing_adjoint(mu), mms_velocity, system)
        x, y = mesh.nodes.T
        v = np.column_stack(mms_velocity(x, y))
        p = mms_pressure(x, y)
        m = lumped_mass(mesh)
        p = p - m @ p / m.sum()
        out.append(
            dict(
                primal=l2_error(mesh, st.v - v),
                adjoint=l2_error(mesh, ad.lam - v),
                pressure=l2_error(mesh, st.p - p),
                adjoint_pressure=l2_error(mesh, ad.lam_p - p),
                residual=max(st.residual_norm, ad.residual_norm),
            )
        )
    return out


def orders(errors, key):
    e = np.array([d[key] for d in errors])
    return np.log2(e[:-1] / e[1:])


def central_fd_drag(mesh, cfg, alpha, eps):
    """Central difference of the drag along the normal displacement ``alpha``."""
    from stokesshape.cost import drag
    from stokesshape.flow import solve_stokes
    from stokesshape.geometry import perturb_surface, regenerate_mesh

    vals = []
    for s in (eps, -eps):
        m = regenerate_mesh(mesh, perturb_surface(mesh.surface, alpha, s))
        vals.append(drag(m, solve_stokes(m, cfg), cfg))
    return (vals[0] - vals[1]) / (2 * eps)


def random_spec(rng, n=None, eta=0.2):
    """A valid preconditioner from random beta1 (with negatives) and eps <= 0."""
    from stokesshape.smoothing import assemble_preconditioner, modify_beta1

    n = n or int(rng.integers(3, 200))
    beta1 = rng.normal(0.0, 2.0, n)
    h = float(rng.uniform(1e-3, 0.5))
    scale = 10.0 ** rng.uniform(-4, 1)
    eps = -scale * rng.random(n) * h**2 * rng.choice([0.0, 1.0, 100.0])
    return assemble_preconditioner(modify_beta1(beta1, eta), eps, h, eta)


def random_spectrum(rng, n=64, perimeter=2 * np.pi, n_tones=None):
    """Spectrum with a few random tones at every node, plus the matching inputs."""
    from stokesshape.smoothing import WindowedSpectrum, frequencies

    coeffs = np.zeros((n, n), dtype=complex)
    k = n_tones or int(rng.integers(1, 4))
    for _ in range(k):
        l = int(rng.integers(1, n // 2))
        amp = rng.normal(size=n) + 1j * rng.normal(size=n)
        coeffs[:, l] += amp
        coeffs[:, n - l] += np.conj(amp)
    return WindowedSpectrum(coeffs, np.ones(n) / n, frequencies(n, perimeter))


def brute_force_epsilon(beta1_bar, beta2_abs, spectrum, perimeter, points=10_000):
    """Two-level grid scan of the epsilon objective on [-eps_max, 0]."""
    from stokesshape.smoothing import epsilon_objective

    keep = spectrum.omega > 0
    omega = spectrum.omega[keep]
    w = np.abs(spectrum.coefficients[:, keep]) ** 2
    eps_max = beta1_bar * (perimeter / (2 * np.pi)) ** 2
    t = np.linspace(0.0, 1.0, points)
    grid = -eps_max[:, None] * t[None, :]
    vals = epsilon_objective(grid, beta1_bar, beta2_abs, w, omega)
    best = np.argmin(vals, axis=1)
    step = eps_max / (points - 1)
    centre = grid[np.arange(len(best)), best]
    fine = centre[:, None] + step[:, None] * np.linspace(-1.0, 1.0, points)[None, :]
    fine = np.clip(fine, -eps_max[:, None], 0.0)
    fvals = epsilon_objective(fine, beta1_bar, beta2_abs, w, omega)
    return fine[np.arange(len(best)), np.argmin(fvals, axis=1)], eps_max


ACCEPTANCE = {}


def report(number, ok, detail):
    """Record the PASS/FAIL line of an acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok
