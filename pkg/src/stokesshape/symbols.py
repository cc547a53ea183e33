"""Hessian symbol coefficients and their finite-difference verification.

For a normal perturbation ``alpha = cos(omega xi + s)`` the shape Hessian of
the drag acts, to leading order, as multiplication by the symbol
``beta1 + beta2 |omega|``. The analytic coefficients come from wall-normal
derivatives of the primal and adjoint velocities; the FD side perturbs the
surface, re-solves both problems and differences the shape gradient.
"""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass, field

import numpy as np

from .cost import shape_gradient
from .flow import StokesSystem, solve_states, wall_normal_derivative
from .geometry import GeometryError, fourier_mode, perturb_surface, regenerate_mesh


class ProbeError(RuntimeError):
    """A probe failed; carries the probe frequency."""

    def __init__(self, omega, cause):
        super().__init__(f"probe omega={omega}: {cause}")
        self.omega = omega
        self.cause = cause


@dataclass(frozen=True, eq=False)
class SymbolCoefficients:
    beta1: np.ndarray
    beta2: np.ndarray


def analytic_betas(mesh, flow, adj, cfg):
    """Symbol coefficients at every surface node.

    ``beta2 = 2 mu sum_k d_n lam_k d_n v_k`` (twice the shape gradient) and
    ``beta1 = mu d_n (sum_k d_n v_k d_n lam_k)``, expanded by the product rule,
    with ``n`` pointing into the fluid.
    """
    dv = wall_normal_derivative(mesh, flow.v, 1)
    dl = wall_normal_derivative(mesh, adj.lam, 1)
    d2v = wall_normal_derivative(mesh, flow.v, 2)
    d2l = wall_normal_derivative(mesh, adj.lam, 2)
    beta2 = 2.0 * cfg.mu * np.sum(dv * dl, axis=1)
    beta1 = cfg.mu * np.sum(d2v * dl + dv * d2l, axis=1)
    return SymbolCoefficients(beta1, beta2)


def default_fd_step(surface):
    """FD step of 1e-5 times the bounding radius about the centroid."""
    return 1e-5 * float(np.max(np.linalg.norm(surface.nodes - surface.centroid, axis=1)))


def base_gradient(mesh, cfg):
    """Shape gradient of the unperturbed design (cached by the callers)."""
    flow, adj = solve_states(mesh, cfg)
    return shape_gradient(mesh, flow, adj, cfg)


def fd_hessian_response(base, cfg, alpha, eps, df0=None, retries=3):
    """Forward difference ``(df(Gamma + eps alpha n) - df(Gamma)) / eps``.

    On a mesh failure the step is halved up to ``retries`` times.
    """
    if df0 is None:
        df0 = base_gradient(base, cfg)
    alpha = np.asarray(alpha, dtype=float)
    for attempt in range(retries + 1):
        try:
            mesh = regenerate_mesh(base, perturb_surface(base.surface, alpha, eps))
            break
        except GeometryError:
            if attempt == retries:
                raise
            eps = 0.5 * eps
    system = StokesSystem(mesh, cfg.mu)
    flow, adj = solve_states(mesh, cfg, system=system)
    return (shape_gradient(mesh, flow, adj, cfg) - df0) / eps


def wavenumber(surface, omega):
    """Physical wavenumber of a mode with ``omega`` periods per perimeter."""
    return 2 * np.pi * omega / surface.perimeter


def aligned_probe(surface, omega, xi_star):
    """Cosine mode shifted so it equals 1 at arclength ``xi_star``."""
    shift = -omega * 2 * np.pi * xi_star / surface.perimeter
    return fourier_mode(surface, omega, shift)


def nearest_node(surface, xi_star):
    L = surface.perimeter
    d = np.abs((surface.xi - xi_star + 0.5 * L) % L - 0.5 * L)
    return int(np.argmin(d))


def phase_lag(alpha, response):
    """Integer lag of the circular cross-correlation peak, wrapped to [-N/2, N/2).

    Lags whose correlation equals the maximum up to round-off are treated
    as ties (a mode with ``omega`` periods is invariant under shifts by
    ``N / gcd``); the smallest ``|lag|`` among them is reported.
    """
    a = np.asarray(alpha, dtype=float)
    r = np.asarray(response, dtype=float)
    n = len(a)
    corr = np.fft.irfft(np.conj(np.fft.rfft(a)) * np.fft.rfft(r), n)
    lags = (np.arange(n) + n // 2) % n - n // 2
    top = corr.max()
    tol = 1e-9 * np.abs(corr).max()
    ties = lags[corr >= top - tol]
    return int(ties[np.argmin(np.abs(ties))])


def dominant_mode(values):
    """Index ``l`` in [0, N/2] of the largest DFT magnitude."""
    return int(np.argmax(np.abs(np.fft.rfft(values))))


def fit_scaling(responses, xi_star=None, surface=None):
    """Least-squares line ``amplitude = b1 + b2 * omega``.

    ``responses`` is a list of ``(omega, value)`` pairs, or ``(omega, H)``
    arrays together with ``xi_star`` and ``surface`` to read ``H`` at the node
    nearest ``xi_star``. Returns ``(b1, b2, r2)``.
    """
    om = np.array([r[0] for r in responses], dtype=float)
    if xi_star is None:
        amp = np.array([float(r[1]) for r in responses])
    else:
        j = nearest_node(surface, xi_star)
        amp = np.array([np.asarray(r[1])[j] for r in responses])
    if len(om) < 2 or np.ptp(om) == 0:
        raise ValueError("fit needs at least two distinct frequencies")
    design = np.column_stack([np.ones_like(om), om])
    (b1, b2), *_ = np.linalg.lstsq(design, amp, rcond=None)
    resid = amp - design @ np.array([b1, b2])
    ss_tot = np.sum((amp - amp.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - np.sum(resid**2) / ss_tot)
    return float(b1), float(b2), float(min(r2, 1.0))


@dataclass(frozen=True, eq=False)
class ProbeResult:
    omega: int
    xi_star: float
    alpha: np.ndarray = field(repr=False)
    response: np.ndarray = field(repr=False)
    lag: int
    error: str = ""


@dataclass(frozen=True, eq=False)
class SymbolReport:
    omegas: list
    xi_stars: np.ndarray
    beta1_fd: np.ndarray
    beta2_fd: np.ndarray
    r2: np.ndarray
    beta1_analytic: np.ndarray
    beta2_analytic: np.ndarray
    probes: list = field(repr=False)

    @property
    def failures(self):
        return [p for p in self.probes if p.error]


def _run_probe(args):
    base, cfg, omega, xi_star, eps, df0 = args
    alpha = aligned_probe(base.surface, omega, xi_star)
    try:
        h = fd_hessian_response(base, cfg, alpha, eps, df0=df0)
    except Exception as exc:  # recorded per probe, the sweep continues
        return ProbeResult(omega, xi_star, alpha, np.full(len(alpha), np.nan), 0, str(ProbeError(omega, exc)))
    return ProbeResult(omega, xi_star, alpha, h, phase_lag(alpha, h))


def run_probes(base, cfg, tasks, eps, df0, workers=1):
    """Evaluate ``(omega, xi_star)`` probes, returned in task order."""
    args = [(base, cfg, om, xs, eps, df0) for om, xs in tasks]
    if workers <= 1 or len(args) <= 1:
        return [_run_probe(a) for a in args]
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_probe, args))


def beta_sweep(base, cfg, omegas, xi_stars, eps=None, workers=1):
    """FD symbol fit at each station ``xi_star`` from probes at ``omegas``.

    ``omegas`` are mode counts per perimeter; fitted slopes refer to the
    physical wavenumber ``2 pi omega / L``.
    """
    surface = base.surface
    xi_stars = np.asarray(list(xi_stars), dtype=float)
    omegas = [int(o) for o in omegas]
    flow, adj = solve_states(base, cfg)
    df0 = shape_gradient(base, flow, adj, cfg)
    betas = analytic_betas(base, flow, adj, cfg)
    eps = default_fd_step(surface) if eps is None else eps
    tasks = [(om, xs) for xs in xi_stars for om in omegas]
    probes = run_probes(base, cfg, tasks, eps, df0, workers) if len(tasks) else []
    m = len(xi_stars)
    b1, b2, r2 = np.full(m, np.nan), np.full(m, np.nan), np.full(m, np.nan)
    a1, a2 = np.empty(m), np.empty(m)
    for i, xs in enumerate(xi_stars):
        j = nearest_node(surface, xs)
        a1[i], a2[i] = betas.beta1[j], betas.beta2[j]
        group = [p for p in probes[i * len(omegas) : (i + 1) * len(omegas)] if not p.error]
        if len({p.omega for p in group}) >= 2:
            pts = [(wavenumber(surface, p.omega), p.response[j]) for p in group]
            b1[i], b2[i], r2[i] = fit_scaling(pts)
    return SymbolReport(omegas, xi_stars, b1, b2, r2, a1, a2, probes)


def fitted_factor(fd, analytic):
    """Scalar ``c`` minimizing ``||fd - c * analytic||`` and the Pearson
    correlation between ``fd`` and the scaled field ``c * analytic``."""
    fd = np.asarray(fd, dtype=float)
    an = np.asarray(analytic, dtype=float)
    ok = np.isfinite(fd) & np.isfinite(an)
    fd, an = fd[ok], an[ok]
    c = float(fd @ an / (an @ an)) if an @ an > 0 else 0.0
    r = float(np.corrcoef(fd, c * an)[0, 1]) if len(fd) > 1 and c != 0 else float("nan")
    return c, r


def write_symbol_report_csv(path, report, header_lines=()):
    data = np.column_stack(
        [
            report.xi_stars,
            report.beta1_analytic,
            report.beta2_analytic,
            report.beta1_fd,
            report.beta2_fd,
            report.r2,
        ]
    )
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("xi1,beta1_analytic,beta2_analytic,beta1_fd,beta2_fd,r2\n")
        np.savetxt(fh, data.reshape(-1, 6), delimiter=",", fmt="%.17g")


def write_probe_csv(path, surface, probe, header_lines=()):
    data = np.column_stack([surface.xi, probe.alpha, probe.response])
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("xi1,alpha,h_fd\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")
