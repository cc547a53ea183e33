"""Local-smoothing preconditioner and the Sobolev baseline.

The preconditioner solves ``B p = -df`` with the periodic tridiagonal

    B = diag(beta1_bar) + diag(eps) D2 / h^2,

``D2`` the periodic second difference and ``eps <= 0`` chosen per node so
that ``1 / (beta1_bar - eps omega^2)`` matches the modified inverse Hessian
symbol ``1 / (beta1_bar + |beta2| omega)`` on the locally dominant
frequencies of the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


class PreconditionerError(RuntimeError):
    """Invalid preconditioner data or a breakdown in the periodic solve."""


def modify_beta1(beta1, eta):
    """Shift ``beta1`` so its minimum is at least ``eta``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    beta1 = np.asarray(beta1, dtype=float)
    return eta + beta1 - min(0.0, float(beta1.min()))


def fallback_beta1(beta2, factor=10.0, smoothing=1e-4, spacing=1.0):
    """Convective substitute ``factor * S |beta2|`` with ``S`` one Sobolev pass."""
    return -factor * sobolev_smooth(np.abs(np.asarray(beta2, dtype=float)), smoothing, spacing)


# --- windowed Fourier transform -------------------------------------------


@dataclass(frozen=True, eq=False)
class WindowedSpectrum:
    """``coefficients[m, l]`` is the transform for the window centred at node ``m``."""

    coefficients: np.ndarray = field(repr=False)
    window: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)


def gaussian_window(n, width):
    """Periodic Gaussian with standard deviation ``width * n`` nodes, unit sum."""
    if width <= 0:
        g = np.zeros(n)
        g[0] = 1.0
        return g
    sigma = width * n
    k = np.arange(n)
    offsets = np.arange(-3, 4)[:, None] * n
    g = np.exp(-0.5 * ((k[None, :] + offsets) / sigma) ** 2).sum(axis=0)
    g = 0.5 * (g + np.roll(g[::-1], 1))  # exact symmetry g_k = g_{-k}
    return g / g.sum()


def frequencies(n, perimeter):
    """Physical wavenumbers ``2 pi min(l, n - l) / L``."""
    l = np.arange(n)
    return 2 * np.pi * np.minimum(l, n - l) / perimeter


def windowed_dft(df, window_width=1.0 / 16, perimeter=2 * np.pi):
    """``d[m, l] = sum_k df_k g_{k - m} exp(-2 pi i k l / N)``."""
    df = np.asarray(df, dtype=float)
    n = len(df)
    if n < 4:
        raise ValueError("windowed transform needs at least 4 nodes")
    g = gaussian_window(n, window_width)
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    coeffs = np.fft.fft(df[None, :] * g[idx], axis=1)
    return WindowedSpectrum(coeffs, g, frequencies(n, perimeter))


# --- epsilon selection ------------------------------------------------------


def epsilon_objective(eps, beta1_bar, beta2_abs, weights, omega):
    """Weighted squared mismatch of the two inverse symbols.

    ``eps`` has shape ``(m, k)`` or broadcasts against ``(m, 1)``; ``weights``
    has shape ``(m, n_freq)``. Returns shape ``(m, k)``.
    """
    b = np.asarray(beta1_bar, dtype=float)[:, None, None]
    c = np.asarray(beta2_abs, dtype=float)[:, None, None]
    e = np.asarray(eps, dtype=float)[..., None]
    target = 1.0 / (b + c * omega)
    diff = 1.0 / (b - e * omega**2) - target
    return np.einsum("mkf,mf->mk", diff**2, weights)


def optimize_epsilon(beta1_bar, beta2_abs, spectrum, perimeter=None, rtol=1e-10, n_scan=201):
    """Per-node smoothing parameter ``eps_j <= 0`` minimizing the symbol mismatch.

    The search interval is ``[-eps_max, 0]`` with ``eps_max = beta1_bar (L / 2 pi)^2``.
    A coarse scan picks the bracket, golden-section search refines it to
    ``rtol * eps_max``. The exact match ``-|beta2| / omega`` at the dominant
    local frequency is kept as a further candidate. Flat objectives and ties
    resolve toward 0.
    """
    b = np.asarray(beta1_bar, dtype=float)
    c = np.abs(np.asarray(beta2_abs, dtype=float))
    if np.any(b <= 0):
        raise PreconditionerError("beta1_bar must be positive")
    omega = spectrum.omega
    if perimeter is None:
        # recover L from the frequency map, omega_1 = 2 pi / L
        perimeter = 2 * np.pi / omega[1]
    keep = omega > 0
    omega = omega[keep]
    weights = np.abs(spectrum.coefficients[:, keep]) ** 2
    eps_max = b * (perimeter / (2 * np.pi)) ** 2
    m = len(b)
    rows = np.arange(m)

    def f(e):
        return epsilon_objective(e, b, c, weights, omega)

    grid = -eps_max[:, None] * np.linspace(0.0, 1.0, n_scan)[None, :]
    vals = f(grid)
    best = np.argmin(vals, axis=1)
    lo = grid[rows, np.minimum(best + 1, n_scan - 1)]
    hi = grid[rows, np.maximum(best - 1, 0)]
    # golden-section on [lo, hi] (lo <= hi <= 0)
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1 = f(x1[:, None])[:, 0]
    f2 = f(x2[:, None])[:, 0]
    tol = rtol * eps_max
    while np.any(hi - lo > tol):
        left = f1 < f2
        # minimum in [lo, x2] where f1 < f2, otherwise in [x1, hi]
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + GOLDEN * (hi - lo))
        x1n = np.where(left, hi - GOLDEN * (hi - lo), x2)
        f2n = np.where(left, f1, np.nan)
        f1n = np.where(left, np.nan, f2)
        x1, x2 = x1n, x2n
        need1 = np.isnan(f1n)
        need2 = np.isnan(f2n)
        f1 = np.where(need1, f(x1[:, None])[:, 0], f1n)
        f2 = np.where(need2, f(x2[:, None])[:, 0], f2n)
    eps = 0.5 * (lo + hi)
    # exact single-frequency match at the dominant local frequency
    dominant = omega[np.argmax(weights, axis=1)]
    tone = np.clip(-c / dominant, -eps_max, 0.0)
    candidates = np.column_stack([eps, grid[rows, best], tone, np.zeros(m)])
    cvals = f(candidates)
    pick = np.argmin(cvals, axis=1)
    eps = candidates[rows, pick]
    # tie-break toward no smoothing
    flat = cvals[:, -1] <= cvals[rows, pick] * (1 + 1e-12)
    eps = np.where(flat, 0.0, eps)
    return np.minimum(eps, 0.0)


# --- preconditioner ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PreconditionerSpec:
    eta: float
    beta1_bar: np.ndarray
    eps: np.ndarray
    spacing: float
    beta2_abs: np.ndarray = None

    @property
    def diag(self):
        return self.beta1_bar - 2.0 * self.eps / self.spacing**2

    @property
    def off(self):
        return self.eps / self.spacing**2

    def matrix(self):
        """Dense ``B`` (row ``j``: ``off_j, diag_j, off_j`` with periodic wrap)."""
        n = len(self.eps)
        b = np.diag(self.diag)
        j = np.arange(n)
        b[j, (j - 1) % n] += self.off
        b[j, (j + 1) % n] += self.off
        return b


def assemble_preconditioner(beta1_bar, eps, spacing, eta, beta2_abs=None):
    beta1_bar = np.asarray(beta1_bar, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if beta1_bar.shape != eps.shape:
        raise PreconditionerError("beta1_bar and eps must have the same length")
    if np.any(eps > 0):
        raise PreconditionerError("smoothing parameters must satisfy eps <= 0")
    if np.any(beta1_bar < eta * (1 - 1e-12)):
        raise PreconditionerError("beta1_bar must be at least eta")
    if not spacing > 0:
        raise PreconditionerError("node spacing must be positive")
    return PreconditionerSpec(float(eta), beta1_bar, eps, float(spacing), beta2_abs)


def solve_periodic_tridiagonal(lower, diag, upper, rhs):
    """Solve the cyclic system ``lower_j x_{j-1} + diag_j x_j + upper_j x_{j+1} = rhs_j``.

    Thomas elimination on the system with the corners removed, followed by a
    Sherman-Morrison correction for the rank-one periodic coupling.
    """
    a = np.asarray(lower, dtype=float)
    b = np.array(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    r = np.asarray(rhs, dtype=float)
    n = len(b)
    if n < 3:
        m = np.diag(b)
        for j in range(n):
            m[j, (j - 1) % n] += a[j]
            m[j, (j + 1) % n] += c[j]
        return np.linalg.solve(m, r)
    alpha, beta = c[-1], a[0]  # corners B[n-1, 0] and B[0, n-1]
    gamma = -b[0] if b[0] != 0 else 1.0
    b[0] -= gamma
    b[-1] -= alpha * beta / gamma
    u = np.zeros(n)
    u[0], u[-1] = gamma, alpha
    x, z = _thomas(a, b, c, np.column_stack([r, u]))
    denom = 1.0 + z[0] + beta * z[-1] / gamma
    if denom == 0 or not np.isfinite(denom):
        raise PreconditionerError("periodic correction broke down")
    return x - ((x[0] + beta * x[-1] / gamma) / denom) * z


def _thomas(a, b, c, rhs):
    n = len(b)
    cp = np.empty(n)
    dp = np.empty_like(rhs)
    piv = b[0]
    if piv == 0:
        raise PreconditionerError("zero pivot in tridiagonal solve")
    cp[0] = c[0] / piv
    dp[0] = rhs[0] / piv
    for j in range(1, n):
        piv = b[j] - a[j] * cp[j - 1]
        if piv == 0:
            raise PreconditionerError("zero pivot in tridiagonal solve")
        cp[j] = c[j] / piv
        dp[j] = (rhs[j] - a[j] * dp[j - 1]) / piv
    for j in range(n - 2, -1, -1):
        dp[j] -= cp[j] * dp[j + 1]
    return dp.T


def apply_preconditioner(spec, df):
    """Search direction ``p = -B^{-1} df``."""
    df = np.asarray(df, dtype=float)
    off = spec.off
    p = solve_periodic_tridiagonal(off, spec.diag, off, -df)
    if not np.all(np.isfinite(p)):
        raise PreconditionerError("non-finite preconditioned direction")
    return p


def sobolev_smooth(df, smoothing, spacing):
    """Sobolev direction ``p = -(1 - s d^2/dxi^2)^{-1} df`` with ``s >= 0``."""
    if smoothing < 0:
        raise ValueError("Sobolev smoothing parameter must be nonnegative")
    df = np.asarray(df, dtype=float)
    if smoothing == 0:
        return -df
    n = len(df)
    spec = PreconditionerSpec(1.0, np.ones(n), np.full(n, -float(smoothing)), float(spacing))
    return apply_preconditioner(spec, df)


def local_direction(df, beta1, beta2, eta, spacing, perimeter, window_width=1.0 / 16):
    """Full local pipeline; returns ``(p, spec)``."""
    beta1_bar = modify_beta1(beta1, eta)
    beta2_abs = np.abs(np.asarray(beta2, dtype=float))
    spectrum = windowed_dft(df, window_width, perimeter)
    eps = optimize_epsilon(beta1_bar, beta2_abs, spectrum, perimeter)
    spec = assemble_preconditioner(beta1_bar, eps, spacing, eta, beta2_abs)
    return apply_preconditioner(spec, df), spec


def write_epsilon_csv(path, surface, spec, header_lines=()):
    beta2_abs = spec.beta2_abs if spec.beta2_abs is not None else np.full(len(spec.eps), np.nan)
    data = np.column_stack([np.arange(len(spec.eps)), surface.xi, spec.beta1_bar, beta2_abs, spec.eps])
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("node,xi1,beta1_bar,beta2_abs,eps\n")
        np.savetxt(fh, data, delimiter=",", fmt=["%d"] + ["%.17g"] * 4)


def write_spectrum_csv(path, spectrum, header_lines=()):
    n = spectrum.coefficients.shape[0]
    m, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    data = np.column_stack([m.ravel(), l.ravel(), np.abs(spectrum.coefficients).ravel()])
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("m,l,abs_d\n")
        np.savetxt(fh, data, delimiter=",", fmt=["%d", "%d", "%.17g"])
