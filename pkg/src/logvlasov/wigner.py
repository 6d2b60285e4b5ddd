"""Wigner transforms of wave fields and weak-convergence diagnostics.

Convention: W(x, xi) = int e^{i y xi} u(x - eps y/2) conj(u(x + eps y/2)) dy with
no normalising prefactor, so the xi-marginal is 2 pi |u|^2.  Pairings against
observables divide by 2 pi once, which makes ``pair(W, phi)`` directly
comparable with ``monokinetic_pair(mu, phi)`` for the limit measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fitting import loglog_slope
from .gaussian_dynamics import (
    BlowupError,
    GammaState,
    GaussianParams,
    gaussian_euler_fields,
    integrate_gamma,
)
from .lognls_solver import (
    PropagationError,
    VacuumError,
    WaveField,
    gaussian_ansatz_oracle,
    gaussian_grid,
    initial_gaussian_field,
    propagate,
)

TWO_PI = 2.0 * np.pi
IMAG_TOL = 1e-8
# max number of complex entries handled per FFT batch
_BATCH_ENTRIES = 1 << 22


class WignerConsistencyError(RuntimeError):
    """Imaginary part of a discrete Wigner transform is too large (under-resolution)."""


class SupportError(ValueError):
    """Observable support is not covered by the sampled grid."""


@dataclass
class PhaseSpaceField:
    x_grid: np.ndarray
    xi_grid: np.ndarray
    values: np.ndarray
    eps: float
    t: float = 0.0
    imag_residue: float = 0.0

    def __post_init__(self):
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        self.xi_grid = np.asarray(self.xi_grid, dtype=float)
        self.values = np.asarray(self.values)
        if np.iscomplexobj(self.values):
            raise TypeError("PhaseSpaceField values must be real")
        if self.values.shape != (self.x_grid.size, self.xi_grid.size):
            raise ValueError("values must have shape (len(x_grid), len(xi_grid))")

    @property
    def dx(self):
        return float(self.x_grid[1] - self.x_grid[0]) if self.x_grid.size > 1 else 0.0

    @property
    def dxi(self):
        return float(self.xi_grid[1] - self.xi_grid[0])

    def marginal(self):
        """int W dxi / (2 pi), one value per x node."""
        return self.values.sum(axis=1) * self.dxi / TWO_PI

    def total_mass(self):
        return float(self.marginal().sum() * self.dx)

    def to_csv(self, path):
        xx, kk = np.meshgrid(self.x_grid, self.xi_grid, indexing="ij")
        with open(path, "w", newline="\n") as fh:
            fh.write("x,xi,w\n")
            for a, b, c in zip(xx.ravel(), kk.ravel(), self.values.ravel()):
                fh.write(f"{float(a)!r},{float(b)!r},{float(c)!r}\n")

    def metadata(self):
        return {"eps": self.eps, "t": self.t, "nx": int(self.x_grid.size),
                "nxi": int(self.xi_grid.size), "imag_residue": self.imag_residue}

    @classmethod
    def from_csv(cls, path, meta):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        nx, nxi = meta["nx"], meta["nxi"]
        x = data[::nxi, 0]
        xi = data[:nxi, 1]
        return cls(x, xi, data[:, 2].reshape(nx, nxi), meta["eps"], meta.get("t", 0.0),
                   meta.get("imag_residue", 0.0))


@dataclass
class MonokineticMeasure:
    """rho(x) dx (x) delta(xi - v(x)), stored on the x grid only."""

    x_grid: np.ndarray
    rho: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (self.x_grid.shape == self.rho.shape == self.v.shape) or self.x_grid.ndim != 1:
            raise ValueError("x_grid, rho and v must be 1-D arrays of equal length")
        if np.any(self.rho < 0):
            raise ValueError("rho must be nonnegative")

    def mass(self):
        return float(np.trapezoid(self.rho, self.x_grid))


# ---------------------------------------------------------------- observables

def bump(s):
    """C-infinity bump exp(-1/(1-s^2)) on (-1, 1), zero elsewhere."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


def bump_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    si = s[inside]
    q = 1.0 - si * si
    out[inside] = np.exp(-1.0 / q) * (-2.0 * si / (q * q))
    return out


@dataclass(frozen=True)
class Observable:
    """Smooth compactly supported test function phi(x, xi) or phi(t, x, xi).

    ``grad`` (optional) returns the partial derivatives in the same argument
    order as ``func``.
    """

    func: Callable
    x_box: tuple
    xi_box: tuple
    t_box: Optional[tuple] = None
    grad: Optional[Callable] = field(default=None, compare=False)

    @property
    def time_dependent(self):
        return self.t_box is not None

    def __call__(self, *args):
        return self.func(*args)

    def scaled(self, c):
        g = None if self.grad is None else (lambda *a: tuple(c * d for d in self.grad(*a)))
        return Observable(lambda *a: c * self.func(*a), self.x_box, self.xi_box, self.t_box, g)

    def boundary_max(self, n=201, t=None):
        """max |phi| along the boundary of the support box (should vanish)."""
        (x0, x1), (k0, k1) = self.x_box, self.xi_box
        xs = np.linspace(x0, x1, n)
        ks = np.linspace(k0, k1, n)
        pts_x = np.concatenate([xs, xs, np.full(n, x0), np.full(n, x1)])
        pts_k = np.concatenate([np.full(n, k0), np.full(n, k1), ks, ks])
        if self.time_dependent:
            tt = np.linspace(*self.t_box, 7) if t is None else [t]
            vals = [self.func(np.full_like(pts_x, s), pts_x, pts_k) for s in tt]
            # also the two time faces
            X, K = np.meshgrid(xs, ks)
            vals += [self.func(np.full_like(X, s), X, K) for s in self.t_box]
            return float(max(np.max(np.abs(v)) for v in vals))
        return float(np.max(np.abs(self.func(pts_x, pts_k))))


def bump_observable(x_center, x_radius, xi_center, xi_radius, amplitude=1.0, xi_moment=False):
    """Separable bump phi = A psi((x-xc)/rx) psi((xi-kc)/rk), optionally times xi."""
    if x_radius <= 0 or xi_radius <= 0:
        raise ValueError("radii must be > 0")

    def func(x, xi):
        val = amplitude * bump((x - x_center) / x_radius) * bump((xi - xi_center) / xi_radius)
        return val * xi if xi_moment else val

    def grad(x, xi):
        bx = bump((x - x_center) / x_radius)
        bk = bump((xi - xi_center) / xi_radius)
        dbx = bump_prime((x - x_center) / x_radius) / x_radius
        dbk = bump_prime((xi - xi_center) / xi_radius) / xi_radius
        w = xi if xi_moment else 1.0
        d_xi = bx * (dbk * w + (bk if xi_moment else 0.0))
        return amplitude * dbx * bk * w, amplitude * d_xi

    return Observable(func, (x_center - x_radius, x_center + x_radius),
                      (xi_center - xi_radius, xi_center + xi_radius), None, grad)


def spacetime_bump_observable(t_center, t_radius, x_center, x_radius, xi_center, xi_radius,
                              amplitude=1.0):
    """phi(t,x,xi) = A psi_t psi_x psi_xi with analytic partials (d_t, d_x, d_xi)."""
    if min(t_radius, x_radius, xi_radius) <= 0:
        raise ValueError("radii must be > 0")
    st = lambda t: (t - t_center) / t_radius
    sx = lambda x: (x - x_center) / x_radius
    sk = lambda k: (k - xi_center) / xi_radius

    def func(t, x, xi):
        return amplitude * bump(st(t)) * bump(sx(x)) * bump(sk(xi))

    def grad(t, x, xi):
        bt, bx, bk = bump(st(t)), bump(sx(x)), bump(sk(xi))
        return (amplitude * bump_prime(st(t)) / t_radius * bx * bk,
                amplitude * bt * bump_prime(sx(x)) / x_radius * bk,
                amplitude * bt * bx * bump_prime(sk(xi)) / xi_radius)

    return Observable(func, (x_center - x_radius, x_center + x_radius),
                      (xi_center - xi_radius, xi_center + xi_radius),
                      (t_center - t_radius, t_center + t_radius), grad)


# ------------------------------------------------------------------ transforms

def _auto_half_width(u, tail, periodic):
    """Smallest J such that |u(x_i - s)||u(x_i + s)| <= tail * max|u|^2 for all s >= J dx."""
    a = np.abs(u)
    n = a.size
    peak = float(a.max()) ** 2
    if peak == 0:
        return 1
    half = n // 2
    prod_max = np.zeros(half + 1)
    for j in range(half + 1):
        if periodic:
            prod_max[j] = np.max(np.roll(a, j) * np.roll(a, -j))
        elif n - 2 * j > 0:
            prod_max[j] = np.max(a[: n - 2 * j] * a[2 * j:])
    # suffix maximum: the bound has to hold for every larger shift
    suffix = np.maximum.accumulate(prod_max[::-1])[::-1]
    ok = np.nonzero(suffix <= tail * peak)[0]
    return int(ok[0]) if ok.size else half


def wigner_transform(field: WaveField, y_window: float | None = None, x_range=None,
                     stride: int = 1, tail: float = 1e-16, periodic: bool = False) -> PhaseSpaceField:
    """Discrete Wigner transform of a periodic wave field.

    The y-step is tied to the grid (dy = 2 dx / eps) so that the shifted samples
    u(x -+ eps y/2) fall on grid nodes; the y-integral over [-y_window, y_window)
    is then an FFT per x node.  ``y_window`` defaults to the truncation where
    the product of shifted samples falls below ``tail`` of its peak.
    ``x_range``/``stride`` restrict the x nodes that are transformed.

    With ``periodic=False`` (localised data) u is taken as zero outside the
    sampled window; ``periodic=True`` wraps shifts around the torus, which is
    right for periodic data but lets the centre interfere with itself near the
    window edges for localised data.
    """
    u = field.values
    n = u.size
    dx = field.grid.dx
    eps = field.eps
    dy = 2.0 * dx / eps
    if y_window is None:
        J = _auto_half_width(u, tail, periodic)
    else:
        if not y_window > 0:
            raise ValueError("y_window must be > 0")
        J = int(math.ceil(y_window / dy - 1e-9))
    J = max(J, 1)
    if 2 * J > n:
        raise ValueError(f"y_window needs {2 * J} shifts but the periodic grid has only {n} nodes")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    N = 2 * J

    x = field.grid.x
    rows = np.arange(n)
    if x_range is not None:
        lo, hi = x_range
        rows = rows[(x >= lo) & (x <= hi)]
        if rows.size == 0:
            raise ValueError("x_range contains no grid nodes")
    rows = rows[::stride]

    shifts = np.concatenate([np.arange(0, J), np.arange(-J, 0)])
    out = np.empty((rows.size, N))
    imag_max = 0.0
    batch = max(1, _BATCH_ENTRIES // N)
    for start in range(0, rows.size, batch):
        r = rows[start:start + batch, None]
        lo_idx = r - shifts
        hi_idx = r + shifts
        g = u[lo_idx % n] * np.conj(u[hi_idx % n])
        if not periodic:
            g[(np.minimum(lo_idx, hi_idx) < 0) | (np.maximum(lo_idx, hi_idx) >= n)] = 0.0
        # the -J slot has no +J partner inside the window; keeping its real part
        # is the average of the two ends and keeps g exactly Hermitian in y
        g[:, J] = g[:, J].real
        w = np.fft.ifft(g, axis=1) * (dy * N)
        imag_max = max(imag_max, float(np.max(np.abs(w.imag))))
        out[start:start + batch] = np.fft.fftshift(w.real, axes=1)
    wmax = float(np.max(np.abs(out)))
    if imag_max > IMAG_TOL * wmax:
        raise WignerConsistencyError(
            f"imaginary residue {imag_max:.3e} exceeds {IMAG_TOL:g} * max|W| = {IMAG_TOL * wmax:.3e}")
    xi = TWO_PI / (N * dy) * np.arange(-J, J)
    return PhaseSpaceField(x[rows], xi, out, eps, field.t, imag_residue=imag_max)


def gaussian_wigner_values(params: GaussianParams, eps, t, gamma, gamma_dot, x, xi):
    """Closed-form Wigner field of the Gaussian solution on the mesh x (rows) by xi (cols)."""
    X = np.asarray(x, dtype=float)[:, None] - params.p0 * t
    xi = np.asarray(xi, dtype=float)[None, :]
    s0 = params.sigma0
    centre = (gamma_dot / gamma) * X + params.p0
    amp = params.rho_star / gamma * np.exp(-s0 * X * X / gamma**2)
    kern = (2.0 * gamma * math.sqrt(math.pi) / (eps * math.sqrt(s0))
            * np.exp(-((xi - centre) ** 2) * gamma**2 / (s0 * eps * eps)))
    return amp * kern


def gaussian_wigner_exact(params: GaussianParams, eps: float, t: float, x=None, xi=None,
                          tol: float = 1e-12) -> PhaseSpaceField:
    """Exact Wigner transform of the Gaussian solution at time t.

    With gamma = gamma^eps(t) and X = x - p0 t this is
    (rho_*/gamma) e^{-sigma0 X^2/gamma^2} (2 gamma sqrt(pi)/(eps sqrt(sigma0)))
    exp(-(xi - gamma'/gamma X - p0)^2 gamma^2/(sigma0 eps^2)).
    Default x/xi grids cover the region where W exceeds ~1e-16 of its peak.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    a = gaussian_ansatz_oracle(params, eps, t, tol)
    g, gd = a.gamma, a.gamma_dot
    reach = g * math.sqrt(math.log(1e16) / params.sigma0)
    if x is None:
        x = params.p0 * t + np.linspace(-reach, reach, 513)
    if xi is None:
        width = eps * math.sqrt(params.sigma0) / g * math.sqrt(math.log(1e16))
        span = abs(gd / g) * reach + width
        xi = params.p0 + np.linspace(-span, span, 513)
    vals = gaussian_wigner_values(params, eps, t, g, gd, x, xi)
    return PhaseSpaceField(np.asarray(x, float), np.asarray(xi, float), vals, eps, t)


# ---------------------------------------------------------------- pairings

def _check_inside(box, grid, name):
    lo, hi = box
    if lo < grid[0] - 1e-12 or hi > grid[-1] + 1e-12:
        raise SupportError(f"observable {name}-support [{lo}, {hi}] exceeds grid [{grid[0]}, {grid[-1]}]")


def pair(W: PhaseSpaceField, phi: Observable) -> float:
    """(1/2pi) int int W phi dx dxi by the trapezoid rule on the sampled grid."""
    if phi.time_dependent:
        raise ValueError("pair takes a fixed-time observable")
    _check_inside(phi.x_box, W.x_grid, "x")
    _check_inside(phi.xi_box, W.xi_grid, "xi")
    ix = np.nonzero((W.x_grid >= phi.x_box[0]) & (W.x_grid <= phi.x_box[1]))[0]
    ik = np.nonzero((W.xi_grid >= phi.xi_box[0]) & (W.xi_grid <= phi.xi_box[1]))[0]
    if ix.size == 0 or ik.size == 0:
        return 0.0
    X, K = np.meshgrid(W.x_grid[ix], W.xi_grid[ik], indexing="ij")
    vals = W.values[np.ix_(ix, ik)] * phi(X, K)
    # phi vanishes on the box edges, so the plain sum is the trapezoid rule
    return float(vals.sum() * W.dx * W.dxi / TWO_PI)


def monokinetic_pair(mu: MonokineticMeasure, phi: Observable) -> float:
    """int rho(x) phi(x, v(x)) dx."""
    if phi.time_dependent:
        raise ValueError("monokinetic_pair takes a fixed-time observable")
    _check_inside(phi.x_box, mu.x_grid, "x")
    return float(np.trapezoid(mu.rho * phi(mu.x_grid, mu.v), mu.x_grid))


def gaussian_monokinetic_measure(params: GaussianParams, t: float, x, tol: float = 1e-12):
    """Limit measure rho dx (x) delta(xi - v) of the Gaussian solution (eps = 0)."""
    if t == 0:
        state = GammaState(0.0, 1.0, params.omega0)
    else:
        traj = integrate_gamma(params, 0.0, t, tol)
        if traj.status != "completed":
            raise BlowupError(traj.t_blow)
        state = GammaState(float(traj.t[-1]), float(traj.gamma[-1]), float(traj.gamma_dot[-1]))
    rho, v = gaussian_euler_fields(state, params)
    x = np.asarray(x, dtype=float)
    return MonokineticMeasure(x, rho(x), v(x))


# ------------------------------------------------------------------- sweep

@dataclass
class SweepResult:
    eps: list
    gap: list
    errors: list
    slope: float

    @property
    def complete(self):
        return all(e is None for e in self.errors)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("eps,gap\n")
            for e, g in zip(self.eps, self.gap):
                fh.write(f"{e!r},{g!r}\n")


def pairing_gap(eps: float, t: float, phi: Observable, source="oracle",
                params: GaussianParams | None = None, dt_factor: float = 1 / 8,
                tol: float = 1e-12) -> float:
    """|pair(W^eps, phi) - <mu, phi>| for one eps (see convergence_sweep)."""
    params = params or GaussianParams()
    if source not in ("oracle", "numeric"):
        raise ValueError("source must be 'oracle' or 'numeric'")
    grid = gaussian_grid(params, eps, t)
    if source == "oracle":
        vals = gaussian_ansatz_oracle(params, eps, t, tol).values(grid.x, eps)
        u = WaveField(eps, grid, vals, t=t)
    else:
        u0 = initial_gaussian_field(params, eps, grid)
        m = max(1, math.ceil(t / (eps * dt_factor) - 1e-9))
        u = propagate(u0, t, t / m, lam=params.lam) if t > 0 else u0
    pad = 1.5 * grid.dx
    W = wigner_transform(u, x_range=(phi.x_box[0] - pad, phi.x_box[1] + pad))
    mu = gaussian_monokinetic_measure(params, t, grid.x, tol)
    return abs(pair(W, phi) - monokinetic_pair(mu, phi))


def convergence_sweep(eps_list, t, phi: Observable, source="oracle",
                      params: GaussianParams | None = None, dt_factor: float = 1 / 8,
                      tol: float = 1e-12) -> SweepResult:
    """Pairing gap |pair(W^eps, phi) - <mu, phi>| for the Gaussian problem.

    ``source`` is "oracle" (exact Gaussian field sampled on the grid) or
    "numeric" (split-step propagation from the initial Gaussian).  Failures are
    recorded per eps and the remaining rows are still computed.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("eps_list needs at least 3 entries")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if source not in ("oracle", "numeric"):
        raise ValueError("source must be 'oracle' or 'numeric'")
    gaps, errors = [], []
    for eps in eps_list:
        try:
            gaps.append(pairing_gap(eps, t, phi, source, params, dt_factor, tol))
            errors.append(None)
        except (PropagationError, VacuumError, BlowupError, WignerConsistencyError, SupportError) as exc:
            gaps.append(float("nan"))
            errors.append(f"{type(exc).__name__}: {exc}")
    return SweepResult(eps_list, gaps, errors, loglog_slope(eps_list, gaps))
