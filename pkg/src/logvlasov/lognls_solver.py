"""Split-step Fourier solver for the semiclassical logarithmic Schrodinger equation

    i eps u_t + eps^2/2 u_xx = lam ln(|u|^2) u

on a periodic grid, plus the exact Gaussian (coherent-state) solution used as
an analytic reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gaussian_dynamics import GAMMA_FLOOR, BlowupError, GaussianParams, integrate_gamma
from .grid import SpatialGrid
from .ode import integrate as ode_integrate

DEFAULT_FLOOR = 1e-30


class VacuumError(ValueError):
    """log of a vanishing density with no floor."""


class PropagationError(RuntimeError):
    def __init__(self, message, step, t):
        super().__init__(message)
        self.step = step
        self.t = t


@dataclass
class WaveField:
    eps: float
    grid: SpatialGrid
    values: np.ndarray
    t: float = 0.0
    min_density: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise ValueError("values must have one sample per grid node")

    @property
    def density(self):
        return np.abs(self.values) ** 2

    def mass(self):
        return float(np.sum(self.density) * self.grid.dx)

    def l2_distance(self, other):
        return float(np.sqrt(np.sum(np.abs(self.values - other) ** 2) * self.grid.dx))

    def relative_l2_error(self, reference):
        ref = np.asarray(reference)
        return self.l2_distance(ref) / float(np.sqrt(np.sum(np.abs(ref) ** 2) * self.grid.dx))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("x,re_u,im_u\n")
            for x, u in zip(self.grid.x, self.values):
                fh.write(f"{float(x)!r},{float(u.real)!r},{float(u.imag)!r}\n")

    def metadata(self):
        return {"eps": self.eps, "t": self.t, "grid": self.grid.to_dict()}

    @classmethod
    def from_csv(cls, path, meta):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        grid = SpatialGrid(**meta["grid"])
        return cls(meta["eps"], grid, data[:, 1] + 1j * data[:, 2], t=meta.get("t", 0.0))


def modulus(values):
    """|u| computed as hypot(Re u, Im u).

    libm's hypot is correctly rounded, which the SIMD complex abs of recent
    numpy releases is not; the exact invariance of nonlinear_step is stated
    for this modulus.
    """
    values = np.asarray(values)
    return np.hypot(values.real, values.imag)


def _nudged(x, k):
    out = x
    toward = np.inf if k > 0 else -np.inf
    for _ in range(abs(k)):
        out = np.nextafter(out, toward)
    return out


def _restore_modulus(new, target, reach=4):
    """Move re/im of each sample by at most ``reach`` ulps so modulus(new) == target.

    Re-rounding the real and imaginary parts after a rotation perturbs the
    modulus by about one ulp.  Among the nearby floating-point pairs, the one
    with the exact target modulus and the smallest displacement is chosen;
    the phase moves by a few ulps at most.
    """
    new = new.copy()
    bad = np.nonzero(modulus(new) != target)[0]
    offsets = sorted(((a, b) for a in range(-reach, reach + 1) for b in range(-reach, reach + 1)
                      if (a, b) != (0, 0)), key=lambda ab: (abs(ab[0]) + abs(ab[1]), ab))
    for a, b in offsets:
        if bad.size == 0:
            break
        re = _nudged(new.real[bad], a)
        im = _nudged(new.imag[bad], b)
        hit = np.hypot(re, im) == target[bad]
        new.real[bad[hit]] = re[hit]
        new.imag[bad[hit]] = im[hit]
        bad = bad[~hit]
    return new


def nonlinear_step(field: WaveField, dt: float, floor: float = DEFAULT_FLOOR,
                   lam: float = 1.0) -> WaveField:
    """Exact flow of i eps u_t = lam ln(|u|^2) u over ``dt`` (phase rotation only).

    The modulus (see ``modulus``) is preserved bit for bit.
    """
    if floor < 0:
        raise ValueError("floor must be >= 0")
    mod = modulus(field.values)
    rho = mod * mod
    if floor == 0 and np.any(rho == 0):
        raise VacuumError("vanishing sample with floor = 0")
    logrho = np.log(np.maximum(rho, floor))
    new = _restore_modulus(field.values * np.exp(-1j * dt * (lam / field.eps) * logrho), mod)
    return replace(field, values=new, t=field.t + dt, min_density=None)


def kinetic_step(field: WaveField, dt: float) -> WaveField:
    """Exact flow of i eps u_t = -eps^2/2 u_xx via the Fourier multiplier."""
    k = field.grid.k
    mult = np.exp(-0.5j * dt * field.eps * k * k)
    new = np.fft.ifft(mult * np.fft.fft(field.values))
    return replace(field, values=new, t=field.t + dt, min_density=None)


def propagate(field: WaveField, t_end: float, dt: float, floor: float = DEFAULT_FLOOR,
              lam: float = 1.0) -> WaveField:
    """Strang splitting K(dt/2) N(dt) K(dt/2), ``t_end / dt`` steps.

    The returned field carries ``min_density``: min |u|^2 seen by each
    nonlinear substep.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    m = int(round(t_end / dt))
    if m < 1 or abs(m * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end={t_end} is not an integer multiple of dt={dt}")
    if floor < 0:
        raise ValueError("floor must be >= 0")
    eps = field.eps
    k = field.grid.k
    half = np.exp(-0.25j * dt * eps * k * k)
    full = half * half
    coef = -1j * dt * lam / eps
    u_hat = half * np.fft.fft(field.values)
    mins = np.empty(m)
    for step in range(m):
        u = np.fft.ifft(u_hat)
        rho = u.real**2 + u.imag**2
        mins[step] = rho.min()
        if floor == 0 and mins[step] == 0:
            raise VacuumError(f"vanishing sample at step {step} with floor = 0")
        u = u * np.exp(coef * np.log(np.maximum(rho, floor)))
        u_hat = np.fft.fft(u)
        u_hat *= full if step < m - 1 else half
        if not np.all(np.isfinite(u_hat)):
            raise PropagationError(f"non-finite values after step {step}", step, field.t + (step + 1) * dt)
    out = np.fft.ifft(u_hat)
    return WaveField(eps, field.grid, out, t=field.t + m * dt, min_density=mins)


@dataclass(frozen=True)
class GaussianAnsatz:
    b_abs: float
    b_phase: float
    Omega: complex
    q: float
    p: float
    S: float
    t: float
    gamma: float
    gamma_dot: float

    @property
    def b(self):
        return self.b_abs * np.exp(1j * self.b_phase)

    def values(self, x, eps):
        x = np.asarray(x, dtype=float)
        y = x - self.q
        expo = -self.Omega * y * y / 2 + 1j * self.p * y / eps + 1j * self.S / eps
        return self.b * np.exp(expo)


def gaussian_ansatz_oracle(params: GaussianParams, eps: float, t: float,
                           tol: float = 1e-12) -> GaussianAnsatz:
    """Exact Gaussian solution of the log-NLS at time ``t``.

    gamma^eps and the phase of b^eps are integrated together:
    d(arg b)/dt = -(eps/2) sigma0/gamma^2 - (lam/eps) ln(rho_star/gamma).
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    s0, lam, rs, p0 = params.sigma0, params.lam, params.rho_star, params.p0
    if t == 0:
        gamma, gamma_dot, phase = 1.0, params.omega0, 0.0
    else:
        a = (eps * s0) ** 2
        b = 2.0 * lam * s0

        def f(_t, y):
            g = y[0]
            return np.array([y[1], a / g**3 + b / g, -0.5 * eps * s0 / g**2 + (lam / eps) * math.log(g)])

        ts, ys, reason, _ = ode_integrate(f, 0.0, np.array([1.0, params.omega0, 0.0]), t,
                                          rtol=tol, atol=tol, stop_if=lambda _t, y: y[0] < GAMMA_FLOOR)
        if reason != "done":
            raise BlowupError(ts[-1])
        gamma, gamma_dot, phase = ys[-1]
        phase -= (lam / eps) * math.log(rs) * t
    omega = s0 / gamma**2 - 1j * gamma_dot / (eps * gamma)
    return GaussianAnsatz(
        b_abs=math.sqrt(rs / gamma),
        b_phase=float(phase),
        Omega=complex(omega),
        q=p0 * t,
        p=p0,
        S=0.5 * p0 * p0 * t,
        t=float(t),
        gamma=float(gamma),
        gamma_dot=float(gamma_dot),
    )


def initial_gaussian_field(params: GaussianParams, eps: float, grid: SpatialGrid) -> WaveField:
    x = grid.x
    u0 = (math.sqrt(params.rho_star) * np.exp(-params.sigma0 * x * x / 2)
          * np.exp(1j * params.omega0 * x * x / (2 * eps)) * np.exp(1j * params.p0 * x / eps))
    return WaveField(eps, grid, u0)


def gaussian_grid(params: GaussianParams, eps: float, t_max: float, tail: float = 1e-16,
                  dx_factor: float = 1 / 8, gamma_max: float | None = None) -> SpatialGrid:
    """Grid holding the Gaussian solution on [0, t_max] with rho(boundary) < tail * rho_star.

    Resolution dx <= eps * dx_factor.
    """
    if gamma_max is None:
        traj = integrate_gamma(params, eps, t_max, 1e-8) if t_max > 0 else None
        gamma_max = max(1.0, float(traj.gamma.max()) if traj is not None else 1.0)
    reach = gamma_max * math.sqrt(math.log(1 / tail) / params.sigma0)
    lo = min(0.0, params.p0 * t_max) - reach
    hi = max(0.0, params.p0 * t_max) + reach
    half = max(-lo, hi)
    return SpatialGrid.centered(half, eps * dx_factor)


def log_lipschitz_gap(u, v):
    """(lhs, rhs) of |Im[(ln|u|^2 u - ln|v|^2 v) conj(u - v)]| <= 4 |u - v|^2."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if np.any(u == 0) or np.any(v == 0):
        raise ValueError("arguments must be nonzero")
    diff = u - v
    bracket = np.log(np.abs(u) ** 2) * u - np.log(np.abs(v) ** 2) * v
    lhs = np.abs(np.imag(bracket * np.conj(diff)))
    rhs = 4.0 * np.abs(diff) ** 2
    if lhs.ndim == 0:
        return float(lhs), float(rhs)
    return lhs, rhs
