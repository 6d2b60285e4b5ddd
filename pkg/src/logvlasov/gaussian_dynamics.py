"""Gaussian reduction of the logarithmic Schrodinger / isothermal Euler problem.

The dilation factor gamma obeys

    gamma'' = eps^2 sigma0^2 / gamma^3 + 2 lam sigma0 / gamma,
    gamma(0) = 1,  gamma'(0) = omega0,

and eps = 0 gives the limit ODE that drives the explicit Euler solution

    rho(t, x) = rho_star / gamma * exp(-sigma0 (x - p0 t)^2 / gamma^2),
    v(t, x)   = gamma'/gamma * (x - p0 t) + p0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .dawson import dawson
from .ode import IntegrationError, dp_step, integrate as ode_integrate

__all__ = [
    "GaussianParams",
    "GammaState",
    "GammaTrajectory",
    "IntegrationError",
    "BlowupError",
    "integrate_gamma",
    "energy_residual",
    "gaussian_euler_fields",
    "gaussian_euler_time_derivatives",
    "residual_isen1",
    "implicit_time",
    "implicit_time_dawson",
    "gamma_from_time",
    "asymptotic_gamma",
    "exact_blowup_time",
]

GAMMA_FLOOR = 1e-6


@dataclass(frozen=True)
class GaussianParams:
    rho_star: float = 1.0
    sigma0: float = 1.0
    omega0: float = 0.0
    p0: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        for name in ("rho_star", "sigma0", "omega0", "p0", "lam"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if not self.rho_star > 0:
            out.append(f"rho_star must be > 0 (got {self.rho_star})")
        if not self.sigma0 > 0:
            out.append(f"sigma0 must be > 0 (got {self.sigma0})")
        if self.lam == 0:
            out.append("lam must be nonzero")
        return out

    @property
    def mass(self):
        """Total mass rho_star * sqrt(pi / sigma0)."""
        return self.rho_star * math.sqrt(math.pi / self.sigma0)


@dataclass(frozen=True)
class GammaState:
    t: float
    gamma: float
    gamma_dot: float


class BlowupError(RuntimeError):
    def __init__(self, t_blow):
        super().__init__(f"gamma collapses at t_blow={t_blow:.12g}")
        self.t_blow = t_blow


def _rhs(params, eps):
    a = (eps * params.sigma0) ** 2
    b = 2.0 * params.lam * params.sigma0

    def f(t, y):
        g = y[0]
        return np.array([y[1], a / g**3 + b / g])

    return f


def _accel(params, eps, gamma):
    return (eps * params.sigma0) ** 2 / gamma**3 + 2.0 * params.lam * params.sigma0 / gamma


@dataclass
class GammaTrajectory:
    params: GaussianParams
    eps: float
    t: np.ndarray
    gamma: np.ndarray
    gamma_dot: np.ndarray
    status: str = "completed"
    t_blow: float | None = None
    tol: float | None = None
    _accel_cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def samples(self):
        return [GammaState(float(a), float(b), float(c))
                for a, b, c in zip(self.t, self.gamma, self.gamma_dot)]

    def __len__(self):
        return len(self.t)

    def energy_residuals(self):
        return energy_residual_array(self.gamma, self.gamma_dot, self.params, self.eps)

    def at(self, t):
        """State at time ``t`` by quintic Hermite interpolation.

        Uses gamma, gamma' and the exact gamma'' at both ends of the bracketing
        step; exact at stored samples.
        """
        t = float(t)
        if t < self.t[0] - 1e-14 or t > self.t[-1] + 1e-14 * max(1.0, abs(t)):
            raise ValueError(f"t={t} outside trajectory span [{self.t[0]}, {self.t[-1]}]")
        i = int(np.searchsorted(self.t, t))
        if i < len(self.t) and abs(self.t[i] - t) <= 1e-15 * max(1.0, abs(t)):
            return GammaState(t, float(self.gamma[i]), float(self.gamma_dot[i]))
        i = min(max(i, 1), len(self.t) - 1)
        t0, t1 = self.t[i - 1], self.t[i]
        h = t1 - t0
        s = (t - t0) / h
        g0, g1 = self.gamma[i - 1], self.gamma[i]
        d0, d1 = self.gamma_dot[i - 1] * h, self.gamma_dot[i] * h
        a0 = _accel(self.params, self.eps, g0) * h * h
        a1 = _accel(self.params, self.eps, g1) * h * h
        s2, s3, s4, s5 = s * s, s**3, s**4, s**5
        h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
        h10 = s - 6 * s3 + 8 * s4 - 3 * s5
        h20 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5
        h01 = 10 * s3 - 15 * s4 + 6 * s5
        h11 = -4 * s3 + 7 * s4 - 3 * s5
        h21 = 0.5 * s3 - s4 + 0.5 * s5
        g = h00 * g0 + h10 * d0 + h20 * a0 + h01 * g1 + h11 * d1 + h21 * a1
        dh00 = -30 * s2 + 60 * s3 - 30 * s4
        dh10 = 1 - 18 * s2 + 32 * s3 - 15 * s4
        dh20 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4
        dh01 = 30 * s2 - 60 * s3 + 30 * s4
        dh11 = -12 * s2 + 28 * s3 - 15 * s4
        dh21 = 1.5 * s2 - 4 * s3 + 2.5 * s4
        gd = (dh00 * g0 + dh10 * d0 + dh20 * a0 + dh01 * g1 + dh11 * d1 + dh21 * a1) / h
        return GammaState(t, float(g), float(gd))

    def to_csv(self, path):
        res = self.energy_residuals()
        with open(path, "w", newline="\n") as fh:
            fh.write("t,gamma,gamma_dot,energy_residual\n")
            for row in zip(self.t, self.gamma, self.gamma_dot, res):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def blowup_report(self):
        return {"status": "blowup", "t_blow": self.t_blow, "tol": self.tol}


def integrate_gamma(params: GaussianParams, eps: float, t_end: float, tol: float,
                    t_eval=(), floor: float = GAMMA_FLOOR) -> GammaTrajectory:
    """Adaptive DP5(4) integration of the gamma ODE on [0, t_end].

    ``t_eval`` times are hit exactly by the stepper. If gamma drops below
    ``floor`` (or the step size collapses) the trajectory ends with status
    ``"blowup"`` and ``t_blow`` bracketed by bisection to width <= tol.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    if not eps >= 0:
        raise ValueError("eps must be >= 0")
    f = _rhs(params, eps)
    y0 = np.array([1.0, params.omega0])
    ts, ys, reason, h_last = ode_integrate(
        f, 0.0, y0, t_end, rtol=tol, atol=tol, stops=t_eval,
        stop_if=lambda t, y: y[0] < floor,
    )
    ys = np.array(ys)
    traj = GammaTrajectory(params, eps, np.array(ts), ys[:, 0].copy(), ys[:, 1].copy(), tol=tol)
    if reason == "done":
        return traj
    if reason == "underflow" and traj.gamma[-1] > 1e3 * floor:
        raise IntegrationError(f"step size collapsed at t={ts[-1]} with gamma={ys[-1, 0]}",
                               ts[-1], ys[-1])
    if reason == "stop":
        # crossing lies inside the last accepted step
        t_lo, y_lo = ts[-2], ys[-2]
        t_hi = ts[-1]
    else:
        t_lo, y_lo = ts[-1], ys[-1]
        t_hi = ts[-1] + h_last
    t_blow = _bisect_floor(f, t_lo, y_lo, t_hi, floor, tol)
    keep = traj.gamma >= floor
    traj.t, traj.gamma, traj.gamma_dot = traj.t[keep], traj.gamma[keep], traj.gamma_dot[keep]
    traj.status = "blowup"
    traj.t_blow = t_blow
    return traj


def _bisect_floor(f, t_lo, y_lo, t_hi, floor, width):
    a, b = 0.0, t_hi - t_lo
    while b - a > width:
        m = 0.5 * (a + b)
        y_m, _, _ = dp_step(f, t_lo, y_lo, m)
        if np.isfinite(y_m[0]) and y_m[0] >= floor:
            a = m
        else:
            b = m
    return t_lo + 0.5 * (a + b)


def exact_blowup_time(params: GaussianParams) -> float:
    """Closed-form collapse time for lam < 0, omega0 = 0: sqrt(pi)/(2 sqrt(|lam| sigma0))."""
    if params.lam >= 0 or params.omega0 != 0:
        raise ValueError("closed form requires lam < 0 and omega0 = 0")
    return math.sqrt(math.pi) / (2.0 * math.sqrt(-params.lam * params.sigma0))


def energy_residual_array(gamma, gamma_dot, params, eps):
    gamma = np.asarray(gamma, dtype=float)
    gamma_dot = np.asarray(gamma_dot, dtype=float)
    c = 4.0 * params.lam * params.sigma0
    res = gamma_dot**2 - params.omega0**2 - c * np.log(gamma)
    if eps > 0:
        e2s2 = (eps * params.sigma0) ** 2
        res = res + e2s2 / gamma**2 - e2s2
    return res


def energy_residual(state: GammaState, params: GaussianParams, eps: float = 0.0) -> float:
    """First integral of the gamma ODE; vanishes on exact trajectories."""
    if not state.gamma > 0:
        raise ValueError("gamma must be positive")
    return float(energy_residual_array(state.gamma, state.gamma_dot, params, eps))


def gaussian_euler_fields(state: GammaState, params: GaussianParams):
    """Explicit isothermal Euler solution at ``state.t`` as callables of x.

    The velocity is centred on the moving peak p0*t.
    """
    t, g, gd = state.t, state.gamma, state.gamma_dot
    rs, s0, p0 = params.rho_star, params.sigma0, params.p0

    def rho(x):
        x = np.asarray(x, dtype=float)
        return rs / g * np.exp(-s0 * (x - p0 * t) ** 2 / g**2)

    def v(x):
        x = np.asarray(x, dtype=float)
        return gd / g * (x - p0 * t) + p0

    return rho, v


def gaussian_euler_time_derivatives(state: GammaState, params: GaussianParams, x, eps=0.0):
    """Analytic (d_t rho, d_t (rho v)) of the explicit solution on samples ``x``."""
    x = np.asarray(x, dtype=float)
    t, g, gd = state.t, state.gamma, state.gamma_dot
    gdd = _accel(params, eps, g)
    rs, s0, p0 = params.rho_star, params.sigma0, params.p0
    xi = x - p0 * t
    rho = rs / g * np.exp(-s0 * xi**2 / g**2)
    v = gd / g * xi + p0
    # d/dt of log rho and of v
    dlogrho = -gd / g + s0 * (2 * p0 * xi / g**2 + 2 * xi**2 * gd / g**3)
    dv = (gdd / g - gd**2 / g**2) * xi - gd / g * p0
    drho = rho * dlogrho
    return drho, drho * v + rho * dv


def residual_isen1(rho, v, time_deriv, dx, lam=1.0):
    """Sup-norm residuals of the isothermal Euler system on a uniform grid.

    ``time_deriv`` is the pair (d_t rho, d_t(rho v)). Space derivatives are
    second-order centred (one-sided second order at the two ends).
    """
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    if rho.size < 8:
        raise ValueError("grid too small: need at least 8 points")
    drho_t, dmom_t = (np.asarray(a, dtype=float) for a in time_deriv)
    mom = rho * v
    r1 = drho_t + np.gradient(mom, dx, edge_order=2)
    r2 = dmom_t + np.gradient(mom * v + lam * rho, dx, edge_order=2)
    return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


def _check_positive_lam(params):
    if params.lam <= 0:
        raise ValueError("implicit time relation needs lam > 0")


def _gamma_min(params):
    return math.exp(-params.omega0**2 / (4.0 * params.lam * params.sigma0))


def implicit_time(gamma_target: float, params: GaussianParams) -> float:
    """Time at which gamma reaches ``gamma_target`` (lam > 0), by quadrature.

    Uses y = sqrt(omega0^2 + 4 lam sigma0 ln gamma), which turns the endpoint
    singularity into the smooth integrand exp((y^2 - omega0^2)/(4 lam sigma0)).
    For omega0 < 0 gamma first contracts to exp(-omega0^2/(4 lam sigma0)); the
    returned time is on the expanding branch.
    """
    _check_positive_lam(params)
    c = 4.0 * params.lam * params.sigma0
    w0 = params.omega0
    gmin = _gamma_min(params)
    if w0 >= 0 and gamma_target < 1.0:
        raise ValueError("gamma_target must be >= 1 when omega0 >= 0")
    if gamma_target < gmin * (1 - 1e-14):
        raise ValueError(f"gamma never drops below {gmin}")
    ln_g = math.log(gamma_target)
    y_top = math.sqrt(max(w0 * w0 + c * ln_g, 0.0))

    # integrand scaled by its value at y_top so large gamma stays O(1)
    def scaled(y):
        return math.exp((y * y - y_top * y_top) / c)

    def segment(lo, hi):
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(scaled, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    if w0 >= 0:
        body = segment(w0, y_top)
        return float(gamma_target * body / (2.0 * params.lam * params.sigma0))
    down = segment(0.0, -w0)
    up = segment(0.0, y_top)
    return float(gamma_target * (down + up) / (2.0 * params.lam * params.sigma0))


def implicit_time_dawson(gamma_target: float, params: GaussianParams) -> float:
    """Same relation in closed form through the Dawson function (omega0 >= 0)."""
    _check_positive_lam(params)
    if params.omega0 < 0:
        raise ValueError("closed form implemented for omega0 >= 0")
    ls = params.lam * params.sigma0
    c = 4.0 * ls
    z_top = math.sqrt(math.log(gamma_target) + params.omega0**2 / c)
    z0 = params.omega0 / math.sqrt(c)
    return float((gamma_target * dawson(z_top) - dawson(z0)) / math.sqrt(ls))


def gamma_from_time(t: float, params: GaussianParams, xtol: float = 1e-14):
    """Invert the implicit relation: (gamma(t), gamma'(t)) on the expanding branch."""
    _check_positive_lam(params)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 1.0, params.omega0
    lo = math.log(_gamma_min(params)) if params.omega0 < 0 else 0.0
    if params.omega0 < 0 and t < implicit_time(_gamma_min(params), params):
        raise ValueError("t lies on the contracting branch")
    hi = max(1.0, lo + 1.0)
    while implicit_time(math.exp(hi), params) < t:
        hi *= 2.0
    ln_g = optimize.brentq(lambda s: implicit_time(math.exp(s), params) - t, lo, hi,
                           xtol=xtol, rtol=1e-15, maxiter=500)
    g = math.exp(ln_g)
    gd = math.sqrt(params.omega0**2 + 4.0 * params.lam * params.sigma0 * ln_g)
    return g, gd


def asymptotic_gamma(t: float, params: GaussianParams):
    """Leading large-time behaviour (2t sqrt(lam sigma0 ln t), 2 sqrt(lam sigma0 ln t))."""
    _check_positive_lam(params)
    if t <= 1:
        raise ValueError("asymptotic form needs t > 1")
    root = math.sqrt(params.lam * params.sigma0 * math.log(t))
    return 2.0 * t * root, 2.0 * root
