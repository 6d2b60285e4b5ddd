"""Lagrangian (mass-coordinate) isothermal gas dynamics and the density lower bound.

With tau = 1/rho and the mass coordinate m, the isothermal Euler system with
pressure p = rho (lam = 1) becomes the p-system

    tau_t - u_m = 0,     u_t - tau_m / tau^2 = 0.

The Riemann invariants s = u - ln tau and r = u + ln tau are transported by
d_t +/- (1/tau) d_m, and their slopes alpha = s_m, beta = r_m obey a maximum
principle: sup(alpha, beta) never exceeds its initial value on a smooth run.
Since tau_t = u_m = (alpha + beta)/2, tau grows at most linearly and rho stays
above rho0* / (1 + C t).  This module checks those statements numerically.

General lam > 0 is handled by rescaling (u, t) -> (u / sqrt(lam), sqrt(lam) t).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .grid import SpatialGrid, antiderivative, spectral_dx, trig_interpolate
from .hyperbolic_wkb import CFLError, FluidTrajectory

_RK4_IMAG = 2.0 * math.sqrt(2.0)
_BLOWUP_FACTOR = 1.0e3
# below this the initial slopes count as zero when setting the blow-up threshold
_SLOPE_FLOOR = 1.0e-6


class GradientBlowupError(RuntimeError):
    """sup |alpha|, |beta| grew past the blow-up threshold (smooth solution breaking down)."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class SpecificVolumeError(RuntimeError):
    """tau left (0, inf) or became non-finite."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class LagrangianState:
    """(tau, u) on a uniform periodic mass grid; the grid length is the total mass."""

    mass_grid: SpatialGrid
    tau: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.tau.shape != (self.mass_grid.n,) or self.u.shape != (self.mass_grid.n,):
            raise ValueError("tau and u must match the mass grid")
        if not np.all(np.isfinite(self.tau)) or np.any(self.tau <= 0):
            raise ValueError("tau must be finite and > 0")

    @property
    def rho(self):
        return 1.0 / self.tau

    @property
    def total_mass(self):
        return self.mass_grid.length

    @property
    def m(self):
        return self.mass_grid.x

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("m,tau,u\n")
            for row in zip(self.m, self.tau, self.u):
                fh.write(",".join(repr(float(c)) for c in row) + "\n")

    def metadata(self):
        return {"t": self.t, "grid": self.mass_grid.to_dict()}

    @classmethod
    def from_csv(cls, path, meta):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(SpatialGrid(**meta["grid"]), data[:, 1], data[:, 2], meta["t"])


@dataclass
class RiemannFields:
    s: np.ndarray
    r: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def reconstruct(self):
        """(u, tau) = ((s + r)/2, exp((r - s)/2))."""
        return 0.5 * (self.s + self.r), np.exp(0.5 * (self.r - self.s))


@dataclass
class LagrangianTrajectory:
    mass_grid: SpatialGrid
    dt: float
    times: np.ndarray
    tau: np.ndarray
    u: np.ndarray

    def __len__(self):
        return len(self.times)

    def state(self, k) -> LagrangianState:
        return LagrangianState(self.mass_grid, self.tau[k], self.u[k], float(self.times[k]))

    @property
    def final(self) -> LagrangianState:
        return self.state(-1)

    def to_csv(self, path):
        """Long-format CSV ``t,m,tau,u`` (one row per stored time and node)."""
        m = self.mass_grid.x
        with open(path, "w", newline="\n") as fh:
            fh.write("t,m,tau,u\n")
            for t, tau, u in zip(self.times, self.tau, self.u):
                for row in zip(m, tau, u):
                    fh.write(repr(float(t)) + "," + ",".join(repr(float(c)) for c in row) + "\n")


# --------------------------------------------------------- coordinate change

def _invert_primitive(density, length, origin, targets, newton_tol=1e-14):
    """Solve P(y) = targets for y, where P(y) = int_origin^y density (periodic, > 0).

    ``density`` holds samples on the uniform grid origin + j * length / n.
    A monotone cubic fit of the node values of P gives the first guess; Newton
    on the trigonometric interpolant then brings it to round-off.
    """
    n = density.size
    mean, F = antiderivative(density, length)
    h = length / n
    y_nodes = origin + h * np.arange(n + 1)
    P_nodes = np.append(mean * (y_nodes[:-1] - origin) + F, mean * length)
    total = mean * length
    targets = np.asarray(targets, dtype=float)
    # reduce targets into one period, remember the number of whole periods
    wraps = np.floor(targets / total)
    local = targets - wraps * total
    y = PchipInterpolator(P_nodes, y_nodes)(local)
    for _ in range(50):
        P = mean * (y - origin) + trig_interpolate(F, length, origin, y)
        dP = trig_interpolate(density, length, origin, y)
        step = (P - local) / dP
        y = y - step
        if np.max(np.abs(step), initial=0.0) <= newton_tol * length:
            break
    return y + wraps * length, total


def to_lagrangian(rho, v, grid: SpatialGrid, n: int | None = None, t: float = 0.0) -> LagrangianState:
    """Resample periodic Eulerian (rho, v) onto a uniform mass grid.

    The mass coordinate is m(x) = int_{x_min}^x rho, so the particle at
    ``grid.x_min`` carries m = 0 and the mass period equals the trapezoid mass
    sum(rho) dx exactly.
    """
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    if rho.shape != (grid.n,) or v.shape != (grid.n,):
        raise ValueError("rho and v must be sampled on the grid")
    if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise ValueError(f"density must be > 0 (min {np.min(rho):.3e})")
    n = n or grid.n
    total = float(np.sum(rho) * grid.dx)
    mass_grid = SpatialGrid.periodic(total, n)
    x_of_m, _ = _invert_primitive(rho, grid.length, grid.x_min, mass_grid.x)
    rho_m = trig_interpolate(rho, grid.length, grid.x_min, x_of_m)
    u_m = trig_interpolate(v, grid.length, grid.x_min, x_of_m)
    return LagrangianState(mass_grid, 1.0 / rho_m, u_m, t)


def to_eulerian(state: LagrangianState, grid: SpatialGrid, anchor: float | None = None):
    """Map back to (rho, v) on an Eulerian grid whose length must equal int tau dm.

    ``anchor`` is the position of the particle m = 0 (default ``grid.x_min``).
    The length check is loose (1e-6) because int tau dm is only spectrally
    accurate on a coarse mass grid.
    """
    anchor = grid.x_min if anchor is None else anchor
    mg = state.mass_grid
    vol = float(np.sum(state.tau) * mg.dx)
    if not math.isclose(vol, grid.length, rel_tol=1e-6):
        raise ValueError(f"int tau dm = {vol!r} does not match the grid length {grid.length!r}")
    # x(m) = anchor + int_0^m tau, so m(x) inverts the primitive of tau
    m_of_x, _ = _invert_primitive(state.tau, mg.length, 0.0, grid.x - anchor)
    tau = trig_interpolate(state.tau, mg.length, 0.0, m_of_x)
    u = trig_interpolate(state.u, mg.length, 0.0, m_of_x)
    return 1.0 / tau, u


def lagrangian_from_fluid(traj: FluidTrajectory, k: int, n: int | None = None) -> LagrangianState:
    """Lagrangian view of snapshot k of an eps = 0 hyperbolic run.

    The particle at the left grid edge is taken as m = 0, which is a particle
    path only when the flux through that point vanishes (e.g. rho even and v
    odd about it).
    """
    if traj.eps != 0:
        raise ValueError("lagrangian_from_fluid needs an eps = 0 trajectory")
    return to_lagrangian(traj.rho[k], traj.v[k], traj.grid, n, float(traj.times[k]))


# ------------------------------------------------------------ lam rescaling

def to_unit_lambda(state: LagrangianState, lam: float) -> LagrangianState:
    """(tau, u, t) -> (tau, u / sqrt(lam), sqrt(lam) t): the lam = 1 p-system."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    c = math.sqrt(lam)
    return LagrangianState(state.mass_grid, state.tau.copy(), state.u / c, state.t * c)


def from_unit_lambda(traj: LagrangianTrajectory, lam: float) -> LagrangianTrajectory:
    c = math.sqrt(lam)
    return LagrangianTrajectory(traj.mass_grid, traj.dt / c, traj.times / c, traj.tau, traj.u * c)


# -------------------------------------------------------------- evolution

def _rhs(tau, u, k):
    return spectral_dx(u, k), spectral_dx(tau, k) / (tau * tau)


def max_stable_dt(mass_grid: SpatialGrid, tau, safety=0.9):
    """RK4 bound for the Lagrangian sound speed 1/tau."""
    kmax = float(np.max(np.abs(mass_grid.k)))
    return safety * _RK4_IMAG / (kmax * float(np.max(1.0 / tau)))


def _slopes_sup(tau, u, k):
    lt = np.log(tau)
    ux, lx = spectral_dx(u, k), spectral_dx(lt, k)
    return float(max(np.max(np.abs(ux - lx)), np.max(np.abs(ux + lx))))


def evolve_lagrangian(state: LagrangianState, t_end: float, dt: float, store_every: int = 1,
                      lam: float = 1.0) -> LagrangianTrajectory:
    """RK4 / Fourier pseudo-spectral integration of the p-system.

    The step is shrunk to t_end / ceil(t_end / dt).  For lam != 1 the data are
    rescaled to lam = 1, integrated, and mapped back.  Raises CFLError for an
    unstable step, SpecificVolumeError if tau leaves (0, inf) and
    GradientBlowupError once sup |alpha|, |beta| exceeds 1e3 times its initial
    value; the last two carry the partial trajectory.
    """
    if not (dt > 0 and t_end >= 0):
        raise ValueError("need dt > 0 and t_end >= 0")
    if store_every < 1:
        raise ValueError("store_every must be >= 1")
    if lam != 1.0:
        c = math.sqrt(lam)
        try:
            traj = evolve_lagrangian(to_unit_lambda(state, lam), t_end * c, dt * c, store_every)
        except (GradientBlowupError, SpecificVolumeError) as exc:
            exc.trajectory = from_unit_lambda(exc.trajectory, lam)
            raise
        return from_unit_lambda(traj, lam)

    grid = state.mass_grid
    k = grid.k
    tau, u = state.tau.copy(), state.u.copy()
    m = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / m if m else dt
    limit = max_stable_dt(grid, tau)
    if h > limit:
        raise CFLError(f"dt={h:.3e} exceeds the RK4 stability bound {limit:.3e}")
    threshold = _BLOWUP_FACTOR * max(_slopes_sup(tau, u, k), _SLOPE_FLOOR)

    t0 = state.t
    times, TAU, U = [t0], [tau], [u]

    def partial():
        return LagrangianTrajectory(grid, h, np.array(times), np.array(TAU), np.array(U))

    for step in range(1, m + 1):
        k1 = _rhs(tau, u, k)
        k2 = _rhs(tau + 0.5 * h * k1[0], u + 0.5 * h * k1[1], k)
        k3 = _rhs(tau + 0.5 * h * k2[0], u + 0.5 * h * k2[1], k)
        k4 = _rhs(tau + h * k3[0], u + h * k3[1], k)
        tau = tau + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        u = u + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t = t0 + step * h
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(u))) or np.min(tau) <= 0:
            raise SpecificVolumeError(f"tau left (0, inf) at t={t:.6g}", partial())
        sup = _slopes_sup(tau, u, k)
        if sup > threshold:
            raise GradientBlowupError(
                f"sup|alpha|,|beta| = {sup:.3e} exceeds {threshold:.3e} at t={t:.6g}", partial())
        if step % store_every == 0 or step == m:
            times.append(t)
            TAU.append(tau)
            U.append(u)
    return partial()


# ------------------------------------------------------ Riemann invariants

def riemann_fields(state: LagrangianState) -> RiemannFields:
    k = state.mass_grid.k
    lt = np.log(state.tau)
    s = state.u - lt
    r = state.u + lt
    return RiemannFields(s, r, spectral_dx(s, k), spectral_dx(r, k))


def riemann_transport_residual(traj: LagrangianTrajectory):
    """sup-norm of (d_t + d_m / tau) s and (d_t - d_m / tau) r over all snapshots.

    Time derivatives use second-order differences of the stored snapshots, so
    the residual is O(dt_store^2) on a smooth run.
    """
    times = np.asarray(traj.times, dtype=float)
    if times.size < 3:
        raise ValueError("need at least three snapshots")
    steps = np.diff(times)
    if np.max(np.abs(steps - steps.mean())) > 1e-9 * steps.mean():
        raise ValueError("snapshots must be uniformly spaced in time")
    k = traj.mass_grid.k
    lt = np.log(traj.tau)
    s = traj.u - lt
    r = traj.u + lt
    s_t = np.gradient(s, times, axis=0, edge_order=2)
    r_t = np.gradient(r, times, axis=0, edge_order=2)
    c = 1.0 / traj.tau
    res_s = s_t + c * spectral_dx(s, k)
    res_r = r_t - c * spectral_dx(r, k)
    return float(np.max(np.abs(res_s))), float(np.max(np.abs(res_r)))


# ------------------------------------------------------------ bound monitor

_SLACK = 1.0e-6


@dataclass
class BoundReport:
    M: float
    sup_alpha_beta: float
    alpha_beta_ok: bool
    tau_linear_ok: bool
    C_fit: float
    lower_bound_ok: bool
    horizon: float
    rho0_star: float
    times: np.ndarray
    sup_history: np.ndarray
    tau_growth: np.ndarray
    min_rho: np.ndarray

    def to_json(self, path=None):
        payload = {
            "M": self.M,
            "sup_alpha_beta": self.sup_alpha_beta,
            "tau_linear_ok": self.tau_linear_ok,
            "C_fit": self.C_fit,
            "horizon": self.horizon,
            "alpha_beta_ok": self.alpha_beta_ok,
            "lower_bound_ok": self.lower_bound_ok,
            "rho0_star": self.rho0_star,
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text + "\n")
        return text


def bound_monitor(traj: LagrangianTrajectory, rho0_star: float | None = None) -> BoundReport:
    """Check the slope maximum principle, linear growth of tau and the density lower bound.

    M = max(alpha, beta) at the first snapshot.  C_fit is the smallest C >= 0
    with min rho(t) (1 + C t) >= rho0_star at every stored t > 0; rho0_star
    defaults to the initial minimum density.
    """
    times = np.asarray(traj.times, dtype=float)
    t_rel = times - times[0]
    sups = np.empty(len(times))
    for j in range(len(times)):
        f = riemann_fields(traj.state(j))
        sups[j] = max(np.max(f.alpha), np.max(f.beta))
    M = float(sups[0])
    sup_all = float(sups.max())

    tau_max = traj.tau.max(axis=1)
    growth = tau_max - tau_max[0]
    tau_ok = bool(np.all(growth <= M * t_rel + _SLACK) and np.all(growth <= (M + _SLACK) * t_rel + 1e-14))

    min_rho = (1.0 / traj.tau).min(axis=1)
    if rho0_star is None:
        rho0_star = float(min_rho[0])
    pos = t_rel > 0
    if np.any(pos):
        c_fit = float(max(0.0, np.max((rho0_star / min_rho[pos] - 1.0) / t_rel[pos])))
    else:
        c_fit = 0.0
    lower_ok = bool(np.all(min_rho * (1.0 + c_fit * t_rel) >= rho0_star * (1 - _SLACK)))
    return BoundReport(M, sup_all, bool(sup_all <= M + _SLACK), tau_ok, c_fit, lower_ok,
                       float(times[-1]), float(rho0_star), times, sups, growth, min_rho)
