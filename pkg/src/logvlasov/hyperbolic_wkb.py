"""Grenier-type hyperbolic system for the WKB amplitude and phase gradient.

The unknown is u = (a1, a2, v) with a = a1 + i a2 and v = d_x Phi, solving

    d_t u + A(u) d_x u = (eps/2) L u,

    A = [[v, 0, a1/2], [0, v, a2/2], [2 lam a1/|a|^2, 2 lam a2/|a|^2, v]],
    L = [[0, -d_xx, 0], [d_xx, 0, 0], [0, 0, 0]],

on a periodic grid (constant background plus periodic perturbation).  eps = 0
gives the symmetrised isothermal Euler system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fitting import loglog_slope
from .gaussian_dynamics import GaussianParams, gaussian_euler_fields, integrate_gamma
from .grid import SpatialGrid, spectral_dx
from .wigner import Observable, SupportError

# RK4 stability interval on the imaginary axis is |z| <= 2 sqrt(2)
_RK4_IMAG = 2.0 * math.sqrt(2.0)
_RK4_SAFETY = 0.9


class VacuumApproachError(RuntimeError):
    """min(a1^2 + a2^2) dropped below half the initial density floor."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class CFLError(RuntimeError):
    """Time step too large for the explicit scheme (or the solution blew up)."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class TrajectoryDensityError(ValueError):
    """Stored snapshots are too sparse for time quadrature."""


@dataclass(frozen=True)
class InitialData:
    """Periodic non-vacuum data: rho0 >= rho_floor > 0 and phi0' (plus phi0 itself)."""

    rho0: Callable
    phi0_prime: Callable
    rho_floor: float
    phi0: Optional[Callable] = None
    length: float = 2.0 * math.pi
    name: str = "custom"

    def __post_init__(self):
        if not self.rho_floor > 0:
            raise ValueError("rho_floor must be > 0")
        if not self.length > 0:
            raise ValueError("length must be > 0")

    def grid(self, n: int, x_min: float = 0.0) -> SpatialGrid:
        return SpatialGrid.periodic(self.length, n, x_min)

    def sample(self, grid: SpatialGrid):
        x = grid.x
        rho = np.broadcast_to(np.asarray(self.rho0(x), dtype=float), x.shape).copy()
        v = np.broadcast_to(np.asarray(self.phi0_prime(x), dtype=float), x.shape).copy()
        if np.any(rho < self.rho_floor * (1 - 1e-12)):
            raise ValueError(f"rho0 drops below rho_floor={self.rho_floor} (min {rho.min()})")
        return rho, v

    def phase(self, x):
        if self.phi0 is None:
            raise ValueError("this initial data set has no phi0; supply one for phase reconstruction")
        return np.broadcast_to(np.asarray(self.phi0(x), dtype=float), np.shape(x)).copy()


def constant_data(rho_star=1.0, p0=0.0, length=2.0 * math.pi):
    return InitialData(lambda x: rho_star + 0.0 * x, lambda x: p0 + 0.0 * x, rho_star,
                       lambda x: p0 * x, length, "constant")


def perturbation_data(amplitude=0.1, velocity=0.0, mode=1, background=1.0):
    """rho0 = background + amplitude cos(mode x), phi0' = velocity sin(mode x) on [0, 2 pi).

    rho0 is even and phi0' odd about x = 0, so the mass flux through x = 0 vanishes.
    """
    if not 0 <= amplitude < background:
        raise ValueError("need 0 <= amplitude < background for non-vacuum data")
    k = mode
    return InitialData(
        lambda x: background + amplitude * np.cos(k * x),
        lambda x: velocity * np.sin(k * x),
        background - amplitude,
        lambda x: -velocity / k * np.cos(k * x),
        2.0 * math.pi,
        "perturbation",
    )


PRESETS = {"constant": constant_data, "perturbation": perturbation_data}


@dataclass
class FluidState:
    grid: SpatialGrid
    a1: np.ndarray
    a2: np.ndarray
    v: np.ndarray
    eps: float
    t: float = 0.0
    lam: float = 1.0

    @property
    def rho(self):
        return self.a1**2 + self.a2**2

    def mass(self):
        return float(np.sum(self.rho) * self.grid.dx)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("x,a1,a2,v\n")
            for row in zip(self.grid.x, self.a1, self.a2, self.v):
                fh.write(",".join(repr(float(c)) for c in row) + "\n")

    def metadata(self):
        return {"t": self.t, "eps": self.eps, "lambda": self.lam, "grid": self.grid.to_dict()}

    @classmethod
    def from_csv(cls, path, meta):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(SpatialGrid(**meta["grid"]), data[:, 1], data[:, 2], data[:, 3],
                   meta["eps"], meta["t"], meta["lambda"])


@dataclass
class FluidTrajectory:
    grid: SpatialGrid
    eps: float
    lam: float
    rho_floor: float
    dt: float
    times: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    v: np.ndarray
    min_rho: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)

    def state(self, k) -> FluidState:
        return FluidState(self.grid, self.a1[k], self.a2[k], self.v[k], self.eps,
                          float(self.times[k]), self.lam)

    @property
    def final(self) -> FluidState:
        return self.state(-1)

    @property
    def rho(self):
        return self.a1**2 + self.a2**2

    def masses(self):
        return self.rho.sum(axis=1) * self.grid.dx


# ------------------------------------------------------------------ algebra

def system_matrices(a1, a2, v, lam=1.0):
    """Node-wise A(u) and the symmetriser S(u) as arrays of shape (n, 3, 3)."""
    a1, a2, v = (np.atleast_1d(np.asarray(q, dtype=float)) for q in (a1, a2, v))
    rho = a1**2 + a2**2
    n = a1.size
    A = np.zeros((n, 3, 3))
    A[:, 0, 0] = A[:, 1, 1] = A[:, 2, 2] = v
    A[:, 0, 2] = a1 / 2
    A[:, 1, 2] = a2 / 2
    A[:, 2, 0] = 2 * lam * a1 / rho
    A[:, 2, 1] = 2 * lam * a2 / rho
    S = np.zeros((n, 3, 3))
    S[:, 0, 0] = S[:, 1, 1] = 1.0
    S[:, 2, 2] = rho / (4 * lam)
    return A, S


def symmetrizer_check(state: FluidState):
    """(max Frobenius norm of SA - (SA)^T over nodes, min eigenvalue of S)."""
    A, S = system_matrices(state.a1, state.a2, state.v, state.lam)
    SA = S @ A
    asym = np.sqrt(np.sum((SA - np.swapaxes(SA, 1, 2)) ** 2, axis=(1, 2)))
    min_eig = np.linalg.eigvalsh(S)[:, 0]
    return float(asym.max()), float(min_eig.min())


def apply_L(grid: SpatialGrid, a1, a2):
    """Dispersive part L u restricted to (a1, a2): (-a2'', a1'')."""
    k = grid.k
    return -spectral_dx(a2, k, 2), spectral_dx(a1, k, 2)


def skew_check(grid: SpatialGrid, w) -> float:
    """|<L w, w>| for w = a1 + i a2 on the periodic grid (discrete L^2 product)."""
    w = np.asarray(w, dtype=complex)
    la1, la2 = apply_L(grid, w.real, w.imag)
    return abs(float(np.sum(la1 * w.real + la2 * w.imag) * grid.dx))


def _rhs(a1, a2, v, k, eps, lam):
    a1x, a2x, vx = spectral_dx(a1, k), spectral_dx(a2, k), spectral_dx(v, k)
    rho = a1 * a1 + a2 * a2
    da1 = -(v * a1x + 0.5 * a1 * vx)
    da2 = -(v * a2x + 0.5 * a2 * vx)
    if eps != 0:
        da1 = da1 - 0.5 * eps * spectral_dx(a2, k, 2)
        da2 = da2 + 0.5 * eps * spectral_dx(a1, k, 2)
    dv = -(v * vx + 2 * lam * (a1 * a1x + a2 * a2x) / rho)
    return da1, da2, dv


def max_stable_dt(grid: SpatialGrid, eps, v, lam, safety=_RK4_SAFETY):
    """Largest RK4 step allowed by advection (speeds |v| + sqrt(lam)) and dispersion."""
    kmax = float(np.max(np.abs(grid.k)))
    speed = float(np.max(np.abs(v))) + math.sqrt(lam)
    rate = kmax * speed + 0.5 * eps * kmax * kmax
    return safety * _RK4_IMAG / rate


def evolve(init: InitialData, eps: float, t_end: float, dt: float, n: int = 128,
           lam: float = 1.0, store_every: int = 1, grid: SpatialGrid | None = None) -> FluidTrajectory:
    """RK4 in time, Fourier pseudo-spectral in space.

    The step is shrunk to t_end / ceil(t_end / dt).  Snapshots are stored every
    ``store_every`` steps (and always at t_end).  Raises VacuumApproachError if
    min |a|^2 < rho_floor / 2 and CFLError if dt exceeds the linear stability
    bound or the sup-norm jumps by more than a factor 10 in one step; both carry
    the partial trajectory.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if not lam > 0:
        raise ValueError("lam must be > 0")
    if not (dt > 0 and t_end >= 0):
        raise ValueError("need dt > 0 and t_end >= 0")
    if store_every < 1:
        raise ValueError("store_every must be >= 1")
    grid = grid or init.grid(n)
    rho0, v = init.sample(grid)
    a1 = np.sqrt(rho0)
    a2 = np.zeros_like(a1)
    m = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / m if m else dt
    limit = max_stable_dt(grid, eps, v, lam)
    if h > limit:
        raise CFLError(f"dt={h:.3e} exceeds the RK4 stability bound {limit:.3e}")
    k = grid.k
    floor = 0.5 * init.rho_floor

    times, A1, A2, V, mins = [0.0], [a1], [a2], [v], [float(rho0.min())]

    def partial():
        return FluidTrajectory(grid, eps, lam, init.rho_floor, h, np.array(times), np.array(A1),
                               np.array(A2), np.array(V), np.array(mins))

    sup = max(np.max(np.abs(a1)), np.max(np.abs(v)))
    for step in range(1, m + 1):
        k1 = _rhs(a1, a2, v, k, eps, lam)
        k2 = _rhs(a1 + 0.5 * h * k1[0], a2 + 0.5 * h * k1[1], v + 0.5 * h * k1[2], k, eps, lam)
        k3 = _rhs(a1 + 0.5 * h * k2[0], a2 + 0.5 * h * k2[1], v + 0.5 * h * k2[2], k, eps, lam)
        k4 = _rhs(a1 + h * k3[0], a2 + h * k3[1], v + h * k3[2], k, eps, lam)
        a1 = a1 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        a2 = a2 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        v = v + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t = step * h
        new_sup = max(np.max(np.abs(a1)), np.max(np.abs(a2)), np.max(np.abs(v)))
        if not np.isfinite(new_sup) or new_sup > 10 * sup:
            raise CFLError(f"sup-norm jumped from {sup:.3e} to {new_sup:.3e} at t={t:.6g}", partial())
        sup = new_sup
        rho = a1 * a1 + a2 * a2
        rmin = float(rho.min())
        if rmin < floor:
            raise VacuumApproachError(
                f"min |a|^2 = {rmin:.3e} < rho_floor/2 = {floor:.3e} at t={t:.6g}", partial())
        if step % store_every == 0 or step == m:
            times.append(t)
            A1.append(a1)
            A2.append(a2)
            V.append(v)
            mins.append(rmin)
    return partial()


# ------------------------------------------------------------- phase recovery

@dataclass
class PhiField:
    grid: SpatialGrid
    values: np.ndarray
    dx_values: np.ndarray
    t: float


def _trapezoid_cumulative(f, times):
    out = np.zeros_like(f)
    dt = np.diff(times)[:, None]
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]), axis=0)
    return out


def reconstruct_phi(traj: FluidTrajectory, phi0=None, init: InitialData | None = None,
                    quad_tol: float = 1e-6):
    """Phi(t,x) = Phi0(x) - int_0^t (|v|^2/2 + lam ln|a|^2) dtau by the trapezoid rule.

    ``phi0`` is a callable (or pass ``init`` to use its phi0).  Returns
    (list of PhiField, max |d_x Phi - v|).  The integrand is periodic, so d_x Phi
    = phi0' - d_x(integral) is evaluated spectrally on the periodic part.
    Raises TrajectoryDensityError when fewer than 3 snapshots are stored or the
    estimated trapezoid error exceeds ``quad_tol``.
    """
    if phi0 is None:
        if init is None:
            raise ValueError("need phi0 or init")
        phi0 = init.phase
    times = np.asarray(traj.times, dtype=float)
    if times.size < 3:
        raise TrajectoryDensityError("need at least 3 stored snapshots; evolve with a smaller store_every")
    f = 0.5 * traj.v**2 + traj.lam * np.log(traj.a1**2 + traj.a2**2)
    h = np.diff(times)
    # trapezoid error per interval ~ h^3 f''/12 ~ h * (second difference)/12
    second = np.abs(f[2:] - 2 * f[1:-1] + f[:-2])
    est = float(np.max(np.sum(second, axis=0))) * float(np.max(h)) / 12.0
    if est > quad_tol:
        raise TrajectoryDensityError(
            f"estimated trapezoid error {est:.2e} > {quad_tol:g}; store snapshots more densely (smaller store_every)")
    integral = _trapezoid_cumulative(f, times)
    x = traj.grid.x
    base = phi0(x)
    # phi0' from the stored initial v (exact initial datum)
    k = traj.grid.k
    fields = []
    mismatch = 0.0
    for j, t in enumerate(times):
        vals = base - integral[j]
        dphi = traj.v[0] - spectral_dx(integral[j], k)
        mismatch = max(mismatch, float(np.max(np.abs(dphi - traj.v[j]))))
        fields.append(PhiField(traj.grid, vals, dphi, float(t)))
    return fields, mismatch


# -------------------------------------------------------------- DA1 sweep

@dataclass
class DA1Table:
    eps: list
    gap_a: list
    gap_v: list
    errors: list
    slope_a: float
    slope_v: float

    @property
    def complete(self):
        return all(e is None for e in self.errors)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("eps,gap_a,gap_dphi\n")
            for row in zip(self.eps, self.gap_a, self.gap_v):
                fh.write(",".join(repr(float(c)) for c in row) + "\n")


def convergence_da1(init: InitialData, eps_list, t_end: float, n: int = 128, dt: float | None = None,
                    lam: float = 1.0, store_every: int = 1) -> DA1Table:
    """sup_{t,x}|a^eps - a| and sup_{t,x}|d_x Phi^eps - d_x Phi| against the eps = 0 run.

    All runs share the grid, the time step (stable for the largest eps) and the
    snapshot times.  Per-eps failures are recorded and the rest still run.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or min(eps_list) <= 0:
        raise ValueError("eps_list must contain positive values")
    grid = init.grid(n)
    _, v0 = init.sample(grid)
    if dt is None:
        dt = max_stable_dt(grid, max(eps_list), v0 + np.sign(v0) * 0.5, lam, safety=0.5)
    ref = evolve(init, 0.0, t_end, dt, lam=lam, store_every=store_every, grid=grid)
    gap_a, gap_v, errors = [], [], []
    for eps in eps_list:
        try:
            tr = evolve(init, eps, t_end, dt, lam=lam, store_every=store_every, grid=grid)
            da = np.abs((tr.a1 - ref.a1) + 1j * (tr.a2 - ref.a2))
            gap_a.append(float(da.max()))
            gap_v.append(float(np.abs(tr.v - ref.v).max()))
            errors.append(None)
        except (VacuumApproachError, CFLError) as exc:
            gap_a.append(float("nan"))
            gap_v.append(float("nan"))
            errors.append(f"{type(exc).__name__}: {exc}")
    return DA1Table(eps_list, gap_a, gap_v, errors, loglog_slope(eps_list, gap_a),
                    loglog_slope(eps_list, gap_v))


# ---------------------------------------------------------- Vlasov residual

@dataclass
class MomentTrajectory:
    """(rho, v) samples on a uniform (t, x) mesh; ``periodic`` selects d_x."""

    times: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    lam: float = 1.0
    periodic: bool = True
    length: float | None = None

    def rho_x(self):
        if self.periodic:
            n = self.x.size
            length = self.length if self.length is not None else n * (self.x[1] - self.x[0])
            k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
            return spectral_dx(self.rho, k)
        return np.gradient(self.rho, self.x, axis=1, edge_order=2)


def moments(traj: FluidTrajectory) -> MomentTrajectory:
    return MomentTrajectory(np.asarray(traj.times), traj.grid.x, traj.rho, traj.v, traj.lam,
                            True, traj.grid.length)


def gaussian_moments(params: GaussianParams, times, x, tol: float = 1e-12) -> MomentTrajectory:
    """Explicit Gaussian solution of isothermal Euler sampled on (times, x)."""
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    traj = integrate_gamma(params, 0.0, float(times[-1]), tol, t_eval=times)
    rho = np.empty((times.size, x.size))
    v = np.empty_like(rho)
    for j, t in enumerate(times):
        r, u = gaussian_euler_fields(traj.at(float(t)), params)
        rho[j], v[j] = r(x), u(x)
    return MomentTrajectory(times, x, rho, v, params.lam, periodic=False)


def vlasov_residual(traj, phi: Observable) -> float:
    """|<mu, d_t phi + xi d_x phi - lam (d_x ln rho) d_xi phi>| for mu = rho dx (x) delta(xi - v).

    ``traj`` is a FluidTrajectory (eps = 0) or a MomentTrajectory.  Tensor
    trapezoid quadrature over the stored (t, x) samples.
    """
    if isinstance(traj, FluidTrajectory):
        if traj.eps != 0:
            raise ValueError("the Vlasov residual is defined for the eps = 0 trajectory")
        traj = moments(traj)
    if not phi.time_dependent or phi.grad is None:
        raise ValueError("phi must be time dependent and provide its partial derivatives")
    t, x = traj.times, traj.x
    t_hi = t[-1]
    x_hi = x[-1] if not traj.periodic else x[0] + (traj.length or x.size * (x[1] - x[0]))
    if phi.t_box[0] < t[0] - 1e-12 or phi.t_box[1] > t_hi + 1e-12:
        raise SupportError(f"observable t-support {phi.t_box} exceeds [{t[0]}, {t_hi}]")
    if phi.x_box[0] < x[0] - 1e-12 or phi.x_box[1] > x_hi + 1e-12:
        raise SupportError(f"observable x-support {phi.x_box} exceeds [{x[0]}, {x_hi}]")
    rho, v = traj.rho, traj.v
    rho_x = traj.rho_x()
    T = np.broadcast_to(t[:, None], rho.shape)
    X = np.broadcast_to(x[None, :], rho.shape)
    pt, px, pk = phi.grad(T, X, v)
    integrand = rho * pt + rho * v * px - traj.lam * rho_x * pk
    # uniform x spacing; integrand vanishes at the support edges
    inner = integrand.sum(axis=1) * (x[1] - x[0])
    return abs(float(np.trapezoid(inner, t)))
