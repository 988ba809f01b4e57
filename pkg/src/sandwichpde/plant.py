"""True plant: two transport PDEs between a crane ODE and a payload ODE.

Two PDE schemes share the boundary and ODE handling:

* ``semi_lagrangian`` traces characteristics back one step and interpolates
  linearly; it is stable for any Courant number, so it runs at the fine
  spatial steps of the crane model where explicit upwinding would not.
* ``upwind`` is a plain explicit first-order upwind discretization used as an
  independent reference at Courant numbers <= 1.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .model import DcvPhysicalParams, SandwichParams


@dataclass
class TransportStencil:
    """Fixed interpolation pattern for a uniform shift of ``shift`` cells."""

    M: int
    shift: float

    def __post_init__(self):
        self.k = int(np.floor(self.shift))
        self.theta = self.shift - self.k
        # nodes whose foot lies strictly inside the domain
        self.first = self.k + 1 if self.theta > 0 else self.k
        if self.first > self.M:
            raise ValueError("time step moves characteristics across the whole domain")

    def forward(self, f: np.ndarray) -> np.ndarray:
        """Values at the feet of right-moving characteristics for nodes first..M."""
        i = np.arange(self.first, self.M + 1)
        j = i - self.k
        return (1.0 - self.theta) * f[j] + self.theta * f[j - 1] if self.theta > 0 else f[j]

    def inflow_fraction(self) -> np.ndarray:
        """For inflow nodes 0..first-1: fraction of the step spent inside the domain."""
        i = np.arange(self.first)
        return i / self.shift if self.shift > 0 else np.zeros(self.first)


@dataclass
class PlantState:
    params: SandwichParams
    X: np.ndarray
    Y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    u: np.ndarray               # transverse displacement on the node grid (m)
    bL: float
    t: float
    delay_steps: int
    sensor: deque
    Ydot: np.ndarray
    force_scale: float = 1.0    # distributed force -> PDE source
    payload_input: Optional[np.ndarray] = None  # payload force -> dY/dt
    length: float = 1.0         # physical length of the normalized domain
    scheme: str = "semi_lagrangian"

    @property
    def M(self) -> int:
        return self.z.size - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    def copy(self) -> "PlantState":
        st = PlantState(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        for name in ("X", "Y", "z", "w", "u", "Ydot"):
            setattr(st, name, getattr(self, name).copy())
        st.sensor = deque(self.sensor, maxlen=self.sensor.maxlen)
        return st


def init_plant(params: SandwichParams, M: int, dt: float, z0=None, w0=None, X0=None, Y0=None,
               force_scale: float = 1.0, payload_input=None, length: float = 1.0,
               scheme: str = "semi_lagrangian") -> PlantState:
    if scheme not in ("semi_lagrangian", "upwind"):
        raise ValueError(f"unknown scheme {scheme!r}")
    x = np.linspace(0.0, 1.0, M + 1)
    z = np.zeros(M + 1) if z0 is None else np.asarray(z0(x) if callable(z0) else z0, float).copy()
    w = np.zeros(M + 1) if w0 is None else np.asarray(w0(x) if callable(w0) else w0, float).copy()
    X = np.zeros(params.n) if X0 is None else np.asarray(X0, float).reshape(-1).copy()
    Y = np.zeros(params.m) if Y0 is None else np.asarray(Y0, float).reshape(-1).copy()
    k = int(round(params.tau / dt))
    if k < 1 or abs(k * dt - params.tau) > 1e-9 * max(1.0, params.tau):
        raise ValueError("sensor delay must be an integer multiple of dt")
    if scheme == "upwind":
        cfl = max(params.q1, params.q2) * dt * M
        if cfl > 1.0 + 1e-12:
            raise ValueError(f"upwind scheme needs Courant number <= 1, got {cfl:.3f}")
    pin = np.zeros(params.m) if payload_input is None else np.asarray(payload_input, float).reshape(-1)
    st = PlantState(params=params, X=X, Y=Y, z=z, w=w, u=np.zeros(M + 1), bL=0.0, t=0.0,
                    delay_steps=k, sensor=deque(maxlen=k + 1), Ydot=np.zeros(params.m),
                    force_scale=force_scale, payload_input=pin, length=length, scheme=scheme)
    st.Ydot = _ydot(params, Y, z[-1], 0.0, pin)
    _push_sensor(st)
    return st


def dcv_initial_data(params: SandwichParams):
    """Sinusoidal cable velocity profile with matching crane and payload velocities."""
    z0 = lambda x: 4.0 * np.sin(np.pi * x)
    w0 = lambda x: 4.0 * np.cos(np.pi * x)
    # z(0) = p w(0) + C0 X and w(1) = q z(1) + C1 Y
    X0 = (z0(0.0) - params.p * w0(0.0)) / params.C0[0, 0] * np.ones(params.n) if params.n == 1 else None
    Y0 = (w0(1.0) - params.q * z0(1.0)) / params.C1[0, 0] * np.ones(params.m) if params.m == 1 else None
    return z0, w0, X0, Y0


def _ydot(P: SandwichParams, Y, z1, fL, pin):
    return P.A1 @ Y + P.B1[:, 0] * z1 + pin * fL


def _push_sensor(st: PlantState):
    C1 = st.params.C1
    st.sensor.append(((C1 @ st.Y).item(), (C1 @ st.Ydot).item()))


def _rk4(f, y, dt):
    k1 = f(0.0, y)
    k2 = f(0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_plant(st: PlantState, U: float, f_field=None, fL: float = 0.0, dt: float = 1e-3) -> PlantState:
    """Advance the plant one step in place and return it."""
    f = None if f_field is None else st.force_scale * np.asarray(f_field, float)
    ey = st.payload_input * fL
    advance_fields(st, U, f, f, None, ey, 0.0, dt)
    st.t += dt
    st.Ydot = _ydot(st.params, st.Y, st.z[-1], fL, st.payload_input)
    _push_sensor(st)
    if not (np.all(np.isfinite(st.z)) and np.all(np.isfinite(st.w)) and np.all(np.isfinite(st.X))
            and np.all(np.isfinite(st.Y))):
        raise FloatingPointError(f"plant state diverged at t={st.t:.4f}")
    return st


def advance_fields(st, U, fz, fw, ex, ey, w1_add, dt):
    """One step of the PDE-ODE core shared by the plant and the observer.

    ``fz``/``fw`` are extra sources on the z and w equations (None for zero),
    ``ex``/``ey`` extra rates on the two ODEs and ``w1_add`` an extra term in
    the boundary condition at x=1, all held constant over the step.
    """
    M = st.M
    fz = np.zeros(M + 1) if fz is None else fz
    fw = np.zeros(M + 1) if fw is None else fw
    ex = np.zeros(st.params.n) if ex is None else np.asarray(ex, float).reshape(-1)
    ey = np.zeros(st.params.m) if ey is None else np.asarray(ey, float).reshape(-1)
    if st.scheme == "upwind":
        _step_upwind(st, U, fz, fw, ex, ey, w1_add, dt)
    else:
        _step_sl(st, U, fz, fw, ex, ey, w1_add, dt)


def _odes(st, U, ex, ey, w0a, w0b, z1a, z1b, dt):
    P = st.params
    B0 = P.B0[:, 0]
    E0 = P.E0[:, 0]
    fx = lambda s, X: P.A0 @ X + E0 * (w0a + (w0b - w0a) * s / dt) + B0 * U + ex
    fy = lambda s, Y: P.A1 @ Y + P.B1[:, 0] * (z1a + (z1b - z1a) * s / dt) + ey
    return _rk4(fx, st.X, dt), _rk4(fy, st.Y, dt)


def _stencils(st, dt):
    key = (st.M, dt)
    cache = getattr(st, "_stencil_cache", None)
    if cache is None or cache[0] != key:
        P = st.params
        cache = (key, TransportStencil(st.M, P.q1 * dt * st.M), TransportStencil(st.M, P.q2 * dt * st.M))
        st._stencil_cache = cache
    return cache[1], cache[2]


def _step_sl(st: PlantState, U, fz, fw, ex, ey, w1_add, dt):
    P = st.params
    M = st.M
    sz, sw = _stencils(st, dt)
    z, w = st.z, st.w
    src_z = -P.c1 * (z + w) + fz
    src_w = -P.c2 * (z + w) + fw
    # feet of right-moving z (interior) and left-moving w (mirrored indexing)
    zf = sz.forward(z)
    szf = sz.forward(src_z)
    wf = sw.forward(w[::-1])[::-1]
    swf = sw.forward(src_w[::-1])[::-1]
    iz = slice(sz.first, None)
    iw = slice(0, M + 1 - sw.first)
    z_new = np.empty_like(z)
    w_new = np.empty_like(w)
    z_new[iz] = zf + dt * szf
    w_new[iw] = wf + dt * swf
    X_new, Y_new = _odes(st, U, ex, ey, w[0], w_new[0], z[-1], z_new[-1], dt)
    _inflow(st, sz, sw, z_new, w_new, X_new, Y_new, src_z, src_w, w1_add, dt)
    # Heun correction of the sources with predicted arrival values
    corr_z = -P.c1 * (z_new + w_new) + fz
    corr_w = -P.c2 * (z_new + w_new) + fw
    z_new[iz] += 0.5 * dt * (corr_z[iz] - szf)
    w_new[iw] += 0.5 * dt * (corr_w[iw] - swf)
    X_new, Y_new = _odes(st, U, ex, ey, w[0], w_new[0], z[-1], z_new[-1], dt)
    _inflow(st, sz, sw, z_new, w_new, X_new, Y_new, src_z, src_w, w1_add, dt)
    z_new[0] = P.p * w_new[0] + (P.C0 @ X_new).item()
    w_new[-1] = P.q * z_new[-1] + (P.C1 @ Y_new).item() + w1_add
    _finish(st, z_new, w_new, X_new, Y_new, dt)


def _inflow(st, sz, sw, z_new, w_new, X_new, Y_new, src_z, src_w, w1_add, dt):
    """Nodes whose characteristic entered through a boundary during the step."""
    P = st.params
    M = st.M
    if sz.first:
        z0_old = P.p * st.w[0] + (P.C0 @ st.X).item()
        z0_new = P.p * w_new[0] + (P.C0 @ X_new).item()
        lag = sz.inflow_fraction()
        z_new[:sz.first] = (1 - lag) * z0_new + lag * z0_old + dt * lag * src_z[:sz.first]
    if sw.first:
        w1_old = P.q * st.z[-1] + (P.C1 @ st.Y).item() + w1_add
        w1_new = P.q * z_new[-1] + (P.C1 @ Y_new).item() + w1_add
        lag = sw.inflow_fraction()
        idx = np.arange(M, M - sw.first, -1)
        w_new[idx] = (1 - lag) * w1_new + lag * w1_old + dt * lag * src_w[idx]


def _step_upwind(st: PlantState, U, fz, fw, ex, ey, w1_add, dt):
    P = st.params
    M = st.M
    h = 1.0 / M
    z, w = st.z, st.w
    s = z + w
    z_new = z.copy()
    w_new = w.copy()
    z_new[1:] = z[1:] - P.q1 * dt / h * (z[1:] - z[:-1]) + dt * (-P.c1 * s[1:] + fz[1:])
    w_new[:-1] = w[:-1] + P.q2 * dt / h * (w[1:] - w[:-1]) + dt * (-P.c2 * s[:-1] + fw[:-1])
    X_new, Y_new = _odes(st, U, ex, ey, w[0], w_new[0], z[-1], z_new[-1], dt)
    z_new[0] = P.p * w_new[0] + (P.C0 @ X_new).item()
    w_new[-1] = P.q * z_new[-1] + (P.C1 @ Y_new).item() + w1_add
    _finish(st, z_new, w_new, X_new, Y_new, dt)


def _finish(st, z_new, w_new, X_new, Y_new, dt):
    ut_old = 0.5 * (st.z + st.w)
    ut_new = 0.5 * (z_new + w_new)
    st.u += 0.5 * dt * (ut_old + ut_new)
    st.bL = float(st.u[-1])
    st.z, st.w, st.X, st.Y = z_new, w_new, X_new, Y_new


def measure(st: PlantState) -> Tuple[float, float]:
    """Delayed output and its derivative; zero until the first sample arrives."""
    if len(st.sensor) < st.sensor.maxlen:
        return 0.0, 0.0
    return st.sensor[0]


def energy(st: PlantState, rho: float = 1.0) -> float:
    """Cable oscillation energy rho/8 |w+z|^2 + rho/8 |w-z|^2 over the physical length."""
    x = st.grid * st.length
    return float(rho / 8.0 * (np.trapezoid((st.w + st.z) ** 2, x) + np.trapezoid((st.w - st.z) ** 2, x)))


# -- ocean current disturbances ---------------------------------------------

@dataclass
class DisturbanceState:
    P: float = 2.0
    sigma: float = 0.5
    A_D: float = 400.0
    Cd: float = 1.0
    St: float = 0.2
    phase: float = np.pi
    mu: float = 0.0
    P_min: float = 1.6
    P_max: float = 2.4
    seed: int = 0
    t: float = 0.0
    rng: np.random.Generator = field(default=None, repr=False)
    dcv: DcvPhysicalParams = field(default_factory=DcvPhysicalParams, repr=False)
    x_phys: Optional[np.ndarray] = field(default=None, repr=False)
    enabled: bool = True

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)
        self.P = float(np.clip(self.P, self.P_min, self.P_max))


def current_profile(x_phys: np.ndarray, P: float) -> np.ndarray:
    """Full surface current down to 300 m, then a linear taper."""
    x = np.asarray(x_phys, float)
    return np.where(x <= 300.0, P, (970.0 - 0.9 * x) / 700.0 * P)


def drag_force(ds: DisturbanceState, x_phys, t: float, P: float) -> np.ndarray:
    d = ds.dcv
    Px = current_profile(x_phys, P)
    return 0.5 * d.rho_s * ds.Cd * Px**2 * d.RD * ds.A_D * np.cos(4 * np.pi * ds.St * Px / d.RD * t + ds.phase)


def payload_drag(ds: DisturbanceState, P_end: float) -> float:
    d = ds.dcv
    return 0.5 * ds.Cd * d.rho_s * d.hc * d.Dc * abs(P_end) * P_end


def step_disturbance(ds: DisturbanceState, dt: float):
    """Forces for the step starting at ds.t, then advance the current speed.

    Returns (ds, f_field [N/m] on ds.x_phys, fL [N]).
    """
    if not ds.enabled:
        ds.t += dt
        n = 0 if ds.x_phys is None else ds.x_phys.size
        return ds, np.zeros(n), 0.0
    f = drag_force(ds, ds.x_phys, ds.t, ds.P) if ds.x_phys is not None else np.zeros(0)
    fL = payload_drag(ds, float(current_profile(ds.dcv.L, ds.P)))
    ds.P = float(np.clip(ds.P - ds.mu * ds.P * dt + ds.sigma * np.sqrt(dt) * ds.rng.standard_normal(),
                         ds.P_min, ds.P_max))
    ds.t += dt
    return ds, f, fL
