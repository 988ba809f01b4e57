"""Delay-compensating observer for the sandwich plant.

The observer copies the plant, extends it by a unit transport segment on
[1, 2] that models the sensor delay, and corrects every piece with an output
injection driven by the innovation  ytil = y_out - vhat(2).

Injection design
----------------
Each injection has the form  H(s) = k / r(s)  (plus proper terms), where

    r(s) = C1 exp(-tau A1) (sI - A1bar)^-1 B1

is strictly proper, so the injections contain a derivative of the innovation.
When r has relative degree one, 1/r = a s + b + R(s) with R strictly proper,
so every injection splits into a derivative gain, a proportional gain and a
shared strictly proper filter core driven by ytil.  For the crane model R = 0
and each injection is a PD law on (ytil, d/dt ytil).

Realization
-----------
The exact design drives the predicted output error to zero by using the
delayed-segment injection at x = 2 with derivative gain exactly -1, which
leaves the innovation undetermined (the loop factor needs prediction).  The
time-domain observer therefore runs one of several causal realizations:

``delayed``  (default)
    all designed PD injections applied to the delayed innovation; the delay
    segment carries only the proportional correction phi(x) Gamma1 ytil.
``printed``
    the delay-segment injection with the opposite sign on its 1/r term, which
    is well posed (derivative gain +1 at the output end).
``predictor``
    proportional parts only, delay segment as in ``delayed``.
``open``
    no PDE/ODE injections, only the delay-segment correction and Gamma1.

With the derivative boundary injection the reflection loop of the error
system has gain above one at high frequency, so ``delayed`` needs a
dissipative transport scheme: the observer runs upwind on its own grid,
independent of the plant grid.

Derivatives of the innovation never come from numerical differencing: the
measured output derivative is compared against a transported copy of the
predicted derivative, and the delay-segment state is kept in the variable
nu = vhat - a5(x) ytil so no derivative appears in its own update.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import linalg, signal

from .kernels import ObserverKernelSet, derive_barM_barN, right_inverse
from .model import DcvPhysicalParams, GainSet, SandwichParams, observer_A1bar
from .plant import PlantState, advance_fields, init_plant

REALIZATIONS = ("delayed", "printed", "predictor", "open")


class InjectionDesignError(RuntimeError):
    pass


# -- design -----------------------------------------------------------------

def r_polys(params: SandwichParams, L1):
    """Numerator and denominator polynomials of r(s) (highest power first)."""
    A1b = observer_A1bar(params, L1)
    Cd = params.C1 @ linalg.expm(-params.tau * params.A1)
    num, den = signal.ss2tf(A1b, params.B1, Cd, np.zeros((1, 1)))
    return np.trim_zeros(np.real_if_close(num[0]), "f"), np.real_if_close(den)


def r_of_s(params: SandwichParams, L1, s):
    A1b = observer_A1bar(params, L1)
    Cd = params.C1 @ linalg.expm(-params.tau * params.A1)
    m = params.m
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    return np.array([(Cd @ np.linalg.solve(sk * np.eye(m) - A1b, params.B1))[0, 0] for sk in s])


def r_closed_form_dcv(dcv: DcvPhysicalParams, L1: float, s=0.0):
    """r(s) for the crane model written in the physical parameters."""
    imp = dcv.impedance
    kap = dcv.tau * (dcv.dL - imp) / dcv.ML
    return -2.0 * imp * np.exp(kap) / (dcv.ML * np.asarray(s) + dcv.dL - imp + 2.0 * L1 * dcv.ML)


@dataclass
class InjectionFilterBank:
    """Coefficients of the five injections split as D s + P + C (sI - A)^-1 B.

    Profiles are stored on their own grids: ``xz`` for the PDE injections on
    [0, 1] and ``xv`` for the delay segment on [1, 2].  The strictly proper
    remainder is a single filter core (core_A, core_B) shared by all
    injections, each reading it through its own output row(s).
    """

    params: SandwichParams
    Gamma1: np.ndarray
    inv_r: tuple                  # (a, b) of 1/r = a s + b + R(s)
    xz: np.ndarray
    xv: np.ndarray
    D: Dict[str, np.ndarray]      # derivative gains: h1 (n,), h2/h3 (len xz,), h4 scalar, h5 (len xv,)
    P: Dict[str, np.ndarray]      # proportional gains, same shapes
    core_A: np.ndarray
    core_B: np.ndarray
    core_C: Dict[str, np.ndarray]  # output rows: shape (..., k)
    r0: float
    poles: np.ndarray

    @property
    def well_posed_index(self) -> float:
        """1 + a5(2); zero means the designed delay-segment injection is singular."""
        return 1.0 + float(self.D["h5"][-1])

    def response(self, name: str, s, idx=None):
        """Frequency response of one injection (profile sampled at ``idx``)."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        Dv = np.asarray(self.D[name])
        Pv = np.asarray(self.P[name])
        Cv = np.asarray(self.core_C[name])
        if idx is not None:
            Dv, Pv, Cv = Dv[idx], Pv[idx], Cv[idx]
        k = self.core_A.shape[0]
        out = []
        for sk in s:
            sp = 0.0
            if k:
                g = np.linalg.solve(sk * np.eye(k) - self.core_A, self.core_B).reshape(-1)
                sp = Cv @ g
            out.append(Dv * sk + Pv + sp)
        return np.array(out)


def _split_inverse(num_r, den_r):
    """1/r = den/num -> (a, b, remainder numerator, num) with deg(quotient) <= 1."""
    quo, rem = np.polydiv(den_r, num_r)
    quo = np.trim_zeros(quo, "f")
    if quo.size > 2:
        raise InjectionDesignError(
            "r(s) has relative degree above one; only first derivatives of the output are measured")
    a = quo[0] if quo.size == 2 else 0.0
    b = quo[-1] if quo.size else 0.0
    return float(a), float(b), np.atleast_1d(rem)


def _core(num_r, rem_rows):
    """Controllable-canonical realization of rem_i(s)/num_r(s) for several numerators."""
    lead = num_r[0]
    monic = num_r / lead
    k = monic.size - 1
    if k == 0:
        return np.zeros((0, 0)), np.zeros((0, 1)), [np.zeros(0) for _ in rem_rows]
    A = np.zeros((k, k))
    A[0, :] = -monic[1:]
    A[1:, :-1] = np.eye(k - 1)
    B = np.zeros((k, 1))
    B[0, 0] = 1.0
    rows = []
    for rem in rem_rows:
        r = np.zeros(k)
        rr = np.atleast_1d(rem) / lead
        r[k - rr.size:] = rr
        rows.append(r)
    return A, B, rows


def build_injection_filters(params: SandwichParams, gains: GainSet, ok: ObserverKernelSet,
                            M: int = 100, Nv: int = 100, rhp_grid: Optional[np.ndarray] = None
                            ) -> InjectionFilterBank:
    """Generic transfer-function route for the five injections."""
    P = params
    A1b = observer_A1bar(P, gains.L1)
    if not np.all(linalg.eigvals(A1b).real < 0):
        raise InjectionDesignError("A1bar is not Hurwitz")
    num_r, den_r = r_polys(P, gains.L1)
    if num_r.size == 0 or np.allclose(num_r, 0):
        raise InjectionDesignError("r(s) vanishes identically")
    if rhp_grid is None:
        w = np.logspace(-4, 4, 400)
        rhp_grid = np.concatenate([1j * w, -1j * w, w, w + 1j * w, [0.0]])
    rv = r_of_s(P, gains.L1, rhp_grid)
    if np.min(np.abs(rv)) < 1e-12:
        raise InjectionDesignError("r(s) numerically zero on the right-half-plane grid")
    a, b, rem = _split_inverse(num_r, den_r)

    # C1 (sI - A1bar)^-1 B1 / r(s) = num_g / num_r -> const + rem_g / num_r
    num_g, _ = signal.ss2tf(A1b, P.B1, P.C1, np.zeros((1, 1)))
    num_g = np.trim_zeros(np.real_if_close(num_g[0]), "f")
    cg, rem_g = np.polydiv(num_g, num_r) if num_g.size else (np.array([0.0]), np.array([0.0]))
    cg = float(cg[-1]) if np.size(cg) and num_g.size >= num_r.size else 0.0
    if num_g.size < num_r.size:
        rem_g = num_g

    xz = np.linspace(0.0, 1.0, M + 1)
    xv = np.linspace(1.0, 2.0, Nv + 1)
    k1 = float(P.q1 * ok.K1(1.0).reshape(-1)[0]) if P.n == 1 else None
    K1end = np.asarray(ok.K1.values[-1], float).reshape(-1)
    phi1 = np.array([ok.phi(x, 1.0) for x in xz])
    psi1 = np.array([ok.psi(x, 1.0) for x in xz])
    Gamma1 = linalg.expm(P.tau * P.A1) @ gains.L1
    phis = np.array([(P.C1 @ linalg.expm(-P.tau * P.A1 * (x - 1.0)))[0] for x in xv])  # (Nv+1, m)
    phiB = phis @ P.B1[:, 0]
    phiG = phis @ Gamma1[:, 0]

    g1 = P.q1 * K1end            # h1 = +q1 K1(1) ztil(1)  ->  H1 = g1 / r
    g2 = -P.q1 * phi1
    g3 = -P.q1 * psi1
    D = {"h1": g1 * a, "h2": g2 * a, "h3": g3 * a, "h4": np.array(P.q * a), "h5": -phiB * a}
    Pp = {"h1": g1 * b, "h2": g2 * b, "h3": g3 * b, "h4": np.array(P.q * b + cg),
          "h5": phiG - phiB * b}
    A, B, rows = _core(num_r, [rem, rem_g])
    rr, rg = rows
    Cc = {"h1": np.outer(g1, rr), "h2": np.outer(g2, rr), "h3": np.outer(g3, rr),
          "h4": P.q * rr + rg, "h5": np.outer(-phiB, rr)}
    poles = linalg.eigvals(A) if A.size else np.zeros(0)
    if poles.size and not np.all(poles.real < 0):
        raise InjectionDesignError("injection filter core has poles with Re >= 0")
    return InjectionFilterBank(params=P, Gamma1=Gamma1, inv_r=(a, b), xz=xz, xv=xv, D=D, P=Pp,
                               core_A=A, core_B=B, core_C=Cc, r0=float(np.real(r_of_s(P, gains.L1, 0.0)[0])),
                               poles=poles)


def dcv_injection_gains(dcv: DcvPhysicalParams, L1: float, q: float, K1_end: float,
                        phi_x1, psi_x1, xv):
    """Closed-form PD coefficients (derivative, proportional) for the crane model."""
    imp = dcv.impedance
    kap = dcv.tau * (dcv.dL - imp) / dcv.ML
    den = -2.0 * imp * np.exp(kap)
    Dl = dcv.dL - imp + 2.0 * L1 * dcv.ML
    q1 = dcv.wave_speed / dcv.L
    xv = np.asarray(xv, float)
    e = np.exp(kap * (xv - 2.0))
    out = {
        "h1": (q1 * K1_end * dcv.ML / den, q1 * K1_end * Dl / den),
        "h2": (-q1 * np.asarray(phi_x1) * dcv.ML / den, -q1 * np.asarray(phi_x1) * Dl / den),
        "h3": (-q1 * np.asarray(psi_x1) * dcv.ML / den, -q1 * np.asarray(psi_x1) * Dl / den),
        "h4": (q * dcv.ML / den, q * Dl / den + np.exp(-kap)),
        "h5": (-e, -e * Dl / dcv.ML + 2.0 * L1 * e),
    }
    return out


# -- realization ------------------------------------------------------------

@dataclass
class RealizedGains:
    """Per-node PD coefficients actually used in the time-domain observer."""

    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    a3: np.ndarray
    b3: np.ndarray
    a4: float
    b4: float
    a5: np.ndarray
    b5: np.ndarray
    Gamma1: np.ndarray
    core_A: np.ndarray
    core_B: np.ndarray
    core_C: Dict[str, np.ndarray]
    mode: str


def realize_gains(bank: InjectionFilterBank, M: int, Nv: int, mode: str = "delayed") -> RealizedGains:
    if mode not in REALIZATIONS:
        raise ValueError(f"unknown observer realization {mode!r}")
    P = bank.params
    xz = np.linspace(0.0, 1.0, M + 1)
    xv = np.linspace(1.0, 2.0, Nv + 1)
    on = lambda prof, grid: np.interp(grid, bank.xz if prof.size == bank.xz.size else bank.xv, prof)
    a2, b2 = on(bank.D["h2"], xz), on(bank.P["h2"], xz)
    a3, b3 = on(bank.D["h3"], xz), on(bank.P["h3"], xz)
    a1, b1 = np.asarray(bank.D["h1"], float).reshape(-1), np.asarray(bank.P["h1"], float).reshape(-1)
    a4, b4 = float(bank.D["h4"]), float(bank.P["h4"])
    a5, b5 = on(bank.D["h5"], xv), on(bank.P["h5"], xv)
    phis = np.array([(P.C1 @ linalg.expm(-P.tau * P.A1 * (x - 1.0)))[0] for x in xv])
    phiG = phis @ bank.Gamma1[:, 0]
    zero_z = np.zeros(M + 1)
    core_C = dict(bank.core_C)
    if mode in ("predictor", "open", "delayed"):
        a5 = np.zeros(Nv + 1)
        b5 = phiG
        core_C["h5"] = np.zeros((Nv + 1, bank.core_A.shape[0]))
    if mode == "printed":
        a5, b5 = -a5, 2.0 * phiG - b5
        core_C["h5"] = -np.array([np.interp(xv, bank.xv, c) for c in np.atleast_2d(bank.core_C["h5"]).T]).T \
            if bank.core_A.size else np.zeros((Nv + 1, 0))
    if mode == "predictor":
        a1 = np.zeros_like(a1)
        a2 = zero_z.copy()
        a3 = zero_z.copy()
        a4 = 0.0
    if mode == "open":
        a1 = np.zeros_like(a1)
        b1 = np.zeros_like(b1)
        a2 = b2 = a3 = b3 = zero_z.copy()
        a4 = b4 = 0.0
    if abs(1.0 + a5[-1]) < 1e-9:
        raise InjectionDesignError("delay-segment injection is singular at the output end")
    k = bank.core_A.shape[0]
    if k:
        for key in ("h2", "h3"):
            core_C[key] = np.array([np.interp(xz, bank.xz, c) for c in np.atleast_2d(core_C[key]).T]).T
        if mode == "open":
            core_C = {kk: np.zeros_like(v) for kk, v in core_C.items()}
    return RealizedGains(a1=a1, b1=b1, a2=a2, b2=b2, a3=a3, b3=b3, a4=a4, b4=b4, a5=a5, b5=b5,
                         Gamma1=bank.Gamma1[:, 0], core_A=bank.core_A, core_B=bank.core_B,
                         core_C=core_C, mode=mode)


@dataclass
class ObserverState:
    core: PlantState              # Xhat, Yhat, zhat, what stepped by the plant scheme
    nu: np.ndarray                # vhat - a5 ytil on the delay segment
    nudot: np.ndarray             # its time derivative, transported alongside
    xr: np.ndarray                # strictly proper filter core
    gains: RealizedGains
    dt: float
    t: float = 0.0
    ytil: float = 0.0
    ydtil: float = 0.0
    h: Dict[str, float] = field(default_factory=dict)

    @property
    def Xhat(self):
        return self.core.X

    @property
    def Yhat(self):
        return self.core.Y

    @property
    def zhat(self):
        return self.core.z

    @property
    def what(self):
        return self.core.w

    @property
    def vhat(self):
        return self.nu + self.gains.a5 * self.ytil

    def copy(self) -> "ObserverState":
        return ObserverState(core=self.core.copy(), nu=self.nu.copy(), nudot=self.nudot.copy(),
                             xr=self.xr.copy(), gains=self.gains, dt=self.dt, t=self.t,
                             ytil=self.ytil, ydtil=self.ydtil, h=dict(self.h))


def init_observer(params: SandwichParams, gains: RealizedGains, M: int, dt: float,
                  z0=None, w0=None, X0=None, Y0=None, v0=None, scheme: str = "upwind"
                  ) -> ObserverState:
    """Observer on its own grid of M cells.

    The default upwind transport carries numerical viscosity of order
    q dx (1 - CFL) / 2, which damps the high-frequency boundary echo that the
    derivative injection on the delayed innovation would otherwise amplify.
    Keep M modest (a few hundred to a thousand) so that damping stays active.
    """
    Nv = int(round(params.tau / dt))
    if abs(Nv * dt - params.tau) > 1e-9 * max(1.0, params.tau):
        raise ValueError("tau must be an integer multiple of dt")
    if gains.a5.size != Nv + 1:
        raise ValueError("realized gains do not match the delay grid")
    core = init_plant(params, M, dt, z0, w0, X0, Y0, scheme=scheme)
    nu = np.zeros(Nv + 1)
    if v0 is not None:
        nu[:] = np.asarray(v0(np.linspace(1, 2, Nv + 1)) if callable(v0) else v0, float)
    nu[0] = (params.C1 @ core.Y).item()
    nudot = np.zeros(Nv + 1)
    nudot[0] = (params.C1 @ core.Ydot).item()
    return ObserverState(core=core, nu=nu, nudot=nudot, xr=np.zeros(gains.core_A.shape[0]),
                         gains=gains, dt=dt)


def step_observer(st: ObserverState, U: float, y_out: float, ydot_out: float, dt: float) -> ObserverState:
    """Advance the observer one step in place and return it."""
    if abs(dt - st.dt) > 1e-15:
        raise ValueError("observer step must match its configured dt")
    g = st.gains
    P = st.core.params
    den = 1.0 + g.a5[-1]
    yt = (y_out - st.nu[-1]) / den
    ydt = (ydot_out - st.nudot[-1]) / den
    k = st.xr.size
    if k:
        sp = {key: np.asarray(c) @ st.xr for key, c in g.core_C.items()}
        xr_dot = g.core_A @ st.xr + g.core_B[:, 0] * yt
    else:
        sp = {key: 0.0 for key in ("h1", "h2", "h3", "h4", "h5")}
        xr_dot = np.zeros(0)
    dch = ydt
    h1 = g.a1 * dch + g.b1 * yt + sp["h1"]
    h2 = g.a2 * dch + g.b2 * yt + sp["h2"]
    h3 = g.a3 * dch + g.b3 * yt + sp["h3"]
    h4 = g.a4 * dch + g.b4 * yt + float(np.sum(sp["h4"]))
    ey = g.Gamma1 * yt
    advance_fields(st.core, U, h2, h3, h1, ey, h4, dt)
    st.core.t += dt
    st.core.Ydot = P.A1 @ st.core.Y + P.B1[:, 0] * st.core.z[-1] + ey
    # delay segment in the nu variable: exact one-cell shift per step
    Nv = st.nu.size - 1
    tau = P.tau
    a5p = np.gradient(g.a5, 1.0 / Nv)
    src = (g.b5 - a5p / tau) * yt + sp["h5"]
    srcd = (g.b5 - a5p / tau) * ydt + (np.asarray(g.core_C["h5"]) @ xr_dot if k else 0.0)
    nu_new = np.empty_like(st.nu)
    nud_new = np.empty_like(st.nudot)
    nu_new[1:] = st.nu[:-1] + 0.5 * dt * (src[:-1] + src[1:])
    nud_new[1:] = st.nudot[:-1] + 0.5 * dt * (srcd[:-1] + srcd[1:])
    nu_new[0] = (P.C1 @ st.core.Y).item() - g.a5[0] * yt
    nud_new[0] = (P.C1 @ st.core.Ydot).item() - g.a5[0] * ydt
    st.nu, st.nudot = nu_new, nud_new
    if k:
        st.xr = st.xr + dt * xr_dot
    st.t += dt
    st.ytil, st.ydtil = yt, ydt
    st.h = {"h1": float(np.linalg.norm(h1)), "h2": float(np.max(np.abs(h2))),
            "h3": float(np.max(np.abs(h3))), "h4": float(abs(h4)), "h5": float(np.max(np.abs(src)))}
    if not (np.all(np.isfinite(st.nu)) and np.isfinite(yt)):
        raise FloatingPointError(f"observer diverged at t={st.t:.4f}")
    return st


# -- error-system oracles ---------------------------------------------------

def error_norm(plant: PlantState, obs: ObserverState) -> float:
    """Sum of L2 field errors and ODE error magnitudes on the normalized domain."""
    x = plant.grid
    if obs.core.M != plant.M:
        zt = plant.z - np.interp(x, obs.core.grid, obs.zhat)
        wt = plant.w - np.interp(x, obs.core.grid, obs.what)
    else:
        zt = plant.z - obs.zhat
        wt = plant.w - obs.what
    return float(np.sqrt(np.trapezoid(zt**2, x)) + np.sqrt(np.trapezoid(wt**2, x))
                 + np.linalg.norm(plant.X - obs.Xhat) + np.linalg.norm(plant.Y - obs.Yhat))


def _volterra_right(K, f, h):
    """(int_x^1 K(x, y) f(y) dy) at every grid node, trapezoid rule."""
    N = K.shape[0] - 1
    out = np.zeros(N + 1)
    for i in range(N):
        seg = K[i, i:] * f[i:]
        out[i] = h * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
    return out


def _rel(res, *terms, inner=None):
    r = np.abs(np.asarray(res, float))
    scale = max(float(np.max(np.abs(np.asarray(t, float)))) for t in terms)
    if inner is not None:
        r = r[inner]
    return 0.0 if scale == 0 else float(np.max(r) / scale)


def transform_errors(ok: ObserverKernelSet, zt, wt, Xt):
    """Invert the second error transformation and apply the third.

    Solves ztil = alpha - int_x^1 phi alpha by backward marching (the diagonal
    trapezoid weight kept implicit), then beta = wtil + int_x^1 psi alpha and
    Ztil = Xtil - int K1 alpha.  Inputs are sampled on the kernel grid.
    """
    N = ok.N
    h = 1.0 / N
    phi = ok.phi.values
    alpha = np.zeros(N + 1)
    alpha[N] = zt[N]
    for i in range(N - 1, -1, -1):
        seg = phi[i, i + 1:] * alpha[i + 1:]
        acc = h * (seg.sum() - 0.5 * seg[-1])
        alpha[i] = (zt[i] + acc) / (1.0 - 0.5 * h * phi[i, i])
    beta = np.asarray(wt, float) + _volterra_right(ok.psi.values, alpha, h)
    K1 = np.asarray(ok.K1.values, float).reshape(N + 1, -1)
    Z = np.asarray(Xt, float).reshape(-1) - np.trapezoid(K1 * alpha[:, None], dx=h, axis=0)
    return alpha, beta, Z


def observer_identity_residuals(params: SandwichParams, ok: ObserverKernelSet, gains: GainSet,
                                alpha, alpha_x, beta, Xt) -> Dict[str, float]:
    """Residuals of the error-transformation identities on one smooth state.

    ``alpha``, ``alpha_x`` and ``beta`` are samples on the kernel grid of a
    transformed error state (beta(1) = 0).  The original errors are built by
    the forward transformation, the target rates are mapped back through it,
    and the result is compared with the error dynamics under the matched
    injections.  Every entry is relative to the largest term of its equation
    and tends to zero with the kernel grid spacing.

    * ``ztil_pde``, ``wtil_pde``: the two transport identities,
    * ``left_boundary``: ztil(0) - p wtil(0) against the alpha/beta boundary relation,
    * ``Z_ode``: Ztil rate against A0bar Ztil (state with beta = 0 and the
      alpha(0) relation enforced by shifting Xtil along C0^+),
    * ``delay_gain``: Gamma1 phi(2) against exp(tau A1) L1 C1 exp(-tau A1).
    """
    P = params
    if ok.barM is None:
        derive_barM_barN(ok, P.c1)
    N = ok.N
    h = 1.0 / N
    phi, psi = ok.phi.values, ok.psi.values
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    zt = alpha - _volterra_right(phi, alpha, h)
    wt = beta - _volterra_right(psi, alpha, h)
    a_t = (-P.q1 * np.asarray(alpha_x, float) + _volterra_right(ok.barM.values, beta, h)
           - P.c1 * alpha - P.c1 * beta)
    b_x = np.gradient(beta, h, edge_order=2)
    b_t = P.q2 * b_x + _volterra_right(ok.barN.values, beta, h) - P.c2 * beta
    zt_t = a_t - _volterra_right(phi, a_t, h)
    wt_t = b_t - _volterra_right(psi, a_t, h)
    zt_x = np.gradient(zt, h, edge_order=2)
    wt_x = np.gradient(wt, h, edge_order=2)
    a1 = alpha[-1]
    inner = slice(1, N)
    out = {}
    tz = (zt_t, P.q1 * zt_x, P.c1 * (zt + wt), P.q1 * phi[:, -1] * a1)
    out["ztil_pde"] = _rel(tz[0] + tz[1] + tz[2] - tz[3], *tz, inner=inner)
    tw = (wt_t, P.q2 * wt_x, P.c2 * (zt + wt), P.q1 * psi[:, -1] * a1)
    out["wtil_pde"] = _rel(tw[0] - tw[1] + tw[2] - tw[3], *tw, inner=inner)
    C0 = P.C0.reshape(-1)
    K1 = np.asarray(ok.K1.values, float).reshape(N + 1, -1)
    kint = float(np.trapezoid((K1 @ C0) * alpha, dx=h))
    lhs = zt[0] - P.p * wt[0]
    rhs = alpha[0] - P.p * beta[0] + kint
    out["left_boundary"] = _rel(lhs - rhs, lhs, rhs, kint)

    # third transformation with beta = 0; Xtil is shifted onto alpha(0) = C0 Xtil - int C0 K1 alpha
    Xt = np.asarray(Xt, float).reshape(-1)
    Xt = Xt + right_inverse(P.C0).reshape(-1) * (alpha[0] + kint - (P.C0 @ Xt).item())
    a_t0 = -P.q1 * np.asarray(alpha_x, float) - P.c1 * alpha
    X_t = (P.A0 @ Xt - P.E0.reshape(-1) * np.trapezoid(psi[0, :] * alpha, dx=h)
           - P.q1 * K1[-1] * a1)
    Z = Xt - np.trapezoid(K1 * alpha[:, None], dx=h, axis=0)
    Z_t = X_t - np.trapezoid(K1 * a_t0[:, None], dx=h, axis=0)
    A0bar = P.A0 - gains.L0 @ P.C0
    out["Z_ode"] = _rel(Z_t - A0bar @ Z, Z_t, A0bar @ Z)

    Gam = linalg.expm(P.tau * P.A1) @ gains.L1
    phi2 = P.C1 @ linalg.expm(-P.tau * P.A1)
    want = linalg.expm(P.tau * P.A1) @ gains.L1 @ P.C1 @ linalg.expm(-P.tau * P.A1)
    out["delay_gain"] = _rel(Gam @ phi2 - want, want)
    return out


def target_error_residual(plant: PlantState, obs: ObserverState, ok: ObserverKernelSet) -> Dict[str, float]:
    """Transformed error coordinates of a synchronized plant/observer pair.

    ``beta_sup`` is sup|beta| relative to sup|alpha| (beta dies out once the w
    channel has been swept), ``alpha0`` the mismatch in alpha(0) = C0 Ztil and
    ``innovation`` the current |ytil|.  All entries vanish for identical states.
    """
    xk = ok.psi.grid
    zt = np.interp(xk, plant.grid, plant.z) - np.interp(xk, obs.core.grid, obs.zhat)
    wt = np.interp(xk, plant.grid, plant.w) - np.interp(xk, obs.core.grid, obs.what)
    alpha, beta, Z = transform_errors(ok, zt, wt, plant.X - obs.Xhat)
    sa = float(np.max(np.abs(alpha)))
    sb = float(np.max(np.abs(beta)))
    c0z = (plant.params.C0 @ Z).item()
    d0 = abs(alpha[0] - c0z)
    return {
        "beta_sup": sb / sa if sa > 0 else sb,
        "alpha0": d0 / max(abs(alpha[0]), abs(c0z)) if d0 > 0 else 0.0,
        "innovation": abs(float(obs.ytil)),
    }


def delay_segment_truth(plant_history_C1Y, Nv: int) -> np.ndarray:
    """Plant delay-segment state v(x) from the last Nv+1 samples of C1 Y (newest first)."""
    h = np.asarray(plant_history_C1Y, float)
    return h[:Nv + 1]
