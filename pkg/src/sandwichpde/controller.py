"""Output-feedback law built on the observer state.

Two Volterra transformations map the observer into a cascade whose only
remaining loop closes through xi = C0 Zhat.  In the Laplace domain that loop
reads xi = C0 (sI - A0h)^-1 [G(s) xi + B0 Ubar], and the dynamic part of the
control cancels it below the cut-off of a low-pass filter Omega:

    U = -F0 Zhat + Ubar,   Ubar = -W0^+ Omega C0 (sI - A0h)^-1 G(s) xi.

G(s) only contains pure delays, distributed delays over one or two transit
times, one rational block and a 1/h(s) echo loop, so it is realized exactly
with ring buffers and FIR taps on the xi history.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg, signal

from .kernels import ControllerKernelSet, right_inverse
from .model import GainSet, SandwichParams


class SynthesisError(RuntimeError):
    pass


def default_freq_grid(n: int = 2000, lo: float = 1e-4, hi: float = 1e4) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


def omega_filter(s, wc: float, zeta: float = 1.0):
    return wc**2 / (s**2 + 2 * zeta * wc * s + wc**2)


@dataclass
class FrequencySynthesis:
    params: SandwichParams
    F0: np.ndarray
    A0h: np.ndarray
    A1h: np.ndarray
    Cp: np.ndarray
    g0: np.ndarray            # q1 C0^+ barK1(0), shape (n,)
    MY: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    Malpha: np.ndarray        # (N+1, n) on y-grid
    Mbeta: np.ndarray
    ygrid: np.ndarray
    freqs: np.ndarray
    G: np.ndarray             # (nf, n) complex
    M_max: float
    wc: float
    zeta: float
    margin: np.ndarray        # 1 - |1-Omega| M_max sigma(C0(jw-A0h)^-1), per grid point
    echo_gain: float          # p q exp(-(c2/q2 + c1/q1))
    echo_delay: float         # 1/q1 + 1/q2

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    def h(self, s):
        return 1.0 - self.echo_gain * np.exp(-s * self.echo_delay)

    def G_at(self, s) -> np.ndarray:
        return evaluate_G(self, np.atleast_1d(s))

    def resolvent_row(self, s):
        """C0 (sI - A0h)^-1 evaluated at each s; shape (len(s), n)."""
        n = self.A0h.shape[0]
        C0 = self.params.C0
        return np.array([np.linalg.solve((si * np.eye(n) - self.A0h).T, C0.reshape(-1)) for si in s])

    def W0(self, s):
        return self.resolvent_row(s) @ self.params.B0.reshape(-1)

    def filtered_response(self, s) -> np.ndarray:
        """Transfer function of the dynamic term, xi -> Ubar."""
        s = np.atleast_1d(s)
        row = self.resolvent_row(s)
        G = self.G_at(s)
        W0 = row @ self.params.B0.reshape(-1)
        return -omega_filter(s, self.wc, self.zeta) * np.sum(row * G, axis=1) / W0

    def report_rows(self):
        sig = np.abs(self.resolvent_row(1j * self.freqs)).max(axis=1) if self.params.n == 1 else \
            np.array([np.linalg.norm(r) for r in self.resolvent_row(1j * self.freqs)])
        for w, g, mg, sg in zip(self.freqs, self.G, self.margin, sig):
            yield w, float(np.linalg.norm(g)), float(sg), float(mg)


def evaluate_G(fs: "FrequencySynthesis", s) -> np.ndarray:
    """G(s) for an array of complex s; returns shape (len(s), n)."""
    P = fs.params
    q1, q2, c1, c2, q = P.q1, P.q2, P.c1, P.c2, P.q
    s = np.asarray(s, dtype=complex)
    y = fs.ygrid
    hy = y[1] - y[0]
    wts = np.full(y.size, hy)
    wts[0] = wts[-1] = 0.5 * hy
    m = P.m
    out = np.zeros((s.size, P.n), dtype=complex)
    B1 = P.B1.reshape(-1)
    for k, sk in enumerate(s):
        ea = np.exp(-(c1 + sk) * y / q1)
        eb = q * np.exp(-(c2 + sk) * (1.0 - y) / q2 - (c1 + sk) / q1)
        ia = (wts * ea) @ fs.Malpha
        ib = (wts * eb) @ fs.Mbeta
        e1 = np.exp(-(c1 + sk) / q1)
        e2 = q * np.exp(-(c2 + sk) / q2 - (c1 + sk) / q1)
        res = np.linalg.solve(sk * np.eye(m) - fs.A1h, B1)
        inner = fs.MY @ res * e1 + ia + ib + fs.N1.reshape(-1) * e1 + fs.N2.reshape(-1) * e2
        out[k] = fs.g0 + inner / (1.0 - fs.echo_gain * np.exp(-sk * fs.echo_delay))
    return out


def _margin(freqs, wc, zeta, M_max, sig):
    om = omega_filter(1j * freqs, wc, zeta)
    return 1.0 - np.abs(1.0 - om) * M_max * sig


def synthesize(params: SandwichParams, gains: GainSet, ck: ControllerKernelSet,
               freqs: Optional[np.ndarray] = None, wc: Optional[float] = None,
               zeta: float = 1.0, dcv_cutoff: bool = True) -> FrequencySynthesis:
    """Evaluate G on the grid, pick the low-pass cut-off and certify the small-gain condition.

    With ``dcv_cutoff`` the cut-off is 2 M_max + A0h (scalar crane ODE rule);
    if that value is not positive or fails the condition, the smallest
    admissible cut-off is searched instead.
    """
    if ck.MY is None:
        raise SynthesisError("gain integrals missing; run derive_gain_integrals first")
    if freqs is None:
        freqs = default_freq_grid()
    P = params
    A0h = P.A0 - P.B0 @ gains.F0
    A1h = P.A1 - P.B1 @ gains.F1
    arrays = [ck.MY, ck.N1, ck.N2, ck.Malpha.values, ck.Mbeta.values, ck.barK1.values]
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise SynthesisError("non-finite gain integrals; the kernel Volterra system overflowed")
    Cp = right_inverse(P.C0)
    g0 = (P.q1 * Cp * ck.barK1.values[0]).reshape(-1)
    fs = FrequencySynthesis(
        params=P, F0=gains.F0, A0h=A0h, A1h=A1h, Cp=Cp, g0=g0, MY=ck.MY, N1=ck.N1, N2=ck.N2,
        Malpha=ck.Malpha.values.reshape(ck.N + 1, -1), Mbeta=ck.Mbeta.values.reshape(ck.N + 1, -1),
        ygrid=ck.Malpha.grid, freqs=freqs, G=None, M_max=0.0, wc=0.0, zeta=zeta,
        margin=None, echo_gain=P.p * P.q * np.exp(-(P.c2 / P.q2 + P.c1 / P.q1)),
        echo_delay=1.0 / P.q1 + 1.0 / P.q2)
    if abs(fs.echo_gain) >= 1.0:
        raise SynthesisError("echo loop gain |pq| exp(-(c2/q2+c1/q1)) is not below one")
    if not (np.all(linalg.eigvals(A0h).real < 0) and np.all(linalg.eigvals(A1h).real < 0)):
        raise SynthesisError("closed-loop ODE matrices are not Hurwitz")
    G = evaluate_G(fs, 1j * freqs)
    fs.G = G
    gn = np.linalg.norm(G, axis=1)
    fs.M_max = float(gn.max())
    sig = np.array([np.linalg.norm(r) for r in fs.resolvent_row(1j * freqs)])
    if wc is None:
        cand = 2.0 * fs.M_max + float(np.max(linalg.eigvals(A0h).real)) if dcv_cutoff else -1.0
        if cand > 0 and np.all(_margin(freqs, cand, zeta, fs.M_max, sig) > 0):
            wc = cand
        else:
            wc = None
            for w in freqs:
                if np.all(_margin(freqs, w, zeta, fs.M_max, sig) > 0):
                    wc = float(w)
                    break
            if wc is None:
                raise SynthesisError(
                    f"no low-pass cut-off on the grid satisfies the small-gain condition (M_max={fs.M_max:.4g})")
    fs.wc = float(wc)
    fs.margin = _margin(freqs, fs.wc, zeta, fs.M_max, sig)
    if np.any(fs.margin <= 0):
        raise SynthesisError(f"small-gain condition violated; worst margin {fs.min_margin:.3e}")
    return fs


# -- discrete-time realization -----------------------------------------------

class _Ring:
    """Fixed-length history; ``lag(k)`` returns the value k steps ago."""

    def __init__(self, length: int, width: int):
        self.buf = np.zeros((length + 1, width))
        self.pos = 0
        self.length = length

    def push(self, v):
        self.pos = (self.pos + 1) % (self.length + 1)
        self.buf[self.pos] = v

    def lag(self, k: int):
        return self.buf[(self.pos - k) % (self.length + 1)]

    def window(self, k0: int, k1: int):
        """Values at lags k0..k1 inclusive, ordered by lag."""
        idx = (self.pos - np.arange(k0, k1 + 1)) % (self.length + 1)
        return self.buf[idx]


class _DiscreteSS:
    def __init__(self, A, B, C, D, dt):
        Ad, Bd, Cd, Dd, _ = signal.cont2discrete((A, B, C, D), dt, method="bilinear")
        self.A, self.B, self.C, self.D = Ad, Bd, Cd, Dd
        self.x = np.zeros(Ad.shape[0])

    def step(self, u):
        u = np.atleast_1d(u)
        y = self.C @ self.x + self.D @ u
        self.x = self.A @ self.x + self.B @ u
        return y

    def freq(self, z):
        n = self.A.shape[0]
        out = []
        for zk in np.atleast_1d(z):
            if n:
                out.append(self.C @ np.linalg.solve(zk * np.eye(n) - self.A, self.B) + self.D)
            else:
                out.append(self.D.astype(complex))
        return np.array(out)


def _steps(T, dt, what):
    k = int(round(T / dt))
    if abs(k * dt - T) > 0.5 * dt + 1e-12:
        raise SynthesisError(f"{what} delay {T} incommensurate with dt {dt}")
    return k


@dataclass
class ControllerRealization:
    fs: FrequencySynthesis
    dt: float
    k1: int                     # steps in 1/q1
    k2: int                     # steps in 1/q2
    kT: int                     # steps in 1/q1 + 1/q2
    tap_alpha: np.ndarray       # (k1+1, n) FIR taps on lags 0..k1
    tap_beta: np.ndarray        # (k2+1, n) FIR taps on lags k1..k1+k2
    y_block: _DiscreteSS        # (sI - A1h)^-1 B1 -> MY
    out_blocks: List[_DiscreteSS]
    coef_N1: np.ndarray
    coef_N2: np.ndarray
    xi_hist: _Ring = None
    echo_hist: _Ring = None
    enabled: bool = True
    last: dict = field(default_factory=dict)

    def reset(self):
        n = self.fs.params.n
        self.xi_hist = _Ring(self.kT + 1, 1)
        self.echo_hist = _Ring(self.kT + 1, n)
        self.y_block.x[:] = 0
        for b in self.out_blocks:
            b.x[:] = 0

    def filtered(self, xi: float) -> float:
        """Advance one step with new xi sample; returns Ubar."""
        fs = self.fs
        self.xi_hist.push([xi])
        xa = self.xi_hist.window(0, self.k1)[:, 0]
        xb = self.xi_hist.window(self.k1, self.k1 + self.k2)[:, 0]
        x1 = self.xi_hist.lag(self.k1)[0]
        xT = self.xi_hist.lag(self.kT)[0]
        yv = self.y_block.step(x1)
        inner = (xa @ self.tap_alpha + xb @ self.tap_beta + fs.MY @ yv
                 + self.coef_N1 * x1 + self.coef_N2 * xT)
        echo = inner + fs.echo_gain * self.echo_hist.lag(self.kT - 1)
        self.echo_hist.push(echo)
        g = fs.g0 * xi + echo
        ubar = -sum(float(b.step(gj)[0]) for b, gj in zip(self.out_blocks, g))
        self.last = {"g": g, "ubar": ubar}
        return ubar

    def discrete_response(self, freqs) -> np.ndarray:
        """Frequency response of the realized xi -> Ubar map at z = exp(j w dt)."""
        fs = self.fs
        z = np.exp(1j * np.asarray(freqs) * self.dt)
        n = fs.params.n
        out = np.zeros(z.size, dtype=complex)
        la = np.arange(self.k1 + 1)
        lb = np.arange(self.k1, self.k1 + self.k2 + 1)
        yb = self.y_block.freq(z)  # (nz, m, 1)
        for k, zk in enumerate(z):
            fa = (zk ** (-la)) @ self.tap_alpha
            fb = (zk ** (-lb)) @ self.tap_beta
            inner = (fa + fb + (fs.MY @ yb[k]).reshape(-1) * zk ** (-self.k1)
                     + self.coef_N1 * zk ** (-self.k1) + self.coef_N2 * zk ** (-self.kT))
            g = fs.g0 + inner / (1.0 - fs.echo_gain * zk ** (-self.kT))
            out[k] = -sum(complex(b.freq(zk)[0].ravel()[0]) * g[j] for j, b in enumerate(self.out_blocks))
        return out


def build_realization(fs: FrequencySynthesis, dt: float) -> ControllerRealization:
    P = fs.params
    q1, q2, c1, c2, q = P.q1, P.q2, P.c1, P.c2, P.q
    k1 = _steps(1.0 / q1, dt, "forward transit")
    k2 = _steps(1.0 / q2, dt, "backward transit")
    kT = k1 + k2
    n = P.n
    # distributed delays: lag k dt corresponds to y = k/k1 (alpha) or y = 1 - k/k2 (beta)
    ya = np.arange(k1 + 1) / k1
    wa = np.full(k1 + 1, 1.0 / k1)
    wa[0] = wa[-1] = 0.5 / k1
    Ma = np.column_stack([np.interp(ya, fs.ygrid, fs.Malpha[:, j]) for j in range(n)])
    tap_alpha = (wa * np.exp(-c1 * ya / q1))[:, None] * Ma
    yb = 1.0 - np.arange(k2 + 1) / k2
    wb = np.full(k2 + 1, 1.0 / k2)
    wb[0] = wb[-1] = 0.5 / k2
    Mb = np.column_stack([np.interp(yb, fs.ygrid, fs.Mbeta[:, j]) for j in range(n)])
    tap_beta = (wb * q * np.exp(-c2 * (1.0 - yb) / q2 - c1 / q1))[:, None] * Mb
    m = P.m
    e1 = np.exp(-c1 / q1)
    y_block = _DiscreteSS(fs.A1h, P.B1 * e1, np.eye(m), np.zeros((m, 1)), dt)
    # output blocks: Omega * W0^+ * [C0 (sI - A0h)^-1]_j
    num_B, den = signal.ss2tf(fs.A0h, P.B0, P.C0, np.zeros((1, 1)))
    num_B = np.trim_zeros(num_B[0], "f")
    om_den = np.array([1.0, 2 * fs.zeta * fs.wc, fs.wc**2])
    blocks = []
    for j in range(n):
        e = np.zeros((n, 1))
        e[j] = 1.0
        num_j, _ = signal.ss2tf(fs.A0h, e, P.C0, np.zeros((1, 1)))
        num_j = np.trim_zeros(num_j[0], "f")
        if num_j.size == 0:
            num_j = np.array([0.0])
        num = fs.wc**2 * num_j
        dn = np.polymul(num_B, om_den)
        if num.size > dn.size:
            raise SynthesisError("output block is improper")
        A, B, C, D = signal.tf2ss(num, dn)
        blocks.append(_DiscreteSS(A, B, C, D, dt))
    cr = ControllerRealization(fs=fs, dt=dt, k1=k1, k2=k2, kT=kT, tap_alpha=tap_alpha,
                               tap_beta=tap_beta, y_block=y_block, out_blocks=blocks,
                               coef_N1=fs.N1.reshape(-1) * e1,
                               coef_N2=fs.N2.reshape(-1) * q * np.exp(-c2 / q2 - c1 / q1))
    cr.reset()
    return cr


def control_output(cr: ControllerRealization, Zhat, xi: float, dt: float) -> float:
    """U = -F0 Zhat + Ubar, advancing the realization by one step."""
    if abs(dt - cr.dt) > 1e-15:
        raise ValueError("controller step must match the realization dt")
    static = -(cr.fs.F0 @ np.asarray(Zhat, float).reshape(-1)).item()
    if not cr.enabled:
        return static
    u = static + cr.filtered(float(xi))
    if not np.isfinite(u):
        raise FloatingPointError("controller output is not finite")
    return u


# -- observer state to Zhat ---------------------------------------------------

def zhat_weights(params: SandwichParams, ck: ControllerKernelSet):
    """Weights of Zhat = Xhat + C0^+ [int wz zhat + int ww what + wY Yhat].

    Substituting the Volterra transformation into the second one and using the
    integral equations for barK1, barK2 and barK3 collapses the weights to the
    x = 0 rows of the kernels.
    """
    p = params.p
    wz = p * ck.K2.values[0, :] - ck.K3.values[0, :]
    ww = p * ck.J2.values[0, :] - ck.J3.values[0, :]
    wY = p * ck.lam.values[0] - ck.gamma.values[0]
    return wz, ww, wY


def _trap(f, x):
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(x)))


def transform_observer_state(params: SandwichParams, ck: ControllerKernelSet, zh, wh, Yh):
    """alpha, beta on the kernel grid by trapezoidal quadrature of the
    controller Volterra transformation; zh, wh sampled on that grid."""
    N = ck.N
    x = ck.K3.grid
    Yh = np.asarray(Yh, float).reshape(-1)
    alpha = np.empty(N + 1)
    beta = np.empty(N + 1)
    K3, J3, K2, J2 = ck.K3.values, ck.J3.values, ck.K2.values, ck.J2.values
    g = ck.gamma.values @ Yh
    lm = ck.lam.values @ Yh
    for i in range(N + 1):
        xs = x[i:]
        alpha[i] = zh[i] - _trap(K3[i, i:] * zh[i:], xs) - _trap(J3[i, i:] * wh[i:], xs) - g[i]
        beta[i] = wh[i] - _trap(K2[i, i:] * zh[i:], xs) - _trap(J2[i, i:] * wh[i:], xs) - lm[i]
    return alpha, beta


def compute_Zhat(obs, ck: ControllerKernelSet, route: str = "weights"):
    """(Zhat, xi) from an observer state.

    ``weights`` uses the collapsed weights on the observer grid; ``quadrature``
    evaluates alpha and beta on the kernel grid and applies the second
    transformation with barK1..barK3 (the slower, independent route).
    """
    P = obs.core.params
    Cp = right_inverse(P.C0)
    Xh = np.asarray(obs.Xhat, float).reshape(-1)
    Yh = np.asarray(obs.Yhat, float).reshape(-1)
    if route == "weights":
        wz, ww, wY = zhat_weights(P, ck)
        xo = obs.core.grid
        xk = ck.K3.grid
        s = (_trap(np.interp(xo, xk, wz) * obs.zhat, xo) + _trap(np.interp(xo, xk, ww) * obs.what, xo)
             + (wY @ Yh).item())
    elif route == "quadrature":
        if ck.barK1 is None:
            raise ValueError("gain integrals not derived")
        xk = ck.K3.grid
        zh = np.interp(xk, obs.core.grid, obs.zhat)
        wh = np.interp(xk, obs.core.grid, obs.what)
        alpha, beta = transform_observer_state(P, ck, zh, wh, Yh)
        s = (_trap(ck.barK1.values * alpha, xk) + _trap(ck.barK2.values * beta, xk)
             + (np.asarray(ck.barK3).reshape(-1) @ Yh).item())
    else:
        raise ValueError(f"unknown route {route!r}")
    Z = Xh + Cp.reshape(-1) * s
    return Z, (P.C0 @ Z).item()


def _rel(res, *terms, inner=None):
    r = np.abs(np.asarray(res, float))
    if inner is not None:
        r = r[inner]
    scale = max(float(np.max(np.abs(np.asarray(t, float)))) for t in terms)
    return 0.0 if scale == 0 else float(np.max(r) / scale)


def controller_identity_residuals(params: SandwichParams, ck: ControllerKernelSet, F0,
                                  zh, zh_x, wh, wh_x, Yh, U: float = 0.0) -> dict:
    """Residuals of the controller transformation identities on one smooth state.

    zh, wh (and their x-derivatives) are samples on the kernel grid satisfying
    wh(1) = q zh(1) + C1 Yh; Xhat is taken from the left boundary relation.
    The observer rates without output injection are mapped through the
    Volterra transformation and compared with the target system, the boundary
    relations, the Xhat identity and the Zhat dynamics.  Entries are relative
    to the largest term of each relation and shrink with the grid spacing.
    """
    P = params
    N = ck.N
    x = ck.K3.grid
    h = 1.0 / N
    zh, wh, zh_x, wh_x = (np.asarray(a, float) for a in (zh, wh, zh_x, wh_x))
    Yh = np.asarray(Yh, float).reshape(-1)
    Cp = right_inverse(P.C0)
    cp = Cp.reshape(-1)
    E0 = P.E0.reshape(-1)
    B0 = P.B0.reshape(-1)
    B1 = P.B1.reshape(-1)
    F0 = np.asarray(F0, float).reshape(1, -1)
    Xh = cp * (zh[0] - P.p * wh[0])

    zt = -P.q1 * zh_x - P.c1 * (zh + wh)
    wt = P.q2 * wh_x - P.c2 * (zh + wh)
    Yt = P.A1 @ Yh + B1 * zh[-1]
    Xt = P.A0 @ Xh + E0 * wh[0] + B0 * U

    alpha, beta = transform_observer_state(P, ck, zh, wh, Yh)
    a_t, b_t = transform_observer_state(P, ck, zt, wt, Yt)
    a_x = np.gradient(alpha, h, edge_order=2)
    b_x = np.gradient(beta, h, edge_order=2)
    inner = slice(1, N)
    out = {}
    out["alpha_pde"] = _rel(a_t + P.q1 * a_x + P.c1 * alpha, a_t, P.q1 * a_x, P.c1 * alpha, inner=inner)
    out["beta_pde"] = _rel(b_t - P.q2 * b_x + P.c2 * beta, b_t, P.q2 * b_x, P.c2 * beta, inner=inner)
    out["right_boundary"] = _rel(beta[-1] - P.q * alpha[-1], beta[-1], P.q * alpha[-1])

    bK1, bK2 = ck.barK1.values, ck.barK2.values
    bK3 = np.asarray(ck.barK3).reshape(-1)
    i1, i2, i3 = _trap(bK1 * alpha, x), _trap(bK2 * beta, x), (bK3 @ Yh).item()
    lhs = alpha[0] - P.p * beta[0]
    rhs = (P.C0 @ Xh).item() + i1 + i2 + i3
    out["left_boundary"] = _rel(lhs - rhs, lhs, rhs, i1, i2, i3)

    t4 = np.array([_trap(ck.barK4.values[:, k] * alpha, x) for k in range(P.n)])
    t5 = np.array([_trap(ck.barK5.values[:, k] * beta, x) for k in range(P.n)])
    t6 = ck.barK6 @ Yh
    lhs = E0 * wh[0]
    rhs = E0 * beta[0] + t4 + t5 + t6
    out["X_identity"] = _rel(lhs - rhs, lhs, E0 * beta[0], t4, t5, t6)

    Z = Xh + cp * (i1 + i2 + i3)
    Z_t = Xt + cp * (_trap(bK1 * a_t, x) + _trap(bK2 * b_t, x) + (bK3 @ Yt).item())
    A0h = P.A0 - P.B0 @ F0
    Ubar = U + (F0 @ Z).item()
    g0 = P.q1 * np.outer(cp, bK1[0]) @ P.C0
    ma = np.array([_trap(ck.Malpha.values[:, k] * alpha, x) for k in range(P.n)])
    mb = np.array([_trap(ck.Mbeta.values[:, k] * beta, x) for k in range(P.n)])
    rhs = ((A0h + g0) @ Z + B0 * Ubar + ck.MY @ Yh + ma + mb
           + ck.N1.reshape(-1) * alpha[-1] + ck.N2.reshape(-1) * beta[0])
    out["Z_ode"] = _rel(Z_t - rhs, Z_t, A0h @ Z, B0 * Ubar, ck.MY @ Yh, ma, mb)
    out["Zhat_output"] = _rel(alpha[0] - P.p * beta[0] - (P.C0 @ Z).item(), alpha[0], P.p * beta[0])
    return out
