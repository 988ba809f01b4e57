"""Plant parameterization for a 2x2 hyperbolic PDE sandwiched between two ODEs.

The proximal ODE state X drives the PDE at x=0, the distal ODE state Y sits
at x=1 and is only seen through a delayed output ``C1 Y(t - tau)``.  All core
routines work on the unit spatial domain; the DCV helpers below convert a
physical cable description into that normalized form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy import linalg

HURWITZ_TOL = 1e-9


def _mat(a, shape) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.shape != shape:
        arr = arr.reshape(shape)
    return arr


@dataclass(frozen=True)
class SandwichParams:
    """Matrices and scalars of the sandwich plant on x in [0, 1].

    Column inputs (B0, E0, B1) are stored as (k, 1) arrays and output rows
    (C0, C1) as (1, k) arrays so every product below is plain matrix algebra.
    """

    A0: np.ndarray
    B0: np.ndarray
    C0: np.ndarray
    E0: np.ndarray
    A1: np.ndarray
    B1: np.ndarray
    C1: np.ndarray
    q1: float
    q2: float
    c1: float
    c2: float
    p: float
    q: float
    tau: float

    def __post_init__(self):
        n = np.atleast_2d(self.A0).shape[0]
        m = np.atleast_2d(self.A1).shape[0]
        object.__setattr__(self, "A0", _mat(self.A0, (n, n)))
        object.__setattr__(self, "B0", _mat(self.B0, (n, 1)))
        object.__setattr__(self, "C0", _mat(self.C0, (1, n)))
        object.__setattr__(self, "E0", _mat(self.E0, (n, 1)))
        object.__setattr__(self, "A1", _mat(self.A1, (m, m)))
        object.__setattr__(self, "B1", _mat(self.B1, (m, 1)))
        object.__setattr__(self, "C1", _mat(self.C1, (1, m)))
        for name in ("q1", "q2", "c1", "c2", "p", "q", "tau"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.q1 <= 0 or self.q2 <= 0:
            raise ValueError("transport speeds q1, q2 must be positive")
        if self.tau <= 0:
            raise ValueError("delay tau must be positive")
        if self.q == 0:
            raise ValueError("reflection coefficient q must be nonzero")

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        return self.A1.shape[0]

    @property
    def loop_gain(self) -> float:
        """Round-trip reflection gain |pq| exp(-(c2/q2 + c1/q1))."""
        return abs(self.p * self.q) * np.exp(-(self.c2 / self.q2 + self.c1 / self.q1))

    @property
    def reflection_bound(self) -> float:
        return float(np.exp(self.c2 / self.q2 + self.c1 / self.q1))

    def replace(self, **changes) -> "SandwichParams":
        vals = {k: getattr(self, k) for k in self.__dataclass_fields__}
        vals.update(changes)
        return SandwichParams(**vals)


@dataclass(frozen=True)
class GainSet:
    L0: np.ndarray
    L1: np.ndarray
    F0: np.ndarray
    F1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L0", np.atleast_2d(np.asarray(self.L0, float)).reshape(-1, 1))
        object.__setattr__(self, "L1", np.atleast_2d(np.asarray(self.L1, float)).reshape(-1, 1))
        object.__setattr__(self, "F0", np.atleast_2d(np.asarray(self.F0, float)).reshape(1, -1))
        object.__setattr__(self, "F1", np.atleast_2d(np.asarray(self.F1, float)).reshape(1, -1))


@dataclass(frozen=True)
class DcvPhysicalParams:
    """Deepwater construction vessel cable/payload data (SI units)."""

    L: float = 1000.0
    E_mod: float = 4e9
    rho: float = 8.02
    M0: float = 1e6
    ML: float = 4e5
    g: float = 9.8
    dc: float = 0.5
    hc: float = 10.0
    Dc: float = 5.0
    dL: float = 2e5
    d0: float = 8e5
    rho_s: float = 1024.0
    RD: float = 0.2
    tau: float = 0.1

    def __post_init__(self):
        for name in ("L", "E_mod", "rho", "M0", "ML", "g", "hc", "Dc", "rho_s", "RD", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def buoyancy(self) -> float:
        return 0.25 * np.pi * self.Dc**2 * self.hc * self.rho_s * self.g

    @property
    def T0(self) -> float:
        """Static cable tension: payload weight minus buoyancy."""
        return self.ML * self.g - self.buoyancy

    @property
    def wave_speed(self) -> float:
        return float(np.sqrt(self.T0 / self.rho))

    @property
    def impedance(self) -> float:
        """sqrt(T0 rho), the cable's characteristic impedance."""
        return float(np.sqrt(self.T0 * self.rho))


def dcv_default_gains() -> GainSet:
    return GainSet(L0=0.05, L1=0.1, F0=8.57e5, F1=-2.9e6)


def derive_sandwich_from_dcv(dcv: DcvPhysicalParams) -> SandwichParams:
    """Map cable/crane/payload physics onto the normalized sandwich plant.

    With X = crane velocity, Y = payload velocity and Riemann variables
    z = u_t - v u_x, w = u_t + v u_x, the boundary equations give
    z(0) = 2X - w(0) and w(L) = 2Y - z(L), hence p = q = -1, C0 = C1 = 2.
    """
    T0 = dcv.T0
    if T0 <= 0:
        raise ValueError(f"static tension T0={T0:.4g} N is not positive (buoyancy exceeds weight)")
    imp = dcv.impedance
    v = dcv.wave_speed
    c = dcv.dc / (2.0 * dcv.rho)
    params = SandwichParams(
        A0=-dcv.d0 / dcv.M0 - imp / dcv.M0,
        B0=1.0 / dcv.M0,
        C0=2.0,
        E0=imp / dcv.M0,
        A1=-dcv.dL / dcv.ML + imp / dcv.ML,
        B1=-imp / dcv.ML,
        C1=2.0,
        q1=v / dcv.L,
        q2=v / dcv.L,
        c1=c,
        c2=c,
        p=-1.0,
        q=-1.0,
        tau=dcv.tau,
    )
    if not assumption1_holds(params):
        raise ValueError("reflection condition |pq| < exp(c2/q2 + c1/q1) fails for derived parameters")
    return params


def riemann_forward(u_t, u_x, v_w: float) -> Tuple[np.ndarray, np.ndarray]:
    u_t = np.asarray(u_t, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    if u_t.shape != u_x.shape:
        raise ValueError("velocity and slope fields must share a grid")
    return u_t - v_w * u_x, u_t + v_w * u_x


def riemann_inverse(z, w, v_w: float) -> Tuple[np.ndarray, np.ndarray]:
    if v_w == 0:
        raise ValueError("wave speed must be nonzero")
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.shape != w.shape:
        raise ValueError("z and w must share a grid")
    return 0.5 * (z + w), (w - z) / (2.0 * v_w)


# -- assumption checks -------------------------------------------------------

def is_hurwitz(A, tol: float = HURWITZ_TOL) -> bool:
    ev = linalg.eigvals(np.atleast_2d(A))
    return bool(np.all(ev.real < -tol))


def assumption1_holds(params: SandwichParams) -> bool:
    return abs(params.p * params.q) < params.reflection_bound


def invariant_zeros(A, B, C, D=None) -> np.ndarray:
    """Finite zeros of the Rosenbrock pencil [[sI - A, B], [C, D]]."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    C = np.atleast_2d(C)
    n = A.shape[0]
    k = B.shape[1]
    r = C.shape[0]
    if D is None:
        D = np.zeros((r, k))
    # det [[sI-A, B],[C, D]] = 0  <=>  s E - M singular with M = [[A, -B],[-C, -D]]
    M = np.block([[A, -B], [-C, -np.atleast_2d(D)]])
    E = np.zeros_like(M)
    E[:n, :n] = np.eye(n)
    ev = linalg.eigvals(M, E)
    return ev[np.isfinite(ev)]


def _pbh_ok(A, M, side: str) -> bool:
    """PBH rank test on unstable/marginal eigenvalues (side='B' or 'C')."""
    n = A.shape[0]
    for lam in linalg.eigvals(A):
        if lam.real < -HURWITZ_TOL:
            continue
        if side == "B":
            blk = np.hstack([lam * np.eye(n) - A, M])
        else:
            blk = np.vstack([lam * np.eye(n) - A, M])
        if np.linalg.matrix_rank(blk) < n:
            return False
    return True


def observer_A1bar(params: SandwichParams, L1) -> np.ndarray:
    e = linalg.expm(params.tau * params.A1)
    ei = linalg.expm(-params.tau * params.A1)
    L1 = np.asarray(L1, float).reshape(-1, 1)
    return params.A1 - e @ L1 @ params.C1 @ ei


@dataclass
class AssumptionReport:
    checks: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> List[str]:
        return [k for k, v in self.checks.items() if not v]

    def __str__(self) -> str:
        lines = [f"{k:<22s} {'pass' if v else 'FAIL'}" for k, v in self.checks.items()]
        return "\n".join(lines)


def check_assumptions(params: SandwichParams, gains: GainSet) -> AssumptionReport:
    rep = AssumptionReport()
    rep.checks["reflection_bound"] = assumption1_holds(params)
    rep.details["reflection_bound"] = params.reflection_bound
    rep.details["abs_pq"] = abs(params.p * params.q)

    A0bar = params.A0 - gains.L0 @ params.C0
    A1bar = observer_A1bar(params, gains.L1)
    A0hat = params.A0 - params.B0 @ gains.F0
    A1hat = params.A1 - params.B1 @ gains.F1
    for name, M in (("A0bar_hurwitz", A0bar), ("A1bar_hurwitz", A1bar),
                    ("A0hat_hurwitz", A0hat), ("A1hat_hurwitz", A1hat)):
        rep.checks[name] = is_hurwitz(M)
        rep.details[name] = linalg.eigvals(M)

    z0 = invariant_zeros(params.A0, params.B0, params.C0)
    rep.checks["proximal_zeros"] = bool(np.all(z0.real < -HURWITZ_TOL))
    rep.details["proximal_zeros"] = z0
    C1d = params.C1 @ linalg.expm(-params.tau * params.A1)
    z1 = invariant_zeros(params.A1, params.B1, C1d)
    rep.checks["distal_zeros"] = bool(np.all(z1.real < -HURWITZ_TOL))
    rep.details["distal_zeros"] = z1

    rep.checks["stabilizable_0"] = _pbh_ok(params.A0, params.B0, "B")
    rep.checks["stabilizable_1"] = _pbh_ok(params.A1, params.B1, "B")
    rep.checks["detectable_0"] = _pbh_ok(params.A0, params.C0, "C")
    rep.checks["detectable_1"] = _pbh_ok(params.A1, params.C1, "C")
    return rep
