"""Closed geodesics spiraling around a closed Reeb orbit.

Shooting unknowns are (direction angle, Reeb momentum, period) for a
unit-speed geodesic started at a fixed point next to the Reeb orbit.  The
closure residual compares the end state with the deck-translated start
state: chart position modulo the lattice plus the lattice-invariant frame
pairings (<xi, X>, <xi, Y>, <xi, R>).  Newton steps use least squares, so
the rotational degeneracy of symmetric models does not stall them.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .flow import h0_closure, integrate_geodesic
from .models import ContactModel, PhasePoint, unit_covector

__all__ = [
    "LengthSpectrum",
    "PeriodicOrbitResult",
    "ReebPeriodFit",
    "ShootingError",
    "closure_length",
    "fit_reeb_period",
    "length_spectrum",
    "shoot_periodic",
]


class ShootingError(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass
class PeriodicOrbitResult:
    k: int
    init: PhasePoint
    period: float
    length: float
    residual: float
    iterations: int = 0
    seed_length: float = math.nan
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {"k": self.k, "length": self.length, "residual": self.residual}


def _pairings(model, state):
    x, xi = state[:3], state[3:]
    X, Y = model.frame(x)
    return np.array([xi @ X, xi @ Y, xi @ model.reeb(x)])


def _closure_residual(model, start, end, winding):
    # end should equal the start translated once around the fiber
    target = model.deck(start[:3], winding)
    n = model.nearest_deck(target, end[:3])
    dpos = end[:3] - model.deck(target, n)
    dmom = _pairings(model, end) - _pairings(model, start)
    return np.r_[dpos, dmom]


def _turns(model, state, period, rtol_ode):
    # the velocity direction in the (X, Y) frame turns once per transverse revolution
    n = max(64, int(64 * abs(state[3:] @ model.reeb(state[:3])) * period / (2.0 * math.pi)))
    traj = integrate_geodesic(model, state, period, tol=rtol_ode, n_samples=n)
    ang = np.empty(len(traj.t))
    for i, s in enumerate(traj.states):
        X, Y = model.frame(s[:3])
        ang[i] = math.atan2(s[3:] @ Y, s[3:] @ X)
    return int(round(abs(np.unwrap(ang)[-1] - ang[0]) / (2.0 * math.pi)))


def shoot_periodic(model: ContactModel, reeb_anchor, k: int, seed_guess=None,
                   tol: float = 1e-10, max_iter: int = 20, rtol_ode: float = 1e-13,
                   fd_step: float = 1e-6) -> PeriodicOrbitResult:
    """Newton shooting for the closed geodesic turning k times around the Reeb orbit.

    ``seed_guess`` is (angle, rho, period); by default it comes from the
    closed orbits of the quadratic normal-form model.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    T0 = model.reeb_period()
    anchor = np.asarray(reeb_anchor, dtype=float)
    I, seed_len, rho = h0_closure(T0, k)
    angle = 0.0
    if seed_guess is not None:
        angle, rho, seed_len = seed_guess
    # start on the circle of radius J = 1/rho around the anchor, moving along X
    X, Y = model.frame(anchor)
    start_pos = anchor + (1.0 / rho) * Y
    winding = (0, 0, 1)

    def state0(u):
        return unit_covector(model, start_pos, u[0], u[1]).as_array()

    def F(u):
        s0 = state0(u)
        traj = integrate_geodesic(model, s0, u[2], tol=rtol_ode, t_eval=[0.0, u[2]])
        return _closure_residual(model, s0, traj.states[-1], winding)

    def jacobian(u):
        jac = np.empty((6, 3))
        for j in range(3):
            du = np.zeros(3)
            du[j] = fd_step * max(1.0, abs(u[j]))
            jac[:, j] = (F(u + du) - F(u - du)) / (2.0 * du[j])
        return jac

    u = np.array([angle, rho, seed_len], dtype=float)
    r = F(u)
    res = float(np.linalg.norm(r))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ShootingError(f"no convergence after {max_iter} iterations", res)
        jac = jacobian(u)
        # (rho, period) must be pinned down; the angle may be a symmetry direction
        if np.linalg.matrix_rank(jac[:, 1:], tol=1e-10 * np.linalg.norm(jac)) < 2:
            raise ShootingError("singular shooting Jacobian: degenerate Reeb orbit", res)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=1e-10)
        u = u + step
        r = F(u)
        res = float(np.linalg.norm(r))
        it += 1
    turns = _turns(model, state0(u), u[2], rtol_ode)
    if turns != k:
        raise ShootingError(f"converged to the orbit with {turns} turns instead of {k}; "
                            "improve the seed", res)
    # a rank-deficient closure map signals a continuous family of closed orbits
    sv = np.linalg.svd(jacobian(u), compute_uv=False)
    degenerate = bool(sv[-1] <= 1e-6 * sv[0])
    return PeriodicOrbitResult(k=k, init=PhasePoint.from_array(state0(u)), period=float(u[2]),
                               length=float(u[2]), residual=res, iterations=it,
                               seed_length=seed_len, degenerate=degenerate)


@dataclass
class LengthSpectrum:
    model_id: str
    T0_reeb: float
    orbits: list[PeriodicOrbitResult]
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def lengths(self) -> list[float]:
        out: list[float] = []
        for L in sorted(o.length for o in self.orbits):
            if not out or L - out[-1] > 1e-9 * L:
                out.append(L)
        return out

    def to_json(self) -> str:
        return json.dumps({"model": self.model_id, "T0_reeb": self.T0_reeb,
                           "orbits": [o.as_dict() for o in self.orbits]}, indent=2)


def length_spectrum(model: ContactModel, k_max: int, reeb_anchor=(0.0, 0.0, 0.0),
                    workers: int | None = None, **kw) -> LengthSpectrum:
    """Lengths of the spiraling closed geodesics gamma_1 .. gamma_kmax."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")

    def one(k):
        try:
            return shoot_periodic(model, reeb_anchor, k, **kw)
        except ShootingError as exc:
            return exc

    ks = list(range(1, k_max + 1))
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, ks))
    else:
        results = [one(k) for k in ks]
    orbits = [r for r in results if isinstance(r, PeriodicOrbitResult)]
    failures = {k: str(r) for k, r in zip(ks, results) if not isinstance(r, PeriodicOrbitResult)}
    orbits.sort(key=lambda o: o.length)
    return LengthSpectrum(model.model_id, model.reeb_period(), orbits, failures)


@dataclass
class ReebPeriodFit:
    T0: float
    coeffs: np.ndarray
    residuals: np.ndarray
    condition: float

    @property
    def leading(self) -> float:
        return 2.0 * math.sqrt(math.pi * self.T0)


def fit_reeb_period(lengths, k_indices, n_corrections: int = 2, weights=None) -> ReebPeriodFit:
    """Weighted least squares of L_k = 2 sqrt(pi T0) k^(1/2) + sum_j a_j k^(-j/2)."""
    L = np.asarray(lengths, dtype=float)
    k = np.asarray(k_indices, dtype=float)
    if len(L) != len(k):
        raise ValueError("lengths and k_indices differ in size")
    if len(L) < 4 or len(L) < n_corrections + 2:
        raise ValueError("need at least 4 lengths (and more than the number of unknowns)")
    if len(np.unique(k)) < n_corrections + 1:
        raise ValueError("ill-conditioned fit: repeated k indices")
    w = np.ones_like(L) if weights is None else np.asarray(weights, dtype=float)
    design = np.column_stack([np.sqrt(k)] + [k ** (-j / 2) for j in range(1, n_corrections + 1)])
    sw = np.sqrt(w)
    A = design * sw[:, None]
    cond = float(np.linalg.cond(A))
    if cond > 1e12:
        raise ValueError(f"ill-conditioned fit (condition number {cond:.3g})")
    sol, *_ = np.linalg.lstsq(A, L * sw, rcond=None)
    if sol[0] <= 0:
        raise ValueError("fitted leading coefficient is not positive")
    T0 = sol[0] ** 2 / (4.0 * math.pi)
    return ReebPeriodFit(T0=float(T0), coeffs=sol[1:], residuals=L - design @ sol, condition=cond)


def closure_length(T0: float, k: int, rho2: float = 0.0, A: float = 0.0) -> float:
    """Length of the k-th closed orbit of the truncated normal form rho I + rho2 I^2.

    The base closes after Reeb time T(I) = T0 - A I, moving at rate I/2; the
    transverse angle advances at rate rho + 2 rho2 I with rho fixed by unit
    energy rho I + rho2 I^2 = 1.  The angle closure
    t (rho + 2 I rho2) = 2 k pi is solved for I and t is returned.
    """
    if k < 1 or not T0 > 0:
        raise ValueError("need k >= 1 and T0 > 0")

    def t_of(I):
        return 2.0 * (T0 - A * I) / I

    def angle_gap(I):
        rho = (1.0 - rho2 * I * I) / I
        return t_of(I) * (rho + 2.0 * I * rho2) - 2.0 * math.pi * k

    I0, _, _ = h0_closure(T0, k)
    if rho2 == 0.0 and A == 0.0:
        return t_of(I0)
    lo, hi = I0 / 4.0, I0 * 4.0
    hi = min(hi, T0 / A * 0.999) if A > 0 else hi
    return t_of(brentq(angle_gap, lo, hi, xtol=1e-15, rtol=1e-15))
