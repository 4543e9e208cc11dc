"""Sub-Riemannian geodesic flow, Reeb flow and the exact normal-form model flow."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .models import ChartError, ContactModel, PhasePoint, reeb_field

__all__ = [
    "GeodesicTrajectory",
    "IntegrationError",
    "ReebCurve",
    "gauss_legendre_tableau",
    "h0_closure",
    "hamiltonian_vector_field",
    "integrate_geodesic",
    "integrate_reeb",
    "model_flow_h0",
]

TRAJECTORY_HEADER = "t,x,y,z,xi_x,xi_y,xi_z,H"


class IntegrationError(RuntimeError):
    """Integration stopped before the requested final time."""

    def __init__(self, message: str, t_fail: float):
        super().__init__(f"{message} (t = {float(t_fail)!r})")
        self.t_fail = float(t_fail)


def hamiltonian_vector_field(model: ContactModel, p) -> np.ndarray:
    """(dH/dxi, -dH/dx) for H = g*/2, from closed-form frame derivatives."""
    s = p.as_array() if isinstance(p, PhasePoint) else np.asarray(p, dtype=float)
    x, xi = s[:3], s[3:]
    X, Y = model.frame(x)
    dX, dY = model.frame_jacobian(x)
    a = xi @ X
    c = xi @ Y
    out = np.empty(6)
    out[:3] = a * X + c * Y
    out[3:] = -(a * (xi @ dX) + c * (xi @ dY))
    return out


def _energy(model: ContactModel, states: np.ndarray) -> np.ndarray:
    out = np.empty(len(states))
    for i, s in enumerate(states):
        X, Y = model.frame(s[:3])
        out[i] = 0.5 * ((s[3:] @ X) ** 2 + (s[3:] @ Y) ** 2)
    return out


@dataclass
class GeodesicTrajectory:
    """Time-sampled geodesic with its energy log."""

    model_id: str
    t: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def samples(self) -> list[tuple[float, PhasePoint]]:
        return [(float(t), PhasePoint.from_array(s)) for t, s in zip(self.t, self.states)]

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    @property
    def momenta(self) -> np.ndarray:
        return self.states[:, 3:]

    def energy_drift(self) -> float:
        """max |H(t) - H(0)| / H(0)"""
        return float(np.max(np.abs(self.energy - self.energy[0])) / self.energy[0])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(TRAJECTORY_HEADER + "\n")
            for t, s, h in zip(self.t, self.states, self.energy):
                fh.write(",".join(repr(float(v)) for v in (t, *s, h)) + "\n")

    @classmethod
    def from_csv(cls, path, model_id: str = "") -> "GeodesicTrajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(model_id, data[:, 0], data[:, 1:7], data[:, 7])


@lru_cache(maxsize=None)
def gauss_legendre_tableau(stages: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Butcher tableau (A, b, c) of the s-stage Gauss collocation method (order 2s).

    ``stages=1`` is the implicit midpoint rule.
    """
    nodes, _ = np.polynomial.legendre.leggauss(stages)
    c = 0.5 * (nodes + 1.0)
    A = np.empty((stages, stages))
    b = np.empty(stages)
    for j in range(stages):
        others = np.delete(c, j)
        lj = np.polynomial.Polynomial.fromroots(others) if len(others) else np.polynomial.Polynomial([1.0])
        lj = lj / np.prod(c[j] - others)
        Lj = lj.integ()
        b[j] = Lj(1.0) - Lj(0.0)
        A[:, j] = Lj(c) - Lj(0.0)
    return A, b, c


def _gauss_step(f, y, h, A, b, tol, max_iter=100):
    s = len(b)
    K = np.tile(f(y), (s, 1))
    scale = tol * (1.0 + np.max(np.abs(y)))
    for _ in range(max_iter):
        K_new = np.array([f(y + h * (A[i] @ K)) for i in range(s)])
        delta = h * np.max(np.abs(K_new - K))
        K = K_new
        if delta <= scale:
            return y + h * (b @ K)
    raise IntegrationError("collocation fixed point did not converge; reduce dt", 0.0)


def integrate_geodesic(model: ContactModel, p0, T: float, tol: float = 1e-12,
                       method: str = "dop853", t_eval=None, n_samples: int = 201,
                       dt: float | None = None, stages: int = 3) -> GeodesicTrajectory:
    """Integrate the geodesic flow of H = g*/2 from ``p0`` over [0, T].

    ``method="dop853"`` is the adaptive 8th-order explicit scheme (``tol`` is
    used as rtol and atol).  ``method="gauss"`` is the symplectic Gauss
    collocation family with fixed step ``dt``; ``stages=1`` gives implicit
    midpoint.  Samples are returned at ``t_eval`` (default: ``n_samples``
    equispaced times).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = p0.as_array() if isinstance(p0, PhasePoint) else np.asarray(p0, dtype=float)
    if not _energy(model, y0[None, :])[0] > 1e-24 * float(y0[3:] @ y0[3:]):
        raise ValueError("initial datum has zero energy (it lies on the characteristic cone)")
    t_eval = np.linspace(0.0, T, n_samples) if t_eval is None else np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > T * (1 + 1e-14):
        raise ValueError("t_eval must be strictly increasing inside [0, T]")

    last_t = [0.0]

    def rhs(t, y):
        last_t[0] = t
        return hamiltonian_vector_field(model, y)

    if method == "dop853":
        try:
            sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=tol, atol=tol,
                            t_eval=t_eval, dense_output=False)
        except ChartError as exc:
            raise IntegrationError(f"chart exit: {exc}", last_t[0]) from exc
        if sol.status != 0:
            raise IntegrationError(f"step-size underflow: {sol.message}", float(sol.t[-1]))
        states = sol.y.T
        # DOP853 spends 12 evaluations per accepted step
        stats = {"method": "dop853", "steps": int(sol.nfev // 12), "nfev": int(sol.nfev),
                 "tolerance": tol, "max_step": None}
    elif method == "gauss":
        if dt is None:
            rho = abs(float(y0[3:] @ model.reeb(y0[:3])))
            dt = 0.05 / max(1.0, rho)
        A, b, _ = gauss_legendre_tableau(stages)
        f = lambda y: hamiltonian_vector_field(model, y)  # noqa: E731
        states = np.empty((len(t_eval), 6))
        y, t = y0.copy(), 0.0
        nsteps = 0
        hmax = 0.0
        for i, te in enumerate(t_eval):
            span = te - t
            if span > 0:
                n = max(1, math.ceil(span / dt - 1e-9))
                h = span / n
                hmax = max(hmax, h)
                for _ in range(n):
                    try:
                        y = _gauss_step(f, y, h, A, b, tol)
                    except ChartError as exc:
                        raise IntegrationError(f"chart exit: {exc}", t) from exc
                    except IntegrationError as exc:
                        raise IntegrationError(str(exc).split(" (t =")[0], t) from exc
                    t += h
                nsteps += n
            t = te
            states[i] = y
        stats = {"method": f"gauss{stages}", "steps": nsteps, "max_step": hmax,
                 "tolerance": tol}
    else:
        raise ValueError(f"unknown method {method!r}")
    return GeodesicTrajectory(model.model_id, t_eval.copy(), states, _energy(model, states), stats)


@dataclass
class ReebCurve:
    t: np.ndarray
    points: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("t,x,y,z\n")
            for t, p in zip(self.t, self.points):
                fh.write(",".join(repr(float(v)) for v in (t, *p)) + "\n")


def integrate_reeb(model: ContactModel, x0, T: float, n_samples: int = 101,
                   tol: float = 1e-12) -> ReebCurve:
    """Flow of the Reeb field from ``x0`` for Reeb time ``T``."""
    x0 = np.asarray(x0, dtype=float)
    t_eval = np.linspace(0.0, T, n_samples)
    sol = solve_ivp(lambda t, x: reeb_field(model, x), (0.0, T), x0, method="DOP853",
                    rtol=tol, atol=tol, t_eval=t_eval)
    if sol.status != 0:
        raise IntegrationError(f"Reeb flow failed: {sol.message}", float(sol.t[-1]))
    return ReebCurve(sol.t, sol.y.T)


def model_flow_h0(reeb_time: float, rho: float, w0: complex, t: float,
                  unit_energy: bool = False) -> tuple[float, complex]:
    """Exact flow of the quadratic model H0 = rho I / 2 on Sigma x C.

    The Sigma factor is represented by its Reeb-orbit time coordinate.  The
    transverse action I = |w0|^2 and rho are conserved; the base advances by
    Reeb time I t / 2 and w rotates by exp(i rho t).  With ``unit_energy``
    rho is replaced by 1 / I.
    """
    I = abs(w0) ** 2
    if unit_energy:
        if I == 0.0:
            raise ValueError("a pure Reeb datum (I = 0) has no unit-energy normalization")
        rho = 1.0 / I
    elif not rho > 0:
        raise ValueError("rho must be positive")
    return reeb_time + 0.5 * I * t, w0 * cmath.exp(1j * rho * t)


def h0_closure(T0: float, k: int) -> tuple[float, float, float]:
    """Closed unit-energy orbits of the model flow around a Reeb orbit of period T0.

    Closing after k transverse turns while the base goes once around gives
    (I_k, length l_k, rho_k) with l_k = 2 sqrt(pi k T0).
    """
    if k < 1 or not T0 > 0:
        raise ValueError("need k >= 1 and T0 > 0")
    I = math.sqrt(T0 / (math.pi * k))
    length = 2.0 * math.sqrt(math.pi * k * T0)
    return I, length, 1.0 / I
