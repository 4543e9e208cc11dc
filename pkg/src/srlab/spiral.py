"""Fit high-momentum geodesics against the Reeb helix model.

A unit-speed geodesic with transverse momentum h0 = |<xi, R>| is compared
with the helix

    Q + s (J t / 2) R(Q) + J * (rotating unit vector of D(Q)),

which drifts along the Reeb orbit of Q at speed J/2 and turns around it
with angular speed 1/J and radius J.  s = sign <xi, R> fixes both the
drift direction and the sense of rotation.  Parallel transport along the
Reeb flow is taken to be the constant frame, which is exact for the
Heisenberg and constant-field torus models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .flow import GeodesicTrajectory, integrate_geodesic
from .models import ContactModel, MagneticTorus, frame_components, unit_covector

__all__ = ["SpiralFit", "SpiralFitError", "helix", "spiral_fit", "spiral_trajectory"]


class SpiralFitError(RuntimeError):
    pass


@dataclass
class SpiralFit:
    h0: float
    sign: int
    J0_estimate: float
    anchor: np.ndarray
    phase: float
    deviation: float
    window: tuple[float, float]

    def __post_init__(self):
        if not self.J0_estimate > 0 or self.deviation < 0:
            raise SpiralFitError("invalid spiral fit")


def helix(model: ContactModel, t, anchor, J: float, phase: float, sign: int) -> np.ndarray:
    """Positions of the model helix at times ``t`` (shape (n, 3))."""
    t = np.asarray(t, dtype=float)
    X, Y = model.frame(anchor)
    R = model.reeb(anchor)
    # complex offset i s J exp(i (phase - s t / J)) in the (X, Y) frame
    ang = phase - sign * t / J
    a = -sign * J * np.sin(ang)
    c = sign * J * np.cos(ang)
    return (np.asarray(anchor)[None, :] + np.outer(sign * 0.5 * J * t, R)
            + np.outer(a, X) + np.outer(c, Y))


def spiral_trajectory(model: ContactModel, x0, h0: float, angle: float = 0.0,
                      window: float = 0.5, samples_per_turn: int = 32,
                      tol: float = 1e-12, sign: int = 1) -> GeodesicTrajectory:
    """Unit-energy geodesic with Reeb momentum sign*h0 over t in [0, window*h0]."""
    p0 = unit_covector(model, x0, angle, sign * h0)
    T = window * h0
    n = max(64, math.ceil(T * h0 / (2.0 * math.pi) * samples_per_turn) + 1)
    return integrate_geodesic(model, p0, T, tol=tol, n_samples=n)


def spiral_fit(traj: GeodesicTrajectory, model: ContactModel, h_min: float = 5.0,
               window: float = 0.5) -> SpiralFit:
    """Least-squares helix fit over t in [0, window * h0]."""
    if not isinstance(model, MagneticTorus):
        raise SpiralFitError("spiral fitting needs a model whose frame is Reeb-invariant")
    s0 = traj.states[0]
    rho = float(s0[3:] @ model.reeb(s0[:3]))
    h0 = abs(rho)
    if h0 < h_min:
        raise SpiralFitError(f"h0 = {h0:.4g} is below the asymptotic regime (h_min = {h_min})")
    sign = 1 if rho > 0 else -1
    H = traj.energy[0]
    if abs(2.0 * H - 1.0) > 1e-8:
        raise SpiralFitError("spiral fitting expects a unit-speed (g* = 1) trajectory")

    t_end = window * h0
    mask = traj.t <= t_end * (1 + 1e-12)
    t = traj.t[mask]
    pos = traj.positions[mask]
    if len(t) < 16:
        raise SpiralFitError("too few samples inside the fit window")

    # seed: J = 1/h0, velocity direction from the initial frame pairings
    J = 1.0 / h0
    a0, c0 = frame_components(model, s0)
    psi = math.atan2(c0, a0)
    # transverse helix velocity at t = 0 is exp(i phase)
    phase = psi
    X, Y = model.frame(s0[:3])
    off = -sign * J * math.sin(phase) * X + sign * J * math.cos(phase) * Y
    anchor0 = s0[:3] - off

    def residual(params):
        return (helix(model, t, params[:3], params[3], params[4], sign) - pos).ravel()

    x_scale = np.array([J, J, J, J * J, 1.0])
    sol = least_squares(residual, np.r_[anchor0, J, phase], x_scale=x_scale,
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    anchor = sol.x[:3]
    J_fit = float(sol.x[3])
    dev = np.linalg.norm((helix(model, t, anchor, J_fit, sol.x[4], sign) - pos), axis=1).max()
    if J_fit <= 0 or dev > 10.0 * J_fit ** 2:
        raise SpiralFitError(f"helix deviation {dev:.3g} exceeds 10 J0^2 = {10 * J_fit ** 2:.3g}")
    return SpiralFit(h0=h0, sign=sign, J0_estimate=J_fit, anchor=anchor,
                     phase=float(math.remainder(sol.x[4], 2 * math.pi)),
                     deviation=float(dev), window=(0.0, float(t[-1])))
