"""Contact sub-Riemannian model catalog and pointwise geometry.

Every model carries a closed-form orthonormal frame (X, Y) of the contact
distribution, the normalized contact form alpha (ker alpha = D and
dalpha(X, Y) = 1), and the Reeb field R.  Coefficient Jacobians are
closed-form as well, so Hamiltonian fields and dalpha are exact.

Jacobian convention: ``J[i, j] = d(coeff_i) / d(x_j)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)


class ChartError(ValueError):
    """Raised when a point lies outside the chart of a model."""


@dataclass(frozen=True)
class PhasePoint:
    """A cotangent vector: chart position plus covector components."""

    position: tuple[float, float, float]
    momentum: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "momentum", tuple(float(v) for v in self.momentum))
        if len(self.position) != 3 or len(self.momentum) != 3:
            raise ValueError("position and momentum need 3 components each")
        if not all(map(math.isfinite, self.position + self.momentum)):
            raise ValueError("phase point components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array(self.position + self.momentum)

    @classmethod
    def from_array(cls, state) -> "PhasePoint":
        state = np.asarray(state, dtype=float)
        return cls(tuple(state[:3]), tuple(state[3:6]))


@dataclass(frozen=True)
class ContactModel:
    """Base class; subclasses supply the closed-form coefficient functions."""

    model_id: str = field(init=False, default="")
    compact: bool = field(init=False, default=True)

    # -- coefficient functions (overridden) --------------------------------
    def frame(self, x) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def frame_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def alpha(self, x) -> np.ndarray:
        raise NotImplementedError

    def alpha_jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def reeb(self, x) -> np.ndarray:
        raise NotImplementedError

    def check_chart(self, x) -> None:
        pass

    # -- derived geometry ---------------------------------------------------
    def dalpha(self, x) -> np.ndarray:
        """Antisymmetric matrix of dalpha: dalpha(U, V) = U @ M @ V."""
        jac = self.alpha_jacobian(x)
        return jac.T - jac

    def chart_description(self) -> str:
        raise NotImplementedError

    def sample_points(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    # lattice identifications; non-compact models have none
    def deck(self, x, n) -> np.ndarray:
        """Apply the deck transformation with integer label n = (n1, n2, n3)."""
        if any(n):
            raise ChartError(f"{self.model_id} has no lattice identifications")
        return np.asarray(x, dtype=float).copy()

    def nearest_deck(self, x, target) -> tuple[int, int, int]:
        return (0, 0, 0)

    def lattice_difference(self, x, target) -> np.ndarray:
        """target - gamma.x for the deck transformation gamma closest to target."""
        n = self.nearest_deck(x, target)
        return np.asarray(target, dtype=float) - self.deck(x, n)

    def reeb_period(self) -> float:
        """Period of the closed Reeb orbits (the fiber circles)."""
        raise ChartError(f"{self.model_id} has no closed Reeb orbits in its chart")


@dataclass(frozen=True)
class MagneticTorus(ContactModel):
    """Circle bundle over the flat torus R^2 / sqrt(2 pi) Z^2 with constant field b.

    Coordinates (x, y, theta), theta in R / 2 pi Z.  The connection form is
    dtheta + b x dy, so b = 1 reproduces the Heisenberg quotient with z = theta.
    A compact quotient exists only for integer b (flux quantization).
    """

    b: float = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("magnetic field b must be positive")
        object.__setattr__(self, "model_id", "magnetic-torus")

    @property
    def side(self) -> float:
        return SQRT_2PI

    @property
    def quantized(self) -> bool:
        return abs(self.b - round(self.b)) < 1e-12

    def frame(self, x):
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, -self.b * x[0]])

    def frame_jacobian(self, x):
        dY = np.zeros((3, 3))
        dY[2, 0] = -self.b
        return np.zeros((3, 3)), dY

    def alpha(self, x):
        return np.array([0.0, x[0], 1.0 / self.b])

    def alpha_jacobian(self, x):
        jac = np.zeros((3, 3))
        jac[1, 0] = 1.0
        return jac

    def reeb(self, x):
        return np.array([0.0, 0.0, self.b])

    def reeb_period(self):
        return 2.0 * math.pi / self.b

    def chart_description(self):
        return (f"(x, y, theta) in R^3 modulo x ~ x + sqrt(2pi) (theta -> theta - {self.b:g} sqrt(2pi) y), "
                "y ~ y + sqrt(2pi), theta ~ theta + 2pi")

    def sample_points(self, rng, n):
        lo = np.zeros(3)
        hi = np.array([self.side, self.side, 2.0 * math.pi])
        return rng.uniform(lo, hi, size=(n, 3))

    def _require_lattice(self):
        if not self.quantized:
            raise ChartError(f"b = {self.b} is not an integer; the torus quotient does not exist")

    def deck(self, x, n):
        self._require_lattice()
        a1, a2 = n[0] * self.side, n[1] * self.side
        x = np.asarray(x, dtype=float)
        # left translation by (a1, a2, 2 pi n3) in the nilpotent group law
        return np.array([x[0] + a1, x[1] + a2,
                         x[2] + 2.0 * math.pi * n[2] - self.b * a1 * x[1]])

    def nearest_deck(self, x, target):
        self._require_lattice()
        x = np.asarray(x, dtype=float)
        target = np.asarray(target, dtype=float)
        n1 = round((target[0] - x[0]) / self.side)
        n2 = round((target[1] - x[1]) / self.side)
        shifted = self.deck(x, (n1, n2, 0))
        n3 = round((target[2] - shifted[2]) / (2.0 * math.pi))
        return (int(n1), int(n2), int(n3))


@dataclass(frozen=True)
class Heisenberg(MagneticTorus):
    """Heisenberg nilmanifold R^3 / Gamma with X = d_x, Y = d_y - x d_z."""

    b: float = field(init=False, default=1.0)

    def __post_init__(self):
        object.__setattr__(self, "model_id", "heisenberg")

    def chart_description(self):
        return ("(x, y, z) in R^3 modulo the left action of (sqrt(2pi) Z)^2 x 2pi Z "
                "under (x, y, z)*(x', y', z') = (x + x', y + y', z + z' - x y')")


@dataclass(frozen=True)
class KeplerHeisenberg(ContactModel):
    """Jacobi metric g = D^(-1/2) g0 of the sR Kepler problem on R^3 minus 0.

    g0 is the Heisenberg metric in the symmetric gauge, X0 = d_x + (y/2) d_z,
    Y0 = d_y - (x/2) d_z, and D = (x^2 + y^2)^2 + 16 z^2.  Dilations
    (x, y, z) -> (l x, l y, l^2 z) are isometries.
    """

    r_min: float = 1e-3

    def __post_init__(self):
        if not self.r_min > 0:
            raise ValueError("r_min must be positive")
        object.__setattr__(self, "model_id", "kepler")
        object.__setattr__(self, "compact", False)

    @staticmethod
    def _base(x):
        X0 = np.array([1.0, 0.0, 0.5 * x[1]])
        Y0 = np.array([0.0, 1.0, -0.5 * x[0]])
        return X0, Y0

    @staticmethod
    def _D(x):
        r2 = x[0] ** 2 + x[1] ** 2
        D = r2 * r2 + 16.0 * x[2] ** 2
        grad = np.array([4.0 * x[0] * r2, 4.0 * x[1] * r2, 32.0 * x[2]])
        return D, grad

    def check_chart(self, x):
        # homogeneous gauge norm D^(1/4) is the natural radius for the dilations
        D, _ = self._D(x)
        if not D ** 0.25 > self.r_min:
            raise ChartError(f"point {tuple(float(v) for v in x)} is inside the excluded ball of radius {self.r_min}")

    def frame(self, x):
        self.check_chart(x)
        D, _ = self._D(x)
        s = D ** 0.25
        X0, Y0 = self._base(x)
        return s * X0, s * Y0

    def frame_jacobian(self, x):
        self.check_chart(x)
        D, grad = self._D(x)
        s = D ** 0.25
        X0, Y0 = self._base(x)
        dX0 = np.zeros((3, 3))
        dX0[2, 1] = 0.5
        dY0 = np.zeros((3, 3))
        dY0[2, 0] = -0.5
        g = grad / (4.0 * D)
        return s * (dX0 + np.outer(X0, g)), s * (dY0 + np.outer(Y0, g))

    def alpha(self, x):
        self.check_chart(x)
        D, _ = self._D(x)
        return np.array([-0.5 * x[1], 0.5 * x[0], 1.0]) / math.sqrt(D)

    def alpha_jacobian(self, x):
        self.check_chart(x)
        D, grad = self._D(x)
        a0 = np.array([-0.5 * x[1], 0.5 * x[0], 1.0])
        da0 = np.zeros((3, 3))
        da0[0, 1] = -0.5
        da0[1, 0] = 0.5
        f = D ** -0.5
        df = -0.5 * D ** -1.5 * grad
        return f * da0 + np.outer(a0, df)

    def reeb(self, x):
        self.check_chart(x)
        D, grad = self._D(x)
        X0, Y0 = self._base(x)
        X0D, Y0D = X0 @ grad, Y0 @ grad
        return (math.sqrt(D) * np.array([0.0, 0.0, 1.0])
                + 0.5 / math.sqrt(D) * (X0D * Y0 - Y0D * X0))

    def dilate(self, state, lam: float) -> np.ndarray:
        """Cotangent lift of the dilation (x, y, z) -> (l x, l y, l^2 z)."""
        s = np.array(state, dtype=float)
        scale = np.array([lam, lam, lam ** 2, 1 / lam, 1 / lam, 1 / lam ** 2])
        return s * scale[: s.shape[-1]]

    def chart_description(self):
        return f"(x, y, z) in R^3 with the gauge ball D^(1/4) <= {self.r_min} removed"

    def sample_points(self, rng, n):
        pts = []
        while len(pts) < n:
            p = rng.uniform(-2.0, 2.0, size=3)
            if self._D(p)[0] ** 0.25 > 0.1:
                pts.append(p)
        return np.array(pts)


MODEL_IDS = ("heisenberg", "magnetic-torus", "kepler")


def get_model(model_id: str, b: float = 1.0, r_min: float = 1e-3) -> ContactModel:
    """Look up a model by its CLI id string."""
    if model_id == "heisenberg":
        return Heisenberg()
    if model_id == "magnetic-torus":
        return MagneticTorus(b=b)
    if model_id == "kepler":
        return KeplerHeisenberg(r_min=r_min)
    raise ValueError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")


# -- pointwise operations ---------------------------------------------------

def _split(p):
    if isinstance(p, PhasePoint):
        return np.array(p.position), np.array(p.momentum)
    p = np.asarray(p, dtype=float)
    return p[:3], p[3:6]


def frame_components(model: ContactModel, p) -> tuple[float, float]:
    """Pairings <xi, X(x)> and <xi, Y(x)>."""
    x, xi = _split(p)
    X, Y = model.frame(x)
    return float(xi @ X), float(xi @ Y)


def cometric(model: ContactModel, p) -> float:
    """Squared sR norm of the covector restricted to D."""
    a, c = frame_components(model, p)
    return a * a + c * c


def hamiltonian(model: ContactModel, p) -> float:
    return 0.5 * cometric(model, p)


def reeb_field(model: ContactModel, position) -> np.ndarray:
    x = np.asarray(position, dtype=float)
    model.check_chart(x)
    return model.reeb(x)


def reeb_momentum(model: ContactModel, p) -> float:
    """rho(x, xi) = <xi, R(x)>; equals s on the characteristic cone point s alpha(x)."""
    x, xi = _split(p)
    return float(xi @ model.reeb(x))


def contact_covector(model: ContactModel, position, s: float = 1.0) -> PhasePoint:
    """The point s * alpha(x) of the characteristic cone."""
    x = np.asarray(position, dtype=float)
    return PhasePoint(tuple(x), tuple(s * model.alpha(x)))


def covector_from_frame(model: ContactModel, position, a: float, c: float, rho: float) -> PhasePoint:
    """Covector with prescribed pairings (a, c, rho) against (X, Y, R)."""
    x = np.asarray(position, dtype=float)
    X, Y = model.frame(x)
    basis = np.vstack([X, Y, model.reeb(x)])
    xi = np.linalg.solve(basis, np.array([a, c, rho], dtype=float))
    return PhasePoint(tuple(x), tuple(xi))


def unit_covector(model: ContactModel, position, angle: float, rho: float) -> PhasePoint:
    """Unit-energy covector (g* = 1) with velocity direction angle in the (X, Y) frame."""
    return covector_from_frame(model, position, math.cos(angle), math.sin(angle), rho)


def on_characteristic_cone(model: ContactModel, p, tol: float = 1e-10) -> bool:
    """True when xi is a nonzero multiple of alpha(x), i.e. g*(x, xi) = 0."""
    x, xi = _split(p)
    norm = np.linalg.norm(xi)
    if norm == 0.0:
        return False
    return cometric(model, p) <= tol * norm * norm


def popp_volume(model: ContactModel, scale: float = 1.0, quad_points: int = 0) -> float:
    """Total Popp mass of the compact quotient, integral of |alpha ^ dalpha|.

    ``scale`` multiplies alpha (the result scales by scale**2).  With
    ``quad_points > 0`` the density is integrated by a midpoint rule over the
    fundamental domain instead of using the constant-density closed form.
    """
    if not model.compact:
        raise ChartError(f"{model.model_id} is non-compact; its Popp volume is infinite")
    if isinstance(model, MagneticTorus) and not model.quantized:
        raise ChartError("non-integer b has no compact torus quotient")
    side = model.side
    cell = side * side * 2.0 * math.pi
    if quad_points <= 0:
        return abs(_volume_density(model, np.zeros(3), scale)) * cell
    n = quad_points
    grid = (np.arange(n) + 0.5) / n
    total = 0.0
    for u in grid:
        for v in grid:
            for w in grid:
                x = np.array([u * side, v * side, w * 2.0 * math.pi])
                total += abs(_volume_density(model, x, scale))
    return total * cell / n ** 3


def _volume_density(model: ContactModel, x, scale: float = 1.0) -> float:
    """Coefficient of (c alpha) ^ d(c alpha) against dx ^ dy ^ dz."""
    a = scale * model.alpha(x)
    M = scale * model.dalpha(x)
    # dalpha = sum_{i<j} M_ij dx_i ^ dx_j; wedge with alpha
    return a[0] * M[1, 2] + a[1] * M[2, 0] + a[2] * M[0, 1]
