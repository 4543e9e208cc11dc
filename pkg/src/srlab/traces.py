"""Schroedinger-type traces Z(z) = sum_j exp(-z lambda_j) of the sR Laplacian.

For the Heisenberg quotient the band sector reads

    Z_o(z) = sum_{m>=1} 2m sum_{n>=0} exp(-(2n+1) m z) = sum_{m>=1} m / sinh(m z)

and Poisson summation gives

    Z_o(z) = pi^2/(4 z^2) - 1/(2 z) + (pi^2/z^2) sum_{l>=1} 1/(1 + cosh(2 pi^2 l / z)).

Both sides are evaluated here with explicit truncation bounds, either in
double precision or with mpmath at a requested number of digits (``dps``).
"""
from __future__ import annotations

import cmath
import csv
import io
import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from .spectra import SpectrumTable, TorusSector

__all__ = [
    "LengthEstimate",
    "PoleProbe",
    "TraceProfile",
    "extract_lengths",
    "heisenberg_trace_closed",
    "heisenberg_trace_lengths",
    "pole_probe",
    "table_trace",
    "torus_theta",
    "trace_partial",
    "trace_profile",
]


def _fsum_complex(terms) -> complex:
    terms = list(terms)
    return complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))


def _band_tail_bound(x: float, M: int) -> float:
    """Bound on sum_{m>M} m / |sinh(m z)| with x = Re z > 0.

    Uses |sinh(a + ib)| >= sinh(a) and 1/sinh(ma) <= 2 q^m / (1 - q^(2(M+1))).
    """
    q = math.exp(-x)
    if q >= 1.0:
        return math.inf
    geo = q ** (M + 1) * ((M + 1) - M * q) / (1.0 - q) ** 2
    return 2.0 * geo / (1.0 - q ** (2 * (M + 1)))


def _auto_cutoff(x: float, target: float) -> int:
    M = max(1, int(math.ceil(1.0 / x)))
    while _band_tail_bound(x, M) > target:
        M = int(M * 1.25) + 1
    return M


def trace_partial(z, cutoff: int | None = None, dps: int | None = None, target: float = 1e-16,
                  table: SpectrumTable | None = None):
    """Band-sector sum over m <= cutoff with the n-sum done in closed form.

    Returns (value, tail_bound).  Without ``cutoff`` the smallest cutoff
    whose tail bound is below ``target`` (relative to the leading size) is used.
    With ``table`` the band sector of that spectrum table is summed instead and
    the tail is the Weyl-law estimate of the truncated part.
    """
    if table is not None:
        return table_trace(table, z, sectors="band")
    if dps is not None:
        with mp.workdps(dps):
            z = mp.mpmathify(z)
            x = float(mp.re(z))
            if not x > 0:
                raise ValueError("Re z must be positive")
            if cutoff is None:
                cutoff = _auto_cutoff(x, 10.0 ** (-dps) * (1.0 + 1.0 / x ** 2))
            # inner geometric series: sum_n exp(-(2n+1) m z) = exp(-mz) / (1 - exp(-2mz))
            val = mp.fsum(2 * m * mp.exp(-m * z) / (1 - mp.exp(-2 * m * z)) for m in range(1, cutoff + 1))
            return +val, _band_tail_bound(x, cutoff)
    z = complex(z)
    x = z.real
    if not x > 0:
        raise ValueError("Re z must be positive")
    if cutoff is None:
        cutoff = _auto_cutoff(x, target * (1.0 + 1.0 / x ** 2))
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    m = np.arange(1, cutoff + 1, dtype=float)
    e = np.exp(-m * z)
    terms = 2.0 * m * e / (1.0 - e * e)
    if z.imag == 0.0:
        return math.fsum(terms.real), _band_tail_bound(x, cutoff)
    return _fsum_complex(terms), _band_tail_bound(x, cutoff)


def _closed_tail_bound(beta: float, Lc: int) -> float:
    """Bound on sum_{l>Lc} |1/(1 + cosh(w_l))| with Re w_l = l beta, beta > 0.

    |1 + cosh w| >= sinh(l beta) - 1 >= e^{l beta}/4 once e^{l beta} >= 6.
    """
    if beta <= 0:
        return math.inf
    if (Lc + 1) * beta < math.log(6.0):
        return math.inf
    if (Lc + 1) * beta > 700.0:
        return 0.0
    return 4.0 * math.exp(-(Lc + 1) * beta) / (1.0 - math.exp(-beta))


def heisenberg_trace_closed(z, dps: int | None = None, target: float = 1e-17,
                            return_bound: bool = False):
    """Poisson-summed closed form of the band trace Z_o(z), Re z > 0."""
    if dps is not None:
        with mp.workdps(dps):
            z = mp.mpmathify(z)
            beta = float(2 * mp.pi ** 2 * mp.re(1 / z))
            goal = 10.0 ** (-dps)
            Lc = 1
            while _closed_tail_bound(beta, Lc) > goal:
                Lc = int(Lc * 1.5) + 1
            s = mp.fsum(1 / (1 + mp.cosh(2 * mp.pi ** 2 * l / z)) for l in range(1, Lc + 1))
            pref = mp.pi ** 2 / z ** 2
            val = mp.pi ** 2 / (4 * z ** 2) - 1 / (2 * z) + pref * s
            bound = abs(complex(pref)) * _closed_tail_bound(beta, Lc)
            return (+val, bound) if return_bound else +val
    z = complex(z)
    if not z.real > 0:
        raise ValueError("Re z must be positive")
    beta = 2.0 * math.pi ** 2 * (1.0 / z).real
    Lc = 1
    while _closed_tail_bound(beta, Lc) > target:
        Lc = int(Lc * 1.5) + 1
    # 1 / (1 + cosh w) = 2 e^{-w} / (1 + e^{-w})^2 avoids overflow for large Re w
    terms = []
    for l in range(1, Lc + 1):
        e = cmath.exp(-2.0 * math.pi ** 2 * l / z)
        terms.append(2.0 * e / (1.0 + e) ** 2)
    pref = math.pi ** 2 / z ** 2
    val = math.pi ** 2 / (4 * z * z) - 1.0 / (2 * z) + pref * _fsum_complex(terms)
    bound = abs(pref) * _closed_tail_bound(beta, Lc)
    if z.imag == 0.0:
        val = val.real
    return (val, bound) if return_bound else val


def torus_theta(z, tol: float = 1e-17) -> complex | float:
    """Flat-torus sector sum over (p, q) of exp(-2 pi z (p^2 + q^2)), the constant included."""
    z = complex(z)
    if not z.real > 0:
        raise ValueError("Re z must be positive")
    P = int(math.ceil(math.sqrt(-math.log(tol) / (2.0 * math.pi * z.real)))) + 1
    p = np.arange(-P, P + 1, dtype=float)
    theta = _fsum_complex(np.exp(-2.0 * math.pi * z * p * p))
    val = theta * theta
    return val.real if z.imag == 0.0 else val


def table_trace(table: SpectrumTable, z, sectors: str = "all") -> tuple[complex, float]:
    """sum of mult * exp(-z lambda) over a table; the second value estimates the
    omitted part above lambda_max from the Weyl law N ~ c lambda^2."""
    z = complex(z)
    x = z.real
    if sectors not in ("all", "band", "torus"):
        raise ValueError("sectors must be 'all', 'band' or 'torus'")
    terms = []
    for e in table.entries:
        is_torus = isinstance(e.sector, TorusSector)
        if sectors == "band" and is_torus or sectors == "torus" and not is_torus:
            continue
        terms.append(e.mult * cmath.exp(-z * e.lam))
    value = _fsum_complex(terms)
    lam = table.lambda_max
    c = table.count(lam) / lam ** 2
    tail = c * 2.0 * math.exp(-x * lam) * (lam / x + 1.0 / x ** 2)
    return (value.real if z.imag == 0.0 else value), tail


@dataclass
class TraceProfile:
    z_grid: list[complex]
    partial: list[complex]
    closed: list[complex]
    residuals: list[float]
    tail_bounds: list[float]
    cutoffs: list[int]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re_z", "im_z", "partial_re", "partial_im", "closed_re", "closed_im",
                    "residual", "tail_bound"])
        for z, p, c, r, t in zip(self.z_grid, self.partial, self.closed, self.residuals, self.tail_bounds):
            z, p, c = complex(z), complex(p), complex(c)
            w.writerow([repr(float(v)) for v in (z.real, z.imag, p.real, p.imag, c.real, c.imag, r, t)])
        return buf.getvalue()


def trace_profile(z_grid, cutoff: int | None = None) -> TraceProfile:
    """Partial sums against the closed form on a z-grid."""
    partial, closed, res, tails, cuts = [], [], [], [], []
    for z in z_grid:
        z = complex(z)
        M = cutoff if cutoff is not None else _auto_cutoff(z.real, 1e-16 * (1.0 + 1.0 / z.real ** 2))
        p, tail = trace_partial(z, M)
        c = heisenberg_trace_closed(z)
        partial.append(complex(p))
        closed.append(complex(c))
        res.append(abs(complex(p) - complex(c)))
        tails.append(tail)
        cuts.append(M)
    return TraceProfile([complex(z) for z in z_grid], partial, closed, res, tails, cuts)


# -- lengths from the small-z remainder ------------------------------------------

@dataclass
class LengthEstimate:
    exponents: list[float]
    lengths: list[float]
    prefactor: float
    fit_residual: float


def extract_lengths(z_grid, values, second: bool = True, power: float | None = 2.0,
                    remainder: bool = False) -> LengthEstimate:
    """Exponents E of exp(-E/z) corrections and lengths L = 2 sqrt(E).

    The remainder R(z) = Z_o(z) - pi^2/(4z^2) + 1/(2z) is fitted as
    A z^(-power) exp(-E/z) by linear least squares of log(R z^power) on 1/z;
    ``power=None`` fits the power as well (extra log z column).  With
    ``remainder`` the values are taken to be R itself.  The values must
    carry enough digits for R to be resolved (use mpmath input).  With
    ``second`` the next exponent is sought in R - A z^(-power) exp(-E/z).
    """
    zs = [mp.mpmathify(z) for z in z_grid]
    vals = [mp.mpmathify(v) for v in values]
    if len(zs) < 3 or len(zs) != len(vals):
        raise ValueError("need at least three (z, value) pairs")
    eps = mp.mpf(10) ** (-mp.mp.dps + 3)
    rem = []
    for z, v in zip(zs, vals):
        if mp.im(z) != 0 or z <= 0:
            raise ValueError("length extraction uses real z > 0")
        r = v if remainder else v - mp.pi ** 2 / (4 * z ** 2) + 1 / (2 * z)
        noise = eps * abs(v) if isinstance(v, (mp.mpf, mp.mpc)) and mp.mp.dps > 17 else 1e-13 * abs(v)
        if not r > 10 * noise:
            raise ValueError(f"correction at z = {float(z):.4g} is below numerical noise; "
                             "raise the working precision or z")
        rem.append(r)
    inv = np.array([float(1 / z) for z in zs])
    pw = 0.0 if power is None else power
    logs = np.array([float(mp.log(r) + pw * mp.log(z)) for r, z in zip(rem, zs)])
    cols = [np.ones_like(inv), -inv]
    if power is None:
        cols.append(np.array([float(mp.log(z)) for z in zs]))
    design = np.column_stack(cols)
    sol, *_ = np.linalg.lstsq(design, logs, rcond=None)
    logA, E = sol[0], sol[1]
    fit_res = float(np.max(np.abs(design @ sol - logs)))
    exponents = [float(E)]
    if second and power is not None:
        E2 = _second_exponent(zs, rem, eps, pw)
        if E2 is not None:
            exponents.append(E2)
    return LengthEstimate(exponents, [2.0 * math.sqrt(e) for e in exponents], float(math.exp(logA)), fit_res)


def _second_exponent(zs, rem, eps, pw):
    # the two smallest z fix (A, E) to within exp(-E/z) relative error
    order = sorted(range(len(zs)), key=lambda i: zs[i])
    i0, i1 = order[0], order[1]
    y0, y1 = mp.log(rem[i0] * zs[i0] ** pw), mp.log(rem[i1] * zs[i1] ** pw)
    E = (y0 - y1) / (1 / zs[i1] - 1 / zs[i0])
    logA = y0 + E / zs[i0]
    pts = []
    for i in order[2:]:
        z = zs[i]
        d = rem[i] * z ** pw - mp.exp(logA - E / z)
        if abs(d) > 1e3 * eps * rem[i] * z ** pw:
            pts.append((float(1 / z), float(mp.log(abs(d)))))
    if len(pts) < 3:
        return None
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope, _ = np.polyfit(x, y, 1)
    return float(-slope)


def heisenberg_trace_lengths(z_grid=None, dps: int = 200, use_closed_form: bool = False) -> LengthEstimate:
    """Trace values on a small-z grid at high precision, then length extraction."""
    if z_grid is None:
        z_grid = [0.1 + 0.01 * i for i in range(11)]
    with mp.workdps(dps):
        zs = [mp.mpf(str(z)) for z in z_grid]
        if use_closed_form:
            vals = [heisenberg_trace_closed(z, dps=dps) for z in zs]
        else:
            vals = [trace_partial(z, dps=dps)[0] for z in zs]
        return extract_lengths(zs, vals)


# -- boundary behaviour ---------------------------------------------------------------

@dataclass
class PoleProbe:
    tau: float
    epsilons: list[float]
    values: list[float]
    tail_bounds: list[float]
    cutoffs: list[int]
    exponent: float

    @property
    def cutoff_sufficient(self) -> bool:
        return all(t < v for t, v in zip(self.tail_bounds, self.values))


def default_cutoff_rule(eps: float) -> int:
    return math.ceil(10.0 / eps)


def pole_probe(tau: float, epsilons=(0.1, 0.05, 0.025), cutoff_rule=default_cutoff_rule) -> PoleProbe:
    """Growth exponent p of |Z_o(eps + i tau)| ~ eps^(-p) as eps decreases.

    p is the least-squares slope of -log|Z_o| against log eps.
    """
    eps = [float(e) for e in epsilons]
    if len(eps) < 2 or any(e <= 0 for e in eps):
        raise ValueError("need at least two positive epsilons")
    vals, tails, cuts = [], [], []
    for e in eps:
        M = int(cutoff_rule(e))
        v, tail = trace_partial(complex(e, tau), M)
        vals.append(abs(v))
        tails.append(tail)
        cuts.append(M)
    if any(t >= v for t, v in zip(tails, vals)):
        raise ValueError("cutoff insufficient: tail bound exceeds |Z_o|")
    slope, _ = np.polyfit(np.log(eps), np.log(vals), 1)
    return PoleProbe(float(tau), eps, vals, tails, cuts, float(-slope))
