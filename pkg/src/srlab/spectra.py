"""Spectra of the sR Laplacian on circle bundles over the flat torus.

Fourier modes e^{i m theta} along the fiber split the Laplacian into
magnetic Schroedinger operators -d_x^2 - (d_y - i m b x)^2 on the torus
R^2 / sqrt(2 pi) Z^2, with the twisted boundary condition
f(x + L, y) = exp(i m b L y) f(x, y).  Mode 0 is the flat torus.

Numerically each mode is discretized by second-order finite differences
with Peierls link phases, so the total flux 2 pi m b is exact on any grid.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .models import SQRT_2PI, ContactModel, Heisenberg, MagneticTorus, popp_volume

__all__ = [
    "Band",
    "SpectrumEntry",
    "SpectrumTable",
    "TorusSector",
    "analytic_spectrum",
    "assemble_spectrum",
    "cluster_eigenvalues",
    "heisenberg_spectrum",
    "landau_band_count",
    "magnetic_mode_spectrum",
    "match_spectra",
    "mode_eigenvalues",
    "torus_fraction",
    "weyl_check",
    "weyl_count",
]


class DiscretizationError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TorusSector:
    """Flat-torus (mode 0) sector; (p, q) is the plane-wave label when known."""

    p: int | None = None
    q: int | None = None

    def key(self):
        return (0, 0, 0, self.p if self.p is not None else 0, self.q if self.q is not None else 0)


@dataclass(frozen=True)
class Band:
    """Landau band l of fiber mode m (m != 0)."""

    l: int
    m: int

    def key(self):
        return (1, self.l, self.m, 0, 0)


@dataclass(frozen=True)
class SpectrumEntry:
    lam: float
    mult: int
    sector: TorusSector | Band


@dataclass
class SpectrumTable:
    model_id: str
    lambda_max: float
    entries: list[SpectrumEntry]
    provenance: dict = field(default_factory=lambda: {"kind": "analytic"})

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: (e.lam, e.sector.key()))
        seen = set()
        for e in self.entries:
            if e.mult < 1:
                raise ValueError("multiplicities must be positive")
            if (e.lam, e.sector) in seen:
                raise ValueError(f"duplicate entry {e}")
            seen.add((e.lam, e.sector))
        self._lams = np.array([e.lam for e in self.entries])
        self._cum = np.cumsum([e.mult for e in self.entries])

    def count(self, lam: float) -> int:
        """Number of eigenvalues <= lam, with multiplicity."""
        n = int(np.searchsorted(self._lams, lam, side="right"))
        return int(self._cum[n - 1]) if n else 0

    def multiplicity_at(self, lam: float, tol: float = 1e-9) -> int:
        """Aggregate multiplicity of all entries within tol of lam."""
        return sum(e.mult for e in self.entries if abs(e.lam - lam) <= tol * max(1.0, abs(lam)))

    def band(self, l: int) -> list[SpectrumEntry]:
        return [e for e in self.entries if isinstance(e.sector, Band) and e.sector.l == l]

    def torus(self) -> list[SpectrumEntry]:
        return [e for e in self.entries if isinstance(e.sector, TorusSector)]

    def band_labels(self) -> set[int]:
        return {e.sector.l for e in self.entries if isinstance(e.sector, Band)}

    # -- serialization --------------------------------------------------------
    def to_json(self) -> str:
        rows = []
        for e in self.entries:
            sector = "torus" if isinstance(e.sector, TorusSector) else {"band": e.sector.l, "mode": e.sector.m}
            rows.append({"lambda": e.lam, "mult": e.mult, "sector": sector})
        return json.dumps({"model": self.model_id, "lambda_max": self.lambda_max, "entries": rows},
                          indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SpectrumTable":
        data = json.loads(text)
        entries = []
        for r in data["entries"]:
            s = r["sector"]
            sector = TorusSector() if s == "torus" else Band(int(s["band"]), int(s["mode"]))
            entries.append(SpectrumEntry(float(r["lambda"]), int(r["mult"]), sector))
        if len({(e.lam, e.sector) for e in entries}) < len(entries):
            # analytic torus labels are dropped by the wire format; merge equal values
            merged: dict = {}
            for e in entries:
                merged[(e.lam, e.sector)] = merged.get((e.lam, e.sector), 0) + e.mult
            entries = [SpectrumEntry(lam, m, s) for (lam, s), m in merged.items()]
        return cls(data["model"], float(data["lambda_max"]), entries, {"kind": "json"})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "mult", "sector", "l", "m"])
        for e in self.entries:
            if isinstance(e.sector, TorusSector):
                w.writerow([repr(float(e.lam)), e.mult, "torus", "", ""])
            else:
                w.writerow([repr(float(e.lam)), e.mult, "band", e.sector.l, e.sector.m])
        return buf.getvalue()


def _torus_model(model: ContactModel) -> MagneticTorus:
    if not isinstance(model, MagneticTorus):
        raise ValueError(f"spectra are implemented for circle bundles over the torus, not {model.model_id}")
    if not model.quantized:
        raise DiscretizationError(f"b = {model.b} is not an integer: no compact quotient")
    return model


# -- analytic tables -----------------------------------------------------------

def analytic_spectrum(model: ContactModel, lambda_max: float) -> SpectrumTable:
    """Exact spectrum: flat torus 2 pi (p^2 + q^2) plus Landau levels |m| b (2l + 1).

    Each band entry Band(l, m), m != 0, carries the Landau degeneracy |m| b of
    mode m, so the pair of modes +-m gives multiplicity 2 |m| b.
    """
    model = _torus_model(model)
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    b = int(round(model.b))
    entries = []
    nmax = int(math.isqrt(int(lambda_max / (2.0 * math.pi)) + 1)) + 1
    for p in range(-nmax, nmax + 1):
        for q in range(-nmax, nmax + 1):
            lam = 2.0 * math.pi * (p * p + q * q)
            if lam <= lambda_max:
                entries.append(SpectrumEntry(lam, 1, TorusSector(p, q)))
    for m in range(1, int(lambda_max // b) + 1):
        l = 0
        while m * b * (2 * l + 1) <= lambda_max:
            lam = float(m * b * (2 * l + 1))
            entries.append(SpectrumEntry(lam, m * b, Band(l, m)))
            entries.append(SpectrumEntry(lam, m * b, Band(l, -m)))
            l += 1
    return SpectrumTable(model.model_id, float(lambda_max), entries,
                         {"kind": "analytic", "b": b})


def heisenberg_spectrum(lambda_max: float) -> SpectrumTable:
    return analytic_spectrum(Heisenberg(), lambda_max)


# -- finite differences ----------------------------------------------------------

def _mode_operator(field_strength: float, n_grid: int, potential=None) -> sp.csr_matrix:
    """Magnetic FD Laplacian -d_x^2 - (d_y - i B x)^2 on the twisted torus."""
    N = n_grid
    L = SQRT_2PI
    h = L / N
    B = field_strength
    coords = np.arange(N) * h
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    i, j = i.ravel(), j.ravel()
    k = i * N + j
    diag = np.full(N * N, 4.0 / h ** 2)
    if potential is not None:
        X, Y = np.meshgrid(coords, coords, indexing="ij")
        diag = diag + np.asarray(potential(X, Y), dtype=float).ravel()
    # forward x links; crossing x = L picks up the twist exp(i B L y)
    kx = ((i + 1) % N) * N + j
    phase_x = np.where(i == N - 1, np.exp(1j * B * L * coords[j]), 1.0)
    # forward y links carry the Peierls phase exp(-i B x h)
    ky = i * N + (j + 1) % N
    phase_y = np.exp(-1j * B * coords[i] * h)
    rows = np.concatenate([k, k])
    cols = np.concatenate([kx, ky])
    vals = np.concatenate([-phase_x, -phase_y]) / h ** 2
    U = sp.csr_matrix((vals, (rows, cols)), shape=(N * N, N * N))
    return (sp.diags(diag.astype(complex)) + U + U.conj().T).tocsr()


def mode_eigenvalues(model: ContactModel, m: int, n_grid: int = 48, lambda_max: float | None = None,
                     n_eigs: int | None = None, potential=None) -> np.ndarray:
    """Sorted lowest eigenvalues of the FD operator of fiber mode m (m = 0 allowed).

    With ``lambda_max`` the eigensolve is extended until every eigenvalue
    <= lambda_max is found; otherwise ``n_eigs`` eigenvalues are returned.
    """
    model = _torus_model(model)
    B = m * model.b
    h = SQRT_2PI / n_grid
    # flux per plaquette must stay well below one quantum for the links to resolve it
    if abs(B) * h * h > 0.25 * math.pi:
        raise DiscretizationError(f"grid {n_grid} too coarse for mode {m}: flux per cell {abs(B) * h * h:.3f}")
    A = _mode_operator(B, n_grid, potential)
    dim = A.shape[0]
    shift = -1.0
    if potential is not None:
        shift = float(A.diagonal().real.min() - 4.0 / h ** 2) - 1.0
    if n_eigs is None:
        if lambda_max is None:
            raise ValueError("give lambda_max or n_eigs")
        if B == 0:
            n_eigs = int(lambda_max / (4.0 * math.pi) * 2.0 * math.pi) + 12
        else:
            n_eigs = abs(int(B)) * (int((lambda_max / abs(B) + 1) / 2) + 1) + 6
    # fixed start vector: ARPACK's default is random, which breaks bitwise reproducibility
    v0 = np.cos(np.arange(dim) * 0.7071) + 1j * np.sin(np.arange(dim) * 0.3183) + 0.5
    while True:
        k = min(n_eigs, dim - 2)
        try:
            w = eigsh(A, k=k, sigma=shift, which="LM", return_eigenvectors=False, tol=1e-12, v0=v0)
        except ArpackNoConvergence as exc:
            raise RuntimeError(f"eigensolve failed for mode {m}") from exc
        w = np.sort(w.real)
        # margin keeps the (possibly truncated) top cluster above the cutoff
        if lambda_max is None or w[-1] > lambda_max + 1.0 or k == dim - 2:
            return w
        n_eigs *= 2


def cluster_eigenvalues(w, tol: float = 0.05, complete: bool = False) -> list[tuple[float, int]]:
    """Group sorted eigenvalues whose consecutive gaps are <= tol.

    Unless ``complete``, the cluster containing the last eigenvalue is
    dropped because it may be cut by the eigensolve.
    """
    w = np.sort(np.asarray(w, dtype=float))
    clusters: list[list[float]] = []
    for v in w:
        if clusters and v - clusters[-1][-1] <= tol:
            clusters[-1].append(v)
        else:
            clusters.append([v])
    if not complete and clusters:
        clusters.pop()
    return [(float(np.mean(c)), len(c)) for c in clusters]


def magnetic_mode_spectrum(model: ContactModel, m: int, n_grid: int = 48, lambda_max: float = 30.0,
                           cluster_tol: float = 0.05, potential=None) -> list[tuple[float, int]]:
    """Clustered eigenvalues (lambda, multiplicity) <= lambda_max of fiber mode m != 0."""
    if m == 0:
        raise ValueError("mode 0 is the flat-torus sector, not a magnetic mode")
    w = mode_eigenvalues(model, m, n_grid, lambda_max=lambda_max, potential=potential)
    return [(lam, k) for lam, k in cluster_eigenvalues(w, cluster_tol) if lam <= lambda_max]


def assemble_spectrum(model: ContactModel, lambda_max: float, m_max: int | None = None,
                      n_grid: int = 48, cluster_tol: float = 0.05,
                      workers: int | None = None) -> SpectrumTable:
    """Numeric spectrum below lambda_max: flat torus sector plus modes 0 < |m| <= m_max.

    Clusters of mode m are labelled Band(l, m) in increasing order.  The
    default m_max is the smallest m with m b > lambda_max, whose Landau
    ground state already lies above the cutoff.
    """
    model = _torus_model(model)
    b = model.b
    if m_max is None:
        m_max = int(math.floor(lambda_max / b)) + 1
    modes = [0] + [s * m for m in range(1, m_max + 1) for s in (1, -1)]

    def solve(m):
        w = mode_eigenvalues(model, m, n_grid, lambda_max=lambda_max)
        return m, [(lam, k) for lam, k in cluster_eigenvalues(w, cluster_tol) if lam <= lambda_max]

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(solve, modes))
    else:
        results = [solve(m) for m in modes]
    entries = []
    for m, clusters in results:
        for l, (lam, k) in enumerate(clusters):
            sector = TorusSector() if m == 0 else Band(l, m)
            entries.append(SpectrumEntry(lam, k, sector))
        if abs(m) == m_max and clusters:
            warnings.warn(f"mode {m} still has eigenvalues below {lambda_max}; raise m_max",
                          RuntimeWarning, stacklevel=2)
    return SpectrumTable(model.model_id, float(lambda_max), entries,
                         {"kind": "numeric", "n_grid": n_grid, "m_max": m_max,
                          "cluster_tol": cluster_tol, "scheme": "fd2-peierls"})


@dataclass
class MatchRow:
    label: str
    analytic: float
    numeric: float
    mult_analytic: int
    mult_numeric: int

    @property
    def rel_err(self) -> float:
        return abs(self.numeric - self.analytic) / max(self.analytic, 1.0)


@dataclass
class MatchReport:
    rows: list[MatchRow]
    unmatched_numeric: list[SpectrumEntry]
    unmatched_analytic: list[tuple[str, float]]

    def ok(self, rel_tol: float = 0.02) -> bool:
        return (not self.unmatched_numeric and not self.unmatched_analytic
                and all(r.rel_err <= rel_tol and r.mult_analytic == r.mult_numeric for r in self.rows))

    @property
    def max_rel_err(self) -> float:
        return max(r.rel_err for r in self.rows)


def match_spectra(numeric: SpectrumTable, analytic: SpectrumTable, lambda_cut: float) -> MatchReport:
    """Pair numeric clusters with analytic levels below lambda_cut.

    Band entries pair by label (l, m).  The torus sector pairs value-sorted
    clusters with analytic shells 2 pi n, whose multiplicity is the number
    of lattice points on the shell.
    """
    rows: list[MatchRow] = []
    unmatched_numeric: list[SpectrumEntry] = []
    unmatched_analytic: list[tuple[str, float]] = []
    bands = {e.sector: e for e in analytic.entries if isinstance(e.sector, Band)}
    used = set()
    for e in numeric.entries:
        if isinstance(e.sector, Band) and e.lam <= lambda_cut:
            ref = bands.get(e.sector)
            if ref is None:
                unmatched_numeric.append(e)
            else:
                used.add(e.sector)
                rows.append(MatchRow(f"band l={e.sector.l} m={e.sector.m}", ref.lam, e.lam, ref.mult, e.mult))
    for s, e in bands.items():
        if e.lam <= lambda_cut and s not in used:
            unmatched_analytic.append((f"band l={s.l} m={s.m}", e.lam))
    shells: dict[float, int] = {}
    for e in analytic.torus():
        shells[e.lam] = shells.get(e.lam, 0) + e.mult
    shell_list = sorted(shells.items())
    num_torus = [e for e in numeric.torus() if e.lam <= lambda_cut]
    for idx, e in enumerate(num_torus):
        if idx < len(shell_list):
            lam, mult = shell_list[idx]
            rows.append(MatchRow(f"torus shell {idx}", lam, e.lam, mult, e.mult))
        else:
            unmatched_numeric.append(e)
    for lam, _ in shell_list[len(num_torus):]:
        if lam <= lambda_cut:
            unmatched_analytic.append(("torus shell", lam))
    return MatchReport(rows, unmatched_numeric, unmatched_analytic)


# -- counting laws ---------------------------------------------------------------

def weyl_count(table: SpectrumTable, lam: float) -> int:
    """N(lam) = sum of multiplicities of eigenvalues <= lam."""
    if lam > table.lambda_max:
        raise ValueError(f"lambda {lam} exceeds the table cutoff {table.lambda_max}")
    return table.count(lam)


@dataclass
class WeylReport:
    model_id: str
    weyl_constant: float
    rows: list[tuple[float, int, float]]

    def to_csv(self) -> str:
        lines = ["lambda,N,ratio"]
        lines += [f"{float(lam)!r},{n},{float(r)!r}" for lam, n, r in self.rows]
        return "\n".join(lines) + "\n"


def weyl_check(model: ContactModel, table: SpectrumTable, lambdas=None) -> WeylReport:
    """N(lambda) against popp_volume / 32 * lambda^2 on a grid of lambdas."""
    vol = popp_volume(model)
    const = vol / 32.0
    if lambdas is None:
        lambdas = np.linspace(table.lambda_max / 10.0, table.lambda_max, 10)
    rows = []
    for lam in lambdas:
        lam = float(lam)
        n = weyl_count(table, lam)
        rows.append((lam, n, n / (const * lam * lam)))
    return WeylReport(model.model_id, const, rows)


def liouville_constant(model: ContactModel) -> float:
    """Liouville mass of {|rho| <= 1} on Sigma, fixed by matching the band counts.

    For these models it equals the Popp volume, which makes the sum of the
    band laws reproduce the Weyl constant popp / 32.
    """
    return popp_volume(model)


@dataclass
class BandCount:
    l: int
    lam: float
    count: int
    prediction: float

    @property
    def ratio(self) -> float:
        return self.count / self.prediction


def landau_band_count(table: SpectrumTable, l: int, lam: float, model: ContactModel | None = None) -> BandCount:
    """Band-l eigenvalues <= lam against C lam^2 / (2 pi (2l + 1))^2."""
    if lam > table.lambda_max:
        raise ValueError(f"lambda {lam} exceeds the table cutoff {table.lambda_max}")
    if model is None:
        model = Heisenberg() if table.model_id == "heisenberg" else None
        if model is None:
            raise ValueError("pass the model to obtain the band prediction")
    count = sum(e.mult for e in table.band(l) if e.lam <= lam)
    pred = liouville_constant(model) * lam * lam / (2.0 * math.pi * (2 * l + 1)) ** 2
    return BandCount(l, float(lam), count, pred)


def torus_fraction(table: SpectrumTable, lam: float) -> float:
    """Share of N(lam) carried by the flat-torus sector."""
    total = weyl_count(table, lam)
    torus = sum(e.mult for e in table.torus() if e.lam <= lam)
    return torus / total
