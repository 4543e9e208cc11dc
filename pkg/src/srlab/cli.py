"""Command-line front end: ``srlab <subcommand> [--key value ...]``.

Every run writes plot-ready CSV/JSON artifacts plus ``manifest.json`` with
the effective configuration, package versions, wall time and sha256 sums.
Configuration files hold ``key = value`` lines; command-line flags win.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

__all__ = ["ConfigError", "RunConfig", "SUBCOMMANDS", "main", "parse_config", "run"]

OUT_DIR_ENV = "SRLAB_OUT_DIR"
DEFAULT_OUT_DIR = "srlab-out"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (parser, default, help)
PARAMS: dict[str, tuple] = {
    "model": (str, "heisenberg", "model id: heisenberg, magnetic-torus, kepler"),
    "b": (float, 1.0, "field strength of the magnetic torus"),
    "r_min": (float, 1e-3, "excluded gauge radius of the Kepler chart"),
    "seed": (int, 0, "seed for randomized sampling"),
    "tol": (float, 1e-12, "integrator tolerance"),
    "method": (str, "dop853", "integrator: dop853 or gauss"),
    "dt": (float, None, "fixed step of the gauss integrator"),
    "T": (float, 100.0, "final time"),
    "n_samples": (int, 201, "number of output samples"),
    "x0": (_floats, None, "start position x,y,z"),
    "angle": (float, None, "direction angle of the start covector (random from seed if unset)"),
    "rho": (float, None, "Reeb momentum <xi, R> of the start covector (1, or 2 for kepler)"),
    "h0": (_floats, (10.0, 20.0, 40.0), "transverse momenta for spiral fits"),
    "window": (float, 0.5, "spiral fit window in units of h0"),
    "k_max": (int, 5, "number of closed orbits to shoot"),
    "n_corrections": (int, 2, "correction terms in the Reeb period fit"),
    "lambda_max": (float, 30.0, "spectral cutoff"),
    "numeric": (_bool, False, "assemble the spectrum by finite differences"),
    "n_grid": (int, 48, "finite-difference grid per side"),
    "m_max": (int, None, "largest fiber mode"),
    "cluster_tol": (float, 0.05, "eigenvalue clustering tolerance"),
    "n_points": (int, 20, "number of lambda values in the Weyl table"),
    "l_max": (int, 2, "largest band index"),
    "z": (_floats, (0.1, 0.2, 0.5, 1.0, 2.0), "real trace arguments"),
    "cutoff": (int, None, "mode cutoff of the band sum"),
    "dps": (int, 200, "working digits for length extraction"),
    "tau": (_floats, (2 * math.pi, 2 * math.pi / 3, 1.0), "imaginary parts probed"),
    "epsilons": (_floats, (0.1, 0.05, 0.025), "real parts probed"),
    "workers": (int, None, "thread count for independent sweeps"),
    "out": (str, None, "output directory, or artifact file name"),
}

_MODEL = ("model", "b", "r_min")
SUBCOMMANDS: dict[str, tuple[str, ...]] = {
    "geodesic": _MODEL + ("seed", "tol", "method", "dt", "T", "n_samples", "x0", "angle", "rho"),
    "reeb": _MODEL + ("T", "n_samples", "x0", "tol"),
    "spiral": _MODEL + ("seed", "tol", "x0", "angle", "h0", "window"),
    "periodic": _MODEL + ("k_max", "n_corrections", "workers"),
    "spectrum": _MODEL + ("lambda_max", "numeric", "n_grid", "m_max", "cluster_tol", "workers"),
    "weyl": _MODEL + ("lambda_max", "n_points"),
    "bands": _MODEL + ("lambda_max", "l_max"),
    "trace": ("z", "cutoff"),
    "poles": ("tau", "epsilons"),
    "conjecture": _MODEL + ("k_max", "n_corrections", "dps", "workers"),
}
for _keys in SUBCOMMANDS.values():
    assert all(k in PARAMS for k in _keys)

_POSITIVE = {"b", "r_min", "tol", "dt", "T", "window", "lambda_max", "cluster_tol", "rho"}
_AT_LEAST_ONE = {"n_samples", "k_max", "n_grid", "m_max", "n_points", "cutoff", "workers"}


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    output_path: str = ""
    print_config: bool = False

    def __getattr__(self, name):
        params = self.__dict__.get("params", {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    @property
    def model(self) -> str:
        return self.params.get("model", "")

    @property
    def seed(self) -> int:
        return self.params.get("seed", 0)

    def dump(self) -> str:
        lines = [f"# subcommand: {self.subcommand}"]
        for k in sorted(self.params):
            v = self.params[k]
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{k.replace('_', '-')} = {v}")
        lines.append(f"out = {self.output_path}")
        return "\n".join(lines) + "\n"


def _norm_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        out[_norm_key(k)] = v.strip()
    return out


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, keys in SUBCOMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value configuration file")
        sp.add_argument("--print-config", action="store_true", help="echo the effective configuration and exit")
        for k in keys + ("out",):
            sp.add_argument("--" + k.replace("_", "-"), dest=k, default=None, help=PARAMS[k][2])
    return ap


def parse_config(argv=None, config_file=None) -> RunConfig:
    """Merge defaults, an optional config file and flags into a validated RunConfig."""
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = _build_parser()
    ns, extra = ap.parse_known_args(argv)
    if extra:
        raise ConfigError(_norm_key(extra[0].split("=")[0]), "unknown flag")
    sub = ns.subcommand
    allowed = SUBCOMMANDS[sub]
    raw: dict = {}
    cfile = ns.config or config_file
    if cfile is not None:
        for k, v in read_config_file(cfile).items():
            if k == "out":
                raw["out"] = v
            elif k not in allowed:
                raise ConfigError(k, f"unknown key for subcommand {sub!r}")
            else:
                raw[k] = v
    for k in allowed + ("out",):
        v = getattr(ns, k)
        if v is not None:
            raw[k] = v
    params = {}
    for k in allowed:
        conv, default, _ = PARAMS[k]
        if k in raw:
            try:
                params[k] = conv(raw[k])
            except (TypeError, ValueError) as exc:
                raise ConfigError(k, f"cannot parse {raw[k]!r} ({exc})") from None
        else:
            params[k] = default
    _validate(sub, params)
    out = raw.get("out") or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    return RunConfig(sub, params, out, bool(ns.print_config))


def _validate(sub: str, p: dict) -> None:
    from .models import MODEL_IDS

    for k, v in p.items():
        if v is None:
            continue
        vals = v if isinstance(v, tuple) else (v,)
        for x in vals:
            if isinstance(x, float) and not math.isfinite(x):
                raise ConfigError(k, "must be finite")
        if k in _POSITIVE and not v > 0:
            raise ConfigError(k, f"must be > 0, got {v!r}")
        if k in _AT_LEAST_ONE and v < 1:
            raise ConfigError(k, f"must be >= 1, got {v!r}")
    if "model" in p and p["model"] not in MODEL_IDS:
        raise ConfigError("model", f"unknown model {p['model']!r}; expected one of {', '.join(MODEL_IDS)}")
    if p.get("method") not in (None, "dop853", "gauss"):
        raise ConfigError("method", "expected dop853 or gauss")
    if p.get("x0") is not None and len(p["x0"]) != 3:
        raise ConfigError("x0", "expected three comma-separated numbers")
    for k in ("h0", "z", "epsilons", "tau"):
        if k in p and not p[k]:
            raise ConfigError(k, "empty list")
    for k in ("h0", "z", "epsilons"):
        if k in p and any(v <= 0 for v in p[k]):
            raise ConfigError(k, "values must be > 0")
    if "n_corrections" in p and p["n_corrections"] < 0:
        raise ConfigError("n_corrections", "must be >= 0")
    if "dps" in p and p["dps"] < 30:
        raise ConfigError("dps", "must be >= 30")
    if "l_max" in p and p["l_max"] < 0:
        raise ConfigError("l_max", "must be >= 0")


# -- running ---------------------------------------------------------------------

def _model(cfg: RunConfig):
    from .models import get_model

    return get_model(cfg.params["model"], b=cfg.params["b"], r_min=cfg.params["r_min"])


def _default_x0(model):
    if model.model_id == "kepler":
        return np.array([1.0, 0.0, 0.09])
    return np.array([0.3, 0.2, 0.1])


def _angle(cfg: RunConfig) -> float:
    if cfg.params.get("angle") is not None:
        return cfg.params["angle"]
    if cfg.params.get("model") == "kepler" and cfg.params.get("x0") is None:
        # random directions from the default point can fall into the excluded ball
        return 1.6
    return float(np.random.default_rng(cfg.seed).uniform(0.0, 2.0 * math.pi))


def _csv_rows(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in r))
    return "\n".join(lines) + "\n"


def _run_geodesic(cfg, p):
    from .flow import integrate_geodesic
    from .models import unit_covector

    model = _model(cfg)
    x0 = np.array(p["x0"]) if p["x0"] is not None else _default_x0(model)
    rho = p["rho"] if p["rho"] is not None else (2.0 if model.model_id == "kepler" else 1.0)
    p0 = unit_covector(model, x0, _angle(cfg), rho)
    traj = integrate_geodesic(model, p0, p["T"], tol=p["tol"], method=p["method"],
                              n_samples=p["n_samples"], dt=p["dt"])
    return {"trajectory.csv": traj}, {"energy_drift": traj.energy_drift(),
                                      "steps": traj.stats.get("steps")}


def _run_reeb(cfg, p):
    from .flow import integrate_reeb

    model = _model(cfg)
    x0 = np.array(p["x0"]) if p["x0"] is not None else _default_x0(model)
    curve = integrate_reeb(model, x0, p["T"], n_samples=p["n_samples"], tol=p["tol"])
    return {"reeb.csv": curve}, {"reeb_period": model.reeb_period() if model.compact else None}


def _run_spiral(cfg, p):
    from .spiral import spiral_fit, spiral_trajectory

    model = _model(cfg)
    x0 = np.array(p["x0"]) if p["x0"] is not None else _default_x0(model)
    angle = _angle(cfg)
    rows = []
    for h0 in p["h0"]:
        traj = spiral_trajectory(model, x0, h0, angle=angle, window=p["window"], tol=p["tol"])
        fit = spiral_fit(traj, model, window=p["window"])
        rows.append((fit.h0, str(fit.sign), fit.J0_estimate, fit.J0_estimate * fit.h0 - 1.0,
                     fit.deviation, fit.deviation * fit.h0 ** 2, fit.window[1]))
    text = _csv_rows(["h0", "sign", "J0", "J0_h0_minus_1", "deviation", "deviation_h0sq", "window_end"], rows)
    return {"spiral.csv": text}, {"max_abs_J0_h0_minus_1": max(abs(r[3]) for r in rows)}


def _reeb_fit(model, p):
    from .periodic import fit_reeb_period, length_spectrum

    lspec = length_spectrum(model, p["k_max"], workers=p["workers"])
    fit = None
    if len(lspec.orbits) >= 4:
        nc = min(p["n_corrections"], len(lspec.orbits) - 2)
        fit = fit_reeb_period([o.length for o in lspec.orbits], [o.k for o in lspec.orbits], n_corrections=nc)
    return lspec, fit


def _run_periodic(cfg, p):
    model = _model(cfg)
    lspec, fit = _reeb_fit(model, p)
    summary = {"T0_reeb": lspec.T0_reeb, "T0_fit": fit.T0 if fit else None,
               "failures": {str(k): v for k, v in lspec.failures.items()}}
    return {"lengths.json": lspec.to_json() + "\n"}, summary


def _table(cfg, p):
    from .spectra import analytic_spectrum, assemble_spectrum

    model = _model(cfg)
    if p.get("numeric"):
        return model, assemble_spectrum(model, p["lambda_max"], m_max=p["m_max"], n_grid=p["n_grid"],
                                        cluster_tol=p["cluster_tol"], workers=p["workers"])
    return model, analytic_spectrum(model, p["lambda_max"])


def _run_spectrum(cfg, p):
    _, table = _table(cfg, p)
    summary = {"entries": len(table.entries), "count": table.count(table.lambda_max)}
    return {"spectrum.json": table.to_json() + "\n", "spectrum.csv": table.to_csv()}, summary


def _run_weyl(cfg, p):
    from .spectra import weyl_check

    model, table = _table(cfg, p)
    lam = np.linspace(p["lambda_max"] / p["n_points"], p["lambda_max"], p["n_points"])
    rep = weyl_check(model, table, lam)
    return {"weyl.csv": rep.to_csv()}, {"weyl_constant": rep.weyl_constant, "final_ratio": rep.rows[-1][2]}


def _run_bands(cfg, p):
    from .spectra import Band, landau_band_count, torus_fraction, weyl_count

    model, table = _table(cfg, p)
    lam = p["lambda_max"]
    rows = []
    for l in range(p["l_max"] + 1):
        bc = landau_band_count(table, l, lam, model)
        rows.append((str(l), lam, str(bc.count), bc.prediction, bc.ratio))
    torus = sum(e.mult for e in table.torus() if e.lam <= lam)
    total = weyl_count(table, lam)
    summary = {"N": total, "torus": torus, "torus_fraction": torus_fraction(table, lam),
               "bands_plus_torus": torus + sum(e.mult for e in table.entries
                                               if e.lam <= lam and isinstance(e.sector, Band))}
    return {"bands.csv": _csv_rows(["l", "lambda", "count", "prediction", "ratio"], rows)}, summary


def _run_trace(cfg, p):
    from .traces import trace_profile

    prof = trace_profile(p["z"], cutoff=p["cutoff"])
    return {"trace.csv": prof.to_csv()}, {"max_residual": max(prof.residuals)}


def _run_poles(cfg, p):
    from .traces import pole_probe

    rows, exps = [], {}
    for tau in p["tau"]:
        pr = pole_probe(tau, p["epsilons"])
        exps[repr(tau)] = pr.exponent
        for e, v, t, m in zip(pr.epsilons, pr.values, pr.tail_bounds, pr.cutoffs):
            rows.append((tau, e, v, t, str(m), pr.exponent))
    text = _csv_rows(["tau", "epsilon", "abs_value", "tail_bound", "cutoff", "exponent"], rows)
    return {"poles.csv": text}, {"exponents": exps}


def _run_conjecture(cfg, p):
    from .traces import heisenberg_trace_lengths

    model = _model(cfg)
    if model.model_id != "heisenberg":
        raise ValueError("the trace pipeline has a closed form only for the heisenberg model")
    _, fit = _reeb_fit(model, p)
    est = heisenberg_trace_lengths(dps=p["dps"])
    L1 = est.lengths[0]
    result = {
        "model": model.model_id,
        "T0_geometry": model.reeb_period(),
        "T0_length_fit": fit.T0 if fit else None,
        "T0_trace": L1 ** 2 / (4.0 * math.pi),
        "trace_lengths": est.lengths,
    }
    return {"conjecture.json": json.dumps(result, indent=2) + "\n"}, result


RUNNERS = {
    "geodesic": _run_geodesic, "reeb": _run_reeb, "spiral": _run_spiral, "periodic": _run_periodic,
    "spectrum": _run_spectrum, "weyl": _run_weyl, "bands": _run_bands, "trace": _run_trace,
    "poles": _run_poles, "conjecture": _run_conjecture,
}


def _targets(cfg: RunConfig, names) -> tuple[Path, dict[str, Path]]:
    out = Path(cfg.output_path)
    names = list(names)
    if out.suffix:
        # a file name: the primary artifact goes there, the rest next to it
        out.parent.mkdir(parents=True, exist_ok=True)
        paths = {names[0]: out}
        for n in names[1:]:
            paths[n] = out.with_name(out.stem + Path(n).suffix) if Path(n).suffix != out.suffix \
                else out.with_name(out.stem + "_" + n)
        return out.with_name(out.stem + ".manifest.json"), paths
    out.mkdir(parents=True, exist_ok=True)
    return out / "manifest.json", {n: out / n for n in names}


def _write(obj, path: Path) -> None:
    if isinstance(obj, str):
        path.write_text(obj, encoding="ascii", newline="\n")
    else:
        obj.to_csv(path)


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "mpmath"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def run(cfg: RunConfig) -> int:
    """Execute a configuration; returns the process exit status."""
    t0 = time.perf_counter()
    inputs = {"subcommand": cfg.subcommand, **{k: _jsonable(v) for k, v in cfg.params.items()}}
    try:
        artifacts, summary = RUNNERS[cfg.subcommand](cfg, cfg.params)
        manifest_path, paths = _targets(cfg, artifacts)
        for name, obj in artifacts.items():
            _write(obj, paths[name])
    except Exception as exc:  # noqa: BLE001 - every failure becomes a report
        report = {"status": "error", "subcommand": cfg.subcommand, "error_type": type(exc).__name__,
                  "message": str(exc), "inputs": inputs,
                  "traceback": traceback.format_exception_only(type(exc), exc)[-1].strip()}
        for attr in ("t_fail", "residual", "key"):
            if hasattr(exc, attr):
                report[attr] = getattr(exc, attr)
        print(json.dumps(report, default=repr), file=sys.stderr)
        return 1
    manifest = {
        "status": "ok",
        "inputs": inputs,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "artifacts": [{"path": str(paths[n]), "sha256": _sha256(paths[n])} for n in artifacts],
        "summary": summary,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, default=repr) + "\n", encoding="ascii")
    print(str(manifest_path))
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(json.dumps({"status": "error", "error_type": "ConfigError", "key": exc.key,
                          "message": str(exc)}), file=sys.stderr)
        return 2
    if cfg.print_config:
        sys.stdout.write(cfg.dump())
        return 0
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
