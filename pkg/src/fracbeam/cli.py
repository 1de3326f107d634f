"""Command-line front end: ``fracbeam <command> [--config F] [--out D] [--check] [--threads K]``.

Every command reads an optional JSON config, writes CSV and JSON artifacts to
the output directory and a ``manifest.json`` with the SHA-256 of each file.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 failed check.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy.integrate import romb

from .control import (
    QuadratureUnderResolved,
    SpaceSpec,
    TargetOutsideSpan,
    dual_norm,
    hum_control,
    random_symmetric_target,
)
from .fractional import FractionalDomainError, GridConstructionError, build_diffusive_grid
from .model import ParameterError, SystemParams, check_condition_A1, classify_speeds, resonance_class
from .observability import (
    ChainTooLong,
    SingularGram,
    ThresholdViolation,
    assemble_moment_system,
    classify_ratio,
    cross_branch_minima,
    default_gamma_gap,
    family_output,
    gap_report,
    ingham_threshold,
    observability_constants,
)
from .simulator import (
    AssemblyError,
    DegenerateWindow,
    SolveFailure,
    assemble,
    evolve,
    fit_decay_exponent,
    predicted_exponent,
    state_from_functions,
)
from .spectrum import SpectrumError, conservative_spectrum, find_eigenvalues

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

CASE1 = {"rho1": 1.0, "rho2": 1.0, "k1": 1.0, "k2": 1.0, "gamma": 1.0, "eta": 1.0, "alpha": 0.5}
RESONANT = {"rho1": 4 * math.pi**2, "rho2": 1.0, "k1": 4 * math.pi**2, "k2": 1.0, "gamma": 1.0, "eta": 1.0, "alpha": 0.5}

DEFAULTS = {
    "spectrum": {
        "params": CASE1,
        "n_min": 20,
        "n_max": 60,
        "tol": 1e-10,
        "branches": None,
        "a1_scan": 50,
    },
    "decay": {
        "params": CASE1,
        "n_elems": 200,
        "dt": 5e-3,
        "t_end": 100.0,
        "n_modes": 30,
        "power": 1.5,
        "grid_nodes": 60,
        "grid_cutoff": 1e4,
        "grid_tolerance": 1e-2,
        "scheme": "midpoint",
        "record_every": 10,
        "window": None,
    },
    "gaps": {
        "params": RESONANT,
        "n_max": 200,
        "gamma_gap": None,
        "ratio": None,
    },
    "observability": {
        "params": RESONANT,
        "N": 30,
        "T_factor": 1.2,
        "T": None,
        "divided_differences": True,
        "space": {"tag": "D"},
        "gamma_gap": None,
        "allow_below_threshold": False,
        "n_checks": 20,
    },
    "control": {
        "params": CASE1,
        "N": 20,
        "T_factor": 1.2,
        "T": None,
        "target": "random",
        "space": {"tag": "H2"},
        "gamma_gap": None,
        "tol": 1e-6,
        "allow_below_threshold": False,
    },
}
COMMON_KEYS = {"schema_version", "seed", "output_dir"}


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


NUMERIC_ERRORS = (
    SpectrumError,
    SingularGram,
    ThresholdViolation,
    ChainTooLong,
    SolveFailure,
    AssemblyError,
    GridConstructionError,
    QuadratureUnderResolved,
    DegenerateWindow,
    np.linalg.LinAlgError,
)


# ---------------------------------------------------------------------------
# config


def load_config(command: str, path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    cfg.update({"schema_version": SCHEMA_VERSION, "seed": 0})
    if path is None:
        return _validate(command, cfg)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(user) - set(DEFAULTS[command]) - COMMON_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys for '{command}': {sorted(unknown)}")
    version = user.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if "params" in user:
        if not isinstance(user["params"], dict):
            raise ConfigError(f"{path}: params must be an object")
        merged = dict(DEFAULTS[command]["params"])
        merged.update(user.pop("params"))
        cfg["params"] = merged
    cfg.update(user)
    return _validate(command, cfg)


def _positive(cfg, *names):
    for name in names:
        v = cfg[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
            raise ConfigError(f"{name} must be a positive number, got {v!r}")


def _integer(cfg, name, low=1):
    v = cfg[name]
    if isinstance(v, bool) or not isinstance(v, int) or v < low:
        raise ConfigError(f"{name} must be an integer >= {low}, got {v!r}")


def _validate(command: str, cfg: dict) -> dict:
    try:
        cfg["_params"] = SystemParams.from_mapping(cfg["params"])
    except (ParameterError, TypeError) as exc:
        raise ConfigError(f"params: {exc}") from exc
    _integer(cfg, "seed", 0)
    if command == "spectrum":
        _integer(cfg, "n_min")
        _integer(cfg, "n_max")
        _integer(cfg, "a1_scan")
        _positive(cfg, "tol")
        if cfg["n_max"] < cfg["n_min"]:
            raise ConfigError("n_max must be >= n_min")
    elif command == "decay":
        _integer(cfg, "n_elems", 4)
        _integer(cfg, "n_modes")
        _integer(cfg, "grid_nodes", 8)
        _integer(cfg, "record_every")
        _positive(cfg, "dt", "t_end", "power", "grid_cutoff", "grid_tolerance")
        if cfg["scheme"] not in ("midpoint", "backward_euler"):
            raise ConfigError("scheme must be 'midpoint' or 'backward_euler'")
        if cfg["window"] is not None and (not isinstance(cfg["window"], list) or len(cfg["window"]) != 2):
            raise ConfigError("window must be null or [t_start, t_end]")
    elif command == "gaps":
        _integer(cfg, "n_max", 3)
        if cfg["gamma_gap"] is not None:
            _positive(cfg, "gamma_gap")
        r = cfg["ratio"]
        if r is not None and not (isinstance(r, list) and len(r) == 2 and all(isinstance(x, int) and x > 0 for x in r)):
            raise ConfigError("ratio must be null or a pair of positive integers [num, den]")
    else:
        _integer(cfg, "N")
        _positive(cfg, "T_factor")
        if cfg["T"] is not None:
            _positive(cfg, "T")
        if cfg["gamma_gap"] is not None:
            _positive(cfg, "gamma_gap")
        try:
            cfg["_space"] = SpaceSpec(**cfg["space"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"space: {exc}") from exc
        if command == "observability":
            _integer(cfg, "n_checks", 0)
        else:
            _positive(cfg, "tol")
            cfg["_target"] = _parse_target(cfg["target"])
    return cfg


def _parse_target(spec):
    if spec == "random":
        return "random"
    if not isinstance(spec, list) or not spec:
        raise ConfigError("target must be 'random' or a nonempty list of [branch, n, re, im]")
    out = {}
    for row in spec:
        if not (isinstance(row, list) and len(row) in (3, 4)):
            raise ConfigError(f"target entry {row!r} must be [branch, n, re] or [branch, n, re, im]")
        b, n = row[0], row[1]
        if not (isinstance(b, int) and isinstance(n, int) and b in (1, 2) and n != 0):
            raise ConfigError(f"target entry {row!r}: branch must be 1 or 2 and n a nonzero integer")
        vals = row[2:]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError(f"target entry {row!r}: amplitude must be numeric")
        out[(b, n)] = complex(vals[0], vals[1] if len(vals) == 4 else 0.0)
    return out


def public_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# ---------------------------------------------------------------------------
# output


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


class Artifacts:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str):
        self.files[name] = text

    def write_json(self, name: str, obj):
        self.write(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def flush(self, command: str, cfg: dict):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for name in sorted(self.files):
            data = self.files[name].encode()
            (self.out_dir / name).write_bytes(data)
            entries.append({"file": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        manifest = {
            "command": command,
            "schema_version": SCHEMA_VERSION,
            "config_sha256": hashlib.sha256(json.dumps(_jsonable(public_config(cfg)), sort_keys=True).encode()).hexdigest(),
            "files": entries,
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def _slope(ns, values) -> float:
    ns = np.asarray(ns, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if ns.size < 2 or np.any(values == 0):
        return math.nan
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def run_spectrum(cfg, art: Artifacts, threads: int, check: bool):
    p = cfg["_params"]
    modes = find_eigenvalues(p, range(cfg["n_min"], cfg["n_max"] + 1), tol=cfg["tol"], branches=cfg["branches"], threads=threads)
    rows = [
        (m.branch, m.index, m.lam.real, m.lam.imag, m.residual, m.seed.real, m.seed.imag, m.seed_distance, m.iterations, m.status)
        for m in modes
    ]
    art.write("spectrum.csv", csv_text(["branch", "n", "re", "im", "residual", "seed_re", "seed_im", "seed_distance", "iterations", "status"], rows))
    slopes = {}
    for b in sorted({m.branch for m in modes}):
        sel = [m for m in modes if m.branch == b]
        slopes[str(b)] = _slope([m.index for m in sel], [m.lam.real for m in sel])
    a1 = check_condition_A1(p, cfg["a1_scan"])
    summary = {
        "params": p.to_dict(),
        "speed_class": classify_speeds(p).tag,
        "resonance": resonance_class(p).tag,
        "a1_holds_on_scan": a1.holds_on_range,
        "a1_witness": a1.witness,
        "n_modes": len(modes),
        "max_residual": max(m.residual for m in modes),
        "re_slope_by_branch": slopes,
        "predicted_re_slope": -(1.0 - p.alpha),
    }
    art.write_json("spectrum.json", summary)
    failures = []
    if check:
        if summary["max_residual"] > cfg["tol"]:
            failures.append(f"max residual {summary['max_residual']:.3e} exceeds tol {cfg['tol']:.1e}")
        if any(m.status != "converged" for m in modes):
            failures.append("unconverged modes present")
    return summary, failures


def run_decay(cfg, art: Artifacts, threads: int, check: bool):
    p = cfg["_params"]
    grid = build_diffusive_grid(p.alpha, p.eta, cfg["grid_nodes"], cutoff=cfg["grid_cutoff"], tolerance=cfg["grid_tolerance"])
    op = assemble(p, cfg["n_elems"], grid)
    n_modes, power = cfg["n_modes"], cfg["power"]

    def velocity(x):
        return sum(k ** (-power) * np.sin((k - 0.5) * math.pi * x) for k in range(1, n_modes + 1))

    init = state_from_functions(op, None, velocity, None, None)
    trace = evolve(op, init, cfg["dt"], cfg["t_end"], scheme=cfg["scheme"], record_every=cfg["record_every"])
    window = tuple(cfg["window"]) if cfg["window"] is not None else None
    fit = fit_decay_exponent(trace, window)
    art.write("energy.csv", csv_text(["t", "energy"], zip(trace.times, trace.energies)))
    delta = predicted_exponent(p)
    summary = {
        "params": p.to_dict(),
        "fitted_exponent": fit.exponent,
        "predicted_exponent": delta,
        "poly_residual": fit.poly_residual,
        "exp_rate": fit.exp_rate,
        "exp_residual": fit.exp_residual,
        "window": list(fit.window),
        "n_samples": fit.n_samples,
        "max_step_increase": trace.max_step_increase(),
        "grid_check_error": grid.check_error,
    }
    art.write_json("decay.json", summary)
    failures = []
    if check:
        if p.gamma > 0 and summary["max_step_increase"] > 0:
            failures.append("energy increased during a step")
        if not fit.poly_residual <= 0.5 * fit.exp_residual:
            failures.append("polynomial model does not beat the exponential model by 2x")
        if not 0.5 * delta <= fit.exponent <= 1.5 * delta:
            failures.append(f"exponent {fit.exponent:.3f} outside [0.5, 1.5] x {delta:g}")
    return summary, failures


def _symmetric_modes(p, N):
    return conservative_spectrum(p, [n for n in range(-N, N + 1) if n])


def run_gaps(cfg, art: Artifacts, threads: int, check: bool):
    p = cfg["_params"]
    modes = _symmetric_modes(p, cfg["n_max"])
    rep = gap_report(modes, cfg["gamma_gap"])
    cross = cross_branch_minima(modes)
    art.write(
        "gaps.csv",
        csv_text(
            ["n", "gap", "branch_a", "n_a", "branch_b", "n_b"],
            [(b.index, d, a.branch, a.index, b.branch, b.index) for a, b, d in cross],
        ),
    )
    art.write(
        "chains.csv",
        csv_text(
            ["branch_a", "n_a", "branch_b", "n_b", "gap"],
            [(ka[0], ka[1], kb[0], kb[1], abs(rep.sorted_modes[j].lam - rep.sorted_modes[i].lam))
             for (ka, kb), (i, j) in zip(rep.chain_keys(), rep.chains)],
        ),
    )
    speeds = classify_speeds(p)
    res = resonance_class(p)
    if speeds.equal:
        predicted = 2.0 if res.resonant else 0.0
        diophantine = None
    else:
        if cfg["ratio"] is not None:
            num, den = cfg["ratio"]
            if abs(num / den - speeds.ratio) > 1e-12 * speeds.ratio:
                raise ConfigError(f"ratio {num}/{den} does not match k1*rho2/(k2*rho1) = {speeds.ratio!r}")
            dc = classify_ratio((num, den), is_exact_rational=True)
        else:
            dc = classify_ratio(speeds.ratio)
        diophantine = {"tag": dc.tag, "beta": dc.beta, "log_correction": dc.log_correction, "p0": dc.p0, "q0": dc.q0, "note": dc.note}
        predicted = None if dc.log_correction else dc.beta
    fit = rep.scaling_fit
    summary = {
        "params": p.to_dict(),
        "speed_class": speeds.tag,
        "resonance": res.tag,
        "diophantine": diophantine,
        "ingham_threshold": ingham_threshold(p),
        "gamma_gap": rep.gamma_gap,
        "n_chains": len(rep.chains),
        "min_same_branch_gap": rep.min_same_branch_gap,
        "min_cross_branch_gap": rep.min_cross_branch_gap,
        "scaling_fit": {"beta": fit.beta, "c1": fit.c1, "c2": fit.c2, "n_points": fit.n_points},
        "predicted_beta": predicted,
    }
    art.write_json("gaps.json", summary)
    failures = []
    if check and predicted is not None and not abs(fit.beta - predicted) <= 0.2:
        failures.append(f"fitted beta {fit.beta:.3f} differs from {predicted:g} by more than 0.2")
    return summary, failures


def _moment_system(cfg, threads):
    p = cfg["_params"]
    modes = _symmetric_modes(p, cfg["N"])
    gamma = cfg["gamma_gap"]
    rep = gap_report(modes, gamma)
    T0 = ingham_threshold(p)
    T = cfg["T"] if cfg["T"] is not None else cfg["T_factor"] * T0
    ms = assemble_moment_system(
        modes,
        rep.chain_keys(),
        T,
        threshold=T0,
        divided_differences=cfg.get("divided_differences", True),
        allow_below_threshold=cfg["allow_below_threshold"],
        threads=threads,
    )
    return ms, rep


def run_observability(cfg, art: Artifacts, threads: int, check: bool):
    ms, rep = _moment_system(cfg, threads)
    spec = cfg["_space"]
    ev = np.linalg.eigvalsh(ms.gram)
    art.write("gram_eigenvalues.csv", csv_text(["k", "eigenvalue"], enumerate(ev)))
    const = observability_constants(ms, spec)
    summary = {
        "params": cfg["_params"].to_dict(),
        "T": ms.T,
        "threshold": ms.threshold,
        "N": ms.truncation,
        "n_modes": ms.size,
        "n_chains": len(ms.chains),
        "divided_differences": ms.divided_differences,
        "space": spec.to_dict(),
        "ell0_hat": const.ell0,
        "ell1_hat": const.ell1,
        "gram_eig_min": ms.eig_min,
        "gram_eig_max": ms.eig_max,
        "gram_condition": ms.condition,
    }
    failures = []
    if cfg["n_checks"]:
        rng = np.random.default_rng(cfg["seed"])
        t = np.linspace(0.0, ms.T, 2**14 + 1)
        w = spec.weights(ms.modes)
        worst = 0.0
        for _ in range(cfg["n_checks"]):
            x = rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)
            energy = romb(np.abs(family_output(ms, w * x, t)) ** 2, dx=t[1] - t[0])
            nx = float(np.vdot(x, x).real)
            lo, hi = const.ell1 * nx, const.ell0 * nx
            worst = max(worst, (lo - energy) / energy, (energy - hi) / energy)
        summary["sandwich_worst_violation"] = worst
        if check and worst > 1e-8:
            failures.append(f"observability sandwich violated by {worst:.3e}")
    art.write_json("observability.json", summary)
    return summary, failures


def run_control(cfg, art: Artifacts, threads: int, check: bool):
    ms, rep = _moment_system(cfg, threads)
    spec = cfg["_space"]
    target = cfg["_target"]
    if target == "random":
        target = random_symmetric_target(ms, np.random.default_rng(cfg["seed"]))
    result = hum_control(target, ms, spec, tol=cfg["tol"])
    v = result.control_samples.v
    if np.iscomplexobj(v):
        rows = zip(result.control_samples.t, v.real, v.imag)
        header = ["t", "v_re", "v_im"]
    else:
        rows = zip(result.control_samples.t, v)
        header = ["t", "v"]
    art.write("control.csv", csv_text(header, rows))
    art.write(
        "phi0.csv",
        csv_text(["branch", "n", "re", "im"], [(b, n, a.real, a.imag) for (b, n), a in zip(ms.modes, result.phi0_coeffs)]),
    )
    tnorm = dual_norm(target, spec)
    bound = tnorm / math.sqrt(result.ell1)
    summary = {
        "params": cfg["_params"].to_dict(),
        "T": ms.T,
        "threshold": ms.threshold,
        "N": ms.truncation,
        "space": spec.to_dict(),
        "target_norm": tnorm,
        "control_l2_norm": result.control_l2_norm,
        "duality_bound": bound,
        "residual_norm": result.residual_norm,
        "relative_residual": result.relative_residual,
        "solve_residual": result.solve_residual,
        "quadrature_error": result.quadrature_error,
        "gram_condition": result.gram_condition,
        "success": result.success,
    }
    art.write_json("control.json", summary)
    failures = []
    if check:
        if not result.success:
            failures.append(f"relative residual {result.relative_residual:.3e} exceeds tol {cfg['tol']:.1e}")
        if result.control_l2_norm > 1.1 * bound:
            failures.append("control norm exceeds the duality bound by more than 10%")
    return summary, failures


COMMANDS = {
    "spectrum": run_spectrum,
    "decay": run_decay,
    "gaps": run_gaps,
    "observability": run_observability,
    "control": run_control,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracbeam", description="Spectral, decay and control analyses of the fractionally damped Timoshenko beam.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config file; defaults are used for missing keys")
    ap.add_argument("--out", default=None, help="output directory (default: config output_dir or ./fracbeam-out/<command>)")
    ap.add_argument("--check", action="store_true", help="run the acceptance assertions for this command")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for index sweeps")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    err = sys.stderr
    if args.threads < 1:
        print("error: --threads must be >= 1", file=err)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config)
        out = Path(args.out or cfg.get("output_dir") or Path("fracbeam-out") / args.command)
        art = Artifacts(out)
        summary, failures = COMMANDS[args.command](cfg, art, args.threads, args.check)
    except (ConfigError, TargetOutsideSpan, FractionalDomainError) as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=err)
        return EXIT_NUMERIC
    art.flush(args.command, cfg)
    print(json.dumps(_jsonable(summary), sort_keys=True))
    if args.check:
        for f in failures:
            print(f"check failed: {f}", file=err)
        if failures:
            return EXIT_CHECK
        print("check passed", file=err)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
