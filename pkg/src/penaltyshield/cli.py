"""Command-line driver: JSON config in, ``results.csv`` and ``report.json`` out.

Subcommands::

    simulate    exact evolution, second-order predictions and bound checks
    check-code  code space and error-detection residual only
    psd         environment line spectrum of the bath operator
    bounds      PSD and gap-suppression bounds without time evolution

Exit status: 0 success, 1 bound violation under ``--strict``, 2 config
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .dynamics import run_experiment
from .model import (
    LocalTerm,
    PenaltyModel,
    build_hamiltonian,
    check_error_detection,
    equilibrium_state,
    locality_metadata,
)
from .operator_core import DimensionError, NotHermitianError, dagger, herm_eig, op_norm
from .perturbation import theorem1_loss
from .spectral import (
    NonEquilibriumError,
    ac_power,
    equilibrium_powers,
    psd_lines,
    verify_theorem3,
)
from .suppression_bounds import inequality_chain, calibrate_slack, q_factor, verify_theorem2

SCHEMA_VERSION = "penaltyshield-config/1"

CSV_COLUMNS = [
    "e_gap", "lambda", "t", "leakage", "fidelity_sq_raw", "fidelity_sq_ls_corrected",
    "thm1_prediction", "thm2_static", "thm2_dynamic", "cumulative_psd_at_half_gap",
]

DEFAULT_TOLERANCES = {
    "error_detection": 1e-10,
    "invariant": 1e-10,
    "commute": 1e-12,
}

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_TERM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["coefficient"],
    "properties": {
        "coefficient": {"type": "number"},
        "pauli": {"type": "string", "pattern": "^[IXYZ+-]+$"},
        "sites": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "factors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["site", "real"],
                "properties": {
                    "site": {"type": "integer", "minimum": 0},
                    "real": _MATRIX,
                    "imag": _MATRIX,
                },
            },
        },
    },
    "oneOf": [{"required": ["pauli", "sites"]}, {"required": ["factors"]}],
}
_TERMS = {"type": "array", "items": _TERM}
_DIMS = {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "lattice", "system", "environment", "coupling", "schedule"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "label": {"type": "string"},
        "lattice": {
            "type": "object",
            "additionalProperties": False,
            "required": ["system", "environment"],
            "properties": {"system": _DIMS, "environment": _DIMS},
        },
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["terms"],
            "properties": {
                "terms": _TERMS,
                "penalty_scale": {"type": "array", "minItems": 1,
                                  "items": {"type": "number", "exclusiveMinimum": 0}},
                "initial_state": {
                    "oneOf": [
                        {"enum": ["worst", "random"]},
                        {"type": "object", "additionalProperties": False, "required": ["real"],
                         "properties": {"real": {"type": "array", "items": {"type": "number"}},
                                        "imag": {"type": "array", "items": {"type": "number"}}}},
                    ]
                },
            },
        },
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["restricted"],
            "properties": {
                "restricted": _TERMS,
                "unrestricted": _TERMS,
                "state": {
                    "oneOf": [
                        {"type": "object", "additionalProperties": False, "required": ["kind"],
                         "properties": {"kind": {"const": "maximally_mixed"}}},
                        {"type": "object", "additionalProperties": False,
                         "required": ["kind", "beta"],
                         "properties": {"kind": {"const": "thermal"},
                                        "beta": {"type": "number", "minimum": 0}}},
                        {"type": "object", "additionalProperties": False,
                         "required": ["kind", "values"],
                         "properties": {"kind": {"const": "populations"},
                                        "values": {"type": "array",
                                                   "items": {"type": "number", "minimum": 0}}}},
                    ]
                },
            },
        },
        "coupling": {
            "type": "object",
            "additionalProperties": False,
            "required": ["system_op", "env_op", "lambda"],
            "properties": {
                "system_op": {**_TERMS, "minItems": 1},
                "env_op": {**_TERMS, "minItems": 1},
                "lambda": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "required": ["times"],
            "properties": {"times": {"type": "array", "items": {"type": "number", "minimum": 0}}},
        },
        "checks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "boolean"}
                           for k in ("run_theorem1", "run_theorem3", "run_theorem2")},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in DEFAULT_TOLERANCES},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` is a JSON pointer to the offending key."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class NumericalFailure(RuntimeError):
    """A type invariant was breached beyond tolerance."""


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


@dataclass
class ExperimentConfig:
    raw: dict
    path: str = ""

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def checks(self) -> dict:
        base = {"run_theorem1": True, "run_theorem3": True, "run_theorem2": True}
        base.update(self.raw.get("checks", {}))
        return base

    def tolerances(self, scale: float = 1.0) -> dict:
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.raw.get("tolerances", {}))
        return {k: v * scale for k, v in tol.items()}

    @property
    def penalty_scales(self) -> list:
        return [float(x) for x in self.raw["system"].get("penalty_scale", [1.0])]

    @property
    def lambdas(self) -> list:
        return [float(x) for x in self.raw["coupling"]["lambda"]]

    @property
    def times(self) -> list:
        return [float(x) for x in self.raw["schedule"]["times"]]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))


def _check_sites(terms, n_sites, pointer):
    for i, term in enumerate(terms):
        if "pauli" in term:
            if len(term["pauli"]) != len(term["sites"]):
                raise ConfigError(f"{pointer}/{i}/sites", "length differs from the Pauli string")
            sites = term["sites"]
        else:
            sites = [f["site"] for f in term["factors"]]
        if len(set(sites)) != len(sites):
            raise ConfigError(f"{pointer}/{i}", "repeated site in one term")
        for s in sites:
            if s >= n_sites:
                raise ConfigError(f"{pointer}/{i}", f"site {s} outside lattice of {n_sites} sites")


def validate_config(raw: dict) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if err is not None:
        raise ConfigError(_pointer(err.absolute_path), err.message)
    times = raw["schedule"]["times"]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ConfigError("/schedule/times", "times must be sorted ascending")
    if times and times[0] != 0:
        raise ConfigError("/schedule/times", "times must start at 0")
    n_sys = len(raw["lattice"]["system"])
    n_env = len(raw["lattice"]["environment"])
    _check_sites(raw["system"]["terms"], n_sys, "/system/terms")
    _check_sites(raw["coupling"]["system_op"], n_sys, "/coupling/system_op")
    _check_sites(raw["environment"]["restricted"], n_env, "/environment/restricted")
    _check_sites(raw["environment"].get("unrestricted", []), n_env, "/environment/unrestricted")
    _check_sites(raw["coupling"]["env_op"], n_env, "/coupling/env_op")
    return ExperimentConfig(raw)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("", f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    cfg = validate_config(raw)
    cfg.path = str(path)
    return cfg


def _term(spec: dict, unrestricted=False) -> LocalTerm:
    if "pauli" in spec:
        return LocalTerm.pauli(spec["coefficient"], spec["pauli"], spec["sites"], unrestricted)
    factors = []
    for f in spec["factors"]:
        mat = np.asarray(f["real"], dtype=float) + 1j * np.asarray(f.get("imag", 0.0), dtype=float)
        factors.append((int(f["site"]), mat))
    return LocalTerm(float(spec["coefficient"]), tuple(factors), unrestricted)


def _terms(specs, unrestricted=False):
    return [_term(s, unrestricted) for s in specs]


def _on_support(terms, sites, lattice) -> np.ndarray:
    """Sum of ``terms`` as a matrix on the listed sites only."""
    index = {s: i for i, s in enumerate(sites)}
    moved = [LocalTerm(t.coefficient, tuple((index[s], op) for s, op in t.factors),
                       t.unrestricted) for t in terms]
    return build_hamiltonian(moved, [lattice[s] for s in sites])


def _env_state_spec(raw):
    st = raw.get("state", {"kind": "maximally_mixed"})
    if st["kind"] == "thermal":
        return ("thermal", st["beta"])
    if st["kind"] == "populations":
        return ("populations", st["values"])
    return "maximally_mixed"


def build_model(cfg: ExperimentConfig | dict, penalty_scale: float = 1.0,
                commute_tol: float = DEFAULT_TOLERANCES["commute"]) -> PenaltyModel:
    """Materialise the configured model with ``H_S`` multiplied by ``penalty_scale``."""
    raw = cfg.raw if isinstance(cfg, ExperimentConfig) else cfg
    sys_lat = raw["lattice"]["system"]
    env_lat = raw["lattice"]["environment"]
    try:
        h_s = penalty_scale * build_hamiltonian(_terms(raw["system"]["terms"]), sys_lat)
        restricted = _terms(raw["environment"]["restricted"])
        unrestricted = _terms(raw["environment"].get("unrestricted", []), True)
        h_e = build_hamiltonian(restricted + unrestricted, env_lat)
        s_op = build_hamiltonian(_terms(raw["coupling"]["system_op"]), sys_lat)
        b_terms = _terms(raw["coupling"]["env_op"])
        b_op = build_hamiltonian(b_terms, env_lat)
        rho_e = equilibrium_state(h_e, _env_state_spec(raw["environment"]))
    except (ValueError, DimensionError, IndexError) as exc:
        if isinstance(exc, NotHermitianError):
            raise
        raise ConfigError("", str(exc)) from exc
    b_support = frozenset().union(*(t.support for t in b_terms))
    b_local = _on_support(b_terms, sorted(b_support), env_lat)
    meta = locality_metadata(restricted, unrestricted, b_support, env_lat, b_local, commute_tol)
    return PenaltyModel(h_s, h_e, [(s_op, b_op)], rho_e, meta, label=raw.get("label", ""))


def initial_state(cfg: ExperimentConfig, model: PenaltyModel, seed: int):
    """Configured code-space initial state, or ``None`` for the worst-coupled default."""
    spec = cfg.raw["system"].get("initial_state", "worst")
    if spec == "worst":
        return None
    p = model.code.projector
    if spec == "random":
        rng = np.random.default_rng(seed)
        v = rng.normal(size=p.shape[0]) + 1j * rng.normal(size=p.shape[0])
        v = p @ v
        return v / np.linalg.norm(v)
    v = np.asarray(spec["real"], dtype=float) + 1j * np.asarray(spec.get("imag", 0.0), dtype=float)
    if v.shape != (p.shape[0],):
        raise ConfigError("/system/initial_state", f"expected {p.shape[0]} amplitudes")
    if np.linalg.norm(v - p @ v) > 1e-10 * max(np.linalg.norm(v), 1.0):
        raise ConfigError("/system/initial_state", "state is not in the code space")
    return v / np.linalg.norm(v)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_summary(model: PenaltyModel, tol: dict) -> dict:
    residual, _ = check_error_detection(model.h_i(), model.code.projector)
    h_norm = op_norm(model.h_i())
    return {
        "e_gap": model.code.gap,
        "energy_shift": model.code.energy_shift,
        "code_rank": model.code.rank,
        "error_detection_residual": residual,
        "error_detection_holds": bool(residual <= tol["error_detection"] * max(h_norm, 1e-300)),
        "locality": model.meta.as_dict() if model.meta else None,
    }


def _check_record(rec, tol) -> None:
    eps = tol["invariant"]
    for name, vals, lo in (("leakage", rec.leakages, -eps),
                           ("fidelity", rec.fidelities_raw, 0.0),
                           ("fidelity", rec.fidelities_ls_corrected, 0.0)):
        arr = np.asarray(vals, dtype=float)
        arr = arr[~np.isnan(arr)]
        if arr.size and (arr.min() < lo or arr.max() > 1 + eps):
            raise NumericalFailure(f"{name} outside [0, 1] beyond tolerance {eps:g}")


def _simulate_point(args):
    cfg_raw, scale, lam, tol, seed = args
    cfg = ExperimentConfig(cfg_raw)
    start = time.perf_counter()
    model = build_model(cfg, scale, tol["commute"])
    summary = _model_summary(model, tol)
    lines = psd_lines(model.h_e, model.rho_e, model.b_op)
    times = cfg.times
    psi0 = initial_state(cfg, model, seed)
    rec = run_experiment(model, lam, times, psi0, keep_states=False, lines=lines)
    _check_record(rec, tol)
    out = {"penalty_scale": scale, "lambda": lam, **summary, "rows": rec.rows()}
    checks = cfg.checks
    violations = []
    if not summary["error_detection_holds"]:
        violations.append("error detection condition fails")
    if checks["run_theorem1"] and times:
        cal = calibrate_slack(model, lam, times, psi0, lines=lines)
        out["slack_c"] = cal.c
        out["slack_residuals"] = cal.max_residuals
        out["slack_halving_ratio"] = cal.ratio
    else:
        out["slack_c"] = 0.0
    if checks["run_theorem2"]:
        rep = verify_theorem2(rec, model, lam, out["slack_c"], lines=lines)
        out["theorem2"] = rep.as_dict()
        if not rep.all_satisfied:
            violations.append("gap-suppression bound or intermediate inequality violated")
    out["violations"] = violations
    out["wall_time_s"] = time.perf_counter() - start
    return out


def _theorem3_report(model: PenaltyModel, lines, n_max: int = 6) -> dict:
    total, diag = equilibrium_powers(model.h_e, model.rho_e, model.b_op)
    h_norm = op_norm(model.h_e)
    omegas = np.linspace(0.0, 2 * h_norm if h_norm > 0 else 1.0, 50)
    rows = verify_theorem3(lines, model.meta, op_norm(model.b_op), total, diag, omegas, n_max)
    return {"rows": rows, "violations": sum(not r["pass"] for r in rows),
            "worst_ratio": max((r["ratio"] for r in rows), default=0.0)}


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def cmd_simulate(cfg, out_dir: Path, jobs: int, seed: int, tol: dict) -> tuple[int, dict]:
    points = [(cfg.raw, s, lam, tol, seed) for s in cfg.penalty_scales for lam in cfg.lambdas]
    results = _map(_simulate_point, points, jobs)
    rows = []
    for res in sorted(results, key=lambda r: (r["e_gap"], r["lambda"])):
        rows.extend(sorted(res.pop("rows"), key=lambda r: r["t"]))
    write_csv(out_dir / "results.csv", rows)
    report = {"schema": SCHEMA_VERSION, "command": "simulate", "seed": seed,
              "tolerances": tol, "points": results}
    if cfg.checks["run_theorem3"]:
        model = build_model(cfg, cfg.penalty_scales[0], tol["commute"])
        report["theorem3"] = _theorem3_report(
            model, psd_lines(model.h_e, model.rho_e, model.b_op))
        if report["theorem3"]["violations"]:
            results[0]["violations"].append("PSD bound violated")
    violated = any(r["violations"] for r in results)
    report["violation"] = violated
    return violated, report


def cmd_check_code(cfg, out_dir, jobs, seed, tol):
    points = []
    for s in cfg.penalty_scales:
        model = build_model(cfg, s, tol["commute"])
        points.append({"penalty_scale": s, **_model_summary(model, tol)})
    violated = not all(p["error_detection_holds"] for p in points)
    return violated, {"schema": SCHEMA_VERSION, "command": "check-code", "points": points,
                      "tolerances": tol, "violation": violated}


def cmd_psd(cfg, out_dir, jobs, seed, tol):
    model = build_model(cfg, cfg.penalty_scales[0], tol["commute"])
    lines = psd_lines(model.h_e, model.rho_e, model.b_op)
    with open(out_dir / "psd.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "weight"])
        for f, p in zip(lines.frequencies, lines.weights):
            w.writerow([_fmt(f), _fmt(p)])
    return False, {"schema": SCHEMA_VERSION, "command": "psd", "n_lines": len(lines),
                   "total_power": lines.total_power, "ac_power": ac_power(lines),
                   "locality": model.meta.as_dict(), "violation": False}


def cmd_bounds(cfg, out_dir, jobs, seed, tol):
    base = build_model(cfg, cfg.penalty_scales[0], tol["commute"])
    lines = psd_lines(base.h_e, base.rho_e, base.b_op)
    report = {"schema": SCHEMA_VERSION, "command": "bounds", "tolerances": tol}
    violated = False
    if cfg.checks["run_theorem3"]:
        report["theorem3"] = _theorem3_report(base, lines)
        violated |= report["theorem3"]["violations"] > 0
    gaps = []
    if cfg.checks["run_theorem2"]:
        for s in cfg.penalty_scales:
            model = build_model(cfg, s, tol["commute"])
            p = model.code.projector
            decomp = herm_eig(model.h_s_shifted(), model.grouping_tol)
            s_sq = op_norm(p @ model.s_op @ dagger(model.s_op) @ p)
            chain = []
            for lam in cfg.lambdas:
                for t in cfg.times:
                    loss = theorem1_loss(model.s_op, decomp, p, lines, lam, t, model.code.gap)[0]
                    chain += inequality_chain(lines, model.code.gap, decomp.energies[1:], s_sq,
                                            op_norm(model.b_op), model.meta, lam, t, loss)
            ok = all(r["pass"] for r in chain)
            violated |= not ok
            gaps.append({"penalty_scale": s, "e_gap": model.code.gap,
                         "q_factor": q_factor(model.code.gap, model.meta),
                         "chain": chain, "all_pass": ok})
    report["theorem2"] = gaps
    report["violation"] = bool(violated)
    return bool(violated), report


COMMANDS = {
    "simulate": cmd_simulate,
    "check-code": cmd_check_code,
    "psd": cmd_psd,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="penaltyshield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker processes for sweep points")
        p.add_argument("--strict", action="store_true",
                       help="exit with status 1 on any bound violation")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="multiply every tolerance by this factor")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.tolerance_scale <= 0:
            raise ConfigError("", "--tolerance-scale must be positive")
        if args.jobs < 1:
            raise ConfigError("", "--jobs must be at least 1")
        seed = cfg.seed if args.seed is None else args.seed
        tol = cfg.tolerances(args.tolerance_scale)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        violated, report = COMMANDS[args.command](cfg, out_dir, args.jobs, seed, tol)
        report["wall_time_s"] = time.perf_counter() - start
        write_json(out_dir / "report.json", report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, NotHermitianError, NonEquilibriumError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if violated:
        print("bound violation (see report.json)", file=sys.stderr)
        return EXIT_VIOLATION if args.strict else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
