"""Batch command-line front end.

Invocation:  tangentstat <command> --config <path> [--out <path>] [--seed <n>]

Commands: simulate, liouville, micro, canon, compare, experiment.
The configuration is a flat, strictly validated key = value document
(# starts a comment). Unknown keys are rejected, every numeric value is
range-checked before dispatch, and all defaults are materialized and echoed
into the run manifest, so a manifest re-parses to the identical run.

Outputs are deterministic: identical (config, seed) produce byte-identical
output files (the manifest additionally records wall time and is exempt).
Exit codes: 0 success, 1 domain/numerical error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import canonical as _canonical
from . import dynamics as _dynamics
from . import experiments as _experiments
from . import microcanonical as _micro
from .errors import ConfigError, TangentStatError
from .model import Observable, PotentialSpec, SystemSpec, TangentPoint, UnitsConfig

COMMANDS = ("simulate", "liouville", "micro", "canon", "compare", "experiment")

# key name -> (type, default, required); type "floats" is a comma list
_SYSTEM_KEYS = {
    "kind": ("str", None, True),
    "omega": ("float", 1.0, False),
    "coeffs": ("floats", None, False),
    "a": ("float", 1.0, False),
    "dof": ("int", 1, False),
    "hbar": ("float", 1.0, False),
    "kb": ("float", 1.0, False),
    "label": ("str", "", False),
    "volume": ("float", 1.0, False),
    "n_particles": ("int", 1, False),
}

_COMMON_KEYS = {
    "command": ("str", None, False),
    "format": ("str", "csv", False),
    "out": ("str", None, False),
    "seed": ("int", None, False),
}

_COMMAND_KEYS = {
    "simulate": {
        "tau_end": ("float", None, True),
        "dtau": ("float", None, True),
        "q0": ("floats", None, False),
        "qtilde0": ("floats", None, False),
        "record_every": ("int", 1, False),
    },
    "liouville": {
        "tau_end": ("float", None, True),
        "dtau": ("float", None, True),
        "n_checkpoints": ("int", 33, False),
        "q_lo": ("float", 0.0, False),
        "q_hi": ("float", 1.0, False),
        "qt_lo": ("float", 0.0, False),
        "qt_hi": ("float", 1.0, False),
        "per_side": ("int", 64, False),
    },
    "micro": {
        "u": ("floats", None, True),
        "method": ("str", "quadrature", False),
        "budget": ("int", 100_000, False),
        "epsilon": ("float", 1e-3, False),
        "du": ("float", 1e-4, False),
        "n_streams": ("int", 4, False),
    },
    "canon": {
        "beta": ("floats", None, True),
        "method": ("str", "quadrature", False),
        "budget": ("int", 100_000, False),
        "dbeta": ("float", None, False),
        "n_streams": ("int", 4, False),
    },
    "compare": {
        "beta": ("float", None, True),
        "method": ("str", "quadrature", False),
        "budget": ("int", 100_000, False),
        "n_streams": ("int", 4, False),
    },
    "experiment": {
        "experiment": ("str", None, True),
        "beta": ("float", 1.0, False),
        "u": ("float", 1.0, False),
        "n_bath": ("int", 50, False),
        "e_total": ("float", 50.0, False),
        "n_samples": ("int", 200_000, False),
        "n_bins": ("int", 60, False),
        "n1": ("int", 1, False),
        "n2": ("int", 2, False),
        "u_total": ("float", 3.0, False),
        "grid": ("int", 201, False),
        "observable": ("str", "energy", False),
        "cloud": ("str", "canonical", False),
        "cloud_beta": ("float", 1.0, False),
        "cloud_mean": ("float", 1.0, False),
        "cloud_scale": ("float", 0.1, False),
        "tau_end": ("float", 3.0, False),
        "dtau": ("float", 1e-3, False),
        "n_checkpoints": ("int", 21, False),
    },
}

_CHOICES = {
    "kind": ("harmonic", "polynomial", "double_well"),
    "format": ("csv", "json"),
    "command": COMMANDS,
    "experiment": ("ho_reference", "bath_emergence", "zeroth_law",
                   "ensemble_evolution"),
    "observable": ("energy", "kinetic", "potential", "coordinate", "velocity",
                   "q_squared"),
    "cloud": ("canonical", "shifted_gaussian"),
}

_METHOD_CHOICES = {
    "micro": ("analytic", "quadrature", "hit-or-miss"),
    "canon": ("analytic", "quadrature", "importance-mc"),
    "compare": ("quadrature", "importance-mc"),
}

# (key, command) pairs requiring value > 0 or >= bound
_POSITIVE = {"omega", "a", "hbar", "kb", "tau_end", "dtau", "epsilon", "du",
             "dbeta", "e_total", "u_total", "cloud_scale", "beta"}
_AT_LEAST_ONE = {"dof", "record_every", "budget", "n_streams", "per_side",
                 "thinning", "n1", "n2", "n_particles"}


@dataclass(frozen=True)
class RunConfig:
    """A fully validated, default-materialized run description."""

    command: str
    system: SystemSpec
    params: dict = field(default_factory=dict)
    format: str = "csv"
    out: str | None = None
    seed: int | None = None

    def echo(self) -> dict:
        """Flat key -> value mapping of every resolved setting."""
        sysmap = {"kind": self.system.potential.kind, "dof": self.system.dof,
                  "hbar": self.system.units.hbar, "kb": self.system.units.kB,
                  "label": self.system.label, "volume": self.system.volume,
                  "n_particles": self.system.n_particles}
        if self.system.potential.kind == "harmonic":
            sysmap["omega"] = self.system.potential.omega
        elif self.system.potential.kind == "polynomial":
            sysmap["coeffs"] = list(self.system.potential.coeffs)
        else:
            sysmap["a"] = self.system.potential.a
        out = {"command": self.command, "format": self.format}
        if self.out is not None:
            out["out"] = self.out
        if self.seed is not None:
            out["seed"] = self.seed
        out.update(sysmap)
        out.update(self.params)
        return out


def render_config(mapping: dict) -> str:
    """Inverse of parse_config for an echoed mapping."""
    lines = []
    for key, val in mapping.items():
        if val is None or val == "":
            continue
        if isinstance(val, (list, tuple)):
            lines.append(f"{key} = {','.join(repr(float(v)) for v in val)}")
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def _parse_value(key: str, raw: str, typ: str, line_no: int):
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "floats":
            return [float(part) for part in raw.split(",") if part.strip() != ""]
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} as {typ}",
                          code="syntax", line=line_no, key=key) from None


def _range_check(key: str, val, line_no: int, command: str):
    if val is None:
        return
    if key in _CHOICES and val not in _CHOICES[key]:
        raise ConfigError(f"value {val!r} not in {list(_CHOICES[key])}",
                          code="out-of-range", line=line_no, key=key)
    if key == "method" and val not in _METHOD_CHOICES.get(command, (val,)):
        raise ConfigError(
            f"value {val!r} not in {list(_METHOD_CHOICES[command])}",
            code="out-of-range", line=line_no, key=key)
    if key in _POSITIVE and isinstance(val, (int, float)):
        if not (math.isfinite(val) and val > 0):
            raise ConfigError(f"value {val} must be > 0",
                              code="out-of-range", line=line_no, key=key)
    if key in _AT_LEAST_ONE and val < 1:
        raise ConfigError(f"value {val} must be >= 1",
                          code="out-of-range", line=line_no, key=key)
    if key == "u" and isinstance(val, list):
        for v in val:
            if not math.isfinite(v):
                raise ConfigError("u values must be finite",
                                  code="out-of-range", line=line_no, key=key)
    if key == "beta" and isinstance(val, list):
        for v in val:
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"beta value {v} must be > 0",
                                  code="out-of-range", line=line_no, key=key)
    if key == "seed" and val is not None and val < 0:
        raise ConfigError("seed must be >= 0", code="out-of-range",
                          line=line_no, key=key)


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    ``command`` (from the CLI subcommand) is authoritative; a ``command``
    key inside the document must agree with it when both are present.
    """
    raw: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", code="syntax",
                              line=line_no)
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not key or not value:
            raise ConfigError("expected 'key = value'", code="syntax",
                              line=line_no)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", code="syntax",
                              line=line_no, key=key)
        raw[key] = (value, line_no)

    doc_command = raw.get("command", (None, 0))[0]
    if command is None:
        command = doc_command
    if command is None:
        raise ConfigError("no command given (CLI subcommand or 'command' key)",
                          code="missing-key", key="command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", code="out-of-range",
                          key="command", line=raw.get("command", (None, None))[1])
    if doc_command is not None and doc_command != command:
        raise ConfigError(
            f"config says command={doc_command!r} but {command!r} was invoked",
            code="out-of-range", key="command", line=raw["command"][1])

    allowed = dict(_SYSTEM_KEYS)
    allowed.update(_COMMON_KEYS)
    allowed.update(_COMMAND_KEYS[command])
    for key, (_, line_no) in raw.items():
        if key not in allowed:
            raise ConfigError("unknown key (mass is fixed at 1; see docs for "
                              "the key list)" if key == "mass" else "unknown key",
                              code="unknown-key", line=line_no, key=key)

    values: dict[str, object] = {}
    for key, (typ, default, required) in allowed.items():
        if key in raw:
            val = _parse_value(key, raw[key][0], typ, raw[key][1])
            _range_check(key, val, raw[key][1], command)
            values[key] = val
        elif required:
            raise ConfigError(f"required key {key!r} is missing",
                              code="missing-key", key=key)
        else:
            values[key] = default

    system = _build_system(values, raw)
    params = {k: values[k] for k in _COMMAND_KEYS[command]}
    _validate_params(command, params, values, raw)
    return RunConfig(command=command, system=system, params=params,
                     format=values["format"], out=values["out"],
                     seed=values["seed"])


def _build_system(values: dict, raw: dict) -> SystemSpec:
    kind = values["kind"]
    try:
        if kind == "harmonic":
            pot = PotentialSpec.harmonic(values["omega"])
        elif kind == "polynomial":
            coeffs = values["coeffs"]
            if coeffs is None:
                raise ConfigError("polynomial potential needs 'coeffs'",
                                  code="missing-key", key="coeffs")
            pot = PotentialSpec.polynomial(coeffs)
        else:
            pot = PotentialSpec.double_well(values["a"])
        units = UnitsConfig(hbar=values["hbar"], kB=values["kb"])
        return SystemSpec(dof=values["dof"], potential=pot, units=units,
                          label=values["label"], volume=values["volume"],
                          n_particles=values["n_particles"])
    except TangentStatError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), code="out-of-range", key="kind") from exc


def _validate_params(command: str, params: dict, values: dict, raw: dict):
    def err(key, message):
        line = raw[key][1] if key in raw else None
        raise ConfigError(message, code="out-of-range", line=line, key=key)

    if command == "simulate":
        d = values["dof"]
        for key in ("q0", "qtilde0"):
            if params[key] is None:
                params[key] = [0.0] * d
            elif len(params[key]) != d:
                err(key, f"{key} must list {d} values (one per coordinate)")
    if command == "liouville":
        if values["dof"] != 1:
            err("dof", "liouville (area tracking) requires dof = 1")
        if not (params["q_hi"] > params["q_lo"]
                and params["qt_hi"] > params["qt_lo"]):
            err("q_hi", "polygon needs q_hi > q_lo and qt_hi > qt_lo")
        if params["n_checkpoints"] < 2:
            err("n_checkpoints", "need at least 2 checkpoints")
    if command == "experiment":
        exp = params["experiment"]
        if exp == "ho_reference" and values["kind"] != "harmonic":
            err("kind", "ho_reference requires kind = harmonic")
        if exp == "ensemble_evolution" and params["n_checkpoints"] < 7:
            err("n_checkpoints", "ensemble_evolution needs >= 7 checkpoints")


def _needs_seed(cfg: RunConfig) -> bool:
    if cfg.command == "micro":
        return cfg.params["method"] == "hit-or-miss"
    if cfg.command in ("canon", "compare"):
        return cfg.params["method"] == "importance-mc"
    if cfg.command == "experiment":
        return cfg.params["experiment"] in ("bath_emergence",
                                            "ensemble_evolution")
    return False


# ---------------------------------------------------------------------------
# command execution


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, columns: list[str], rows: list[list]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _run_simulate(cfg: RunConfig):
    p = cfg.params
    x0 = TangentPoint(q=p["q0"], qtilde=p["qtilde0"])
    traj = _dynamics.integrate(cfg.system, x0, p["tau_end"], p["dtau"])
    energies = traj.energies(cfg.system)
    d = cfg.system.dof
    columns = (["tau"] + [f"q{i}" for i in range(d)]
               + [f"qtilde{i}" for i in range(d)] + ["energy"])
    rows = []
    step = p["record_every"]
    idx = list(range(0, len(traj), step))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    for i in idx:
        rows.append([float(traj.taus[i])] + [float(v) for v in traj.qs[i]]
                    + [float(v) for v in traj.qtildes[i]] + [float(energies[i])])
    return columns, rows


def _run_liouville(cfg: RunConfig):
    p = cfg.params
    poly = _dynamics.TangentPolygon.rectangle(
        p["q_lo"], p["q_hi"], p["qt_lo"], p["qt_hi"], per_side=p["per_side"])
    areas = _dynamics.area_evolution(cfg.system, poly, p["tau_end"], p["dtau"],
                                     n_checkpoints=p["n_checkpoints"])
    centroid = TangentPoint(q=[float(np.mean(poly.qs))],
                            qtilde=[float(np.mean(poly.qtildes))])
    rows = []
    for tau, area in areas:
        det = _dynamics.jacobian_determinant(cfg.system, centroid, tau,
                                             p["dtau"])
        rows.append([tau, area, det])
    return ["tau", "area", "det_jacobian"], rows


def _run_micro(cfg: RunConfig):
    p = cfg.params
    rows = []
    for u in p["u"]:
        vol = _micro.volume_below(cfg.system, u, method=p["method"],
                                  budget=p["budget"], seed=cfg.seed,
                                  n_streams=p["n_streams"])
        sig = _micro.shell_density(cfg.system, u, epsilon=p["epsilon"],
                                   method=p["method"], budget=p["budget"],
                                   seed=_sub_seed(cfg.seed, 1),
                                   n_streams=p["n_streams"])
        ent = _micro.entropy_micro(cfg.system, u, method=p["method"],
                                   budget=p["budget"],
                                   seed=_sub_seed(cfg.seed, 2),
                                   n_streams=p["n_streams"])
        temp = _micro.temperature_micro(cfg.system, u, dU=p["du"],
                                        method=p["method"], budget=p["budget"],
                                        seed=_sub_seed(cfg.seed, 3),
                                        n_streams=p["n_streams"])
        rows.append([float(u), vol.omega, sig.sigma, ent.S, temp.T,
                     vol.stderr])
    return ["U", "omega", "sigma", "S", "T", "stderr"], rows


def _sub_seed(seed, k):
    return None if seed is None else [seed, k]


def _run_canon(cfg: RunConfig):
    p = cfg.params
    rows = []
    for beta in p["beta"]:
        res = _canonical.thermodynamics(cfg.system, beta, dbeta=p["dbeta"],
                                        method=p["method"], budget=p["budget"],
                                        seed=cfg.seed,
                                        n_streams=p["n_streams"])
        rows.append([float(beta), res.Z, res.U, res.F, res.S, res.stderr])
    return ["beta", "Z", "U", "F", "S", "stderr"], rows


def _run_compare(cfg: RunConfig):
    p = cfg.params
    res = _canonical.hamiltonian_equivalence(cfg.system, p["beta"],
                                             method=p["method"],
                                             budget=p["budget"], seed=cfg.seed,
                                             n_streams=p["n_streams"])
    return (["beta", "z_lagrangian", "z_hamiltonian", "ratio"],
            [[res.beta, res.z_lagrangian, res.z_hamiltonian, res.ratio]])


_PRIMARY_TABLE = {"ho_reference": "reference", "bath_emergence": "histogram",
                  "zeroth_law": "entropy_scan",
                  "ensemble_evolution": "evolution"}


def _cli_observable(name: str) -> Observable:
    if name == "q_squared":
        return Observable.monomial(q_powers=(2,))
    if name == "coordinate":
        return Observable.coordinate(0)
    if name == "velocity":
        return Observable.velocity(0)
    return Observable(kind=name, label=name)


def _run_experiment(cfg: RunConfig):
    p = cfg.params
    exp = p["experiment"]
    if exp == "ho_reference":
        report = _experiments.ho_reference(cfg.system.potential.omega,
                                           p["beta"], p["u"],
                                           units=cfg.system.units)
    elif exp == "bath_emergence":
        report = _experiments.bath_emergence(p["n_bath"], p["e_total"],
                                             p["n_samples"], p["n_bins"],
                                             seed=cfg.seed)
    elif exp == "zeroth_law":
        report = _experiments.zeroth_law_contact(p["n1"], p["n2"],
                                                 p["u_total"], grid=p["grid"],
                                                 units=cfg.system.units)
    else:
        cloud = (_experiments.CloudSpec.canonical(p["cloud_beta"])
                 if p["cloud"] == "canonical"
                 else _experiments.CloudSpec.shifted_gaussian(
                     p["cloud_mean"], p["cloud_scale"]))
        report = _experiments.ensemble_average_evolution(
            cfg.system, _cli_observable(p["observable"]), cloud,
            p["tau_end"], p["dtau"], p["n_samples"], seed=cfg.seed,
            n_checkpoints=p["n_checkpoints"])
    return report


def run_command(cfg: RunConfig, out_path: str | None = None) -> int:
    """Execute a validated run, writing the output file and its manifest."""
    t_start = time.perf_counter()
    out = out_path or cfg.out or f"tangentstat_{cfg.command}.{cfg.format}"
    if _needs_seed(cfg) and cfg.seed is None:
        raise ConfigError("this run is stochastic; a seed is mandatory "
                          "(config key 'seed' or --seed)", code="missing-seed",
                          key="seed")
    try:
        if cfg.command == "experiment":
            report = _run_experiment(cfg)
            if cfg.format == "json":
                _write_json(out, report.to_json_dict())
            else:
                table = report.tables[_PRIMARY_TABLE[cfg.params["experiment"]]]
                _write_csv(out, table["columns"], table["rows"])
        else:
            runner = {"simulate": _run_simulate, "liouville": _run_liouville,
                      "micro": _run_micro, "canon": _run_canon,
                      "compare": _run_compare}[cfg.command]
            columns, rows = runner(cfg)
            if cfg.format == "json":
                payload = {"command": cfg.command,
                           "results": [dict(zip(columns, row)) for row in rows]}
                _write_json(out, payload)
            else:
                _write_csv(out, columns, rows)
    except TangentStatError as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        if isinstance(exc, ConfigError):
            raise
        _write_json(out + ".error.json", record)
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    manifest = {"command": cfg.command, "config": cfg.echo(),
                "seed": cfg.seed, "version": __version__,
                "wall_time_s": time.perf_counter() - t_start,
                "output": out}
    _write_json(out + ".manifest.json", manifest)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tangentstat",
        description="Statistical mechanics on the tangent bundle: "
                    "imaginary-time flows and ensemble computations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cp = sub.add_parser(name)
        cp.add_argument("--config", required=True,
                        help="path to the key = value configuration")
        cp.add_argument("--out", default=None, help="output file path")
        cp.add_argument("--seed", type=int, default=None,
                        help="overrides the config seed")
    args = parser.parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, command=args.command)
        if args.seed is not None:
            cfg = RunConfig(command=cfg.command, system=cfg.system,
                            params=cfg.params, format=cfg.format,
                            out=cfg.out, seed=args.seed)
        return run_command(cfg, out_path=args.out)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except TangentStatError as exc:
        print(json.dumps({"error": {"type": type(exc).__name__,
                                    "message": str(exc)}}, sort_keys=True),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
