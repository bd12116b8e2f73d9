"""Command-line front end.

Usage::

    smallmass <command> [--config FILE] [--system NAME] [--output DIR] [--threads N]

Commands: ``simulate``, ``limit-coeffs``, ``converge``, ``momentum``,
``energy``, ``validate``. A config file (TOML or JSON) selects a builtin
system and its parameters plus per-command blocks; anything missing takes
the defaults of :class:`RunConfig`. Exit status: 0 success, 2 invalid
configuration, 3 experiment invalid (too many aborted paths), 1 any other
library error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConfigError, ExperimentInvalid, RegistryError, SmallMassError
from .experiments import Mode, energy_boundedness, momentum_decay_sweep, strong_error_sweep
from .homogenize import limiting_coeffs
from .noise import TimeGrid
from .registry import make_builtin
from .sde import Scheme, resolve_threads, sample_ensemble
from .validate import Box, check_assumptions, confinement_check

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

__all__ = ["RunConfig", "parse_config", "load_config", "run", "main"]

COMMANDS = ("simulate", "limit-coeffs", "converge", "momentum", "energy", "validate")
SCHEMA_VERSION = 1


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class GridConfig:
    T: float = 1.0
    steps: Optional[int] = None  # simulate only; sweeps always use dt_rule
    dt_rule: float = 20.0  # dt = eps / dt_rule


@dataclass
class EnsembleConfig:
    n_paths: int = 1000
    master_seed: int = 0
    scheme: str = "ExplicitEM"
    q0: Optional[List[float]] = None


@dataclass
class SweepConfig:
    eps_list: List[float] = field(default_factory=lambda: [2.0**-k for k in range(4, 10)])
    p: float = 2.0
    mode: str = "SupExpectation"
    q_order: float = 1.0
    include_noise_drift: bool = True


@dataclass
class SimulateConfig:
    eps: float = 0.01
    with_limit: bool = True
    long_format: bool = False


@dataclass
class LimitCoeffsConfig:
    t: float = 0.0
    q_min: float = -2.0
    q_max: float = 2.0
    points: int = 9


@dataclass
class ValidateConfig:
    t: List[float] = field(default_factory=lambda: [0.0, 1.0])
    q: List[float] = field(default_factory=lambda: [-5.0, 5.0])
    z: List[float] = field(default_factory=lambda: [-5.0, 5.0])
    samples: int = 4000
    eps_list: List[float] = field(default_factory=lambda: [1.0, 0.1, 0.01])
    seed: int = 0


@dataclass
class OutputConfig:
    directory: str = "smallmass-out"
    formats: List[str] = field(default_factory=lambda: ["json", "csv"])


_BLOCKS = {
    "grid": GridConfig,
    "ensemble": EnsembleConfig,
    "sweep": SweepConfig,
    "simulate": SimulateConfig,
    "limit_coeffs": LimitCoeffsConfig,
    "validate": ValidateConfig,
    "output": OutputConfig,
}


@dataclass
class RunConfig:
    """Validated run configuration; ``to_dict`` round-trips through :func:`parse_config`."""

    system: str
    params: dict = field(default_factory=dict)
    grid: GridConfig = field(default_factory=GridConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    limit_coeffs: LimitCoeffsConfig = field(default_factory=LimitCoeffsConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return dataclasses.asdict(self)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(where, name, hint, value):
    """Type-check ``value`` against the dataclass annotation string ``hint``."""
    optional = hint.startswith("Optional[")
    if optional:
        if value is None:
            return None
        hint = hint[len("Optional["):-1]
    if hint == "float":
        if not _is_number(value) or not math.isfinite(value):
            raise ConfigError(f"{where}.{name} must be a finite number, got {value!r}")
        return float(value)
    if hint == "int":
        if not _is_number(value) or int(value) != value:
            raise ConfigError(f"{where}.{name} must be an integer, got {value!r}")
        return int(value)
    if hint == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}.{name} must be true or false, got {value!r}")
        return value
    if hint == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}.{name} must be a string, got {value!r}")
        return value
    if hint == "List[float]":
        if not isinstance(value, list) or not all(_is_number(v) and math.isfinite(v) for v in value):
            raise ConfigError(f"{where}.{name} must be a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if hint == "List[str]":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{where}.{name} must be a list of strings, got {value!r}")
        return list(value)
    raise ConfigError(f"{where}.{name}: unsupported type {hint}")  # pragma: no cover


def _block(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {sorted(unknown)}")
    values = {k: _coerce(name, k, fields[k].type, v) for k, v in raw.items()}
    return cls(**values)


def _semantic_checks(cfg):
    g, e, s = cfg.grid, cfg.ensemble, cfg.sweep
    if not g.T > 0:
        raise ConfigError("grid.T must be positive")
    if g.steps is not None and g.steps < 1:
        raise ConfigError("grid.steps must be >= 1")
    if not g.dt_rule > 0:
        raise ConfigError("grid.dt_rule must be positive")
    if e.n_paths < 1:
        raise ConfigError("ensemble.n_paths must be >= 1")
    if not 0 <= e.master_seed < 2**64:
        raise ConfigError("ensemble.master_seed must be in [0, 2^64)")
    try:
        Scheme(e.scheme)
    except ValueError:
        raise ConfigError(f"ensemble.scheme must be one of {[m.value for m in Scheme]}") from None
    try:
        Mode(s.mode)
    except ValueError:
        raise ConfigError(f"sweep.mode must be one of {[m.value for m in Mode]}") from None
    if not s.eps_list or any(not x > 0 for x in s.eps_list):
        raise ConfigError("sweep.eps_list must be non-empty and positive")
    if any(b > a for a, b in zip(s.eps_list, s.eps_list[1:])):
        raise ConfigError("sweep.eps_list must be non-increasing")
    if not cfg.simulate.eps > 0:
        raise ConfigError("simulate.eps must be positive")
    lc = cfg.limit_coeffs
    if lc.points < 1 or not lc.q_max >= lc.q_min:
        raise ConfigError("limit_coeffs needs points >= 1 and q_max >= q_min")
    v = cfg.validate
    for name in ("t", "q", "z"):
        if len(getattr(v, name)) != 2:
            raise ConfigError(f"validate.{name} must be [lo, hi]")
    if v.samples < 1000:
        raise ConfigError("validate.samples must be >= 1000")
    bad = set(cfg.output.formats) - {"json", "csv"}
    if bad:
        raise ConfigError(f"output.formats: unknown format(s) {sorted(bad)}")
    if not cfg.output.directory:
        raise ConfigError("output.directory must be non-empty")


def parse_config(raw):
    """Build a :class:`RunConfig` from a parsed TOML/JSON mapping.

    Raises
    ------
    ConfigError
        Unknown keys, wrong types, or values out of range (including the
        builtin system's parameter schema).
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table/object")
    raw = dict(raw)
    raw.pop("schema_version", None)
    allowed = {"system", "params"} | set(_BLOCKS)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    if "system" not in raw or not isinstance(raw["system"], str):
        raise ConfigError("config needs a 'system' string naming a builtin")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("[params] must be a table")
    blocks = {name: _block(name, cls, raw.get(name, {})) for name, cls in _BLOCKS.items()}
    cfg = RunConfig(system=raw["system"], params=dict(params), **blocks)
    _semantic_checks(cfg)
    try:
        make_builtin(cfg.system, cfg.params)
    except RegistryError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path):
    """Read a ``.toml`` or ``.json`` config file."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        if str(path).endswith(".json"):
            raw = json.loads(data.decode())
        else:
            raw = tomllib.loads(data.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path!r}: {exc}") from None
    return parse_config(raw)


# --------------------------------------------------------------------------
# artifacts
# --------------------------------------------------------------------------


class _Out:
    """Writes files strictly inside the output directory."""

    def __init__(self, directory):
        self.root = os.path.realpath(directory)
        os.makedirs(self.root, exist_ok=True)
        self.written = []

    def path(self, *parts):
        p = os.path.realpath(os.path.join(self.root, *parts))
        if os.path.commonpath([p, self.root]) != self.root:
            raise ConfigError(f"refusing to write outside the output directory: {p}")
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def json(self, name, obj):
        p = self.path(name)
        with open(p, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        self.written.append(p)
        return p

    def csv(self, name, header, rows):
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if _is_number(x) else x for x in r])
        self.written.append(p)
        return p


def _envelope(cfg, command, body):
    return {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.to_dict(), **body}


def _grid(cfg, eps):
    g = cfg.grid
    if g.steps is not None:
        return TimeGrid(0.0, g.T, g.steps)
    return TimeGrid.from_dt(0.0, g.T, eps / g.dt_rule)


def _cmd_simulate(cfg, spec, out, threads):
    e, s = cfg.ensemble, cfg.simulate
    ens = sample_ensemble(
        spec, s.eps, _grid(cfg, s.eps), e.n_paths, e.master_seed,
        scheme=e.scheme, q0=e.q0, with_limit=s.with_limit, threads=threads,
    )
    files = []
    if "csv" in cfg.output.formats:
        files = ens.write_csv(out.path("trajectories"), long_format=s.long_format)
        out.written.extend(files)
    body = {
        "eps": s.eps,
        "steps": ens.grid.steps,
        "dt": ens.grid.dt,
        "n_paths": ens.n_paths,
        "master_seed": ens.master_seed,
        "aborted_paths": [int(i) for i in np.nonzero(~ens.alive)[0]],
        "files": sorted(os.path.relpath(f, out.root) for f in files),
    }
    out.json("simulate.json", _envelope(cfg, "simulate", body))


def _q_grid(n, lc):
    axis = np.linspace(lc.q_min, lc.q_max, lc.points)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _cmd_limit_coeffs(cfg, spec, out, threads):
    lc = cfg.limit_coeffs
    qs = _q_grid(spec.n, lc)
    d = limiting_coeffs(spec, lc.t, qs)
    points = []
    for i in range(len(qs)):
        points.append({
            "q": qs[i].tolist(),
            "gamma_tilde": d.gamma_tilde[i].tolist(),
            "gamma_tilde_inv": d.gamma_tilde_inv[i].tolist(),
            "Q": d.Q[i].tolist(),
            "J": d.J[i].tolist(),
            "S": d.S[i].tolist(),
            "limiting_drift": d.limiting_drift[i].tolist(),
            "limiting_diffusion": d.limiting_diffusion[i].tolist(),
        })
    if "json" in cfg.output.formats:
        out.json("limit_coeffs.json", _envelope(cfg, "limit-coeffs", {"t": lc.t, "points": points}))
    if "csv" in cfg.output.formats:
        n = spec.n
        header = [f"q_{i + 1}" for i in range(n)] + [f"S_{i + 1}" for i in range(n)] + [
            f"drift_{i + 1}" for i in range(n)
        ]
        rows = [list(qs[i]) + list(d.S[i]) + list(d.limiting_drift[i]) for i in range(len(qs))]
        out.csv("limit_coeffs.csv", header, rows)


def _write_report(cfg, command, report, out, stem):
    if "json" in cfg.output.formats:
        out.json(f"{stem}.json", _envelope(cfg, command, {"report": report.to_dict()}))
    if "csv" in cfg.output.formats:
        p = out.path(f"{stem}.csv")
        report.to_csv(p)
        out.written.append(p)


def _sweep_kw(cfg, threads):
    e = cfg.ensemble
    return dict(
        T=cfg.grid.T, n_paths=e.n_paths, master_seed=e.master_seed, dt_rule=cfg.grid.dt_rule,
        scheme=e.scheme, q0=e.q0, threads=threads,
    )


def _cmd_converge(cfg, spec, out, threads):
    s = cfg.sweep
    rep = strong_error_sweep(
        spec, s.eps_list, s.p, mode=s.mode, include_noise_drift=s.include_noise_drift,
        **_sweep_kw(cfg, threads),
    )
    _write_report(cfg, "converge", rep, out, "converge")
    print(f"slope {rep.slope:.4f} +/- {rep.slope_stderr:.4f} (p={rep.p:g}, {rep.mode})")


def _cmd_momentum(cfg, spec, out, threads):
    s = cfg.sweep
    rep = momentum_decay_sweep(spec, s.eps_list, s.p, **_sweep_kw(cfg, threads))
    _write_report(cfg, "momentum", rep, out, "momentum")
    print(f"slope {rep.slope:.4f} +/- {rep.slope_stderr:.4f} (p={rep.p:g})")


def _cmd_energy(cfg, spec, out, threads):
    s = cfg.sweep
    rep = energy_boundedness(spec, s.eps_list, s.q_order, **_sweep_kw(cfg, threads))
    _write_report(cfg, "energy", rep, out, "energy")
    print(f"max/min ratio {rep.ratio:.4f} (q_order={rep.q_order:g})")


def _cmd_validate(cfg, spec, out, threads):
    v = cfg.validate
    box = Box(t0=v.t[0], T=v.t[1], q=tuple(v.q), z=tuple(v.z))
    rep = check_assumptions(spec, box, v.samples, v.eps_list, seed=v.seed)
    conf = confinement_check(spec, box, v.samples, seed=v.seed)
    body = {"report": json.loads(rep.to_json()), "confinement": dataclasses.asdict(conf)}
    out.json("validate.json", _envelope(cfg, "validate", body))
    print(rep.table())
    print(f"confinement    {conf.status:<10} a={conf.a:.4g}, b={conf.b:.4g}")


_HANDLERS = {
    "simulate": _cmd_simulate,
    "limit-coeffs": _cmd_limit_coeffs,
    "converge": _cmd_converge,
    "momentum": _cmd_momentum,
    "energy": _cmd_energy,
    "validate": _cmd_validate,
}


def _parser():
    ap = argparse.ArgumentParser(prog="smallmass", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML or JSON run configuration")
    ap.add_argument("--system", help="builtin system (when no config file is given)")
    ap.add_argument("--output", help="output directory (overrides output.directory)")
    ap.add_argument("--threads", type=int, help="worker threads (default: $SMALLMASS_THREADS or 1)")
    return ap


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def _diag(code, kind, msg):
    msg = " ".join(str(msg).split())
    print(f"smallmass: error code={code} type={kind} msg={json.dumps(msg)}", file=sys.stderr)
    return code


def run(argv=None):
    """Run the CLI; returns the exit status instead of exiting."""
    ap = _parser()
    ap.__class__ = _Parser
    try:
        args = ap.parse_args(argv)
    except _ArgError as exc:
        return _diag(2, "UsageError", exc)
    try:
        if args.config:
            cfg = load_config(args.config)
            if args.system and args.system != cfg.system:
                raise ConfigError("--system conflicts with the config file")
        elif args.system:
            cfg = parse_config({"system": args.system})
        else:
            raise ConfigError("need --config or --system")
        if args.output:
            cfg.output.directory = args.output
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        return _diag(2, type(exc).__name__, exc)
    spec = make_builtin(cfg.system, cfg.params)
    try:
        out = _Out(cfg.output.directory)
        _HANDLERS[args.command](cfg, spec, out, threads)
    except ExperimentInvalid as exc:
        return _diag(3, "ExperimentInvalid", exc)
    except ConfigError as exc:
        return _diag(2, "ConfigError", exc)
    except SmallMassError as exc:
        return _diag(1, type(exc).__name__, exc)
    except ValueError as exc:  # argument checks inside the library; values come from the config
        return _diag(2, type(exc).__name__, exc)
    except OSError as exc:
        return _diag(1, "OSError", exc)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
