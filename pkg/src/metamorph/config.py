"""Experiment configuration: JSON schema, validation and object construction."""

import copy
import json
import os

import jsonschema
import numpy as np

from .ch2 import Ch2System, Grid1D, dealias, peakon_init, periodic_bump
from .errors import ConfigError, MetamorphError
from .fda import AmplitudeField, Bump, FdaSpec, Template
from .kernels import KernelSpec
from .landmarks import LandmarkSystem
from .noise import DeformationNoiseField, load_grid_noise
from .sde import METHODS

SCENARIOS = ("landmark_sde", "ch2_sde", "landmark_match", "fda_generate", "convergence_study")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_points = {"type": "array", "items": _vec, "minItems": 1}

_bump_field = {
    "type": "object",
    "properties": {"center": _vec, "width": _pos, "amplitude": _vec, "constant": {"type": "boolean"}},
    "required": ["amplitude"],
    "additionalProperties": False,
}
_scalar_bump = {
    "type": "object",
    "properties": {"center": _num, "width": _pos, "amplitude": _num},
    "required": ["center", "width", "amplitude"],
    "additionalProperties": False,
}
_grid_file = {
    "type": "object",
    "properties": {"grid_values_file": {"type": "string"}},
    "required": ["grid_values_file"],
    "additionalProperties": False,
}
_bump1d = {
    "type": "object",
    "properties": {"center": _num, "width": _pos, "height": _num},
    "required": ["center", "width", "height"],
    "additionalProperties": False,
}

LANDMARK_SYSTEM = {
    "type": "object",
    "properties": {
        "type": {"const": "landmarks"},
        "kernel": {
            "type": "object",
            "properties": {"family": {"enum": ["gaussian"]}, "r": _pos, "g": _pos},
            "additionalProperties": False,
        },
        "lambda": _nonneg,
        "q0": _points,
        "p0": _points,
        "noise": {
            "type": "object",
            "properties": {
                "sigma_u": {"type": "array", "items": _bump_field},
                "sigma_nu": {
                    "type": "object",
                    "properties": {"per_landmark": _points},
                    "required": ["per_landmark"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "tracers": _points,
    },
    "required": ["type", "lambda", "q0"],
    "additionalProperties": False,
}

CH2_SYSTEM = {
    "type": "object",
    "properties": {
        "type": {"const": "ch2"},
        "grid": {
            "type": "object",
            "properties": {"L": _pos, "N": {"type": "integer", "minimum": 2, "multipleOf": 2}},
            "required": ["L", "N"],
            "additionalProperties": False,
        },
        "alpha": _pos,
        "initial": {
            "type": "object",
            "properties": {
                "peakons": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"c": _num, "x0": _num},
                        "required": ["c", "x0"],
                        "additionalProperties": False,
                    },
                },
                "rho": {
                    "type": "object",
                    "properties": {"offset": _num, "bumps": {"type": "array", "items": _bump1d}},
                    "additionalProperties": False,
                },
                "project": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "noise": {
            "type": "object",
            "properties": {
                "sigma_u": {"oneOf": [{"type": "array", "items": _scalar_bump}, _grid_file]},
                "sigma_nu": {"oneOf": [{"type": "array", "items": _scalar_bump}, _grid_file]},
            },
            "additionalProperties": False,
        },
        "dealias": {"type": "boolean"},
    },
    "required": ["type", "grid", "alpha", "initial"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "metamorph experiment",
    "type": "object",
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "system": {"oneOf": [LANDMARK_SYSTEM, CH2_SYSTEM]},
        "integrator": {
            "type": "object",
            "properties": {"method": {"enum": list(METHODS)}, "T": _pos, "steps": _posint},
            "additionalProperties": False,
        },
        "ensemble": {
            "type": "object",
            "properties": {
                "base_seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                "realizations": _posint,
                "block_size": _posint,
                "max_failure_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "dump_trajectories": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "match": {
            "type": "object",
            "properties": {
                "q_target": _points,
                "tol": _pos,
                "max_iterations": _posint,
                "mode": {"enum": ["exact", "penalty"]},
                "penalty_sigma": _pos,
            },
            "required": ["q_target"],
            "additionalProperties": False,
        },
        "fda": {
            "type": "object",
            "properties": {
                "template": {
                    "type": "object",
                    "properties": {
                        "bumps": {"type": "array", "items": _bump1d},
                        "offset": _num,
                        "values": {"type": "array", "items": _num, "minItems": 4},
                    },
                    "additionalProperties": False,
                },
                "warp_fields": {"type": "array", "items": _bump1d},
                "amplitude_fields": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"amplitude": _num, "center": _num, "width": _pos},
                        "required": ["amplitude"],
                        "additionalProperties": False,
                    },
                },
                "obs_noise": _nonneg,
                "n_samples": {"type": "integer", "minimum": 2},
                "n_signals": _posint,
                "T": _pos,
                "steps": _posint,
                "u0": _num,
                "nu0": _num,
            },
            "required": ["template"],
            "additionalProperties": False,
        },
        "convergence": {
            "type": "object",
            "properties": {
                "levels": {"type": "array", "items": {"type": "integer", "minimum": 0},
                           "minItems": 2, "maxItems": 2},
                "paths": _posint,
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}},
                "output_times": {"type": "array", "items": _nonneg},
            },
            "additionalProperties": False,
        },
    },
    "required": ["scenario"],
    "additionalProperties": False,
}

_NEEDS = {
    "landmark_sde": ("system", "integrator"),
    "ch2_sde": ("system", "integrator"),
    "landmark_match": ("system", "integrator", "match"),
    "fda_generate": ("fda",),
    "convergence_study": ("system", "integrator"),
}


def _path(parts):
    return ".".join(str(p) for p in parts)


def _schema_error(err):
    # prefer the most specific failure inside oneOf branches
    best = jsonschema.exceptions.best_match([err])
    parts = list(best.absolute_path)
    if best.validator == "required":
        missing = [k for k in best.validator_value if k not in (best.instance or {})]
        parts += missing[:1]
    return ConfigError(_path(parts) or "<root>", best.message)


def validate(cfg, base_dir="."):
    """Check ``cfg`` against the schema and scenario rules; raise ``ConfigError``."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        sysd = cfg.get("system") if isinstance(cfg, dict) else None
        # oneOf on "system" hides the real field; re-validate against the chosen branch
        if isinstance(sysd, dict) and sysd.get("type") in ("landmarks", "ch2"):
            sub = LANDMARK_SYSTEM if sysd["type"] == "landmarks" else CH2_SYSTEM
            sub_errors = list(jsonschema.Draft202012Validator(sub).iter_errors(sysd))
            if sub_errors:
                e = _schema_error(jsonschema.exceptions.best_match(sub_errors))
                raise ConfigError("system." + e.path if e.path != "<root>" else "system",
                                  str(e).split(": ", 1)[-1])
        raise _schema_error(jsonschema.exceptions.best_match(errors))
    scen = cfg["scenario"]
    for block in _NEEDS[scen]:
        if block not in cfg:
            raise ConfigError(block, f"required for scenario {scen!r}")
    sysd = cfg.get("system")
    if scen in ("landmark_sde", "landmark_match") and sysd["type"] != "landmarks":
        raise ConfigError("system.type", f"scenario {scen!r} needs a landmark system")
    if scen == "ch2_sde" and sysd["type"] != "ch2":
        raise ConfigError("system.type", "scenario 'ch2_sde' needs a ch2 system")
    if sysd is not None:
        if sysd["type"] == "landmarks":
            _check_landmarks(sysd, scen)
        else:
            _check_ch2(sysd, base_dir)
    if scen == "landmark_match":
        qt = np.asarray(cfg["match"]["q_target"], float)
        if qt.shape != np.asarray(sysd["q0"], float).shape:
            raise ConfigError("match.q_target", "must have the same shape as system.q0")
    if scen == "fda_generate":
        fd = cfg["fda"]
        tpl = fd["template"]
        if ("values" in tpl) == bool(tpl.get("bumps")):
            raise ConfigError("fda.template", "give exactly one of 'bumps' or 'values'")
        for key in ("u0", "nu0"):
            if fd.get(key, 0) != 0:
                raise ConfigError(f"fda.{key}", "only zero initial momenta are supported")
    if "integrator" in cfg and "output" in cfg and cfg["output"].get("output_times"):
        T = cfg["integrator"].get("T", 1.0)
        M = cfg["integrator"].get("steps", 100)
        for i, t in enumerate(cfg["output"]["output_times"]):
            k = round(t * M / T)
            if t > T * (1 + 1e-12) or abs(k * T / M - t) > 1e-9 * max(T, 1.0):
                raise ConfigError(f"output.output_times.{i}", f"{t} is not on the time grid")
    return cfg


def _check_landmarks(sysd, scen):
    q0 = np.asarray(sysd["q0"], float)
    if q0.ndim != 2:
        raise ConfigError("system.q0", "must be a list of equal-length points")
    n, d = q0.shape
    if "p0" in sysd and np.asarray(sysd["p0"], float).shape != (n, d):
        raise ConfigError("system.p0", f"must have shape ({n}, {d}) like q0")
    noise = sysd.get("noise", {})
    for i, f in enumerate(noise.get("sigma_u", [])):
        where = f"system.noise.sigma_u.{i}"
        if len(f["amplitude"]) != d:
            raise ConfigError(where + ".amplitude", f"must have {d} components")
        if not f.get("constant", False):
            for key in ("center", "width"):
                if key not in f:
                    raise ConfigError(f"{where}.{key}", "required for a non-constant field")
            if len(f["center"]) != d:
                raise ConfigError(where + ".center", f"must have {d} components")
    if "sigma_nu" in noise:
        nu = np.asarray(noise["sigma_nu"]["per_landmark"], float)
        if nu.shape != (n, d):
            raise ConfigError("system.noise.sigma_nu.per_landmark",
                              f"needs one {d}-vector per landmark ({n})")
    if "tracers" in sysd and np.asarray(sysd["tracers"], float).shape[-1] != d:
        raise ConfigError("system.tracers", f"points must have {d} components")
    if scen == "landmark_match" and noise and (noise.get("sigma_u") or noise.get("sigma_nu")):
        raise ConfigError("system.noise", "matching uses the noise-free flow")


def _check_ch2(sysd, base_dir):
    N = sysd["grid"]["N"]
    for key in ("sigma_u", "sigma_nu"):
        spec = sysd.get("noise", {}).get(key)
        if isinstance(spec, dict):
            path = _resolve(spec["grid_values_file"], base_dir)
            if not os.path.exists(path):
                raise ConfigError(f"system.noise.{key}.grid_values_file", f"file not found: {path}")
            vals = load_grid_noise(path)
            if vals.shape[-1] != N:
                raise ConfigError(f"system.noise.{key}.grid_values_file",
                                  f"expected {N} rows (one per grid node), got {vals.shape[-1]}")


def _resolve(path, base_dir):
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def load(path):
    """Read and validate a config file; returns ``(cfg, base_dir)``."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError("", f"invalid JSON: {e}")
    base = os.path.dirname(os.path.abspath(path))
    validate(cfg, base)
    return cfg, base


def with_defaults(cfg):
    """Return a copy with every optional block filled in, for the manifest echo."""
    c = copy.deepcopy(cfg)
    integ = c.setdefault("integrator", {}) if "system" in c else c.get("integrator")
    if integ is not None:
        integ.setdefault("method", "heun")
        integ.setdefault("T", 1.0)
        integ.setdefault("steps", 100)
    ens = c.setdefault("ensemble", {})
    ens.setdefault("base_seed", 0)
    ens.setdefault("realizations", 1)
    ens.setdefault("block_size", 256)
    ens.setdefault("max_failure_fraction", 0.01)
    ens.setdefault("dump_trajectories", False)
    out = c.setdefault("output", {})
    out.setdefault("directory", "out")
    out.setdefault("formats", ["json", "csv"])
    if c["scenario"] == "convergence_study":
        conv = c.setdefault("convergence", {})
        conv.setdefault("levels", [6, 9])
        conv.setdefault("paths", 200)
    if c["scenario"] == "landmark_match":
        m = c["match"]
        m.setdefault("tol", 1e-8)
        m.setdefault("max_iterations", 50)
        m.setdefault("mode", "exact")
        m.setdefault("penalty_sigma", 0.1)
    return c


# -- builders ----------------------------------------------------------------

def build_landmarks(sysd):
    """``(system, x0, tracers)`` from a landmark system block."""
    q0 = np.asarray(sysd["q0"], float)
    p0 = np.asarray(sysd.get("p0", np.zeros_like(q0)), float)
    noise = sysd.get("noise", {})
    fields = [DeformationNoiseField.from_dict(f) for f in noise.get("sigma_u", [])]
    nu = noise.get("sigma_nu", {}).get("per_landmark")
    kernel = KernelSpec.from_dict(sysd.get("kernel", {}))
    try:
        system = LandmarkSystem(kernel, float(sysd["lambda"]), fields,
                                None if nu is None else np.asarray(nu, float))
    except MetamorphError as e:
        raise ConfigError("system", str(e))
    tracers = np.asarray(sysd["tracers"], float) if "tracers" in sysd else None
    return system, np.stack([q0, p0]), tracers


def _ch2_fields(spec, grid, base_dir):
    if spec is None:
        return None
    if isinstance(spec, dict):
        return load_grid_noise(_resolve(spec["grid_values_file"], base_dir))
    return np.array([periodic_bump(grid, f["center"], f["width"], f["amplitude"]) for f in spec])


def build_ch2(sysd, base_dir="."):
    """``(system, x0)`` from a CH2 system block."""
    grid = Grid1D(float(sysd["grid"]["L"]), int(sysd["grid"]["N"]))
    alpha = float(sysd["alpha"])
    noise = sysd.get("noise", {})
    system = Ch2System(grid, alpha, _ch2_fields(noise.get("sigma_u"), grid, base_dir),
                       _ch2_fields(noise.get("sigma_nu"), grid, base_dir),
                       dealias=sysd.get("dealias", True))
    init = sysd["initial"]
    rho_spec = init.get("rho", {})
    rho = np.full(grid.N, float(rho_spec.get("offset", 0.0)))
    for b in rho_spec.get("bumps", []):
        rho += periodic_bump(grid, b["center"], b["width"], b["height"])
    m = np.zeros(grid.N)
    for pk in init.get("peakons", []):
        m += peakon_init(pk["c"], pk["x0"], alpha, grid).m
    x0 = np.stack([m, rho])
    if init.get("project", True):
        x0 = dealias(x0, grid)
    return system, x0


def build_fda(fd):
    tpl = fd["template"]
    template = Template(bumps=[Bump(**b) for b in tpl.get("bumps", [])],
                        offset=float(tpl.get("offset", 0.0)),
                        values=tpl.get("values"))
    kw = {k: fd[k] for k in ("obs_noise", "n_samples", "n_signals", "T", "steps", "u0", "nu0")
          if k in fd}
    return FdaSpec(template,
                   warp_fields=[Bump(**f) for f in fd.get("warp_fields", [])],
                   amplitude_fields=[AmplitudeField(**f) for f in fd.get("amplitude_fields", [])],
                   **kw)
