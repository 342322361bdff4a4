"""TOML run configuration with strict key checking.

Every section and key is declared in :data:`SCHEMA`; unknown keys, wrong
types and out-of-range values raise :class:`ConfigError` naming the dotted
key path.  ``model`` keys are checked against the parameter dataclass of
the selected model.
"""
from __future__ import annotations

import sys
from dataclasses import fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .models import PARAMS
from .noise import DISCRETIZATIONS


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


_num = (int, float)

# section -> key -> (types, default, check)
SCHEMA = {
    "": {
        "seed": (int, 0, lambda v: v >= 0),
        "threads": (int, None, lambda v: v >= 1),
    },
    "mesh": {
        "source": (str, None, None),
        "square_l": (_num, 1.0, lambda v: v > 0),
        "square_n": (int, 10, lambda v: v >= 1),
        "boundary": (str, "neumann", lambda v: v in ("neumann", "periodic", "dirichlet")),
    },
    "kernel": {
        "type": (str, "gaussian", lambda v: v in ("gaussian", "separable")),
        "xi": (_num, 2.0, lambda v: v > 0),
        "k0": (int, 1, lambda v: v >= 1),
        "p0": (int, 1, lambda v: v >= 1),
    },
    "model": None,  # validated against the model's parameter dataclass
    "time": {
        "dt": (_num, 0.05, lambda v: v > 0),
        "t_end": (_num, 10.0, lambda v: v > 0),
        "record_every": (int, 10, lambda v: v >= 1),
    },
    "noise": {
        "sigma": (_num, 0.0, lambda v: v >= 0),
        "discretization": (str, "p1", lambda v: v in DISCRETIZATIONS),
    },
    "output": {
        "dir": (str, "out", None),
        "snapshot_every": (int, 0, lambda v: v >= 0),
        "csv_snapshots": (bool, False, None),
    },
    "classify": {
        "u_act": (_num, 0.5, lambda v: 0 < v < 1),
        "f_wave": (_num, 0.05, lambda v: 0 <= v <= 1),
        "f_quiet": (_num, 0.01, lambda v: 0 <= v <= 1),
        "t_sustain_frac": (_num, 0.6, lambda v: 0 < v < 1),
        "c_max": (int, 4, lambda v: v >= 0),
        "late_share": (_num, 0.5, lambda v: 0 < v <= 1),
        "transition_share": (_num, 0.3, lambda v: 0 < v <= 1),
    },
    "heat": {
        "replicas": (int, 40, lambda v: v >= 1),
        "k_max": (int, None, lambda v: v >= 1),
    },
    "strong": {
        "n_space": (list, [4, 8, 16], None),
        "dts": (list, [0.1, 0.05, 0.025], None),
        "replicas": (int, 100, lambda v: v >= 2),
        "fine_dt": (_num, 2.5e-4, lambda v: v > 0),
        "fine_n": (int, 32, lambda v: v >= 1),
        "coupled": (bool, True, None),
        "sigma": (_num, 1.0, lambda v: v > 0),
    },
    "sweep": {
        "axis1": (str, "epsilon", None),
        "axis1_values": (list, [0.05], None),
        "axis2": (str, "sigma", None),
        "axis2_values": (list, [0.0, 0.15], None),
        "seeds_per_cell": (int, 10, lambda v: v >= 1),
    },
}


def _check(key, value, spec):
    types, _, check = spec
    if isinstance(value, bool) and types is not bool:
        raise ConfigError(key, f"expected {_type_name(types)}, got boolean")
    if not isinstance(value, types):
        raise ConfigError(key, f"expected {_type_name(types)}, got {type(value).__name__}")
    if check is not None and not check(value):
        raise ConfigError(key, f"value {value!r} out of range")
    return float(value) if types is _num else value


def _type_name(types):
    if types is _num:
        return "number"
    return types.__name__


class Config(dict):
    """Nested mapping ``section -> key -> value`` with defaults filled in."""

    def get_path(self, dotted):
        sec, _, key = dotted.rpartition(".")
        return self[sec][key] if sec else self[""][key]

    @property
    def seed(self):
        return self[""]["seed"]

    @property
    def threads(self):
        return self[""]["threads"]


def validate(raw, model=None, base_dir=None):
    """Return a :class:`Config` from parsed TOML data, or raise ConfigError."""
    cfg = Config()
    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    for key in top:
        if key not in SCHEMA[""]:
            raise ConfigError(key, "unknown key")
    for key in raw:
        if isinstance(raw[key], dict) and key not in SCHEMA:
            raise ConfigError(key, "unknown section")
    for section, keys in SCHEMA.items():
        given = top if section == "" else raw.get(section, {})
        if section == "model":
            continue
        out = {}
        for key, spec in keys.items():
            path = f"{section}.{key}" if section else key
            if key in given:
                out[key] = _check(path, given[key], spec)
            else:
                out[key] = spec[1]
        for key in given:
            if key not in keys:
                raise ConfigError(f"{section}.{key}" if section else key, "unknown key")
        cfg[section] = out

    cfg["model"] = _model_section(raw.get("model", {}), model)
    _cross_checks(cfg, raw, model, base_dir)
    return cfg


def _model_section(given, model):
    given = dict(given)
    name = given.pop("name", model)
    if model is not None and name != model:
        raise ConfigError("model.name", f"config is for {name!r}, command asked for {model!r}")
    if name is None:
        if given:
            raise ConfigError("model", "parameters given without a model name")
        return {"name": None}
    if name not in PARAMS:
        raise ConfigError("model.name", f"unknown model {name!r}")
    allowed = {f.name: f for f in fields(PARAMS[name]) if f.name != "sigma"}
    out = {"name": name}
    for key, value in given.items():
        if key not in allowed:
            raise ConfigError(f"model.{key}", f"unknown parameter for {name}")
        want = allowed[key].type
        if want in (bool, "bool"):
            if not isinstance(value, bool):
                raise ConfigError(f"model.{key}", "expected boolean")
        elif isinstance(value, bool) or not isinstance(value, _num):
            raise ConfigError(f"model.{key}", "expected number")
        out[key] = value if isinstance(value, bool) else float(value)
    return out


def _cross_checks(cfg, raw, model, base_dir):
    src = cfg["mesh"]["source"]
    if src is not None:
        p = Path(src)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        if not p.is_file():
            raise ConfigError("mesh.source", f"file not found: {p}")
        cfg["mesh"]["source"] = str(p)
    out = Path(cfg["output"]["dir"])
    if not out.is_absolute() and base_dir is not None:
        out = Path(base_dir) / out
    if out.exists() and not out.is_dir():
        raise ConfigError("output.dir", f"{out} exists and is not a directory")
    cfg["output"]["dir"] = str(out)
    c = cfg["classify"]
    if c["f_quiet"] > c["f_wave"]:
        raise ConfigError("classify.f_quiet", "must not exceed classify.f_wave")
    for key in ("n_space", "dts"):
        vals = cfg["strong"][key]
        if len(vals) < 2 or not all(isinstance(v, _num) and not isinstance(v, bool)
                                    and v > 0 for v in vals):
            raise ConfigError(f"strong.{key}", "need at least two positive numbers")
    sw = cfg["sweep"]
    name = cfg["model"]["name"]
    if name == "ms" and "axis1" not in raw.get("sweep", {}):
        sw["axis1"] = "tau_close"
        if "axis1_values" not in raw.get("sweep", {}):
            sw["axis1_values"] = [4.0]
    for axis in ("axis1", "axis2"):
        vals = sw[f"{axis}_values"]
        if not vals or not all(isinstance(v, _num) and not isinstance(v, bool) for v in vals):
            raise ConfigError(f"sweep.{axis}_values", "need a non-empty list of numbers")
        if name is not None and sw[axis] not in {f.name for f in fields(PARAMS[name])}:
            raise ConfigError(f"sweep.{axis}", f"{name} has no parameter {sw[axis]!r}")


def load(path, model=None):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    return validate(raw, model=model, base_dir=path.parent)


def loads(text, model=None, base_dir=None):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    return validate(raw, model=model, base_dir=base_dir)
