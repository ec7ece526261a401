"""Experiment configuration: INI files with one section per concern.

Schema (every key optional, defaults shown)::

    [experiment]
    k_list = 8,16,32,64,128
    seed = 24301            ; 0x5EED
    harnack_samples = 50
    dp_window = 8

    [grid]
    t_nodes = 129
    x_nodes = 801
    x_max = 40
    quad_nodes = 0          ; 0 selects the level-dependent default

    [tolerances]
    scale = 1.0             ; multiplies every numerical tolerance

    [output]
    dir = results

    [pair:NAME]             ; repeatable; replaces the shipped pairs
    phi0 = fs
    phi1 = bump:amplitude=0.3,width=1.5

Potentials are written ``family`` or ``family:key=value,key=value`` with
the families of :data:`geometry.FAMILIES`.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError, PositivityViolation
from .geometry import make_test_potential

DEFAULT_PAIRS = {
    "dilation": ("fs", "dilation:c=1"),
    "bump": ("fs", "bump:amplitude=0.3,width=1.5"),
    "bump2": ("bump:amplitude=0.25,width=2,center=-1", "bump:amplitude=0.2,width=1.5,center=1"),
}
DEFAULT_K_LIST = (8, 16, 32, 64, 128)

GRID_BOUNDS = {
    "t_nodes": (9, 4097),
    "x_nodes": (9, 16001),
    "x_max": (5.0, 40.0),
    "quad_nodes": (0, 20000),
}
K_MAX = 512


def parse_potential(spec):
    """'bump:amplitude=0.3,width=1.5' -> validated potential."""
    spec = spec.strip()
    family, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"expected key=value, got {item!r}")
            params[key.strip()] = float(value)
    return make_test_potential(family.strip(), params)


def parse_k_list(text):
    try:
        ks = [int(s) for s in str(text).replace(" ", "").split(",") if s]
    except ValueError as exc:
        raise ConfigError("k_list", f"not a list of integers: {text!r}") from exc
    return validate_k_list(ks)


def validate_k_list(ks):
    ks = [int(k) for k in ks]
    if not ks:
        raise ConfigError("k_list", "empty")
    if any(k < 1 or k > K_MAX for k in ks):
        raise ConfigError("k_list", f"levels must lie in [1, {K_MAX}]")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ConfigError("k_list", f"must be strictly increasing, got {ks}")
    return tuple(ks)


@dataclass
class ExperimentConfig:
    pairs: dict = field(default_factory=lambda: dict(DEFAULT_PAIRS))
    k_list: tuple = DEFAULT_K_LIST
    t_nodes: int = 129
    x_nodes: int = 801
    x_max: float = 40.0
    quad_nodes: int = 0
    tol_scale: float = 1.0
    seed: int = 0x5EED
    harnack_samples: int = 50
    dp_window: int = 8
    out_dir: str = "results"

    def validate(self):
        validate_k_list(self.k_list)
        for name, (lo, hi) in GRID_BOUNDS.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ConfigError(name, f"{v} outside [{lo}, {hi}]")
        if self.quad_nodes and 2 * self.quad_nodes - 1 < 2 * max(self.k_list):
            raise ConfigError("quad_nodes", f"degree too low for k = {max(self.k_list)}")
        if not self.tol_scale > 0:
            raise ConfigError("tol_scale", "must be positive")
        if self.harnack_samples < 0:
            raise ConfigError("harnack_samples", "must be >= 0")
        if self.dp_window < 1:
            raise ConfigError("dp_window", "must be >= 1")
        if not self.pairs:
            raise ConfigError("pairs", "no potential pairs configured")
        for name, specs in self.pairs.items():
            for side, spec in zip(("phi0", "phi1"), specs):
                try:
                    parse_potential(spec)
                except (ValueError, PositivityViolation) as exc:
                    raise ConfigError(f"pair:{name}.{side}", str(exc)) from exc
        return self

    def potentials(self):
        return {name: (parse_potential(a), parse_potential(b)) for name, (a, b) in self.pairs.items()}

    def semantic_dict(self):
        d = asdict(self)
        d.pop("out_dir")
        d["k_list"] = list(d["k_list"])
        d["pairs"] = {k: list(v) for k, v in sorted(d["pairs"].items())}
        return d

    def config_hash(self):
        blob = json.dumps(self.semantic_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r}") from exc


def _int(text):
    return int(str(text).strip(), 0)


def load_config(path=None, **overrides):
    """Read an INI file (or defaults), apply overrides, validate."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError("config", str(exc)) from exc
        except configparser.Error as exc:
            raise ConfigError("config", str(exc).splitlines()[0]) from exc
        known = {"experiment", "grid", "tolerances", "output"}
        for sec in parser.sections():
            if sec not in known and not sec.startswith("pair:"):
                raise ConfigError(sec, "unknown section")
        if parser.has_option("experiment", "k_list"):
            cfg.k_list = parse_k_list(parser.get("experiment", "k_list"))
        cfg.seed = _get(parser, "experiment", "seed", _int, cfg.seed)
        cfg.harnack_samples = _get(parser, "experiment", "harnack_samples", _int, cfg.harnack_samples)
        cfg.dp_window = _get(parser, "experiment", "dp_window", _int, cfg.dp_window)
        cfg.t_nodes = _get(parser, "grid", "t_nodes", _int, cfg.t_nodes)
        cfg.x_nodes = _get(parser, "grid", "x_nodes", _int, cfg.x_nodes)
        cfg.x_max = _get(parser, "grid", "x_max", float, cfg.x_max)
        cfg.quad_nodes = _get(parser, "grid", "quad_nodes", _int, cfg.quad_nodes)
        cfg.tol_scale = _get(parser, "tolerances", "scale", float, cfg.tol_scale)
        cfg.out_dir = _get(parser, "output", "dir", str, cfg.out_dir)
        pairs = {}
        for sec in parser.sections():
            if sec.startswith("pair:"):
                name = sec[5:].strip()
                try:
                    pairs[name] = (parser.get(sec, "phi0"), parser.get(sec, "phi1"))
                except configparser.NoOptionError as exc:
                    raise ConfigError(sec, f"missing {exc.option}") from exc
        if pairs:
            cfg.pairs = pairs
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "k_list":
            value = parse_k_list(value) if isinstance(value, str) else validate_k_list(value)
        setattr(cfg, key, value)
    return cfg.validate()


__all__ = ["ExperimentConfig", "load_config", "parse_potential", "parse_k_list",
           "DEFAULT_PAIRS", "DEFAULT_K_LIST"]
