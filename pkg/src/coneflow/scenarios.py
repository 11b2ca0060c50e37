"""Bundled scenario definitions and the scenario-file schema.

A scenario file is one JSON document with sections operator / set /
map / region plus sweep and seed data.  Unknown keys are rejected at
every level so that a typo cannot silently change an experiment.
"""

from __future__ import annotations

import copy
import json

from .convex import set_from_config
from .degree import region_from_config
from .errors import InputError
from .harness import Scenario
from .operators import operator_from_config
from .setmaps import map_from_config

_TOP_KEYS = {"name", "description", "operator", "set", "map", "region",
             "sweeps", "seeds", "expected_degree", "initial_state", "t_end",
             "strategies"}
_REQUIRED = {"name", "operator", "set", "map", "region"}

DEFAULT_SWEEPS = {
    "t": [0.5, 0.2, 0.1, 0.05, 0.02],
    "h_degree": [0.1, 0.03, 0.01],
    "alpha": [0.01],
    "h_step": 0.001,
}
DEFAULT_SEEDS = [0, 1]


def _zero_map(dim: int) -> dict:
    return {"preset": "linear", "matrix": [[0.0] * dim for _ in range(dim)]}


_BUNDLED = {
    "linear_sink_2d": {
        "name": "linear_sink_2d",
        "description": "Uniform contraction to the origin over the unit disk.",
        "operator": {"matrix": [[-1.0, 0.0], [0.0, -1.0]],
                     "growth_M": 1.0, "growth_omega": -1.0},
        "set": {"kind": "box", "lo": [None, None], "hi": [None, None]},
        "map": _zero_map(2),
        "region": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "expected_degree": 1,
        "initial_state": [0.5, 0.0],
        "t_end": 1.0,
    },
    "saddle_2d": {
        "name": "saddle_2d",
        "description": "Hyperbolic saddle: one expanding, one contracting axis.",
        "operator": {"matrix": [[1.0, 0.0], [0.0, -1.0]],
                     "growth_M": 1.0, "growth_omega": 1.0},
        "set": {"kind": "box", "lo": [None, None], "hi": [None, None]},
        "map": _zero_map(2),
        "region": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "expected_degree": -1,
        "initial_state": [0.0, 0.5],
        "t_end": 1.0,
    },
    "rotation_sink_2d": {
        "name": "rotation_sink_2d",
        "description": "Damped rotation; spiral sink at the origin.",
        "operator": {"matrix": [[-0.1, -1.0], [1.0, -0.1]],
                     "growth_M": 1.0, "growth_omega": -0.1},
        "set": {"kind": "box", "lo": [None, None], "hi": [None, None]},
        "map": _zero_map(2),
        "region": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "expected_degree": 1,
        "initial_state": [0.5, 0.0],
        "t_end": 2.0,
    },
    "orthant_contraction": {
        "name": "orthant_contraction",
        "description": "Componentwise contraction to (1,1) on the positive "
                       "orthant.",
        "operator": {"matrix": [[0.0, 0.0], [0.0, 0.0]],
                     "growth_M": 1.0, "growth_omega": 0.0},
        "set": {"kind": "box", "lo": [0.0, 0.0], "hi": [None, None]},
        "map": {"preset": "linear", "matrix": [[-1.0, 0.0], [0.0, -1.0]],
                "offset": [1.0, 1.0]},
        "region": {"shape": "box", "lo": [0.5, 0.5], "hi": [1.5, 1.5]},
        "expected_degree": 1,
        "initial_state": [1.2, 0.8],
        "t_end": 2.0,
    },
    "orthant_logistic": {
        "name": "orthant_logistic",
        "description": "Dirichlet Laplacian on 32 grid points with the "
                       "logistic reaction interval [0, u(1-u)], states "
                       "confined to [0,1]^32.",
        "operator": {"constructor": "dirichlet_laplacian_1d", "args": [32]},
        "set": {"kind": "box", "lo": [0.0] * 32, "hi": [1.0] * 32},
        "map": {"preset": "logistic_interval"},
        "region": {"shape": "box", "lo": [0.25] * 32, "hi": [0.75] * 32},
        "expected_degree": None,
        "initial_state": [0.5] * 32,
        "t_end": 1.0,
        "strategies": ["tangent_barycenter", "vertex_0", "vertex_1",
                       "random_1"],
    },
    "center_2d": {
        "name": "center_2d",
        "description": "Pure rotation; every point is 2*pi periodic, so the "
                       "boundary exclusion scan must flag horizon 2*pi while "
                       "short horizons pass.",
        "operator": {"matrix": [[0.0, -1.0], [1.0, 0.0]],
                     "growth_M": 1.0, "growth_omega": 0.0},
        "set": {"kind": "box", "lo": [None, None], "hi": [None, None]},
        "map": _zero_map(2),
        "region": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "expected_degree": 1,
        "initial_state": [1.0, 0.0],
        "t_end": 1.0,
    },
}


def bundled_names() -> list:
    return sorted(_BUNDLED)


def bundled_config(name: str) -> dict:
    if name not in _BUNDLED:
        raise InputError(
            f"unknown bundled scenario {name!r}; available: {bundled_names()}")
    return parse_config(copy.deepcopy(_BUNDLED[name]))


def parse_config(cfg: dict) -> dict:
    """Validate a raw scenario mapping and fill sweep/seed defaults."""
    if not isinstance(cfg, dict):
        raise InputError("scenario must be a mapping")
    extra = set(cfg) - _TOP_KEYS
    if extra:
        raise InputError(f"unknown scenario keys: {sorted(extra)}")
    missing = _REQUIRED - set(cfg)
    if missing:
        raise InputError(f"scenario missing keys: {sorted(missing)}")
    out = copy.deepcopy(cfg)
    out.setdefault("description", "")
    out.setdefault("sweeps", copy.deepcopy(DEFAULT_SWEEPS))
    for key, val in DEFAULT_SWEEPS.items():
        out["sweeps"].setdefault(key, copy.deepcopy(val))
    out.setdefault("seeds", list(DEFAULT_SEEDS))
    out.setdefault("expected_degree", None)
    out.setdefault("initial_state", None)
    out.setdefault("t_end", None)
    out.setdefault("strategies", None)
    return out


def load_scenario_file(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as err:
        raise InputError(f"cannot read scenario file: {err}") from err
    except json.JSONDecodeError as err:
        raise InputError(
            f"scenario file {path} is not valid JSON at line {err.lineno} "
            f"column {err.colno}: {err.msg}") from err
    return parse_config(raw)


def serialize_config(cfg: dict) -> str:
    return json.dumps(parse_config(cfg), sort_keys=True, indent=2) + "\n"


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply dotted key=value pairs; values parse as JSON, else strings.

    Intermediate keys must already exist; a fresh leaf may be created
    only under an existing mapping (so list-valued sections are replaced
    whole).
    """
    out = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise InputError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise InputError(f"override path {key!r} does not exist")
            node = node[part]
        if not isinstance(node, dict):
            raise InputError(f"override path {key!r} does not end in a mapping")
        node[parts[-1]] = value
    return parse_config(out)


def build_scenario(cfg: dict) -> Scenario:
    """Materialize a validated config into runnable objects."""
    cfg = parse_config(cfg)
    K = set_from_config(cfg["set"])
    op = operator_from_config(cfg["operator"])
    if op.dim != K.dim:
        raise InputError(
            f"operator dimension {op.dim} does not match set dimension {K.dim}")
    F = map_from_config(cfg["map"], K.dim)
    region = region_from_config(K, cfg["region"])
    return Scenario(
        name=cfg["name"], op=op, K=K, F=F, region=region,
        sweeps=cfg["sweeps"], seeds=cfg["seeds"],
        expected_degree=cfg["expected_degree"],
        initial_state=cfg["initial_state"], t_end=cfg["t_end"],
        strategies=cfg["strategies"])


def load_scenario(name_or_path: str) -> Scenario:
    """Bundled name or path to a scenario file."""
    import os

    if name_or_path in _BUNDLED:
        return build_scenario(bundled_config(name_or_path))
    if os.path.exists(name_or_path):
        return build_scenario(load_scenario_file(name_or_path))
    raise InputError(
        f"{name_or_path!r} is neither a bundled scenario nor a file; "
        f"bundled: {bundled_names()}")
