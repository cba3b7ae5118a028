"""Experiment configuration: JSON schema, normalization, and builders.

A config file declares the vehicles (coefficient or factored polynomials),
the channel, the leader profile, and per-command options.  Controller gains
may carry hook expressions over the link probabilities (e.g. ``"1/p1"``),
re-evaluated whenever the probabilities change, which is what couples the
sweep axes in the gain-scheduled studies.
"""

import ast
import copy
import json
import operator

import numpy as np
import jsonschema

from .errors import SchemaError, UnsupportedModelError
from .lti import RationalTF
from .montecarlo import LeaderProfile
from .platoon import ChannelModel, assemble_platoon
from .strategies import STRATEGY_NAMES, CompensationStrategy, VehicleSpec, build_vehicle_realization

__all__ = ["CONFIG_SCHEMA", "ExperimentConfig", "evaluate_hook", "load_config", "normalize_config"]

_POLY_PAIR = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "num": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "den": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "required": ["num", "den"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "zeros": {"type": "array", "items": {"type": "number"}},
                "poles": {"type": "array", "items": {"type": "number"}},
                "gain": {"type": "number"},
            },
            "required": ["zeros", "poles", "gain"],
            "additionalProperties": False,
        },
    ],
}

_VEHICLE = {
    "type": "object",
    "properties": {
        "plant": _POLY_PAIR,
        "controller": _POLY_PAIR,
        "headway": {"type": "number", "minimum": 0},
        "strategy": {"enum": list(STRATEGY_NAMES)},
        "initial_values": {"type": "array", "items": {"type": "number"}},
        "controller_scale": {"type": ["number", "string"]},
    },
    "required": ["plant", "controller", "headway", "strategy"],
    "additionalProperties": False,
}

_CHANNEL = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "independent": {
                    "oneOf": [
                        {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        {
                            "type": "array",
                            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                            "minItems": 1,
                        },
                    ]
                }
            },
            "required": ["independent"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "joint_pmf": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "pattern": {"type": "string", "pattern": "^[01]+$"},
                            "prob": {"type": "number", "minimum": 0},
                        },
                        "required": ["pattern", "prob"],
                        "additionalProperties": False,
                    },
                }
            },
            "required": ["joint_pmf"],
            "additionalProperties": False,
        },
    ],
}

_LEADER = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "ramp": {
                    "type": "object",
                    "properties": {
                        "slope": {"type": "number"},
                        "initial_position": {"type": "number"},
                    },
                    "required": ["slope"],
                    "additionalProperties": False,
                }
            },
            "required": ["ramp"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "piecewise": {
                    "type": "object",
                    "properties": {
                        "segments": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 2,
                                "maxItems": 2,
                            },
                        },
                        "initial_speed": {"type": "number"},
                        "initial_position": {"type": "number"},
                    },
                    "required": ["segments"],
                    "additionalProperties": False,
                }
            },
            "required": ["piecewise"],
            "additionalProperties": False,
        },
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": 1},
        "description": {"type": "string"},
        "vehicles": {"type": "array", "items": _VEHICLE, "minItems": 1},
        "replicate": {"type": "integer", "minimum": 1},
        "channel": _CHANNEL,
        "leader": _LEADER,
        "analysis": {
            "type": "object",
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "runs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "dump_runs": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "axes": {
                    "type": "array",
                    "items": {"type": "string", "pattern": "^p[0-9]+$"},
                    "minItems": 1,
                    "maxItems": 2,
                },
                "grids": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "minItems": 1,
                    },
                    "minItems": 1,
                    "maxItems": 2,
                },
            },
            "required": ["axes", "grids"],
            "additionalProperties": False,
        },
        "cases": {
            "type": "object",
            "additionalProperties": {"type": "object"},
        },
    },
    "required": ["version", "vehicles", "channel", "leader"],
    "additionalProperties": False,
}


_HOOK_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def evaluate_hook(expr, variables):
    """Evaluate a small arithmetic expression over named variables.

    Supports +, -, *, /, ** and parentheses; anything else is rejected.
    """
    if isinstance(expr, (int, float)):
        return float(expr)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in variables:
                raise SchemaError(f"unknown variable '{node.id}' in hook expression {expr!r}")
            return float(variables[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _HOOK_OPS:
            return _HOOK_OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _HOOK_OPS:
            return _HOOK_OPS[type(node.op)](ev(node.operand))
        raise SchemaError(f"unsupported syntax in hook expression {expr!r}")

    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise SchemaError(f"invalid hook expression {expr!r}: {exc}") from exc
    return ev(tree)


def _poly_pair_to_tf(pair):
    if "num" in pair:
        return RationalTF(pair["num"], pair["den"])
    return RationalTF.from_factored(pair["zeros"], pair["poles"], pair["gain"])


def _tf_to_poly_pair(tf):
    return {"num": [float(c) for c in tf.num], "den": [float(c) for c in tf.den]}


def normalize_config(raw):
    """Validate against the schema and return the canonical expanded form.

    Replication is applied, scalar channel probabilities are broadcast, and
    factored polynomials are expanded to coefficient lists; normalization is
    idempotent.
    """
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"config field '{path}': {exc.message}") from exc

    cfg = copy.deepcopy(raw)
    rep = cfg.pop("replicate", 1)
    vehicles = cfg["vehicles"]
    if rep > 1:
        if len(vehicles) != 1:
            raise SchemaError("'replicate' needs exactly one vehicle template")
        vehicles = [copy.deepcopy(vehicles[0]) for _ in range(rep)]
    n = len(vehicles)
    for v in vehicles:
        v["plant"] = _tf_to_poly_pair(_poly_pair_to_tf(v["plant"]))
        v["controller"] = _tf_to_poly_pair(_poly_pair_to_tf(v["controller"]))
        v.setdefault("initial_values", [])
        v.setdefault("controller_scale", 1.0)
    cfg["vehicles"] = vehicles

    ch = cfg["channel"]
    if "independent" in ch:
        p = ch["independent"]
        if isinstance(p, (int, float)):
            p = [float(p)] * n
        if len(p) == 1 and n > 1:
            p = [float(p[0])] * n
        if len(p) != n:
            raise SchemaError(f"channel has {len(p)} links for {n} vehicles")
        cfg["channel"] = {"independent": [float(x) for x in p]}
    else:
        for row in ch["joint_pmf"]:
            if len(row["pattern"]) != n:
                raise SchemaError(
                    f"joint pmf pattern '{row['pattern']}' has length {len(row['pattern'])}, expected {n}"
                )

    cfg.setdefault("analysis", {})
    cfg["analysis"].setdefault("horizon", 400)
    cfg["analysis"].setdefault("tolerance", 1e-6)
    cfg.setdefault("simulation", {})
    cfg["simulation"].setdefault("runs", 200)
    cfg["simulation"].setdefault("seed", 0)
    cfg["simulation"].setdefault("dump_runs", 0)
    if "sweep" in cfg and len(cfg["sweep"]["axes"]) != len(cfg["sweep"]["grids"]):
        raise SchemaError("sweep axes and grids must have the same length")
    return cfg


class ExperimentConfig:
    """A normalized experiment description with builders for every command."""

    def __init__(self, raw):
        self.data = normalize_config(raw)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"not valid JSON: {exc}") from exc
        return cls(raw)

    @property
    def n_vehicles(self):
        return len(self.data["vehicles"])

    @property
    def case_names(self):
        return sorted(self.data.get("cases", {}))

    def with_case(self, name):
        """A new config with the named case patch merged over the base."""
        cases = self.data.get("cases", {})
        if name not in cases:
            raise SchemaError(f"unknown case '{name}'; available: {sorted(cases)}")
        patched = copy.deepcopy(self.data)
        patch = cases[name]
        del patched["cases"]
        for key, value in patch.items():
            patched[key] = copy.deepcopy(value)
        return ExperimentConfig(patched)

    def channel_model(self, p_override=None):
        ch = self.data["channel"]
        if p_override is not None:
            return ChannelModel.independent(p_override)
        if "independent" in ch:
            return ChannelModel.independent(ch["independent"])
        return ChannelModel.joint_pmf([(row["pattern"], row["prob"]) for row in ch["joint_pmf"]])

    def vehicle_specs(self, p=None):
        """VehicleSpec list with gain hooks evaluated at probabilities ``p``."""
        if p is None:
            p = self.channel_model().p
        variables = {f"p{i + 1}": float(v) for i, v in enumerate(np.atleast_1d(p))}
        specs = []
        for v in self.data["vehicles"]:
            variables_i = dict(variables)
            variables_i["h"] = float(v["headway"])
            specs.append(
                VehicleSpec(
                    plant=_poly_pair_to_tf(v["plant"]),
                    controller=_poly_pair_to_tf(v["controller"]),
                    headway=v["headway"],
                    strategy=CompensationStrategy.from_name(v["strategy"], v["initial_values"]),
                    controller_scale=evaluate_hook(v["controller_scale"], variables_i),
                )
            )
        return specs

    def build_platoon(self, p_override=None):
        channel = self.channel_model(p_override)
        specs = self.vehicle_specs(channel.p)
        vehicles = [build_vehicle_realization(s) for s in specs]
        return assemble_platoon(vehicles, channel)

    def leader_profile(self):
        lead = self.data["leader"]
        if "ramp" in lead:
            r = lead["ramp"]
            return LeaderProfile.ramp(r["slope"], r.get("initial_position", 0.0))
        pw = lead["piecewise"]
        return LeaderProfile.piecewise(
            [(a, int(d)) for a, d in pw["segments"]],
            initial_speed=pw.get("initial_speed", 0.0),
            initial_position=pw.get("initial_position", 0.0),
        )

    def sweep_platoon_factory(self):
        """(make_platoon, grids) for the configured sweep axes.

        Axis names pick which link probabilities vary; every other link
        keeps its base value.  Gain hooks are re-evaluated per grid point,
        so probability-coupled controllers reshape the region.
        """
        if "sweep" not in self.data:
            raise SchemaError("config has no 'sweep' section")
        if "independent" not in self.data["channel"]:
            raise UnsupportedModelError("sweep requires an independent channel template")
        axes = [int(a[1:]) - 1 for a in self.data["sweep"]["axes"]]
        if any(not 0 <= a < self.n_vehicles for a in axes):
            raise SchemaError("sweep axis index outside the platoon")
        base_p = np.asarray(self.data["channel"]["independent"], dtype=float)

        def make_platoon(pt):
            p = base_p.copy()
            for axis, val in zip(axes, pt):
                p[axis] = val
            return self.build_platoon(p_override=p)

        return make_platoon, self.data["sweep"]["grids"]


def load_config(path):
    return ExperimentConfig.from_file(path)
