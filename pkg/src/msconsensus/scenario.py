"""Scenario files: schema validation, parsing and serialisation.

Files are YAML or JSON. Node indices and edges are 1-indexed on disk; an
edge ``[i, j, v]`` means agent ``j`` receives from agent ``i`` over a channel
of variance ``v``. In undirected and input-channel modes an edge listed in one
direction only is mirrored with the same variance.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .dynamics import DynamicsModel
from .errors import ValidationError
from .graph import INPUT_CHANNEL, LEADER_FOLLOWER, MODES, NetworkTopology
from .noise import DISTRIBUTIONS, NoiseSpec
from .simulate import Scenario
from .synthesis import ProtocolGain

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_vector_or_matrix = {"oneOf": [_matrix, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "topology"],
    "properties": {
        "model": {
            "type": "object", "additionalProperties": False, "required": ["A", "B"],
            "properties": {"A": _matrix, "B": _vector_or_matrix},
        },
        "topology": {
            "type": "object", "additionalProperties": False, "required": ["n_nodes", "edges"],
            "properties": {
                "n_nodes": {"type": "integer", "minimum": 1},
                "mode": {"enum": list(MODES)},
                "edges": {"type": "array", "items": {
                    "type": "array", "prefixItems": [{"type": "integer"}, {"type": "integer"},
                                                     {"type": "number"}],
                    "items": {"type": "number"}, "minItems": 2, "maxItems": 3}},
                "input_variances": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "protocol": {
            "type": "object", "additionalProperties": False,
            "properties": {"alpha": {"type": "number", "exclusiveMinimum": 0},
                           "delta_sq": {"type": "number", "minimum": 0},
                           "Q": _matrix},
        },
        "noise": {
            "type": "object", "additionalProperties": False,
            "properties": {"distribution": {"enum": list(DISTRIBUTIONS)},
                           "seed": {"type": "integer", "minimum": 0}},
        },
        "simulation": {
            "type": "object", "additionalProperties": False,
            "properties": {"horizon": {"type": "integer", "minimum": 1},
                           "trials": {"type": "integer", "minimum": 1},
                           "initial_states": _matrix},
        },
    },
}


@dataclass(frozen=True, eq=False)
class ScenarioFile:
    model: DynamicsModel
    topology: NetworkTopology
    alpha: float | None = None
    delta_sq: float | None = None
    Q: np.ndarray | None = None
    noise: NoiseSpec = NoiseSpec()
    horizon: int = 60
    trials: int = 1000
    initial_states: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, ScenarioFile):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (self.model == other.model and self.topology == other.topology
                and self.alpha == other.alpha and self.delta_sq == other.delta_sq
                and same(self.Q, other.Q) and self.noise == other.noise
                and self.horizon == other.horizon and self.trials == other.trials
                and same(self.initial_states, other.initial_states))

    def x0(self) -> np.ndarray:
        if self.initial_states is None:
            return np.zeros((self.topology.n_nodes, self.model.n))
        return self.initial_states

    def scenario(self, gain: ProtocolGain, **overrides) -> Scenario:
        kw = dict(model=self.model, topology=self.topology, gain=gain, noise=self.noise,
                  initial_states=self.x0(), horizon=self.horizon, trials=self.trials)
        kw.update(overrides)
        return Scenario(**kw)

    def to_dict(self) -> dict:
        t = self.topology
        topo = {"n_nodes": t.n_nodes, "mode": t.mode,
                "edges": [[s + 1, d + 1, v] for (s, d), v in t.edges.items()]}
        if t.input_variances is not None:
            topo["input_variances"] = list(t.input_variances)
        out = {"model": {"A": self.model.A.tolist(), "B": self.model.B.tolist()},
               "topology": topo}
        protocol = {}
        if self.alpha is not None:
            protocol["alpha"] = self.alpha
        if self.delta_sq is not None:
            protocol["delta_sq"] = self.delta_sq
        if self.Q is not None:
            protocol["Q"] = self.Q.tolist()
        if protocol:
            out["protocol"] = protocol
        out["noise"] = {"distribution": self.noise.distribution, "seed": self.noise.seed}
        sim = {"horizon": self.horizon, "trials": self.trials}
        if self.initial_states is not None:
            sim["initial_states"] = self.initial_states.tolist()
        out["simulation"] = sim
        return out


def parse(doc: dict) -> ScenarioFile:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"scenario schema error at {where}: {exc.message}") from None

    model = DynamicsModel(doc["model"]["A"], doc["model"]["B"])
    topo = doc["topology"]
    N = topo["n_nodes"]
    mode = topo.get("mode", "undirected")
    edges = {}
    for entry in topo["edges"]:
        i, j = int(entry[0]), int(entry[1])
        var = float(entry[2]) if len(entry) > 2 else 0.0
        if not (1 <= i <= N and 1 <= j <= N):
            raise ValidationError(f"edge {entry} references a node outside 1..{N}")
        if (i - 1, j - 1) in edges:
            raise ValidationError(f"duplicate edge {entry}")
        edges[(i - 1, j - 1)] = var
    if mode != LEADER_FOLLOWER:
        for (s, d), v in list(edges.items()):
            edges.setdefault((d, s), v)
    iv = topo.get("input_variances")
    if mode == INPUT_CHANNEL and iv is None:
        raise ValidationError("input-channel mode needs topology.input_variances")
    topology = NetworkTopology(N, edges, mode, tuple(iv) if iv is not None else None)

    protocol = doc.get("protocol", {})
    Q = protocol.get("Q")
    if Q is not None:
        Q = np.array(Q, dtype=float)
        if Q.shape != (model.n, model.n):
            raise ValidationError(f"protocol.Q must be {model.n}x{model.n}")
    noise = NoiseSpec(**doc.get("noise", {}))
    sim = doc.get("simulation", {})
    x0 = sim.get("initial_states")
    if x0 is not None:
        x0 = np.array(x0, dtype=float)
        if x0.shape != (N, model.n):
            raise ValidationError(f"simulation.initial_states must be {N}x{model.n}")
    return ScenarioFile(model, topology, protocol.get("alpha"), protocol.get("delta_sq"), Q,
                        noise, sim.get("horizon", 60), sim.get("trials", 1000), x0)


def load(path) -> ScenarioFile:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path} does not contain a mapping")
    return parse(doc)


def dump(sf: ScenarioFile, path) -> None:
    Path(path).write_text(json.dumps(sf.to_dict(), indent=2) + "\n")


# Six double integrators on an undirected 6-cycle, every directed channel at
# variance 1.5. delta_sq = 0.81 (delta = 0.9) reproduces the published P and K.
EXAMPLE_SCENARIO_VERSION = 1
EXAMPLE_SCENARIO = {
    "model": {"A": [[1.0, 1.0], [0.0, 1.0]], "B": [[0.0], [1.0]]},
    "topology": {
        "n_nodes": 6,
        "mode": "undirected",
        "edges": [[i, i % 6 + 1, 1.5] for i in range(1, 7)] + [[i % 6 + 1, i, 1.5] for i in range(1, 7)],
    },
    "protocol": {"alpha": 0.25, "delta_sq": 0.81, "Q": [[3.0, 0.0], [0.0, 3.0]]},
    "noise": {"distribution": "gaussian", "seed": 2017},
    "simulation": {
        "horizon": 60,
        "trials": 1000,
        "initial_states": [[1.0, 0.0], [2.0, -1.0], [-1.0, 0.5], [0.8, 2.0], [2.0, 3.0], [0.0, 1.0]],
    },
}
PUBLISHED_P = np.array([[31.9, 152.1], [152.1, 1464.3]])
PUBLISHED_K = np.array([[-0.1038, -1.1038]])
PUBLISHED_ALPHA = 0.25
PUBLISHED_DELTA_SQ = 0.9


def example_scenario() -> ScenarioFile:
    return parse(copy.deepcopy(EXAMPLE_SCENARIO))
