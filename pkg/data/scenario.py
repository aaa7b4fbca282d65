"""
Scenario files: load, validate, serialize canonically, and build models.

A scenario is a YAML tree naming the factor dimensions, scalar params,
operator definitions written as builder expressions, the model wiring,
analysis parameters and output locations. Unknown keys are rejected with
their key path and line.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from config import Settings
from errors import DecoqError, ScenarioError
from data.expressions import evaluate_expression
from dynamics.model import FeedbackLaw, ScheduleLaw, SystemModel
from operators.algebra import HilbertFactorization, fock, normalized
from operators.harmonic import HarmonicOperator, as_harmonic

logger = logging.getLogger(__name__)

EXPR = "expr"
NUMBERS = "name -> number"
EXPRESSIONS = "name -> expr"

SCHEDULE = {"times": [float], "values": [[float]]}

SCHEMA = {
    "name": str,
    "dims": {"system": int, "environment": int},
    "params": NUMBERS,
    "operators": EXPRESSIONS,
    "model": {
        "drift": EXPR,
        "environment": EXPR,
        "controls": [EXPR],
        "joint_controls": bool,
        "interaction": [{"system": EXPR, "environment": EXPR}],
        "interaction_joint": EXPR,
        "observable": EXPR,
        "auxiliary": EXPRESSIONS,
        "control_law": {
            "type": str,
            "times": [float],
            "values": [[float]],
            "outputs": [str],
            "alpha0": [float],
            "alpha_gain": [[float]],
            "beta0": [[float]],
            "beta_gain": [[[float]]],
            "reference": SCHEDULE,
        },
        "truncated_environment": bool,
    },
    "analysis": {
        "tol": float,
        "rank_tol": float,
        "max_dim": int,
        "max_ad_depth": int,
        "max_stage": int,
        "t_span": [float],
        "dt": float,
        "seed": int,
        "projector": EXPR,
        "initial_states": [{"system": EXPR, "environment": EXPR}],
        "samples": {"states": int, "times": int, "max_length": int},
    },
    "outputs": {"traces": str, "report": str},
}

REQUIRED = [("name",), ("dims", "system"), ("dims", "environment"), ("model", "drift"), ("model", "observable")]


# ── Validation ────────────────────────────────────────────────────────────────

def _collect_marks(node, path: Tuple = (), marks: Optional[Dict] = None) -> Dict[Tuple, Tuple[int, int]]:
    """1-based (line, column) of every value node, keyed by its path."""
    marks = {} if marks is None else marks
    quoted = isinstance(node, yaml.ScalarNode) and node.style in ("'", '"')
    marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1 + int(quoted))
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            _collect_marks(value_node, path + (key_node.value,), marks)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _collect_marks(item, path + (i,), marks)
    return marks


def _dotted(path: Tuple) -> str:
    return ".".join(str(p) for p in path) or "<root>"


class _Validator:
    def __init__(self, marks: Dict[Tuple, Tuple[int, int]]):
        self.marks = marks

    def error(self, message: str, path: Tuple) -> ScenarioError:
        line, column = self._mark(path)
        return ScenarioError(message, line, column, _dotted(path))

    def _mark(self, path: Tuple) -> Tuple[Optional[int], Optional[int]]:
        while path and path not in self.marks:
            path = path[:-1]
        return self.marks.get(path, (None, None))

    def check(self, value, schema, path: Tuple):
        if isinstance(schema, dict):
            if not isinstance(value, dict):
                raise self.error("expected a mapping", path)
            unknown = [k for k in value if k not in schema]
            if unknown:
                raise self.error(f"unknown key {unknown[0]!r}", path + (unknown[0],))
            return {k: self.check(value[k], sub, path + (k,)) for k, sub in schema.items() if k in value}
        if isinstance(schema, list):
            if not isinstance(value, list):
                raise self.error("expected a list", path)
            return [self.check(item, schema[0], path + (i,)) for i, item in enumerate(value)]
        if schema in (NUMBERS, EXPRESSIONS):
            if not isinstance(value, dict):
                raise self.error("expected a mapping of names", path)
            leaf = float if schema == NUMBERS else EXPR
            out = {}
            for k, v in value.items():
                if not isinstance(k, str) or not k.isidentifier():
                    raise self.error(f"invalid name {k!r}", path + (k,))
                out[k] = self.check(v, leaf, path + (k,))
            return out
        if schema == EXPR or schema is str:
            if not isinstance(value, str):
                raise self.error("expected a string" if schema is str else "expected an expression string", path)
            return value
        if schema is bool:
            if not isinstance(value, bool):
                raise self.error("expected true or false", path)
            return value
        if schema is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise self.error("expected an integer", path)
            return value
        if schema is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise self.error("expected a number", path)
            return float(value)
        raise TypeError(f"unsupported schema entry {schema!r}")


# ── Scenario ──────────────────────────────────────────────────────────────────

@dataclass
class BuiltScenario:
    name: str
    model: SystemModel
    settings: Settings
    system_factors: Optional[Tuple[np.ndarray, ...]]
    projector: Optional[np.ndarray]
    initial_states: List[np.ndarray]
    t_span: Tuple[float, float]
    samples: Dict[str, int]
    outputs: Dict[str, str]


@dataclass
class Scenario:
    """Validated scenario tree in canonical key order."""

    data: Dict[str, Any]
    marks: Dict[Tuple, Tuple[int, int]] = field(default_factory=dict, repr=False)
    source: Optional[Path] = None

    @property
    def name(self) -> str:
        return self.data["name"]

    @classmethod
    def from_text(cls, text: str, source: Optional[Path] = None) -> "Scenario":
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            column = mark.column + 1 if mark is not None else None
            raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}", line, column) from exc
        if node is None:
            raise ScenarioError("scenario file is empty")
        marks = _collect_marks(node)
        data = _Validator(marks).check(raw, SCHEMA, ())
        for path in REQUIRED:
            cursor = data
            for key in path:
                if not isinstance(cursor, dict) or key not in cursor:
                    line, column = _Validator(marks)._mark(path[:-1])
                    raise ScenarioError("missing required key", line, column, _dotted(path))
                cursor = cursor[key]
        model = data["model"]
        if ("interaction" in model) == ("interaction_joint" in model):
            line, column = marks.get(("model",), (None, None))
            raise ScenarioError("model needs exactly one of interaction, interaction_joint", line, column, "model")
        return cls(data, marks, source)

    @classmethod
    def from_file(cls, path) -> "Scenario":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from exc
        return cls.from_text(text, path)

    def to_yaml(self) -> str:
        """Canonical block-style YAML; parse → serialize is byte-identical."""
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=False,
                              allow_unicode=True, width=100)

    # ── Building ──

    def _expr(self, source: str, path: Tuple, env: Dict[str, Any]):
        line, column = self.marks.get(path, (None, 1))
        return evaluate_expression(source, self.data.get("params"), env, line, column - 1, _dotted(path))

    def _error(self, message: str, path: Tuple) -> ScenarioError:
        line, column = self.marks.get(path, (None, None))
        return ScenarioError(message, line, column, _dotted(path))

    def _operator(self, source: str, path: Tuple, env, dims: Tuple[int, ...], constant: bool = True):
        value = self._expr(source, path, env)
        if isinstance(value, HarmonicOperator):
            if constant:
                if not value.is_constant:
                    raise self._error("expected a time-independent operator", path)
                value = value.component(0.0)
            dim = value.dim if isinstance(value, HarmonicOperator) else value.shape[0]
        elif isinstance(value, np.ndarray) and value.ndim == 2:
            dim = value.shape[0]
        else:
            raise self._error("expected an operator", path)
        if dim not in dims:
            raise self._error(f"operator has dim {dim}, expected {' or '.join(map(str, dims))}", path)
        return value

    def _state(self, source: str, path: Tuple, env, dim: int) -> np.ndarray:
        value = self._expr(source, path, env)
        if not isinstance(value, np.ndarray) or value.ndim != 1:
            raise self._error("expected a state vector", path)
        if value.size != dim:
            raise self._error(f"state has size {value.size}, expected {dim}", path)
        return normalized(value)

    def _control_law(self, spec: Dict[str, Any], r: int):
        path = ("model", "control_law")
        kind = spec.get("type", "schedule")
        try:
            if kind == "schedule":
                return ScheduleLaw(tuple(spec.get("times", [0.0])), spec.get("values", [[0.0] * r]))
            if kind == "feedback":
                outputs = spec.get("outputs", [])
                m = len(outputs)
                reference = spec.get("reference", {"times": [0.0], "values": [[0.0] * r]})
                return FeedbackLaw(
                    outputs=tuple(outputs),
                    alpha0=spec.get("alpha0", [0.0] * r),
                    alpha_gain=spec.get("alpha_gain", np.zeros((r, m))),
                    beta0=spec.get("beta0", np.eye(r)),
                    beta_gain=spec.get("beta_gain", np.zeros((m, r, r))),
                    reference=ScheduleLaw(tuple(reference["times"]), reference["values"]),
                )
        except ValueError as exc:
            raise self._error(str(exc), path) from exc
        raise self._error(f"unknown control law type {kind!r}", path + ("type",))

    def build(self, overrides: Optional[Dict[str, Any]] = None) -> BuiltScenario:
        """Evaluate every expression and wire the `SystemModel`."""
        data = self.data
        d_s, d_e = data["dims"]["system"], data["dims"]["environment"]
        fac = HilbertFactorization(d_s, d_e)
        D = fac.dim

        env: Dict[str, Any] = {}
        for name, source in data.get("operators", {}).items():
            env[name] = self._expr(source, ("operators", name), env)

        m = data["model"]
        drift = self._operator(m["drift"], ("model", "drift"), env, (d_s,))
        H_env = (self._operator(m["environment"], ("model", "environment"), env, (d_e,))
                 if "environment" in m else np.zeros((d_e, d_e), dtype=complex))
        joint_controls = m.get("joint_controls", False)
        controls = tuple(
            self._operator(src, ("model", "controls", i), env, (D,) if joint_controls else (d_s,))
            for i, src in enumerate(m.get("controls", []))
        )
        factors = None
        H_SB = None
        if "interaction" in m:
            factors = tuple(
                (self._operator(pair["system"], ("model", "interaction", i, "system"), env, (d_s,)),
                 self._operator(pair["environment"], ("model", "interaction", i, "environment"), env, (d_e,)))
                for i, pair in enumerate(m["interaction"])
            )
        else:
            H_SB = as_harmonic(self._operator(m["interaction_joint"], ("model", "interaction_joint"),
                                              env, (D,), constant=False))
        observable = as_harmonic(self._operator(m["observable"], ("model", "observable"), env,
                                                (d_s, D), constant=False))
        auxiliary = {
            name: as_harmonic(self._operator(src, ("model", "auxiliary", name), env, (d_s, D), constant=False))
            for name, src in m.get("auxiliary", {}).items()
        }
        law = self._control_law(m["control_law"], len(controls)) if "control_law" in m else None

        try:
            model = SystemModel(
                factorization=fac,
                H0_sys=drift,
                H_env=H_env,
                observable=observable,
                controls=controls,
                H_SB=H_SB,
                interaction_factors=factors,
                joint_controls=joint_controls,
                control_law=law,
                auxiliary=auxiliary,
                truncated_environment=m.get("truncated_environment", True),
                name=data["name"],
            )
        except DecoqError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise self._error(str(exc), ("model",)) from exc

        a = data.get("analysis", {})
        settings = Settings.from_env(
            tol=a.get("tol"), rank_tol=a.get("rank_tol"), max_dim=a.get("max_dim"),
            max_ad_depth=a.get("max_ad_depth"), max_stage=a.get("max_stage"),
            dt=a.get("dt"), seed=a.get("seed"),
        ).with_overrides(**(overrides or {}))

        projector = (self._operator(a["projector"], ("analysis", "projector"), env, (d_s, D))
                     if "projector" in a else None)
        states = []
        for i, spec in enumerate(a.get("initial_states", [])):
            psi_s = self._state(spec["system"], ("analysis", "initial_states", i, "system"), env, d_s)
            psi_e = (self._state(spec["environment"], ("analysis", "initial_states", i, "environment"), env, d_e)
                     if "environment" in spec else fock(d_e, 0))
            states.append(np.kron(psi_s, psi_e))
        if not states:
            states.append(np.kron(normalized(np.ones(d_s)), fock(d_e, 0)))

        t_span = tuple(a.get("t_span", [0.0, 10.0]))
        if len(t_span) != 2 or t_span[1] < t_span[0]:
            raise self._error("t_span must be [start, stop] with stop >= start", ("analysis", "t_span"))
        samples = {"states": 20, "times": 5, "max_length": 3}
        samples.update(a.get("samples", {}))

        logger.info("built scenario %r: d_s=%d d_e=%d r=%d", data["name"], d_s, d_e, len(controls))
        return BuiltScenario(
            name=data["name"],
            model=model,
            settings=settings,
            system_factors=None if factors is None else tuple(S for S, _ in factors),
            projector=projector,
            initial_states=states,
            t_span=t_span,
            samples=samples,
            outputs=dict(data.get("outputs", {})),
        )


def load_scenario(path, overrides: Optional[Dict[str, Any]] = None) -> BuiltScenario:
    return Scenario.from_file(path).build(overrides)
