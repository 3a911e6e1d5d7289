"""Run configurations, schema validation, and reproducible run records.

A run is fully determined by its config: two runs with an equal RunConfig
produce byte-identical results payloads regardless of worker count or host.
Worker count is carried in the config for the echo but never influences
results (replica aggregation is index-ordered everywhere).

Validation is two-stage: a JSON schema for shape and bounds, then semantic
checks that need real constructors (distribution tables, region geometry,
brackets).  Both stages report every violation they find, each with the
JSON path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .environment import KINDS as MU_KINDS
from .environment import DistributionSpec, ModelParams
from .estimators import DEFAULT_REPLICAS, InitialSpec, SurvivalQuery, default_region
from .lattice import Region
from .renorm import BoxSpec
from .rng import SEED_RULE

VERSION = "0.1.0"

EXPERIMENT_KINDS = (
    "survival", "strong-survival", "sweep", "critical", "c1", "c2", "hit",
    "block", "find-blocks", "renorm", "renorm-fit", "block-sensitivity",
    "oracle",
)

_MU_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(MU_KINDS)},
        "c": {"type": "number"},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "scale": {"type": "number"},
        "a": {"type": "number"},
        "b": {"type": "number"},
        "mean": {"type": "number"},
        "table": {"type": "object",
                  "additionalProperties": {"type": "number", "minimum": 0}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_BOX_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["S", "L"]},
        "a": {"type": "integer", "minimum": 1},
        "b": {"type": "integer", "minimum": 1},
        "r": {"type": "integer", "minimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "orientation": {"enum": ["east", "north"]},
    },
    "required": ["kind", "a", "b", "r", "tau", "orientation"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "experiment": {
            "type": "object",
            "properties": {"kind": {"enum": list(EXPERIMENT_KINDS)}},
            "required": ["kind"],
        },
        "region": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["half-space", "full-space", "finite-box"]},
                "d": {"type": "integer", "minimum": 1},
                "box": {
                    "type": "object",
                    "properties": {
                        "lo": {"type": "array", "items": {"type": "integer"}},
                        "hi": {"type": "array", "items": {"type": "integer"}},
                    },
                    "required": ["lo", "hi"],
                },
            },
            "required": ["mode", "d"],
        },
        "env": {
            "type": "object",
            "properties": {
                "mu": _MU_SCHEMA,
                "env_seed": {"type": ["integer", "null"]},
                "regime": {"enum": ["quenched", "annealed"]},
            },
            "required": ["mu"],
            "additionalProperties": False,
        },
        "params": {
            "type": "object",
            "properties": {
                "lambda": {"type": "number", "minimum": 0},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["lambda", "horizon"],
            "additionalProperties": False,
        },
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
    },
    "required": ["experiment", "env", "params"],
    "additionalProperties": False,
}


@dataclass
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"

    def to_dict(self) -> dict:
        return {"path": self.path, "message": self.message}


class ConfigError(ValueError):
    """Config failed validation; carries the full violation list."""

    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


def _semantic_violations(obj: dict) -> list[Violation]:
    out: list[Violation] = []
    env = obj.get("env", {})
    mu = env.get("mu")
    if isinstance(mu, dict) and "kind" in mu:
        try:
            DistributionSpec.from_dict(mu)
        except (ValueError, KeyError, TypeError) as exc:
            out.append(Violation("$.env.mu", str(exc)))

    if "region" in obj:
        try:
            Region.from_dict(obj["region"])
        except (ValueError, KeyError, TypeError) as exc:
            out.append(Violation("$.region", str(exc)))

    exp = obj.get("experiment", {})
    kind = exp.get("kind")
    lam = obj.get("params", {}).get("lambda")

    def need(name, pred, path, msg):
        if name in exp and not pred(exp[name]):
            out.append(Violation(path, msg))

    if kind == "critical":
        br = exp.get("bracket")
        if not (isinstance(br, (list, tuple)) and len(br) == 2
                and all(isinstance(v, (int, float)) for v in br)
                and 0 <= br[0] < br[1]):
            out.append(Violation("$.experiment.bracket",
                                 "bracket must be [lo, hi] with 0 <= lo < hi"))
        need("threshold", lambda v: 0 < v < 1, "$.experiment.threshold",
             "threshold must lie in (0, 1)")
        need("depth", lambda v: isinstance(v, int) and v >= 1,
             "$.experiment.depth", "depth must be an integer >= 1")
        need("mode", lambda v: v in ("survival", "strong"),
             "$.experiment.mode", "mode must be 'survival' or 'strong'")
    elif kind == "sweep":
        ls = exp.get("lambdas")
        if not (isinstance(ls, (list, tuple)) and len(ls) >= 1
                and all(isinstance(v, (int, float)) and v >= 0 for v in ls)):
            out.append(Violation("$.experiment.lambdas",
                                 "lambdas must be a nonempty list of numbers >= 0"))
    elif kind in ("block", "block-sensitivity"):
        box = exp.get("box")
        if not isinstance(box, dict):
            out.append(Violation("$.experiment.box", "box spec required"))
        else:
            try:
                BoxSpec.from_dict(box)
            except (ValueError, KeyError, TypeError) as exc:
                out.append(Violation("$.experiment.box", str(exc)))
        if kind == "block-sensitivity":
            ds = exp.get("deltas")
            if not (isinstance(ds, (list, tuple)) and len(ds) >= 1
                    and all(isinstance(v, (int, float)) for v in ds)):
                out.append(Violation("$.experiment.deltas",
                                     "deltas must be a nonempty list of numbers"))
            elif lam is not None and any(v < 0 or v > lam for v in ds):
                out.append(Violation("$.experiment.deltas",
                                     "each delta must satisfy 0 <= delta <= lambda"))
    elif kind == "find-blocks":
        eps = exp.get("epsilon")
        if not (isinstance(eps, (int, float)) and 0 < eps < 0.5):
            out.append(Violation("$.experiment.epsilon",
                                 "epsilon must lie in (0, 0.5)"))
        sb = exp.get("search_budget")
        if sb is not None and not (isinstance(sb, int) and sb >= 1):
            out.append(Violation("$.experiment.search_budget",
                                 "search_budget must be an integer >= 1"))
    elif kind in ("renorm", "renorm-fit"):
        eps = exp.get("epsilon")
        if not (isinstance(eps, (int, float)) and 0 < eps < 0.5):
            out.append(Violation("$.experiment.epsilon",
                                 "epsilon must lie in (0, 0.5)"))
        ns = exp.get("ns", exp.get("n"))
        if isinstance(ns, int):
            ns = [ns]
        if not (isinstance(ns, (list, tuple)) and len(ns) >= 1
                and all(isinstance(v, int) and v >= 1 for v in ns)):
            out.append(Violation("$.experiment.ns",
                                 "ns must be a nonempty list of integers >= 1"))
        boxes = exp.get("boxes")
        if not (isinstance(boxes, dict) and "S" in boxes and "L" in boxes):
            out.append(Violation("$.experiment.boxes",
                                 "boxes must carry S and L box specs"))
        else:
            for key in ("S", "L"):
                try:
                    BoxSpec.from_dict(boxes[key])
                except (ValueError, KeyError, TypeError) as exc:
                    out.append(Violation(f"$.experiment.boxes.{key}", str(exc)))
        need("samples", lambda v: isinstance(v, int) and v >= 1,
             "$.experiment.samples", "samples must be an integer >= 1")
    elif kind == "oracle":
        g = exp.get("graph")
        if not isinstance(g, dict) or "n" not in g or "edges" not in g:
            out.append(Violation("$.experiment.graph",
                                 "graph must carry n and edges"))
        elif not (isinstance(g["n"], int) and 1 <= g["n"] <= 12):
            out.append(Violation("$.experiment.graph.n",
                                 "oracle graphs must have 1..12 vertices"))
        need("op", lambda v: v in ("survival", "hit"),
             "$.experiment.op", "op must be 'survival' or 'hit'")
        if not isinstance(exp.get("t"), (int, float)) or exp["t"] < 0:
            out.append(Violation("$.experiment.t", "t must be a number >= 0"))
        op = exp.get("op", "survival")
        if op == "survival" and "init" not in exp:
            out.append(Violation("$.experiment.init",
                                 "survival op requires init vertices"))
        if op == "hit":
            for name in ("a", "b"):
                if name not in exp:
                    out.append(Violation(f"$.experiment.{name}",
                                         f"hit op requires {name} vertices"))
    elif kind in ("c1", "c2"):
        t = exp.get("t")
        if not (isinstance(t, (int, float)) and t >= 0):
            out.append(Violation("$.experiment.t", "t must be a number >= 0"))
        if kind == "c2":
            m = exp.get("m")
            if not (isinstance(m, (int, float)) and m >= 0):
                out.append(Violation("$.experiment.m", "m must be >= 0"))
    elif kind == "hit":
        for name in ("a", "b"):
            pts = exp.get(name)
            if not (isinstance(pts, (list, tuple)) and len(pts) >= 1):
                out.append(Violation(f"$.experiment.{name}",
                                     f"{name} must be a nonempty list of sites"))
    return out


def validate_config(obj: dict) -> list[Violation]:
    """Every violation in the config, schema stage first."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    out = [Violation(err.json_path, err.message)
           for err in sorted(validator.iter_errors(obj), key=lambda e: e.json_path)]
    out.extend(_semantic_violations(obj))
    return out


@dataclass
class RunConfig:
    kind: str
    experiment: dict
    region: Optional[Region]
    mu: DistributionSpec
    env_seed: Optional[int]
    regime: str
    params: ModelParams
    replicas: int
    seed: int
    workers: Optional[int]

    @staticmethod
    def from_dict(obj: dict) -> "RunConfig":
        violations = validate_config(obj)
        if violations:
            raise ConfigError(violations)
        env = obj["env"]
        exp = dict(obj["experiment"])
        return RunConfig(
            kind=exp.pop("kind"),
            experiment=exp,
            region=Region.from_dict(obj["region"]) if "region" in obj else None,
            mu=DistributionSpec.from_dict(env["mu"]),
            env_seed=env.get("env_seed"),
            regime=env.get("regime", "quenched"),
            params=ModelParams.from_dict(obj["params"]),
            replicas=int(obj.get("replicas", DEFAULT_REPLICAS)),
            seed=int(obj.get("seed", 0)),
            workers=obj.get("workers"),
        )

    def to_dict(self) -> dict:
        out = {
            "experiment": {"kind": self.kind, **self.experiment},
            "env": {"mu": self.mu.to_dict(), "env_seed": self.env_seed,
                    "regime": self.regime},
            "params": self.params.to_dict(),
            "replicas": self.replicas,
            "seed": self.seed,
        }
        if self.region is not None:
            out["region"] = self.region.to_dict()
        if self.workers is not None:
            out["workers"] = self.workers
        return out

    def resolved_region(self) -> Region:
        if self.region is not None:
            return self.region
        return default_region(d=int(self.experiment.get("d", 1)))

    def survival_query(self, horizon: Optional[float] = None) -> SurvivalQuery:
        initial = InitialSpec.from_dict(self.experiment["initial"]) \
            if "initial" in self.experiment else InitialSpec()
        return SurvivalQuery(
            region=self.resolved_region(),
            horizon=self.params.horizon if horizon is None else horizon,
            initial=initial,
            regime=self.regime,
            env_seed=0 if self.env_seed is None else int(self.env_seed),
            replicas=self.replicas,
            master_seed=self.seed,
        )


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([Violation(
                "$", f"not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}")])
    if not isinstance(obj, dict):
        raise ConfigError([Violation("$", "config must be a JSON object")])
    return RunConfig.from_dict(obj)


@dataclass
class RunRecord:
    """Self-describing result: config echo, results, and provenance."""

    config: dict
    results: dict
    wall_clock_s: float
    version: str = VERSION
    seed_rule: str = SEED_RULE

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "results": self.results,
            "wall_clock_s": self.wall_clock_s,
            "version": self.version,
            "seed_rule": self.seed_rule,
        }

    def results_bytes(self) -> bytes:
        """The determinism contract: byte-identical across worker counts."""
        return json.dumps(self.results, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")


def dump_record(record: RunRecord, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
