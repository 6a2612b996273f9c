"""Experiment configuration: a JSON document with ``experiment``, ``model``,
``params`` and ``run`` sections.  Parsing reports every problem at once."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from pinlab.disorder_env import FAMILIES

KINDS = (
    "kernel-diagnostics",
    "homogeneous-curve",
    "exponent-fit",
    "beta2",
    "second-moment",
    "martingale",
    "quenched-surface",
    "contact-fraction",
    "marginal-convergence",
    "oracle-suite",
)

MODEL_DEFAULTS = {
    "alpha": 0.3,
    "L": {"kind": "constant", "c": 1.0},
    "recurrent": True,
    "n_max": 1 << 17,
    "tail_tolerance": 1e-6,
    "disorder": "gaussian",
}

PARAM_DEFAULTS = {
    "beta": None,
    "beta_units": "absolute",
    "beta_grid": None,
    "h_grid": None,
    "N_grid": None,
    "gamma": None,
    "m": 5,
    "window": [1e-4, 1e-2],
    "n_points": 21,
    "threshold_c": 0.5,
    "alpha_plus": None,
    "families": None,
    "oracle_N_max": 14,
    "oracle_tuples": 50,
    "oracle_alphas": [0.3, 0.5, 0.7],
}

RUN_DEFAULTS = {
    "n_samples": 100,
    "seed_base": 0,
    "workers": 1,
    "chunk": 64,
    "out_dir": "results",
    "formats": ["json", "csv", "svg"],
    "axes": "auto",
}

# parameters each kind cannot run without
REQUIRED = {
    "homogeneous-curve": ["h_grid"],
    "second-moment": ["beta", "N_grid"],
    "martingale": ["beta", "N_grid"],
    "quenched-surface": ["beta_grid", "h_grid", "N_grid"],
    "contact-fraction": ["beta", "gamma", "N_grid"],
    "marginal-convergence": ["beta", "N_grid"],
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "model": dict(self.model), "params": dict(self.params),
                "run": dict(self.run)}

    def numeric_dict(self) -> dict:
        """The part of the config that determines the numbers (no workers/out_dir)."""
        d = self.to_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("workers", "out_dir", "formats", "axes")}
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.numeric_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError([f"duplicated key {k!r}"])
        out[k] = v
    return out


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_grid(name, v, errors, integer=False, positive=False):
    if v is None:
        return
    if not isinstance(v, list) or not v:
        errors.append(f"params.{name}: must be a non-empty list")
        return
    for x in v:
        if not _is_num(x) or (integer and int(x) != x) or (positive and x <= 0):
            kind = "positive integers" if integer else "finite numbers"
            errors.append(f"params.{name}: entries must be {kind}, got {x!r}")
            return


def _merge(section: str, given, defaults: dict, errors: list) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        errors.append(f"{section}: must be an object")
        return dict(defaults)
    for k in given:
        if k not in defaults:
            errors.append(f"{section}.{k}: unknown key")
    out = dict(defaults)
    out.update({k: v for k, v in given.items() if k in defaults})
    return out


def validate(doc) -> ExperimentConfig:
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: must be a JSON object"])
    for k in doc:
        if k not in ("experiment", "model", "params", "run"):
            errors.append(f"{k}: unknown key")
    kind = doc.get("experiment")
    if kind not in KINDS:
        errors.append(f"experiment: unknown experiment kind {kind!r}")
    model = _merge("model", doc.get("model"), MODEL_DEFAULTS, errors)
    params = _merge("params", doc.get("params"), PARAM_DEFAULTS, errors)
    run = _merge("run", doc.get("run"), RUN_DEFAULTS, errors)

    a = model["alpha"]
    if not _is_num(a) or not 0.0 < a < 1.0:
        errors.append(f"model.alpha: must lie in (0, 1), got {a!r}")
    L = model["L"]
    if not isinstance(L, dict):
        errors.append("model.L: must be an object")
    else:
        for k in L:
            if k not in ("kind", "c", "p"):
                errors.append(f"model.L.{k}: unknown key")
        if L.get("kind", "constant") not in ("constant", "log_power"):
            errors.append(f"model.L.kind: expected 'constant' or 'log_power', got {L.get('kind')!r}")
        c = L.get("c", 1.0)
        if not _is_num(c) or c <= 0:
            errors.append(f"model.L.c: must be positive, got {c!r}")
        if "p" in L and not _is_num(L["p"]):
            errors.append(f"model.L.p: must be a number, got {L['p']!r}")
    if not isinstance(model["recurrent"], bool):
        errors.append("model.recurrent: must be true or false")
    if not isinstance(model["n_max"], int) or isinstance(model["n_max"], bool) or model["n_max"] < 1:
        errors.append(f"model.n_max: must be a positive integer, got {model['n_max']!r}")
    if not _is_num(model["tail_tolerance"]) or model["tail_tolerance"] <= 0:
        errors.append("model.tail_tolerance: must be positive")
    if model["disorder"] not in FAMILIES:
        errors.append(f"model.disorder: expected one of {FAMILIES}, got {model['disorder']!r}")

    for name in ("beta_grid", "h_grid"):
        _check_grid(name, params[name], errors)
    _check_grid("N_grid", params["N_grid"], errors, integer=True, positive=True)
    if params["beta"] is not None and (not _is_num(params["beta"]) or params["beta"] < 0):
        errors.append(f"params.beta: must be a nonnegative number, got {params['beta']!r}")
    if params["beta_units"] not in ("absolute", "beta2"):
        errors.append("params.beta_units: expected 'absolute' or 'beta2'")
    if params["gamma"] is not None and (not _is_num(params["gamma"]) or params["gamma"] <= 0):
        errors.append("params.gamma: must be positive")
    if not isinstance(params["m"], int) or not 0 <= params["m"] <= 16:
        errors.append("params.m: must be an integer in [0, 16]")
    w = params["window"]
    if not (isinstance(w, list) and len(w) == 2 and all(_is_num(x) and x > 0 for x in w) and w[0] < w[1]):
        errors.append("params.window: must be [u_min, u_max] with 0 < u_min < u_max")
    if not isinstance(params["n_points"], int) or params["n_points"] < 5:
        errors.append("params.n_points: must be an integer >= 5")
    if params["families"] is not None and (not isinstance(params["families"], list) or not params["families"]
                                           or any(f not in FAMILIES for f in params["families"])):
        errors.append(f"params.families: must be a non-empty list drawn from {FAMILIES}")
    if not isinstance(params["oracle_N_max"], int) or not 1 <= params["oracle_N_max"] <= 20:
        errors.append("params.oracle_N_max: must be an integer in [1, 20]")
    _check_grid("oracle_alphas", params["oracle_alphas"], errors)

    if not isinstance(run["n_samples"], int) or run["n_samples"] < 2:
        errors.append("run.n_samples: must be an integer >= 2")
    if not isinstance(run["seed_base"], int) or isinstance(run["seed_base"], bool) or run["seed_base"] < 0:
        errors.append("run.seed_base: must be a nonnegative integer")
    if not isinstance(run["workers"], int) or run["workers"] < 1:
        errors.append("run.workers: must be a positive integer")
    if not isinstance(run["chunk"], int) or run["chunk"] < 1:
        errors.append("run.chunk: must be a positive integer")
    if not isinstance(run["formats"], list) or any(f not in ("json", "csv", "svg") for f in run["formats"]):
        errors.append("run.formats: entries must be 'json', 'csv' or 'svg'")
    if run["axes"] not in ("auto", "linear", "log"):
        errors.append("run.axes: expected 'auto', 'linear' or 'log'")

    if kind in REQUIRED:
        for name in REQUIRED[kind]:
            if params.get(name) is None:
                errors.append(f"params.{name}: required for experiment {kind!r}")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, model, params, run)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config; raises ConfigError listing all problems."""
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from None
    return validate(doc)
