"""Experiment configuration: JSON schema, defaults, and dataclass adapters.

A config file is a single JSON object. Unknown keys are rejected so typos
fail loudly instead of silently running the default. Numeric budgets (hop
count, Lanczos steps) are checked here as well as at the point of use, so a
bad config dies before any graph is loaded.

``config_hash`` is the sha256 of the canonical re-serialization (sorted
keys, no whitespace), so formatting and key order do not change identity.
"""

import copy
import hashlib
import json

import jsonschema

from .backbone import TrainConfig
from .banks import MAX_HOPS
from .errors import ConfigError
from .hrp import StagePlan
from .krylov import MAX_LANCZOS_STEPS
from .synth import SyntheticSpec

__all__ = [
    "CONFIG_SCHEMA", "DEFAULTS", "load_config", "validate_config",
    "config_hash", "to_train_config", "to_stage_plan", "to_synthetic_spec",
]

_OPERATORS = ["dad", "da", "lap", "shifted"]
_BASES = ["monomial", "chebyshev", "legendre", "jacobi", "auto", "krylov"]

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "synthetic": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "generator": {"enum": ["sbm", "spectral-signal"]},
                        "n": {"type": "integer", "minimum": 4},
                        "blocks": {"type": "integer", "minimum": 1},
                        "p_intra": {"type": "number", "minimum": 0, "maximum": 1},
                        "p_inter": {"type": "number", "minimum": 0, "maximum": 1},
                        "feature_dim": {"type": "integer", "minimum": 1},
                        "snr": {"type": "number", "minimum": 0},
                        "noise": {"type": "number", "minimum": 0},
                        "homophily": {"type": ["boolean", "null"]},
                        "signal_quantile": {"type": "number"},
                        "confounder_modes": {"type": "integer", "minimum": 0},
                        "confounder_scale": {"type": "number", "minimum": 0},
                    },
                },
                "edges": {"type": "string"},
                "features": {"type": "string"},
                "labels": {"type": "string"},
                "undirected": {"type": "boolean"},
                "add_self_loops": {"type": "boolean"},
                "num_nodes": {"type": "integer", "minimum": 1},
            },
        },
        "operator": {"enum": _OPERATORS},
        "basis": {"enum": _BASES},
        "hops": {"type": "integer", "minimum": 0},
        "row_scale": {"type": "boolean"},
        "jacobi": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number"},
                "beta": {"type": "number"},
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"type": "integer", "minimum": 1},
                "probes": {"type": "integer", "minimum": 1},
                "grid": {"type": "integer", "minimum": 8},
                "gamma": {"type": "number"},
                "probe_kind": {"enum": ["gaussian", "rademacher"]},
                "exact": {"type": "boolean"},
                "seed": {"type": "integer"},
            },
        },
        "krylov": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "order": {"type": "integer", "minimum": 1},
                "reorth": {"enum": ["full", "selective", "none"]},
            },
        },
        "backbone": {"enum": ["mlp", "gru"]},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "weight_decay": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "trunk": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "state_dim": {"type": "integer", "minimum": 1},
                "dropout": {"type": "number", "minimum": 0, "maximum": 0.99},
                "input_dropout": {"type": "number", "minimum": 0, "maximum": 0.99},
                "readout": {"enum": ["last", "mean"]},
                "patience": {"type": "integer", "minimum": 1},
            },
        },
        "hrp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stages": {"type": "integer", "minimum": 1},
                "epochs": {
                    "anyOf": [
                        {"type": "integer", "minimum": 1},
                        {"type": "array", "items": {"type": "integer", "minimum": 1}},
                    ]
                },
                "lambda0": {"type": "number", "minimum": 0, "maximum": 1},
                "schedule": {"enum": ["cosine", "constant", "perhop"]},
                "alpha_vectors": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}},
                },
                "family": {"enum": ["same", "monomial", "chebyshev", "legendre",
                                    "jacobi", "krylov"]},
                "operator": {"enum": _OPERATORS},
                "jacobi_alpha": {"type": "number"},
                "jacobi_beta": {"type": "number"},
                "lanczos_order": {"type": ["integer", "null"], "minimum": 1},
                "checkpoint_policy": {"enum": ["best-val", "diversity-screened"]},
                "warm_start": {"type": "boolean"},
                "patience": {"type": "integer", "minimum": 1},
                "screen_epochs": {"type": "integer", "minimum": 1},
                "diagnostics": {"type": "boolean"},
            },
        },
        "metric": {"enum": ["accuracy", "roc_auc"]},
        "seeds": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "label_diffusion": {"type": "boolean"},
    },
    "required": ["dataset"],
}

DEFAULTS = {
    "operator": "shifted",
    "basis": "auto",
    "hops": 6,
    "row_scale": False,
    "jacobi": {"alpha": 0.0, "beta": 0.0},
    "calibration": {"order": 20, "probes": 64, "grid": 512, "gamma": 0.5,
                    "probe_kind": "gaussian", "exact": False, "seed": 0},
    "krylov": {"order": None, "reorth": "full"},
    "backbone": "mlp",
    "train": {},
    "hrp": {"stages": 1, "epochs": 100},
    "metric": "accuracy",
    "seeds": [0],
    "label_diffusion": False,
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(raw: dict) -> dict:
    """Validate against the schema, apply defaults, and enforce budgets."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from None

    cfg = _merge(DEFAULTS, raw)

    ds = cfg["dataset"]
    if "synthetic" in ds:
        if "edges" in ds or "features" in ds or "labels" in ds:
            raise ConfigError("dataset must be either synthetic or file-based, not both")
    else:
        missing = [k for k in ("edges", "labels") if k not in ds]
        if missing:
            raise ConfigError(f"file-based dataset is missing {', '.join(missing)}")

    if cfg["hops"] > MAX_HOPS:
        raise ConfigError(f"hop count {cfg['hops']} exceeds the fixed hop budget "
                          f"of {MAX_HOPS}")
    k_order = cfg["krylov"].get("order")
    if k_order is not None and k_order > MAX_LANCZOS_STEPS:
        raise ConfigError(f"lanczos order {k_order} exceeds the fixed step budget "
                          f"of {MAX_LANCZOS_STEPS}")
    hrp_m = cfg["hrp"].get("lanczos_order")
    if hrp_m is not None and hrp_m > MAX_LANCZOS_STEPS:
        raise ConfigError(f"lanczos order {hrp_m} exceeds the fixed step budget "
                          f"of {MAX_LANCZOS_STEPS}")
    if cfg["basis"] == "krylov" and cfg["operator"] != "shifted":
        raise ConfigError("the krylov basis runs on the shifted operator only")
    if cfg["basis"] == "auto" and cfg["operator"] != "shifted":
        raise ConfigError("calibrated weights need the shifted operator")
    if not (0.0 < cfg["calibration"]["gamma"] < 1.0):
        raise ConfigError("calibration gamma must lie in (0, 1)")
    # the merged hrp section always carries the default epoch budget, so the
    # fallback to the train budget keys off what the user actually wrote
    if cfg["train"].get("epochs") is not None and "epochs" not in raw.get("hrp", {}):
        cfg["hrp"]["epochs"] = cfg["train"]["epochs"]
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def to_train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        lr=t.get("lr", 0.01),
        weight_decay=t.get("weight_decay", 0.0),
        batch_size=t.get("batch_size", 512),
        epochs=t.get("epochs", 100),
        trunk=tuple(t.get("trunk", (256, 256))),
        state_dim=t.get("state_dim", 64),
        dropout=t.get("dropout", 0.0),
        input_dropout=t.get("input_dropout", 0.0),
        readout=t.get("readout", "last"),
        metric=cfg["metric"],
        patience=t.get("patience", 50),
        seed=seed,
    )


def to_stage_plan(cfg: dict) -> StagePlan:
    h = cfg["hrp"]
    return StagePlan(
        stages=h.get("stages", 1),
        epochs=h.get("epochs", cfg["train"].get("epochs", 100)),
        lambda0=h.get("lambda0", 0.5),
        schedule=h.get("schedule", "cosine"),
        alpha_vectors=h.get("alpha_vectors"),
        hrp_family=h.get("family", "same"),
        hrp_operator=h.get("operator", "shifted"),
        jacobi_alpha=h.get("jacobi_alpha", 0.0),
        jacobi_beta=h.get("jacobi_beta", 0.0),
        lanczos_order=h.get("lanczos_order"),
        checkpoint_policy=h.get("checkpoint_policy", "best-val"),
        warm_start=h.get("warm_start", True),
        patience=h.get("patience", cfg["train"].get("patience", 50)),
        screen_epochs=h.get("screen_epochs", 10),
    )


def to_synthetic_spec(cfg: dict, seed: int) -> SyntheticSpec:
    s = cfg["dataset"]["synthetic"]
    return SyntheticSpec(
        generator=s.get("generator", "sbm"),
        n=s.get("n", 400),
        blocks=s.get("blocks", 2),
        p_intra=s.get("p_intra", 0.05),
        p_inter=s.get("p_inter", 0.05),
        feature_dim=s.get("feature_dim", 8),
        snr=s.get("snr", 1.0),
        noise=s.get("noise", 1.0),
        homophily=s.get("homophily"),
        signal_quantile=s.get("signal_quantile", 0.9),
        confounder_modes=s.get("confounder_modes", 4),
        confounder_scale=s.get("confounder_scale", 3.0),
        seed=seed,
    )
