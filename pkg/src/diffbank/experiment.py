"""Seeded experiment harness: dataset -> bank -> staged training -> metrics.

One seed is one full run: build (or load) the dataset, construct the feature
bank for the configured basis, train through the stage plan, and score the
test split at the best-validation checkpoint. ``run_experiment`` repeats
that over the config's seed list and reports mean and sample std.

``run_ablation`` runs three arms on shared seeds so the deltas isolate each
ingredient: plain power-iteration features on the random-walk-symmetric
operator, the configured robust basis without staging, and the full staged
plan. All arms of one seed reuse the same dataset draw.

SpMM counts come from the module-global counter in ``graph``, so per-phase
attribution assumes seeds run one at a time. ``DIFFBANK_THREADS`` (default
1) raises the fan-out for wall-clock speed when exact per-phase counts do
not matter; totals stay correct either way.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .backbone import label_features
from .banks import chebyshev_bank, jacobi_bank, legendre_bank, monomial_bank
from .calibration import calibrate
from .config import config_hash, to_stage_plan, to_synthetic_spec, to_train_config
from .errors import ConfigError, DataError
from .graph import graph_hash, make_operator, spmm_call_count
from .hrp import evaluate_split, run_hrp_training
from .io import load_edge_list, load_features, load_features_csv, load_labels
from .krylov import batched_lanczos, ritz_bank, ritz_bank_as_hopbank
from .synth import generate

__all__ = ["prepare_dataset", "build_bank", "run_seed", "run_experiment",
           "run_ablation", "summarize"]


def _array_hash(a: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def prepare_dataset(cfg: dict, seed: int):
    """Return (graph, features, labels, info). Synthetic specs draw from the
    seed; file datasets are seed-independent."""
    ds = cfg["dataset"]
    if "synthetic" in ds:
        g, x, lv = generate(to_synthetic_spec(cfg, seed))
        info = {"source": "synthetic",
                "generator": ds["synthetic"].get("generator", "sbm")}
    else:
        undirected = ds.get("undirected", True)
        g = load_edge_list(ds["edges"], ds.get("num_nodes"), undirected=undirected,
                           add_self_loops=ds.get("add_self_loops", False))
        lv = load_labels(ds["labels"], g.n)
        if "features" in ds:
            path = ds["features"]
            if path.endswith(".fmx"):
                x = load_features(path)
            else:
                x = load_features_csv(path)
            if x.shape[0] != g.n:
                raise DataError(f"feature rows ({x.shape[0]}) do not match the "
                                f"graph ({g.n} nodes)")
        else:
            x = label_features(lv)
        info = {"source": "files", "edges": ds["edges"]}
    if cfg.get("label_diffusion"):
        op = make_operator(g, "da")
        x = np.concatenate([x, label_features(lv, op)], axis=1)
    info["graph_hash"] = graph_hash(g)
    info["feature_hash"] = _array_hash(x)
    info["label_hash"] = _array_hash(lv.labels)
    return g, x, lv, info


def build_bank(cfg: dict, graph, x):
    """Construct the hop bank named by the config.

    Returns (bank, details) where details carries the calibration result
    for the ``auto`` basis and skipped-channel info for ``krylov``.
    """
    basis = cfg["basis"]
    hops = cfg["hops"]
    details = {"basis": basis}
    spmm0 = spmm_call_count()
    t0 = time.perf_counter()

    if basis == "monomial":
        op = make_operator(graph, cfg["operator"])
        bank = monomial_bank(op, x, hops)
    elif basis in ("chebyshev", "legendre", "jacobi", "auto"):
        op = make_operator(graph, "shifted")
        if cfg["operator"] != "shifted":
            raise ConfigError(f"the {basis} basis runs on the shifted operator, "
                              f"config says {cfg['operator']!r}")
        if basis == "chebyshev":
            bank = chebyshev_bank(op, x, hops, row_scale=cfg["row_scale"])
        elif basis == "legendre":
            bank = legendre_bank(op, x, hops, row_scale=cfg["row_scale"])
        elif basis == "jacobi":
            j = cfg["jacobi"]
            bank = jacobi_bank(op, x, hops, j["alpha"], j["beta"],
                               row_scale=cfg["row_scale"])
        else:
            cal = cfg["calibration"]
            weights, density, moments = calibrate(
                op, order=cal["order"], probes=cal["probes"],
                grid_points=cal["grid"], gamma=cal["gamma"],
                probe_kind=cal["probe_kind"], exact=cal["exact"],
                seed=cal["seed"])
            details["calibration"] = {
                "delta": weights.delta, "alpha": weights.alpha,
                "beta": weights.beta, "gamma": weights.gamma,
                "moments": [float(m) for m in moments.values],
            }
            bank = jacobi_bank(op, x, hops, weights.alpha, weights.beta,
                               row_scale=cfg["row_scale"])
    elif basis == "krylov":
        op = make_operator(graph, "shifted")
        order = cfg["krylov"]["order"] or hops + 1
        if order < hops + 1:
            raise ConfigError(f"krylov order {order} cannot cover {hops} hops; "
                              f"need at least hops + 1 = {hops + 1}")
        fact = batched_lanczos(op, x, order, reorth=cfg["krylov"]["reorth"])
        rb = ritz_bank(fact, n=graph.n)
        bank = ritz_bank_as_hopbank(rb, hops, raw_hop0=x)
        details["skipped_channels"] = list(fact.skipped)
        details["breakdown_channels"] = [cf.channel for cf in fact.channels
                                         if cf.breakdown]
    else:
        raise ConfigError(f"unknown basis {basis!r}")

    details["spmm"] = spmm_call_count() - spmm0
    details["seconds"] = time.perf_counter() - t0
    return bank, details


def run_seed(cfg: dict, seed: int, *, workdir=None, history_sink=None) -> dict:
    """One complete run for one seed; returns a flat report dict."""
    g, x, lv, data_info = prepare_dataset(cfg, seed)
    bank, bank_info = build_bank(cfg, g, x)
    plan = to_stage_plan(cfg)
    tcfg = to_train_config(cfg, seed)
    result = run_hrp_training(plan, bank, g, lv, tcfg,
                              model_kind=cfg["backbone"], workdir=workdir,
                              history_sink=history_sink,
                              diagnostics=cfg["hrp"].get("diagnostics", False))
    test = evaluate_split(result.model, result.params, result.bank, lv,
                          lv.test_mask, cfg["metric"])
    diffusion = result.report["total_diffusion_spmm"]
    diagnostic = result.report["total_diagnostic_spmm"]
    total_spmm = bank_info["spmm"] + diffusion + diagnostic
    return {
        "seed": seed,
        "test_metric": float(test),
        "val_metric": float(result.best_val),
        "best_stage": result.best_stage,
        "best_epoch": result.best_epoch,
        "bank": bank_info,
        "data": data_info,
        "stages": result.report["stages"],
        "total_diffusion_spmm": diffusion,
        "total_diagnostic_spmm": diagnostic,
        "preprocess_spmm": bank_info["spmm"],
        "total_spmm": total_spmm,
        "hrp_spmm_share": diffusion / total_spmm if total_spmm else 0.0,
        "train_seconds": result.report["total_train_seconds"],
        "diffusion_seconds": result.report["total_diffusion_seconds"],
    }


def summarize(rows: list) -> dict:
    vals = np.array([r["test_metric"] for r in rows], dtype=np.float64)
    return {
        "mean": float(vals.mean()),
        "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
        "per_seed": [float(v) for v in vals],
    }


def _thread_count() -> int:
    raw = os.environ.get("DIFFBANK_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"DIFFBANK_THREADS must be an integer, got {raw!r}")


def run_experiment(cfg: dict, *, workdir=None, history_sink=None) -> dict:
    seeds = cfg["seeds"]
    threads = _thread_count()
    if threads == 1:
        rows = [run_seed(cfg, s, workdir=workdir, history_sink=history_sink)
                for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda s: run_seed(cfg, s, workdir=workdir),
                                 seeds))
    return {
        "config_hash": config_hash(cfg),
        "metric": cfg["metric"],
        "seeds": list(seeds),
        "runs": rows,
        "summary": summarize(rows),
    }


def _arm_config(cfg: dict, *, basis=None, operator=None, stages=None) -> dict:
    arm = json.loads(json.dumps(cfg))
    if basis is not None:
        arm["basis"] = basis
    if operator is not None:
        arm["operator"] = operator
    if stages is not None:
        arm["hrp"]["stages"] = stages
        eps = arm["hrp"].get("epochs", arm["train"].get("epochs", 100))
        if isinstance(eps, list):
            arm["hrp"]["epochs"] = eps[:stages] if len(eps) >= stages else eps[0]
    return arm


def run_ablation(cfg: dict, *, workdir=None) -> dict:
    """Three arms on shared seeds: power baseline, robust basis, full plan."""
    arms = {
        "baseline-monomial-dad": _arm_config(cfg, basis="monomial", operator="dad",
                                             stages=1),
        "robust-basis": _arm_config(cfg, stages=1),
        "robust-basis+hrp": _arm_config(cfg),
    }
    out = {"config_hash": config_hash(cfg), "metric": cfg["metric"],
           "seeds": list(cfg["seeds"]), "arms": {}}
    for name, arm_cfg in arms.items():
        res = run_experiment(arm_cfg, workdir=workdir)
        out["arms"][name] = {
            "summary": res["summary"],
            "runs": res["runs"],
        }
    return out
