"""Command line entry points.

Subcommands mirror the pipeline phases::

    diffbank generate    write a synthetic dataset to disk
    diffbank preprocess  build a hop bank from a graph and features
    diffbank calibrate   estimate the spectral density and Jacobi weights
    diffbank train       run the staged trainer from a config file
    diffbank evaluate    score a saved checkpoint on a split
    diffbank diagnose    conditioning and Ritz diagnostics for a saved bank
    diffbank experiment  multi-seed run or ablation from a config file

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Anything else is a bug.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import io as dio
from .backbone import TrainConfig
from .banks import bank_report
from .calibration import calibrate
from .config import (config_hash, load_config, to_stage_plan, to_synthetic_spec,
                     to_train_config)
from .errors import ConfigError, DataError, DiffbankError, NumericalError
from .experiment import build_bank, prepare_dataset, run_ablation, run_experiment
from .graph import make_operator
from .hrp import build_model, evaluate_split, run_hrp_training
from .krylov import batched_lanczos, ritz_bank, ritz_triples
from .synth import SyntheticSpec, generate

__all__ = ["main"]


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(generator=args.generator, n=args.nodes, blocks=args.blocks,
                         p_intra=args.p_intra, p_inter=args.p_inter,
                         feature_dim=args.feature_dim, snr=args.snr,
                         noise=args.noise, homophily=args.homophily,
                         signal_quantile=args.signal_quantile, seed=args.seed)
    g, x, lv = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    dio.save_edge_list(os.path.join(args.out, "edges.tsv"), g)
    dio.save_features(os.path.join(args.out, "features.fmx"), x)
    dio.save_labels(os.path.join(args.out, "labels.tsv"), lv)
    print(f"wrote {g.n} nodes, {g.num_edges} edges, {x.shape[1]} feature "
          f"channels to {args.out}")
    return 0


def _load_graph_features(args):
    g = dio.load_edge_list(args.edges, args.nodes, undirected=not args.directed,
                           add_self_loops=args.self_loops)
    if args.features.endswith(".fmx"):
        x = dio.load_features(args.features)
    else:
        x = dio.load_features_csv(args.features)
    if x.shape[0] != g.n:
        raise DataError(f"feature rows ({x.shape[0]}) do not match the graph "
                        f"({g.n} nodes)")
    return g, x


def _cmd_preprocess(args) -> int:
    g, x = _load_graph_features(args)
    cfg = {
        "basis": args.basis, "hops": args.hops, "operator": args.operator,
        "row_scale": args.row_scale,
        "jacobi": {"alpha": args.alpha, "beta": args.beta},
        "calibration": {"order": args.cheb_order, "probes": args.probes,
                        "grid": 512, "gamma": args.gamma,
                        "probe_kind": "gaussian", "exact": args.exact,
                        "seed": args.seed},
        "krylov": {"order": args.krylov_order, "reorth": args.reorth},
    }
    bank, details = build_bank(cfg, g, x)
    dio.save_bank_file(args.out, bank)
    print(f"bank: {bank.hops} hops x {bank.n} nodes x {bank.width} channels "
          f"({details['spmm']} sparse products, {details['seconds']:.2f}s)")
    if "calibration" in details:
        c = details["calibration"]
        print(f"calibrated weights: alpha={c['alpha']:.4f} beta={c['beta']:.4f} "
              f"(imbalance {c['delta']:+.4f})")
    return 0


def _cmd_calibrate(args) -> int:
    g = dio.load_edge_list(args.edges, args.nodes, undirected=not args.directed,
                           add_self_loops=args.self_loops)
    op = make_operator(g, "shifted")
    weights, density, moments = calibrate(
        op, order=args.cheb_order, probes=args.probes, gamma=args.gamma,
        seed=args.seed, exact=args.exact)
    payload = {
        "delta": weights.delta,
        "alpha": weights.alpha,
        "beta": weights.beta,
        "gamma": weights.gamma,
        "moments": [float(m) for m in moments.values],
        "density": {
            "grid": [float(v) for v in density.grid],
            "rho": [float(v) for v in density.rho],
        },
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote calibration to {args.out} "
              f"(delta {weights.delta:+.4f} -> alpha {weights.alpha:.4f}, "
              f"beta {weights.beta:.4f})")
    else:
        print(text)
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = cfg["seeds"][0] if args.seed is None else args.seed
    os.makedirs(args.out, exist_ok=True)
    g, x, lv, data_info = prepare_dataset(cfg, seed)
    bank, bank_info = build_bank(cfg, g, x)
    plan = to_stage_plan(cfg)
    tcfg = to_train_config(cfg, seed)

    log_path = os.path.join(args.out, "epochs.jsonl")
    with open(log_path, "w", encoding="utf-8") as log:
        def sink(row):
            log.write(json.dumps(row) + "\n")

        result = run_hrp_training(plan, bank, g, lv, tcfg,
                                  model_kind=cfg["backbone"],
                                  workdir=args.out, history_sink=sink)

    test = evaluate_split(result.model, result.params, result.bank, lv,
                          lv.test_mask, cfg["metric"])
    model_cfg = {
        "backbone": cfg["backbone"], "hops": result.bank.hops,
        "width": result.bank.width, "num_classes": lv.num_classes,
        "trunk": list(tcfg.trunk), "state_dim": tcfg.state_dim,
        "readout": tcfg.readout, "config_hash": config_hash(cfg),
        "best_stage": result.best_stage, "best_epoch": result.best_epoch,
    }
    dio.save_checkpoint(os.path.join(args.out, "model.mdl"), result.params,
                        model_cfg)
    dio.save_bank_file(os.path.join(args.out, "bank.hbk"), result.bank)
    report = {
        "config_hash": config_hash(cfg),
        "seed": seed,
        "data": data_info,
        "bank": bank_info,
        "test_metric": float(test),
        **result.report,
    }
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"best val {result.best_val:.4f} (stage {result.best_stage}, epoch "
          f"{result.best_epoch}); test {cfg['metric']} {test:.4f}")
    print(f"artifacts in {args.out}: model.mdl, bank.hbk, report.json, epochs.jsonl")
    return 0


def _cmd_evaluate(args) -> int:
    params, model_cfg = dio.load_checkpoint(args.model)
    bank = dio.load_bank_file(args.bank)
    lv = dio.load_labels(args.labels, bank.n)
    tcfg = TrainConfig(trunk=tuple(model_cfg.get("trunk", (256, 256))),
                       state_dim=model_cfg.get("state_dim", 64),
                       readout=model_cfg.get("readout", "last"))
    model = build_model(model_cfg["backbone"], bank.hops, bank.width,
                        model_cfg["num_classes"], tcfg)
    got = {k: v.shape for k, v in params.items()}
    want = {k: v.shape for k, v in model.init(seed=0).items()}
    if got != want:
        raise DataError("checkpoint parameters do not fit the model described "
                        "by its own config block")
    out = {}
    for split, mask in (("train", lv.train_mask), ("val", lv.val_mask),
                        ("test", lv.test_mask)):
        if mask.any():
            out[split] = evaluate_split(model, params, bank, lv, mask, args.metric)
    print(json.dumps(out, indent=2))
    return 0


def _cmd_diagnose(args) -> int:
    bank = dio.load_bank_file(args.bank)
    rep = bank_report(bank)
    os.makedirs(args.out, exist_ok=True)
    cond_path = os.path.join(args.out, "conditioning.csv")
    with open(cond_path, "w", encoding="utf-8") as fh:
        diag_names = ",".join(f"g{k}" for k in range(bank.hops + 1))
        fh.write(f"channel,cond,mean_abs_cos,{diag_names}\n")
        for c in range(bank.width):
            diags = ",".join(f"{rep.gram[c][k, k]:.8e}" for k in range(bank.hops + 1))
            fh.write(f"{c},{rep.cond[c]:.8e},{rep.mean_abs_cos[c]:.8e},{diags}\n")
    print(f"conditioning: median cond {np.median(rep.cond):.3e}, "
          f"mean |cos| {np.mean(rep.mean_abs_cos):.4f} -> {cond_path}")
    if len(rep.zero_norm_channels):
        print(f"zero-norm channels: {list(rep.zero_norm_channels)}")

    if args.edges and args.features:
        g, x = _load_graph_features(args)
        op = make_operator(g, "shifted")
        fact = batched_lanczos(op, x, args.krylov_order, reorth="full")
        rb = ritz_bank(fact, n=g.n)
        ritz_path = os.path.join(args.out, "ritz.csv")
        with open(ritz_path, "w", encoding="utf-8") as fh:
            fh.write("channel,ritz_value,weight\n")
            for t in ritz_triples(rb):
                fh.write(f"{t['channel']},{t['value']:.10e},{t['weight']:.10e}\n")
        print(f"ritz sidecar -> {ritz_path}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.ablation:
        result = run_ablation(cfg, workdir=args.workdir)
        for name, arm in result["arms"].items():
            s = arm["summary"]
            print(f"{name}: {s['mean']:.4f} +/- {s['std']:.4f} "
                  f"({len(s['per_seed'])} seeds)")
    else:
        result = run_experiment(cfg, workdir=args.workdir)
        s = result["summary"]
        print(f"{cfg['metric']}: {s['mean']:.4f} +/- {s['std']:.4f} over "
              f"{len(s['per_seed'])} seeds")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
            fh.write("\n")
        print(f"full report -> {args.out}")
    return 0


def _add_graph_args(p, features=True):
    p.add_argument("--edges", required=True, help="tab-separated edge list")
    if features:
        p.add_argument("--features", required=True,
                       help="feature matrix (.fmx binary or delimited text)")
    p.add_argument("--nodes", type=int, default=None,
                   help="node count (default: inferred from the edge list)")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--self-loops", dest="self_loops", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diffbank",
                                 description="sparse diffusion feature banks "
                                             "and staged training")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--generator", choices=["sbm", "spectral-signal"], default="sbm")
    g.add_argument("--nodes", type=int, default=400)
    g.add_argument("--blocks", type=int, default=2)
    g.add_argument("--p-intra", type=float, default=0.05)
    g.add_argument("--p-inter", type=float, default=0.05)
    g.add_argument("--feature-dim", type=int, default=8)
    g.add_argument("--snr", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--homophily", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--signal-quantile", type=float, default=0.9)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    p = sub.add_parser("preprocess", help="build and save a hop bank")
    _add_graph_args(p)
    p.add_argument("--basis", choices=["monomial", "chebyshev", "legendre",
                                       "jacobi", "auto", "krylov"],
                   default="legendre")
    p.add_argument("--operator", choices=["dad", "da", "lap", "shifted"],
                   default="shifted")
    p.add_argument("--hops", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--row-scale", dest="row_scale", action="store_true")
    p.add_argument("--cheb-order", type=int, default=20)
    p.add_argument("--probes", type=int, default=64)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--exact", action="store_true",
                   help="dense trace moments (small graphs only)")
    p.add_argument("--krylov-order", type=int, default=None)
    p.add_argument("--reorth", choices=["full", "selective", "none"],
                   default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output bank file (.hbk)")
    p.set_defaults(func=_cmd_preprocess)

    c = sub.add_parser("calibrate", help="spectral density and Jacobi weights")
    _add_graph_args(c, features=False)
    c.add_argument("--cheb-order", type=int, default=20)
    c.add_argument("--probes", type=int, default=64)
    c.add_argument("--gamma", type=float, default=0.5)
    c.add_argument("--exact", action="store_true")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None, help="JSON output path (default stdout)")
    c.set_defaults(func=_cmd_calibrate)

    t = sub.add_parser("train", help="staged training from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None,
                   help="override the first config seed")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="score a saved model on all splits")
    e.add_argument("--model", required=True, help="checkpoint file (.mdl)")
    e.add_argument("--bank", required=True, help="bank file (.hbk)")
    e.add_argument("--labels", required=True)
    e.add_argument("--metric", choices=["accuracy", "roc_auc"], default="accuracy")
    e.set_defaults(func=_cmd_evaluate)

    d = sub.add_parser("diagnose", help="conditioning and Ritz diagnostics")
    d.add_argument("--bank", required=True)
    d.add_argument("--edges", default=None)
    d.add_argument("--features", default=None)
    d.add_argument("--nodes", type=int, default=None)
    d.add_argument("--directed", action="store_true")
    d.add_argument("--self-loops", dest="self_loops", action="store_true")
    d.add_argument("--krylov-order", type=int, default=8)
    d.add_argument("--out", required=True, help="output directory")
    d.set_defaults(func=_cmd_diagnose)

    x = sub.add_parser("experiment", help="multi-seed run or ablation")
    x.add_argument("--config", required=True)
    x.add_argument("--ablation", action="store_true",
                   help="run baseline / robust / robust+staged arms")
    x.add_argument("--workdir", default=None,
                   help="spill directory for hidden-state snapshots")
    x.add_argument("--out", default=None, help="JSON report path")
    x.set_defaults(func=_cmd_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except DiffbankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
