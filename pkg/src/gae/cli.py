"""Command-line entry point: ``gae train|encode|benchmark|graph|metrics|rerun``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .autoencoder import TrainConfig
from .config import ConfigError, build_dataset, read_config, resolve
from .dataset import DataError, load_dataset, mask_labels
from .evaluate import (accuracy, normalized_mutual_information, report_csv,
                       report_json, run_experiment)
from .graph import ConvergenceError, GraphError, build_graph, graph_error_rate, save_edge_list
from .optim import NumericalError
from .seeds import derive_seed
from .serialize import FormatError, load_model, save_model
from .stack import encode_stack, train_stack

log = logging.getLogger("gae")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_KIND = {"gae": "gae", "sgae": "gae", "sae": "sae", "plain_ae": "plain", "graph_only": "graph_only"}


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_manifest(path: Path, command: str, config: dict) -> None:
    manifest = {"command": command, "config": config, "version": tool_version(),
                "seed": config.get("seed")}
    Path(path).write_text(_dump_json(manifest))


def _layer_configs(cfg, n_layers):
    opt = cfg["optimizer"]
    lam = cfg["lam"] if isinstance(cfg["lam"], list) else [cfg["lam"]] * n_layers
    return [TrainConfig(lam=float(lam[i]), eta=float(cfg["eta"]), rho=float(cfg["rho"]),
                        max_iter=opt["max_iter"], grad_tol=opt["grad_tol"],
                        seed=derive_seed(cfg["seed"], "init", i),
                        history_size=opt["history_size"])
            for i in range(n_layers)]


def cmd_train(cfg: dict) -> int:
    ds = build_dataset(cfg)
    method = cfg["method"]
    dims = cfg.get("dims") or [max(ds.class_count, 2)]
    graph = dict(cfg["graph"])
    if method == "sgae":
        frac = cfg.get("protocol", {}).get("labeled_fraction")
        if frac is None or ds.labels is None:
            raise ConfigError("sgae needs a labeled dataset and protocol.labeled_fraction")
        ds = mask_labels(ds, frac, derive_seed(cfg["seed"], "labels"))
        graph["kind"] = "semi"
        graph.setdefault("k", 5)
    elif graph["kind"] == "semi":
        raise ConfigError("graph kind 'semi' is only used by method 'sgae'")
    model = train_stack(ds, graph, dims, _layer_configs(cfg, len(dims)), kind=_KIND[method])

    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.gae")
    with open(out / "train_log.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "iter", "objective", "grad_norm"])
        for layer, trace in enumerate(model.traces):
            for it, (f, g) in enumerate(trace):
                w.writerow([layer, it, repr(f), repr(g)])
    write_manifest(out / "manifest.json", "train", cfg)
    log.info("trained %d layer(s) %s -> %s", len(dims), model.dims, out)
    return EXIT_OK


def cmd_encode(model_path, data_path, out_path, fmt="csv", has_labels=None) -> int:
    model = load_model(model_path)
    ds = load_dataset(data_path, fmt, has_labels=has_labels)
    if ds.m != model.dims[0]:
        raise ConfigError(f"model expects {model.dims[0]} features, data has {ds.m}")
    H = encode_stack(model, ds.X)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in H.T:
            w.writerow([f"{v:.12g}" for v in row])
    write_manifest(Path(str(out_path) + ".manifest.json"), "encode",
                   {"model": str(model_path), "data": str(data_path), "out": str(out_path),
                    "format": fmt, "has_labels": has_labels})
    return EXIT_OK


def cmd_benchmark(cfg: dict) -> int:
    ds = build_dataset(cfg)
    if ds.labels is None:
        raise ConfigError("benchmark needs a labeled dataset")
    proto = cfg["protocol"]
    sizes = proto.get("class_subset_sizes") or [ds.class_count]
    opt = cfg["optimizer"]
    train = TrainConfig(max_iter=opt["max_iter"], grad_tol=opt["grad_tol"],
                        history_size=opt["history_size"])
    reports = []
    for method in cfg["methods"]:
        log.info("benchmark %s", method)
        reports.append(run_experiment(
            ds, method, sizes, proto["repeats"], proto.get("labeled_fraction"),
            cfg.get("hyper_grid"), cfg["seed"], train, proto.get("hidden"),
            proto.get("depth", 2), proto.get("restarts", 10), cfg["jobs"]))
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "benchmark.csv").write_text(report_csv(reports))
    (out / "benchmark.json").write_text(report_json(reports, {"seed": cfg["seed"], "dataset": ds.name}))
    write_manifest(out / "manifest.json", "benchmark", cfg)
    return EXIT_OK


def cmd_graph(args: dict) -> int:
    ds = load_dataset(args["data"], args.get("format", "csv"), has_labels=args.get("has_labels"))
    params = {k: args[k] for k in ("k", "epsilon", "lambda1") if args.get(k) is not None}
    if args["kind"] == "semi":
        if ds.labels is None:
            raise ConfigError("semi graph needs labels")
        ds = mask_labels(ds, args.get("labeled_fraction") or 0.2, derive_seed(args.get("seed", 0), "labels"))
    graph = build_graph(ds, args["kind"], **params)
    save_edge_list(graph, args["out"])
    summary = {"edges": int(np.count_nonzero(graph.V)), "kind": graph.kind}
    if ds.labels is not None and summary["edges"]:
        summary["error_rate"] = graph_error_rate(graph, ds.labels)
    print(json.dumps(summary, sort_keys=True))
    write_manifest(Path(str(args["out"]) + ".manifest.json"), "graph", args)
    return EXIT_OK


def _read_labels(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([int(float(r[-1])) for r in rows])
    except ValueError:
        return np.array([int(float(r[-1])) for r in rows[1:]])


def cmd_metrics(truth_path, pred_path) -> int:
    truth, pred = _read_labels(truth_path), _read_labels(pred_path)
    if truth.shape != pred.shape:
        raise ConfigError("label files differ in length")
    print(json.dumps({"AC": accuracy(pred, truth),
                      "MI": normalized_mutual_information(truth, pred)}, sort_keys=True))
    return EXIT_OK


def _config_from(args):
    raw = read_config(args.config)
    over = {"seed": args.seed, "jobs": getattr(args, "jobs", None)}
    if args.out is not None:
        over["output"] = {"dir": args.out}
    return resolve(raw, over)


def rerun(manifest_path) -> int:
    m = json.loads(Path(manifest_path).read_text())
    cmd, cfg = m.get("command"), m.get("config", {})
    if cmd == "train":
        return cmd_train(resolve(cfg))
    if cmd == "benchmark":
        return cmd_benchmark(resolve(cfg))
    if cmd == "encode":
        return cmd_encode(cfg["model"], cfg["data"], cfg["out"], cfg.get("format", "csv"),
                          cfg.get("has_labels"))
    if cmd == "graph":
        return cmd_graph(cfg)
    raise ConfigError(f"manifest names unknown command {cmd!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gae", description="Graph regularized auto-encoders")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("train", "benchmark"):
        s = sub.add_parser(name)
        s.add_argument("config", help="JSON run config or manifest")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        if name == "benchmark":
            s.add_argument("--jobs", type=int, help="parallel workers for repeats")

    s = sub.add_parser("encode")
    s.add_argument("model")
    s.add_argument("data")
    s.add_argument("out")
    s.add_argument("--format", default="csv", choices=["csv", "image-folder", "idx"])
    s.add_argument("--no-labels", action="store_true", help="CSV has no label column")

    s = sub.add_parser("graph")
    s.add_argument("data")
    s.add_argument("out", help="edge-list output path")
    s.add_argument("--format", default="csv", choices=["csv", "image-folder", "idx"])
    s.add_argument("--kind", default="knn", choices=["knn", "epsilon", "l1", "semi"])
    s.add_argument("--k", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--lambda1", type=float)
    s.add_argument("--labeled-fraction", type=float)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("metrics")
    s.add_argument("truth", help="CSV whose last column holds true labels")
    s.add_argument("pred", help="CSV whose last column holds cluster labels")

    s = sub.add_parser("rerun")
    s.add_argument("manifest")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("train", "benchmark"):
            cfg = _config_from(args)
            return (cmd_train if args.command == "train" else cmd_benchmark)(cfg)
        if args.command == "encode":
            return cmd_encode(args.model, args.data, args.out, args.format,
                              False if args.no_labels else None)
        if args.command == "graph":
            if args.kind in ("knn", "semi") and args.k is None:
                args.k = 5
            return cmd_graph({"data": args.data, "out": args.out, "format": args.format,
                              "kind": args.kind, "k": args.k, "epsilon": args.epsilon,
                              "lambda1": args.lambda1, "labeled_fraction": args.labeled_fraction,
                              "seed": args.seed})
        if args.command == "metrics":
            return cmd_metrics(args.truth, args.pred)
        return rerun(args.manifest)
    except (ConfigError, DataError, FormatError, GraphError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ConvergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
