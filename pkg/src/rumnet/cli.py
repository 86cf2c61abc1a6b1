"""Batch command-line surface.

Subcommands: synth, train, eval, cv, bound, sweep, cluster. Every stochastic
path is seeded through --seed, and a given flag combination always produces
byte-identical output files. Exit codes: 0 success, 1 validation error,
2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .analysis import SweepSpec, kmeans, sweep
from .data import DatasetFormatError, load_customers_csv, load_long_csv, save_long_csv
from .models import MODEL_KINDS, RUMNET, VNN, build_model, model_max_node_l1
from .serialize import load_model, save_model
from .synthetic import draw_ground_truth, generate, ground_truth_loss, truth_manifest
from .theory import BoundInputs, compact_K, generalization_gap, pmin_bound
from .training import (
    TrainConfig,
    TrainingDivergenceError,
    aggregate,
    evaluate,
    fit,
    kfold,
    split_703015,
)


class CliError(Exception):
    """Flag/input validation failure: usage text goes to stderr, exit 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def derive_seed(*parts) -> int:
    """Collapse (seed, index, ...) into a single reproducible integer seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rumnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth dataset")
    p.add_argument("--setting", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--T", type=int, required=True, help="number of choice events")
    p.add_argument("--kappa", type=int, default=5, help="assortment size")
    p.add_argument("--P", type=int, default=50, help="product universe size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="events CSV path; a .truth.json sidecar is written next to it")

    p = sub.add_parser("train", help="fit one model with a 70/15/15 split")
    _add_model_flags(p)
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-report", help="per-epoch history CSV; a *_summary.csv is written next to it")

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    p.add_argument("--model-file", required=True)
    _add_data_flags(p)
    p.add_argument("--tolerance", type=float, default=0.0001)

    p = sub.add_parser("cv", help="repeated 70/15/15 cross-validation, optionally over a grid")
    _add_model_flags(p)
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--k", type=int, default=10, help="number of repeated splits")
    p.add_argument("--grid", help="semicolon-separated depth,width cells, e.g. '0,0;1,3;2,5'")
    p.add_argument("--K-grid", dest="k_grid", help="comma-separated sample counts, e.g. '2,5'")
    p.add_argument("--out", required=True, help="summary CSV, one row per grid cell")

    p = sub.add_parser("bound", help="print the generalization-gap and compact-sample calculators")
    p.add_argument("--kappa", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--M", type=float, help="per-node norm bound; omit with --model-file to measure it")
    p.add_argument("--model-file", help="measure M from a trained model")
    p.add_argument("--ell", type=int, help="network depth (defaults to the model file's utility depth)")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, help="also print the compact sample count for this accuracy")

    p = sub.add_parser("sweep", help="probability curves as one product feature moves over a grid")
    p.add_argument("--model-file", required=True)
    _add_data_flags(p)
    p.add_argument("--event-index", type=int, default=0)
    p.add_argument("--alternative", type=int, required=True)
    p.add_argument("--feature", type=int, required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="k-means customer types from a customers CSV")
    p.add_argument("--customers", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true",
                   help="z-score features before clustering (default off)")
    p.add_argument("--out", required=True, help="centroids CSV")
    return parser


def _add_model_flags(p):
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--width", type=int, default=0)
    p.add_argument("--K", type=int, default=1, help="latent sample count per side")
    p.add_argument("--d-eps", type=int, default=4, help="latent product attribute dim")
    p.add_argument("--d-nu", type=int, default=4, help="latent customer attribute dim")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="events CSV")
    p.add_argument("--customers", help="customers CSV (omit when d_z = 0)")


def _add_train_flags(p):
    p.add_argument("--config", help="key=value file mirroring the training config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int, default=0)


def _load_config(args, seed) -> TrainConfig:
    overrides = dict(epochs=args.epochs, batch_size=args.batch_size,
                     learning_rate=args.learning_rate, patience=args.patience,
                     tolerance=args.tolerance, seed=seed)
    if args.config:
        return TrainConfig.from_file(args.config, **overrides)
    values = {k: v for k, v in overrides.items() if v is not None}
    if "patience" not in values and "epochs" in values:
        values["patience"] = min(TrainConfig.patience, values["epochs"])
    return TrainConfig(**values)


def _build_from_args(args, dataset, seed):
    n = dataset.kappa_max if args.model == VNN else None
    rng = np.random.default_rng([seed, 0])
    return build_model(args.model, dataset.d_x, dataset.d_z, rng,
                       depth=args.depth, width=args.width, K=args.K,
                       d_eps=args.d_eps, d_nu=args.d_nu, n=n)


def cmd_synth(args) -> int:
    gt = draw_ground_truth(args.setting, args.P, np.random.default_rng(args.seed))
    dataset = generate(gt, args.T, args.kappa, seed=args.seed)
    save_long_csv(dataset, args.out)
    sidecar = args.out + ".truth.json" if not args.out.endswith(".csv") \
        else args.out[:-4] + ".truth.json"
    manifest = truth_manifest(gt, args.seed, args.T, args.kappa)
    manifest["ground_truth_loss"] = ground_truth_loss(gt, dataset)
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"wrote {len(dataset)} events to {args.out}")
    print(f"ground_truth_loss={_fmt(manifest['ground_truth_loss'])}")
    return 0


def cmd_train(args) -> int:
    dataset = load_long_csv(args.data, args.customers)
    cfg = _load_config(args, args.seed)
    train, val, test = split_703015(dataset, seed=args.seed)
    model = _build_from_args(args, dataset, args.seed)
    report = fit(model, train, val, cfg, test=test)
    save_model(args.out_model, model)
    if args.out_report:
        report.write_history_csv(args.out_report)
        stem = args.out_report[:-4] if args.out_report.endswith(".csv") else args.out_report
        report.write_summary_csv(stem + "_summary.csv")
    print(f"best_epoch={report.best_epoch}")
    for key in ("train_loss", "val_loss", "test_loss", "train_acc", "val_acc", "test_acc"):
        print(f"{key}={_fmt(report.final[key])}")
    return 0


def cmd_eval(args) -> int:
    dataset = load_long_csv(args.data, args.customers)
    model = load_model(args.model_file)
    loss, acc = evaluate(model, dataset, args.tolerance)
    print(f"loss={_fmt(loss)}")
    print(f"accuracy={_fmt(acc)}")
    return 0


def _parse_grid(args):
    if args.grid:
        cells = []
        for part in args.grid.split(";"):
            try:
                depth, width = (int(v) for v in part.split(","))
            except ValueError:
                raise CliError(f"bad --grid cell {part!r}, expected 'depth,width'") from None
            cells.append((depth, width))
    else:
        cells = [(args.depth, args.width)]
    if args.k_grid:
        try:
            ks = [int(v) for v in args.k_grid.split(",")]
        except ValueError:
            raise CliError(f"bad --K-grid {args.k_grid!r}") from None
    else:
        ks = [args.K]
    if args.model != RUMNET:
        ks = [args.K]
    return [(d, w, k) for d, w in cells for k in ks]


def cmd_cv(args) -> int:
    dataset = load_long_csv(args.data, args.customers)
    splits = kfold(dataset, k=args.k, seed=args.seed)
    rows = []
    for depth, width, K in _parse_grid(args):
        args.depth, args.width, args.K = depth, width, K
        reports = []
        for fold, (train, val, test) in enumerate(splits):
            fold_seed = derive_seed(args.seed, fold)
            cfg = _load_config(args, fold_seed)
            model = _build_from_args(args, dataset, fold_seed)
            reports.append(fit(model, train, val, cfg, test=test))
        agg = aggregate(reports)
        row = {"model": args.model, "depth": depth, "width": width,
               "K": K if args.model == RUMNET else ""}
        for key in ("train_loss", "val_loss", "test_loss",
                    "train_acc", "val_acc", "test_acc"):
            row[f"{key}_mean"] = _fmt(agg[key]["mean"])
            row[f"{key}_std"] = _fmt(agg[key]["std"])
        rows.append(row)
        print(f"{args.model} depth={depth} width={width} K={K}: "
              f"test_loss={row['test_loss_mean']} +- {row['test_loss_std']}")
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return 0


def cmd_bound(args) -> int:
    M, ell = args.M, args.ell
    if args.model_file:
        model = load_model(args.model_file)
        measured = model_max_node_l1(model)
        if M is None:
            M = measured
        if ell is None:
            nets = model.networks()
            ell = max((net.spec.depth for net in nets), default=0)
        print(f"measured_M={_fmt(measured)}")
    if M is None:
        raise CliError("--M is required unless --model-file is given")
    if ell is None:
        ell = 0
    b = BoundInputs(kappa=args.kappa, T=args.T, M=M, ell=ell, delta=args.delta,
                    c1=args.c1, c2=args.c2)
    print(f"generalization_gap={_fmt(generalization_gap(b))}")
    print(f"pmin_bound={_fmt(pmin_bound(args.kappa, M))}")
    if args.epsilon is not None:
        print(f"compact_K={compact_K(args.epsilon, b)}")
    return 0


def cmd_sweep(args) -> int:
    dataset = load_long_csv(args.data, args.customers)
    if not 0 <= args.event_index < len(dataset):
        raise CliError(f"--event-index {args.event_index} out of range "
                       f"for {len(dataset)} events")
    model = load_model(args.model_file)
    spec = SweepSpec(dataset[args.event_index], args.alternative, args.feature,
                     args.lo, args.hi, args.steps)
    values, probs = sweep(model, spec)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value"] + [f"p_{i + 1}" for i in range(probs.shape[1])])
        for v, row in zip(values, probs):
            writer.writerow([_fmt(v)] + [_fmt(p) for p in row])
    print(f"wrote {len(values)} sweep rows to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    _ids, Z = load_customers_csv(args.customers)
    centroids, _labels = kmeans(Z, args.k, np.random.default_rng(args.seed),
                                standardize=args.standardize)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"z_{j + 1}" for j in range(Z.shape[1])])
        for row in centroids:
            writer.writerow([_fmt(v) for v in row])
    print(f"wrote {args.k} centroids to {args.out}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "cluster": cmd_cluster,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (CliError, DatasetFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDivergenceError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
