"""Command-line entry point.

Subcommands:

    generate   synthesize a multi-domain dataset and write it as CSV splits
    train      train one variant on one seed and write its run artifacts
    eval       score a saved checkpoint on every domain's eval split
    analyze    aggregate per-run artifacts into analysis/correlation tables
    cost       annotation cost table for a finished results directory
    run-all    generate (or load) data, run the full grid, then analyze

Flags always override the corresponding config-file fields.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adaptation import TrainVariant, compute_prior, few_shot_augment, train
from .analysis import write_eval_csv, zero_shot_eval
from .data import generate_synthetic, load_dataset, subsample_source
from .errors import ConfigError
from .experiment import (
    BASELINE,
    analyze_results,
    dataset_from_dict,
    experiment_from_dict,
    export_features,
    load_config,
    run_experiment,
    write_cost_csv,
    write_report_jsonl,
)
from .model import load_checkpoint, save_checkpoint
from .rng import Rng


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ditto",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a dataset")
    _add_common(p)

    p = sub.add_parser("train", help="train a single variant/seed")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--variant", type=str, default="ditto")
    p.add_argument("--source-fraction", type=int, default=100, choices=(1, 10, 100))
    p.add_argument("--k", type=int, default=0, help="few-shot rows per target")

    p = sub.add_parser("eval", help="score a checkpoint on the eval splits")
    p.add_argument("--model", type=Path, required=True, help="checkpoint (.npz)")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="output CSV path")
    p.add_argument("--method", type=str, default="model", help="method column tag")

    p = sub.add_parser("analyze", help="aggregate run artifacts")
    p.add_argument("--results", type=Path, required=True, help="results directory")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("cost", help="annotation cost table")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output CSV path")
    p.add_argument("--cs", type=float, default=None, help="cents per source label")
    p.add_argument("--ct-over-s", type=float, default=None,
                   help="target/source labeling cost ratio")
    p.add_argument("--k", type=int, action="append", default=None,
                   help="extra few-shot sizes to list (repeatable)")

    p = sub.add_parser("run-all", help="generate+train+analyze in one go")
    _add_common(p)
    p.add_argument("--data", type=Path, default=None,
                   help="reuse an existing dataset directory instead of generating")
    p.add_argument("--variant", type=str, action="append", default=None,
                   help="restrict to these variants (repeatable)")
    p.add_argument("--source-fraction", type=int, action="append", default=None,
                   choices=(1, 10, 100), help="restrict source fractions (repeatable)")
    p.add_argument("--k", type=int, action="append", default=None,
                   help="restrict few-shot sizes (repeatable)")
    return parser


def _generate(args) -> int:
    cfg = load_config(args.config)
    if "dataset" not in cfg:
        raise ConfigError("config has no 'dataset' section")
    mixture, domains, seed = dataset_from_dict(cfg["dataset"])
    if args.seed is not None:
        seed = args.seed
    generate_synthetic(mixture, domains, Rng(seed), out_dir=args.out)
    print(f"wrote dataset to {args.out}")
    return 0


def _train(args) -> int:
    cfg = load_config(args.config)
    exp = experiment_from_dict(cfg.get("experiment", {}))
    seed = args.seed if args.seed is not None else exp.seeds[0]
    dataset = load_dataset(args.data)
    ds = subsample_source(dataset, args.source_fraction, Rng(seed).child("subsample"))
    if args.k > 0:
        ds = few_shot_augment(ds, args.k, Rng(seed).child("fewshot"))

    variant = TrainVariant.parse(args.variant, lam=exp.lam, rho=exp.rho)
    prior = None
    if variant.kind in ("ditto", "ditto_minus_sam"):
        print("computing target prior from an internal baseline run")
        base_variant = TrainVariant.parse(BASELINE, lam=exp.lam, rho=exp.rho)
        _, base_report = train(exp.train, ds, base_variant, seed)
        prior = compute_prior(base_report.final_per_domain_acc, ds.source)

    bundle, report = train(exp.train, ds, variant, seed, prior)
    args.out.mkdir(parents=True, exist_ok=True)
    write_report_jsonl(report, args.out / "metrics.jsonl")
    write_eval_csv(zero_shot_eval(bundle, ds, method=variant.name),
                   args.out / "eval.csv")
    save_checkpoint(bundle, args.out / "model.npz")
    export_features(bundle, ds, args.out / "features.csv")
    accs = ", ".join(f"{d}={a:.2f}" for d, a in
                     sorted(report.final_per_domain_acc.items()))
    print(f"{variant.name} seed={seed}: {accs}")
    return 0


def _eval(args) -> int:
    bundle = load_checkpoint(args.model)
    dataset = load_dataset(args.data)
    table = zero_shot_eval(bundle, dataset, method=args.method)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_eval_csv(table, args.out)
    for dom in table.domains(args.method):
        print(f"{dom}: {table.get(args.method, dom):.2f}")
    return 0


def _analyze(args) -> int:
    out = analyze_results(args.results, args.out)
    print(f"wrote {out / 'analysis.csv'} and {out / 'correlation.csv'}")
    return 0


def _cost(args) -> int:
    cfg = load_config(args.config)
    exp = experiment_from_dict(cfg.get("experiment", {}))
    if args.cs is not None:
        exp.c_s = args.cs
    if args.ct_over_s is not None:
        exp.c_t_over_s = args.ct_over_s
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_cost_csv(exp, Path(args.results), args.out, extra_ks=args.k)
    print(f"wrote {args.out}")
    return 0


def _run_all(args) -> int:
    cfg = load_config(args.config)
    exp = experiment_from_dict(cfg.get("experiment", {}))
    if args.seed is not None:
        exp.seeds = [args.seed]
    if args.variant:
        exp.variants = list(args.variant)
        exp.__post_init__()
    if args.source_fraction:
        exp.source_fractions = list(args.source_fraction)
    if args.k:
        exp.ks = list(args.k)

    if args.data is not None:
        dataset = load_dataset(args.data)
    else:
        if "dataset" not in cfg:
            raise ConfigError("config has no 'dataset' section and no --data given")
        mixture, domains, dseed = dataset_from_dict(cfg["dataset"])
        data_dir = args.out / "data"
        dataset = generate_synthetic(mixture, domains, Rng(dseed), out_dir=data_dir)
        print(f"wrote dataset to {data_dir}")

    results = run_experiment(exp, dataset, args.out / "results")
    analyze_results(results, args.out / "analysis")
    print(f"results under {results}, tables under {args.out / 'analysis'}")
    return 0


_HANDLERS = {
    "generate": _generate,
    "train": _train,
    "eval": _eval,
    "analyze": _analyze,
    "cost": _cost,
    "run-all": _run_all,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
