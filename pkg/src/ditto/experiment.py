"""Experiment orchestration: run grids of (variant, source fraction, few-shot
k, seed), write per-run artifacts, and aggregate summary tables.

Per-run artifacts, under `out/S{frac}/k{k}/{variant}/seed{n}/`:

    metrics.jsonl   one JSON record per epoch plus a final summary record
    eval.csv        per-domain accuracies for the variant and the same-cell
                    baseline, with relative gains (two decimals)
    cka.csv         per-target similarity to the source under this model
    model.npz       checkpoint (bit-exact parameter round-trip)
    run.json        run metadata (no timings, fully deterministic)

Aggregates, under `out/`:

    summary.csv           rows = variants, columns = source fractions,
                          cells = mean relative gain over targets at the
                          best-of-seeds runs (first configured k)
    summary_per_seed.csv  one row per run with per-seed gains
    cost.csv              annotation cost against best-of-seeds accuracy

Every aggregate is a deterministic function of (config, dataset, seeds), so
reruns produce byte-identical files; wall-clock time appears only in
metrics.jsonl.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptation import (
    DomainDataset,
    TrainConfig,
    TrainReport,
    TrainVariant,
    compute_prior,
    few_shot_augment,
    train,
)
from .analysis import (
    CostParams,
    EvalTable,
    annotation_cost,
    fmt_acc,
    linear_cka,
    pearson,
    read_cka_csv,
    read_eval_csv,
    relative_gain,
    spearman,
    write_cka_csv,
    write_eval_csv,
    zero_shot_eval,
)
from .data import DomainSpec, MixtureSpec, subsample_source
from .errors import ConfigError, UndefinedResultError
from .model import EncoderSpec, ModelBundle, extract_features, save_checkpoint
from .rng import Rng

BASELINE = "baseline"


@dataclass
class ExperimentConfig:
    """The full grid: variants x source fractions x few-shot ks x seeds."""

    train: TrainConfig
    variants: list[str] = field(default_factory=lambda: [BASELINE, "ditto"])
    lam: float = 1.0
    rho: float = 0.05
    rho_grid: list[float] = field(default_factory=lambda: [0.01, 0.05, 0.1])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    source_fractions: list[int] = field(default_factory=lambda: [100])
    ks: list[int] = field(default_factory=lambda: [0])
    c_s: float = 3.0
    c_t_over_s: float = 1.0
    out_dir: str = "results"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("need at least one seed")
        for f in self.source_fractions:
            if f not in (1, 10, 100):
                raise ConfigError(f"source fractions must be in {{1,10,100}}, got {f}")
        if any(k < 0 for k in self.ks):
            raise ConfigError(f"few-shot ks must be >= 0, got {self.ks}")
        ordered = [v for v in self.variants if v != BASELINE]
        self.variants = [BASELINE] + ordered  # baseline first: it seeds the prior

    def variant_of(self, name: str) -> TrainVariant:
        return TrainVariant.parse(name, lam=self.lam, rho=self.rho)


# ---------------------------------------------------------------------------
# config file handling (JSON; CLI flags override individual fields)


def experiment_from_dict(d: dict) -> ExperimentConfig:
    enc = d.get("encoder", {})
    spec = EncoderSpec(
        input_dim=int(enc.get("input_dim", 2)),
        hidden_dims=[int(h) for h in enc.get("hidden_dims", [32, 16])],
        activation=enc.get("activation", "tanh"),
    )
    train_cfg = TrainConfig(
        encoder=spec,
        num_classes=int(d.get("num_classes", 2)),
        epochs=int(d.get("epochs", 10)),
        batch_size=int(d.get("batch_size", 32)),
        lr=float(d.get("lr", 0.01)),
        disc_lr=float(d.get("disc_lr", 0.05)),
        weight_decay=float(d.get("weight_decay", 0.0)),
        adv_source_from_unlabeled=bool(d.get("adv_source_from_unlabeled", False)),
    )
    cost = d.get("cost", {})
    return ExperimentConfig(
        train=train_cfg,
        variants=list(d.get("variants", [BASELINE, "ditto"])),
        lam=float(d.get("lambda", 1.0)),
        rho=float(d.get("rho", 0.05)),
        rho_grid=[float(r) for r in d.get("rho_grid", [0.01, 0.05, 0.1])],
        seeds=[int(s) for s in d.get("seeds", [0, 1, 2])],
        source_fractions=[int(f) for f in d.get("source_fractions", [100])],
        ks=[int(k) for k in d.get("ks", [0])],
        c_s=float(cost.get("c_s", 3.0)),
        c_t_over_s=float(cost.get("c_t_over_s", 1.0)),
        out_dir=str(d.get("out_dir", "results")),
    )


def dataset_from_dict(d: dict) -> tuple[MixtureSpec, list[DomainSpec], int]:
    base = d.get("base", {})
    mixture = MixtureSpec(
        means=[list(map(float, m)) for m in base["means"]],
        sigma=float(base.get("sigma", 0.5)),
    )
    domains = []
    for spec in d["domains"]:
        sizes = spec.get("sizes", {})
        from .data import SizeSpec
        domains.append(DomainSpec(
            id=str(spec["id"]),
            kind=str(spec["kind"]),
            transform=dict(spec.get("transform", {"kind": "identity"})),
            sizes=SizeSpec(
                labeled=int(sizes.get("labeled", 0)),
                unlabeled=int(sizes.get("unlabeled", 0)),
                fewshot=int(sizes.get("fewshot", 0)),
                eval=int(sizes.get("eval", 200)),
            ),
        ))
    return mixture, domains, int(d.get("seed", 0))


def load_config(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# per-run output


def write_report_jsonl(report: TrainReport, path: str | Path) -> None:
    """One record per epoch plus a final summary record."""
    with open(path, "w") as fh:
        for rec in report.epochs:
            fh.write(json.dumps({
                "epoch": rec.epoch,
                "task_loss": rec.task_loss,
                "adv_loss": rec.adv_loss,
                "disc_loss": rec.disc_loss,
                "per_domain_acc": rec.per_domain_acc,
            }, sort_keys=True) + "\n")
        fh.write(json.dumps({
            "final": True,
            "variant": report.variant,
            "seed": report.seed,
            "per_domain_acc": report.final_per_domain_acc,
            "target_sample_counts": report.target_sample_counts,
            "wall_clock_seconds": report.wall_clock_seconds,
        }, sort_keys=True) + "\n")


def export_features(bundle: ModelBundle, dataset: DomainDataset, path: str | Path) -> None:
    """Eval-split encoder features for every domain, one row per example.

    Columns: domain,row_index,class_label_or_empty,f0..f{d-1}.  Features are
    written with repr, so reloading reproduces similarity values to well
    under the 1e-9 text round-trip budget.
    """
    dim = bundle.feature_dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["domain", "row_index", "class_label_or_empty"]
                        + [f"f{i}" for i in range(dim)])
        for dom in [dataset.source] + dataset.target_ids():
            rows = dataset.domains[dom].eval
            feats = extract_features(bundle, rows.X)
            for i in range(feats.shape[0]):
                label = "" if rows.y is None else str(int(rows.y[i]))
                writer.writerow([dom, i, label] + [repr(float(v)) for v in feats[i]])


def _variant_dirname(name: str) -> str:
    return name.replace(":", "_")


def _run_dir(out: Path, frac: int, k: int, variant: str, seed: int) -> Path:
    return out / f"S{frac}" / f"k{k}" / _variant_dirname(variant) / f"seed{seed}"


def run_experiment(config: ExperimentConfig, dataset: DomainDataset,
                   out_dir: str | Path | None = None) -> Path:
    """Run the whole grid and write per-run artifacts plus aggregate tables.

    The baseline always runs first within each (fraction, k, seed) cell: its
    zero-shot scores define the target prior for the prior-based variants and
    the denominators of every relative gain.  A failed run is recorded in its
    run.json (status/error) and the remaining runs proceed.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset.validate()
    targets = dataset.target_ids()

    for frac in config.source_fractions:
        for k in config.ks:
            for seed in config.seeds:
                ds = subsample_source(dataset, frac, Rng(seed).child("subsample"))
                n_source = ds.domains[ds.source].labeled.n
                if k > 0:
                    ds = few_shot_augment(ds, k, Rng(seed).child("fewshot"))
                baseline_scores: dict[str, float] | None = None
                baseline_table: EvalTable | None = None
                for name in config.variants:
                    run_dir = _run_dir(out, frac, k, name, seed)
                    run_dir.mkdir(parents=True, exist_ok=True)
                    meta = {
                        "variant": name, "seed": seed, "S": frac, "k": k,
                        "source": ds.source, "targets": targets,
                        "n_labeled_source": n_source, "status": "ok",
                    }
                    try:
                        variant = config.variant_of(name)
                        prior = None
                        if variant.kind in ("ditto", "ditto_minus_sam"):
                            if baseline_scores is None:
                                raise ConfigError("baseline run unavailable; cannot "
                                                  "build the target prior")
                            prior = compute_prior(baseline_scores, ds.source)
                        bundle, report = train(config.train, ds, variant, seed, prior)
                        if name == BASELINE:
                            baseline_scores = report.final_per_domain_acc
                            baseline_table = zero_shot_eval(bundle, ds, method=BASELINE)
                        write_report_jsonl(report, run_dir / "metrics.jsonl")
                        table = zero_shot_eval(bundle, ds, method=name)
                        if name != BASELINE and baseline_table is not None:
                            table.merge(baseline_table)
                        write_eval_csv(table, run_dir / "eval.csv")
                        feats = {dom: extract_features(bundle, ds.domains[dom].eval.X)
                                 for dom in [ds.source] + targets}
                        ckas = {t: linear_cka(feats[ds.source], feats[t])
                                for t in targets}
                        accs = {t: report.final_per_domain_acc[t] for t in targets}
                        write_cka_csv(ckas, accs, run_dir / "cka.csv")
                        save_checkpoint(bundle, run_dir / "model.npz")
                    except Exception as exc:  # record and continue with the grid
                        meta["status"] = "failed"
                        meta["error"] = f"{type(exc).__name__}: {exc}"
                        with open(run_dir / "error.txt", "w") as fh:
                            fh.write(meta["error"] + "\n")
                    with open(run_dir / "run.json", "w") as fh:
                        json.dump(meta, fh, indent=2, sort_keys=True)
                        fh.write("\n")

    write_summaries(config, out)
    return out


# ---------------------------------------------------------------------------
# aggregates


def _load_run(out: Path, frac: int, k: int, variant: str, seed: int):
    """(meta, {domain: acc}) for a finished run, else None."""
    run_dir = _run_dir(out, frac, k, variant, seed)
    meta_path = run_dir / "run.json"
    eval_path = run_dir / "eval.csv"
    if not meta_path.exists() or not eval_path.exists():
        return None
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("status") != "ok":
        return None
    table, _ = read_eval_csv(eval_path)
    accs = {dom: table.get(variant, dom) for dom in table.domains(variant)}
    return meta, accs


def _mean_target_acc(meta: dict, accs: dict[str, float]) -> float:
    return float(np.mean([accs[t] for t in meta["targets"]]))


def _best_seed_accs(out: Path, config: ExperimentConfig, frac: int, k: int,
                    variant: str):
    """Accuracies of the best seed (highest mean target accuracy, ties to the
    lowest seed), or None if every seed failed."""
    best = None
    for seed in config.seeds:
        loaded = _load_run(out, frac, k, variant, seed)
        if loaded is None:
            continue
        meta, accs = loaded
        score = _mean_target_acc(meta, accs)
        if best is None or score > best[0]:
            best = (score, seed, meta, accs)
    return best


def write_summaries(config: ExperimentConfig, out: Path) -> None:
    """summary.csv, summary_per_seed.csv and cost.csv from the run artifacts.

    All gains are recomputed by applying relative_gain to the accuracies read
    back from the per-run eval.csv files (two-decimal values), never from
    in-memory state, so the aggregate path has no arithmetic of its own.
    """
    k0 = config.ks[0]

    # cross-variant summary at the first configured k, best-of-seeds
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant"] + [f"S{f}" for f in config.source_fractions])
        for name in config.variants:
            cells = []
            for frac in config.source_fractions:
                base = _best_seed_accs(out, config, frac, k0, BASELINE)
                var = _best_seed_accs(out, config, frac, k0, name)
                if base is None or var is None:
                    cells.append("")
                    continue
                _, _, meta, base_accs = base
                _, _, _, var_accs = var
                try:
                    gains = [relative_gain(base_accs[t], var_accs[t])
                             for t in meta["targets"]]
                    cells.append(fmt_acc(float(np.mean(gains))))
                except (UndefinedResultError, KeyError):
                    cells.append("")
            writer.writerow([name] + cells)

    # per-seed summary across the whole grid
    with open(out / "summary_per_seed.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "S", "k", "seed",
                         "mean_target_accuracy", "mean_relative_gain"])
        for frac in config.source_fractions:
            for k in config.ks:
                for name in config.variants:
                    for seed in config.seeds:
                        loaded = _load_run(out, frac, k, name, seed)
                        base = _load_run(out, frac, k, BASELINE, seed)
                        if loaded is None:
                            writer.writerow([name, frac, k, seed, "", ""])
                            continue
                        meta, accs = loaded
                        mean_acc = fmt_acc(_mean_target_acc(meta, accs))
                        gain = ""
                        if base is not None:
                            try:
                                gains = [relative_gain(base[1][t], accs[t])
                                         for t in meta["targets"]]
                                gain = fmt_acc(float(np.mean(gains)))
                            except (UndefinedResultError, KeyError):
                                gain = ""
                        writer.writerow([name, frac, k, seed, mean_acc, gain])

    # annotation cost against best-of-seeds accuracy
    write_cost_csv(config, out, out / "cost.csv")


def write_cost_csv(config: ExperimentConfig, results: Path, path: Path,
                   extra_ks: list[int] | None = None) -> None:
    """Cost/accuracy table; requested-but-missing grid cells stay empty."""
    ks = list(config.ks) + [k for k in (extra_ks or []) if k not in config.ks]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "S", "k", "c_t_over_s",
                         "cost_cents", "mean_target_accuracy"])
        for frac in config.source_fractions:
            for k in ks:
                for name in config.variants:
                    best = _best_seed_accs(results, config, frac, k, name)
                    if best is None:
                        writer.writerow([name, frac, k, config.c_t_over_s, "", ""])
                        continue
                    _, _, meta, accs = best
                    cost = annotation_cost(CostParams(
                        c_s=config.c_s,
                        n_labeled_source=meta["n_labeled_source"],
                        c_t_over_s=config.c_t_over_s,
                        k=k,
                        num_targets=len(meta["targets"]),
                    ))
                    writer.writerow([name, frac, k, config.c_t_over_s,
                                     f"{cost:.2f}", fmt_acc(_mean_target_acc(meta, accs))])


def analyze_results(results: str | Path, out_dir: str | Path) -> Path:
    """Post-hoc tables from a results directory: per-run accuracy/gain/gap in
    analysis.csv and CKA-accuracy correlations in correlation.csv."""
    results = Path(results)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_files = sorted(results.glob("S*/k*/*/seed*/run.json"))

    with open(out / "analysis.csv", "w", newline="") as afh, \
         open(out / "correlation.csv", "w", newline="") as cfh:
        a_writer = csv.writer(afh, lineterminator="\n")
        c_writer = csv.writer(cfh, lineterminator="\n")
        a_writer.writerow(["variant", "S", "k", "seed", "mean_target_accuracy",
                           "mean_relative_gain", "gap"])
        c_writer.writerow(["variant", "S", "k", "seed", "pearson", "spearman"])
        for run_json in run_files:
            with open(run_json) as fh:
                meta = json.load(fh)
            if meta.get("status") != "ok":
                continue
            run_dir = run_json.parent
            name, seed = meta["variant"], meta["seed"]
            table, _ = read_eval_csv(run_dir / "eval.csv")
            accs = {dom: table.get(name, dom) for dom in table.domains(name)}
            mean_acc = _mean_target_acc(meta, accs)
            gain = ""
            if name != BASELINE and (BASELINE, meta["targets"][0]) in table.entries:
                try:
                    gains = [relative_gain(table.get(BASELINE, t), accs[t])
                             for t in meta["targets"]]
                    gain = fmt_acc(float(np.mean(gains)))
                except UndefinedResultError:
                    gain = ""
            gap = float(np.mean([accs[meta["source"]] - accs[t]
                                 for t in meta["targets"]]))
            a_writer.writerow([name, meta["S"], meta["k"], seed,
                               fmt_acc(mean_acc), gain, fmt_acc(gap)])

            cka_path = run_dir / "cka.csv"
            if cka_path.exists() and len(meta["targets"]) >= 3:
                rows = read_cka_csv(cka_path)
                try:
                    p = pearson([rows[t][0] for t in meta["targets"]],
                                [rows[t][1] for t in meta["targets"]])
                    s = spearman([rows[t][0] for t in meta["targets"]],
                                 [rows[t][1] for t in meta["targets"]])
                    c_writer.writerow([name, meta["S"], meta["k"], seed,
                                       f"{p:.4f}", f"{s:.4f}"])
                except UndefinedResultError:
                    c_writer.writerow([name, meta["S"], meta["k"], seed, "", ""])
    return out
