"""Training procedures for joint multi-target adversarial adaptation.

The full method trains an encoder/classifier on labeled source data with
sharpness-aware minimization while, at every step, sampling one target domain
from a prior weighted toward the weakest targets and playing a minimax game
against that target's discriminator through a gradient-reversal pass.

Variants:
    baseline         plain source fine-tuning (no adversary, no SAM)
    ditto            full method (SAM + prior-sampled adversarial phase)
    ditto_minus_sam  adversarial phase only (rho = 0)
    ditto_minus_la   SAM only (lambda = 0, discriminators never trained)
    ditto_single     adversarial phase against one fixed target
    ditto_uniform    adversarial phase with a uniform target prior

Reductions hold exactly: with lambda = 0 the adversarial phase is skipped
outright (no sampling, no discriminator pass, no rng draws), so the ditto
step with lambda = 0 executes the same instruction sequence as
ditto_minus_la, and with rho = 0 as well it is bit-for-bit the baseline.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .autodiff import Tape, backward
from .errors import ConfigError, DataError, LabelError, ParameterError
from .model import (
    EncoderSpec,
    ModelBundle,
    classify,
    discriminate,
    encode,
    init_params,
    predict_logits,
)
from .autodiff import binary_cross_entropy, grad_reverse, softmax_cross_entropy
from .optim import AdamWConfig, SamConfig, adamw_step, sam_backward
from .rng import Rng

VARIANT_KINDS = ("baseline", "ditto", "ditto_minus_sam", "ditto_minus_la",
                 "ditto_single", "ditto_uniform")


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Rows:
    """A block of feature rows with optional integer class labels."""

    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"feature rows must be 2-D, got shape {self.X.shape}")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if self.y.shape != (self.X.shape[0],):
                raise DataError(f"labels length {self.y.shape} does not match "
                                f"{self.X.shape[0]} rows")

    @property
    def n(self) -> int:
        return self.X.shape[0]


def empty_rows(dim: int, labeled: bool = True) -> Rows:
    return Rows(np.zeros((0, dim)), np.zeros(0, dtype=np.int64) if labeled else None)


@dataclass
class DomainSplits:
    """The four splits of one domain; unlabeled rows carry no labels."""

    labeled: Rows
    unlabeled: np.ndarray
    fewshot: Rows
    eval: Rows

    def __post_init__(self):
        self.unlabeled = np.asarray(self.unlabeled, dtype=np.float64)


@dataclass
class DomainDataset:
    """All domains of one benchmark; exactly one is the source."""

    source: str
    domains: dict[str, DomainSplits]

    def target_ids(self) -> list[str]:
        return sorted(d for d in self.domains if d != self.source)

    @property
    def feature_dim(self) -> int:
        return self.domains[self.source].eval.X.shape[1]

    def validate(self) -> "DomainDataset":
        if self.source not in self.domains:
            raise DataError(f"source domain {self.source!r} missing from dataset")
        dim = self.feature_dim
        for dom, splits in self.domains.items():
            for tag, X in (("labeled", splits.labeled.X), ("unlabeled", splits.unlabeled),
                           ("fewshot", splits.fewshot.X), ("eval", splits.eval.X)):
                if X.shape[1] != dim and X.shape[0] > 0:
                    raise DataError(f"domain {dom!r} split {tag} has {X.shape[1]} "
                                    f"feature columns, expected {dim}")
            if splits.eval.n == 0 or splits.eval.y is None:
                raise DataError(f"domain {dom!r} needs a labeled, non-empty eval split")
            if dom != self.source and splits.unlabeled.shape[0] == 0:
                raise DataError(f"target domain {dom!r} has an empty unlabeled split")
        if self.domains[self.source].labeled.n == 0:
            raise DataError(f"source domain {self.source!r} has no labeled rows")
        return self


# ---------------------------------------------------------------------------
# target prior


@dataclass
class LanguagePrior:
    """Sampling distribution over target domains."""

    probs: dict[str, float]

    def __post_init__(self):
        if not self.probs:
            raise ConfigError("prior needs at least one target")
        if any(p < 0 for p in self.probs.values()):
            raise ConfigError(f"negative probability in prior: {self.probs}")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"prior probabilities sum to {total!r}, not 1")

    @staticmethod
    def uniform(targets: Sequence[str]) -> "LanguagePrior":
        ids = sorted(targets)
        return LanguagePrior({t: 1.0 / len(ids) for t in ids})

    @staticmethod
    def single(target: str) -> "LanguagePrior":
        return LanguagePrior({target: 1.0})


def compute_prior(zero_shot_scores: dict[str, float], source: str) -> LanguagePrior:
    """Prior from zero-shot deficits.

    delta_t = max(score(source) - score(t), 0); sigma = population std of the
    deltas; weight_t = delta_t + sigma; probabilities are the normalized
    weights.  If every weight is 0 (no target trails the source) the prior is
    uniform.

    >>> p = compute_prior({"s": 60.0, "a": 50.0, "b": 60.0}, "s")
    >>> [round(p.probs[t], 2) for t in ("a", "b")]
    [0.75, 0.25]
    """
    if source not in zero_shot_scores:
        raise DataError(f"source domain {source!r} missing from scores")
    targets = sorted(t for t in zero_shot_scores if t != source)
    if not targets:
        raise DataError("scores contain no target domains")
    for dom, score in zero_shot_scores.items():
        if not (0.0 <= score <= 100.0):
            raise DataError(f"accuracy for {dom!r} out of [0, 100]: {score}")
    src = zero_shot_scores[source]
    deltas = np.array([max(src - zero_shot_scores[t], 0.0) for t in targets])
    sigma = float(np.sqrt(np.mean((deltas - deltas.mean()) ** 2)))
    weights = deltas + sigma
    total = float(weights.sum())
    if total <= 0.0:
        return LanguagePrior.uniform(targets)
    return LanguagePrior({t: float(w) / total for t, w in zip(targets, weights)})


def sample_target(prior: LanguagePrior, rng: Rng) -> str:
    """Inverse-CDF draw over the sorted target ids."""
    ids = sorted(prior.probs)
    u = rng.random()
    acc = 0.0
    for t in ids:
        acc += prior.probs[t]
        if u < acc:
            return t
    return ids[-1]  # guard against cumulative rounding just below 1


# ---------------------------------------------------------------------------
# variants and configs


@dataclass
class TrainVariant:
    """Which training procedure to run, with its lambda and SAM radius."""

    kind: str
    lam: float = 1.0
    sam: SamConfig = field(default_factory=SamConfig)
    single_target: str | None = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ConfigError(f"unknown variant kind {self.kind!r}; "
                              f"expected one of {VARIANT_KINDS}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")

    def validate(self) -> "TrainVariant":
        if self.kind == "baseline" and self.sam.rho != 0.0:
            raise ConfigError("baseline requires rho = 0")
        if self.kind == "ditto_minus_sam" and self.sam.rho != 0.0:
            raise ConfigError("ditto_minus_sam requires rho = 0")
        if self.kind == "ditto_minus_la" and self.lam != 0.0:
            raise ConfigError("ditto_minus_la requires lambda = 0")
        if self.kind == "ditto_single" and not self.single_target:
            raise ConfigError("ditto_single needs a target id (variant name "
                              "'ditto_single:<target>')")
        return self

    @property
    def effective_lambda(self) -> float:
        """The adversarial weight actually applied; 0 disables the phase."""
        if self.kind in ("baseline", "ditto_minus_la"):
            return 0.0
        return self.lam

    @property
    def name(self) -> str:
        if self.kind == "ditto_single":
            return f"ditto_single:{self.single_target}"
        return self.kind

    @staticmethod
    def parse(name: str, lam: float = 1.0, rho: float = 0.05) -> "TrainVariant":
        """Build a variant from its CLI name, forcing the per-kind constraints."""
        kind, _, target = name.partition(":")
        if kind == "baseline":
            return TrainVariant("baseline", lam=0.0, sam=SamConfig(0.0))
        if kind == "ditto":
            return TrainVariant("ditto", lam=lam, sam=SamConfig(rho))
        if kind == "ditto_minus_sam":
            return TrainVariant("ditto_minus_sam", lam=lam, sam=SamConfig(0.0))
        if kind == "ditto_minus_la":
            return TrainVariant("ditto_minus_la", lam=0.0, sam=SamConfig(rho))
        if kind == "ditto_single":
            if not target:
                raise ConfigError("ditto_single variant name must be "
                                  "'ditto_single:<target>'")
            return TrainVariant("ditto_single", lam=lam, sam=SamConfig(rho),
                                single_target=target)
        if kind == "ditto_uniform":
            return TrainVariant("ditto_uniform", lam=lam, sam=SamConfig(rho))
        raise ConfigError(f"unknown variant name {name!r}")


@dataclass
class TrainConfig:
    """Hyperparameters shared by every variant.

    The discriminator keeps a 5x higher learning rate than the encoder and
    classifier by default.
    """

    encoder: EncoderSpec
    num_classes: int
    epochs: int
    batch_size: int = 32
    lr: float = 0.01
    disc_lr: float = 0.05
    weight_decay: float = 0.0
    adv_source_from_unlabeled: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0 or self.disc_lr <= 0:
            raise ConfigError("learning rates must be positive")


@dataclass
class Optimizers:
    enc: AdamWConfig
    disc: AdamWConfig


# ---------------------------------------------------------------------------
# training steps


def _task_loss_proc(bundle: ModelBundle, X: np.ndarray, y: np.ndarray):
    def proc():
        tape = Tape()
        feats = encode(bundle, tape, X)
        logits = classify(bundle, tape, feats)
        return softmax_cross_entropy(logits, y)
    return proc


def baseline_step(
    bundle: ModelBundle,
    X: np.ndarray,
    y: np.ndarray,
    opts: Optimizers,
    variant: TrainVariant,
    step: int,
) -> float:
    """Cross-entropy step on a labeled source batch (SAM per the variant's
    rho); discriminators untouched."""
    if X.shape[0] == 0:
        raise DataError("empty batch")
    names = bundle.task_param_names()
    loss = sam_backward(_task_loss_proc(bundle, X, y), bundle.store,
                        variant.sam.rho, names)
    adamw_step(bundle.store, opts.enc, step, names)
    return loss


def ditto_step(
    bundle: ModelBundle,
    X: np.ndarray,
    y: np.ndarray,
    prior: LanguagePrior,
    datasets: DomainDataset,
    opts: Optimizers,
    variant: TrainVariant,
    step: int,
    rng: Rng,
    source_pool: np.ndarray | None = None,
) -> tuple[float, float | None, str | None]:
    """One joint step: sharpness-aware task phase, then an adversarial phase
    against one sampled target.

    Phase order:
      1. SAM backward on the source batch leaves task gradients in the slots.
      2. Sample t from the prior.
      3. At the restored weights, run source + target rows through
         encoder -> grad_reverse(lambda) -> discriminator t -> binary
         cross-entropy; one backward accumulates reversed encoder gradients
         into the task slots and fills t's discriminator slots.
      4. AdamW updates encoder/classifier (summed gradients) and t's
         discriminator (its own, faster optimizer).  Other discriminators
         are untouched.

    With lambda = 0, steps 2-3 are skipped (no rng draws) and only the task
    update runs.  Returns (task loss, adversarial loss or None, t or None).
    """
    if X.shape[0] == 0:
        raise DataError("empty batch")
    store = bundle.store
    task_names = bundle.task_param_names()
    task_loss = sam_backward(_task_loss_proc(bundle, X, y), store,
                             variant.sam.rho, task_names)
    lam = variant.effective_lambda
    if lam == 0.0:
        adamw_step(store, opts.enc, step, task_names)
        return task_loss, None, None

    t = sample_target(prior, rng)
    pool = datasets.domains[t].unlabeled
    if pool.shape[0] == 0:
        raise DataError(f"target domain {t!r} has an empty unlabeled pool")
    m = X.shape[0]
    target_rows = pool[rng.integers(0, pool.shape[0], m)]
    if source_pool is not None:
        if source_pool.shape[0] == 0:
            raise DataError("source unlabeled pool is empty")
        source_rows = source_pool[rng.integers(0, source_pool.shape[0], m)]
    else:
        source_rows = X
    domain_X = np.vstack([source_rows, target_rows])
    domain_y = np.concatenate([np.ones(m, dtype=np.int64),
                               np.zeros(m, dtype=np.int64)])

    tape = Tape()
    feats = encode(bundle, tape, domain_X)
    reversed_feats = grad_reverse(feats, lam)
    probs = discriminate(bundle, t, tape, reversed_feats)
    adv = binary_cross_entropy(probs, domain_y)
    backward(adv)  # adds encoder gradients onto the task slots

    adamw_step(store, opts.enc, step, task_names)
    adamw_step(store, opts.disc, step, bundle.disc_param_names(t))
    return task_loss, float(adv.value[0, 0]), t


# ---------------------------------------------------------------------------
# evaluation helper (the single accuracy implementation in the package)


def domain_accuracies(bundle: ModelBundle, datasets: DomainDataset) -> dict[str, float]:
    """Percent accuracy of argmax predictions on every domain's eval split."""
    out = {}
    for dom in [datasets.source] + datasets.target_ids():
        rows = datasets.domains[dom].eval
        if rows.n == 0 or rows.y is None:
            raise DataError(f"domain {dom!r} has no labeled eval rows")
        if rows.y.max() >= bundle.num_classes or rows.y.min() < 0:
            raise LabelError(f"domain {dom!r} eval labels exceed "
                             f"{bundle.num_classes} classes")
        pred = np.argmax(predict_logits(bundle, rows.X), axis=1)
        out[dom] = 100.0 * float(np.mean(pred == rows.y))
    return out


# ---------------------------------------------------------------------------
# full training loop


@dataclass
class EpochRecord:
    epoch: int
    task_loss: float
    adv_loss: float | None
    disc_loss: float | None
    per_domain_acc: dict[str, float]


@dataclass
class TrainReport:
    variant: str
    seed: int
    epochs: list[EpochRecord]
    target_sample_counts: dict[str, int]
    final_per_domain_acc: dict[str, float]
    wall_clock_seconds: float

    def comparable(self) -> dict:
        """Everything except wall clock, for determinism comparisons."""
        return {
            "variant": self.variant,
            "seed": self.seed,
            "epochs": [vars(e) for e in self.epochs],
            "target_sample_counts": self.target_sample_counts,
            "final_per_domain_acc": self.final_per_domain_acc,
        }


def train(
    config: TrainConfig,
    datasets: DomainDataset,
    variant: TrainVariant,
    seed: int,
    prior: LanguagePrior | None = None,
) -> tuple[ModelBundle, TrainReport]:
    """Run one variant to completion; a pure function of (config, datasets,
    variant, seed, prior).

    Prior rules: ditto and ditto_minus_sam require an explicit prior (built
    from a baseline model's zero-shot scores); ditto_uniform and ditto_single
    construct theirs internally; baseline and ditto_minus_la take none.
    """
    started = time.perf_counter()
    variant.validate()
    datasets.validate()
    targets = datasets.target_ids()
    if variant.kind == "ditto_single":
        if variant.single_target not in targets:
            raise ConfigError(f"single target {variant.single_target!r} not in "
                              f"dataset targets {targets}")
        prior = LanguagePrior.single(variant.single_target)
    elif variant.kind == "ditto_uniform":
        prior = LanguagePrior.uniform(targets)
    elif variant.kind in ("ditto", "ditto_minus_sam"):
        if prior is None:
            raise ConfigError(f"variant {variant.kind!r} needs a target prior "
                              "computed from baseline zero-shot scores")
        if set(prior.probs) != set(targets):
            raise ConfigError(f"prior targets {sorted(prior.probs)} do not match "
                              f"dataset targets {targets}")

    rng = Rng(seed)
    bundle = init_params(config.encoder, config.num_classes, targets, rng.child("init"))
    src = datasets.domains[datasets.source]
    n = src.labeled.n
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = max(1, config.epochs * steps_per_epoch)
    opts = Optimizers(
        enc=AdamWConfig(lr=config.lr, total_steps=total_steps,
                        weight_decay=config.weight_decay),
        disc=AdamWConfig(lr=config.disc_lr, total_steps=total_steps,
                         weight_decay=config.weight_decay),
    )
    source_pool = src.unlabeled if config.adv_source_from_unlabeled else None

    shuffle_rng = rng.child("shuffle")
    adv_rng = rng.child("adversarial")
    sample_counts = {t: 0 for t in targets}
    records: list[EpochRecord] = []
    step = 0
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        task_losses: list[float] = []
        adv_losses: list[float] = []
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            X, y = src.labeled.X[idx], src.labeled.y[idx]
            if variant.kind == "baseline":
                task_loss = baseline_step(bundle, X, y, opts, variant, step)
                adv_loss, t = None, None
            else:
                task_loss, adv_loss, t = ditto_step(
                    bundle, X, y, prior, datasets, opts, variant, step,
                    adv_rng, source_pool)
            task_losses.append(task_loss)
            if adv_loss is not None:
                adv_losses.append(adv_loss)
                sample_counts[t] += 1
            step += 1
        mean_adv = float(np.mean(adv_losses)) if adv_losses else None
        records.append(EpochRecord(
            epoch=epoch,
            task_loss=float(np.mean(task_losses)),
            adv_loss=mean_adv,
            disc_loss=mean_adv,  # one shared pass: same scalar both sides
            per_domain_acc=domain_accuracies(bundle, datasets),
        ))
    report = TrainReport(
        variant=variant.name,
        seed=seed,
        epochs=records,
        target_sample_counts=sample_counts,
        final_per_domain_acc=domain_accuracies(bundle, datasets),
        wall_clock_seconds=time.perf_counter() - started,
    )
    return bundle, report


def few_shot_augment(datasets: DomainDataset, k: int, rng: Rng) -> DomainDataset:
    """Move k labeled rows per target from its few-shot pool into the source
    labeled set (sampled without replacement; unlabeled pools unchanged).

    k = 0 returns the dataset untouched.
    """
    if k < 0:
        raise ParameterError(f"k must be >= 0, got {k}")
    if k == 0:
        return datasets
    src = datasets.domains[datasets.source]
    xs, ys = [src.labeled.X], [src.labeled.y]
    for t in datasets.target_ids():
        pool = datasets.domains[t].fewshot
        if pool.n < k or pool.y is None:
            raise DataError(f"target {t!r} few-shot pool has {pool.n} labeled rows, "
                            f"need {k}")
        idx = rng.choice_without_replacement(pool.n, k)
        xs.append(pool.X[idx])
        ys.append(pool.y[idx])
    augmented = Rows(np.vstack(xs), np.concatenate(ys))
    domains = dict(datasets.domains)
    domains[datasets.source] = replace(src, labeled=augmented)
    return DomainDataset(source=datasets.source, domains=domains)
