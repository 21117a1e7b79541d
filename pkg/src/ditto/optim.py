"""AdamW with a linear learning-rate decay schedule, plus the
sharpness-aware minimization (SAM) wrapper.

SAM runs each batch as a two-phase protocol:

    1. forward + backward at w
    2. perturb: w <- w + eps_hat, with eps_hat = rho * grad / ||grad||_2
       (a single global L2 norm over all perturbed parameters jointly)
    3. reset grads, forward + backward at w + eps_hat
    4. restore w bit-exactly from a stored copy
    5. AdamW update using the phase-3 gradients

With rho = 0 phases 2-4 are skipped entirely, so the trajectory is
bit-identical to plain AdamW.  A vanishing phase-1 gradient norm (< 1e-12)
also falls back to the plain step for that batch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import ParamStore, TapeNode, backward
from .errors import DegenerateGradientError, NumericError, ParameterError, StateError

DEGENERATE_NORM = 1e-12


@dataclass
class AdamWConfig:
    lr: float
    total_steps: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if self.total_steps <= 0:
            raise ParameterError(f"total_steps must be positive, got {self.total_steps}")
        if not (0.0 <= self.beta1 < 1.0) or not (0.0 <= self.beta2 < 1.0):
            raise ParameterError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.weight_decay < 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class SamConfig:
    """rho is the L2 radius of the perturbation neighborhood; 0 disables SAM."""

    rho: float = 0.0

    def __post_init__(self):
        if self.rho < 0:
            raise ParameterError(f"rho must be >= 0, got {self.rho}")


def lr_at(config: AdamWConfig, step: int) -> float:
    """Linearly decayed rate lr * (1 - step/total_steps); exactly 0 at the end.

    Steps past total_steps clamp to 0 with a warning.
    """
    if step < 0:
        raise ParameterError(f"step must be >= 0, got {step}")
    if step > config.total_steps:
        warnings.warn(f"step {step} exceeds total_steps {config.total_steps}; "
                      f"learning rate clamped to 0", stacklevel=2)
        return 0.0
    return config.lr * (1.0 - step / config.total_steps)


def adamw_step(
    store: ParamStore,
    config: AdamWConfig,
    step: int,
    names: Sequence[str] | None = None,
) -> None:
    """One decoupled-weight-decay Adam update on the named parameters.

    w <- w - lr_t*wd*w - lr_t * m_hat / (sqrt(v_hat) + eps), with the usual
    bias-corrected moments; lr_t comes from the linear schedule at `step`,
    while bias correction uses each parameter's own update count (so rarely
    updated discriminators are corrected properly).
    """
    lr_t = lr_at(config, step)
    for name in (names if names is not None else store.names()):
        p = store[name]
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
        p.step += 1
        p.m = config.beta1 * p.m + (1.0 - config.beta1) * p.grad
        p.v = config.beta2 * p.v + (1.0 - config.beta2) * p.grad * p.grad
        m_hat = p.m / (1.0 - config.beta1 ** p.step)
        v_hat = p.v / (1.0 - config.beta2 ** p.step)
        update = lr_t * m_hat / (np.sqrt(v_hat) + config.eps)
        if config.weight_decay:
            update = update + lr_t * config.weight_decay * p.value
        p.value -= update


class Perturbation:
    """Record of one sam_perturb: the exact pre-perturbation values."""

    def __init__(self, store: ParamStore, originals: dict[str, np.ndarray], norm: float):
        self.store = store
        self.originals = originals
        self.grad_norm = norm
        self.restored = False


def sam_perturb(store: ParamStore, rho: float, names: Sequence[str] | None = None) -> Perturbation:
    """Set w <- w + eps_hat with eps_hat = rho * grad / ||grad||_2.

    The norm is a single global L2 norm over the concatenation of all named
    parameters' gradients, so ||eps_hat||_2 = rho exactly.  A norm below
    1e-12 raises DegenerateGradientError and leaves parameters untouched;
    callers skip the perturbation for that step.
    """
    if rho < 0:
        raise ParameterError(f"rho must be >= 0, got {rho}")
    chosen = list(names) if names is not None else store.names()
    sq = 0.0
    for name in chosen:
        g = store[name].grad
        sq += float((g * g).sum())
    norm = float(np.sqrt(sq))
    if norm < DEGENERATE_NORM:
        raise DegenerateGradientError(f"gradient norm {norm:.3e} below {DEGENERATE_NORM}")
    scale = rho / norm
    originals = {}
    for name in chosen:
        p = store[name]
        originals[name] = p.value.copy()
        p.value += scale * p.grad
    return Perturbation(store, originals, norm)


def sam_restore(store: ParamStore, perturbation: Perturbation) -> None:
    """Restore the exact pre-perturbation values (stored copy, not subtraction)."""
    if perturbation.store is not store:
        raise StateError("perturbation was produced for a different ParamStore")
    if perturbation.restored:
        raise StateError("perturbation already restored")
    for name, value in perturbation.originals.items():
        store[name].value[...] = value
    perturbation.restored = True


def sam_backward(
    loss_proc: Callable[[], TapeNode],
    store: ParamStore,
    rho: float,
    names: Sequence[str] | None = None,
) -> float:
    """Run the SAM backward protocol, leaving the update gradients in place.

    Resets all gradient slots, then: with rho = 0 a single backward at w;
    otherwise backward at w, perturb, fresh backward at w + eps_hat, restore.
    Returns the loss at w.  No optimizer update happens here, which lets the
    joint adaptation step accumulate further gradients before updating.
    """
    store.reset_grads()
    loss = loss_proc()
    backward(loss)
    if rho == 0.0:
        return float(loss.value[0, 0])
    try:
        perturbation = sam_perturb(store, rho, names)
    except DegenerateGradientError:
        return float(loss.value[0, 0])  # keep phase-1 gradients: plain step
    store.reset_grads()
    backward(loss_proc())
    sam_restore(store, perturbation)
    return float(loss.value[0, 0])


def sam_step(
    loss_proc: Callable[[], TapeNode],
    store: ParamStore,
    sam: SamConfig,
    adamw: AdamWConfig,
    step: int,
    names: Sequence[str] | None = None,
) -> float:
    """Full SAM step: sharpness-aware backward followed by an AdamW update."""
    loss = sam_backward(loss_proc, store, sam.rho, names)
    adamw_step(store, adamw, step, names)
    return loss
