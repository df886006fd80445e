"""Training loop, loss, optimizers, and the gradient-verification harness.

The loss has two parts:

    classification: mean per-label binary cross-entropy of a linear head on
        the relaxed code against the multi-hot labels (the supervision
        signal that shapes the codes);
    quantization: mean over samples and bits of (1 - code^2), pulling the
        relaxed tanh outputs toward +/-1 so the final sign step loses
        little information.

    total = classification + lambda_quant * quantization

Training is a pure function of (split, config): parameter init, the
per-epoch shuffle, and every reduction are seeded and ordered, so repeated
runs produce byte-identical checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import DatasetSplit, stack_concat
from .errors import DimensionMismatchError, NumericError, ValidationError
from .model import (
    ModelParams,
    ParamGrads,
    init_params,
    model_backward,
    model_forward,
    sigmoid,
)

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults are the documented reference configuration."""

    k: int = 16
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    lambda_quant: float = 0.1
    normalize_inputs: bool = True
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self) -> None:
        if self.k < 1:
            raise ValidationError("code length k must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.lambda_quant < 0:
            raise ValidationError("lambda_quant must be non-negative")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass(frozen=True)
class LossTerms:
    classification: float
    quantization: float
    total: float


def quantization_penalty(relaxed_code: np.ndarray) -> float:
    """Mean over samples of (1/k) * sum_i (1 - code_i^2); zero iff all bits are +/-1."""
    relaxed_code = np.asarray(relaxed_code, dtype=np.float64)
    return float(np.mean(1.0 - relaxed_code**2))


def _bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Element-wise binary cross-entropy of sigmoid(logits) vs labels, stable form."""
    return np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))


def compute_loss(
    params: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    lambda_quant: float,
    ids: np.ndarray | None = None,
) -> tuple[LossTerms, ParamGrads]:
    """Loss terms and exact gradients for one minibatch.

    features: (m, n) concatenated (and, if configured, normalized) inputs.
    labels:   (m, category_count) multi-hot.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    m = features.shape[0]
    if m == 0:
        raise ValidationError("empty batch")
    if labels.shape != (m, params.category_count):
        raise DimensionMismatchError(
            f"labels shape {labels.shape}, expected ({m}, {params.category_count})"
        )

    trace = model_forward(params, features)
    relaxed = np.atleast_2d(trace.relaxed_code)
    head = params.loss_head
    logits = relaxed @ head.w_head.T + head.b_head

    bce = _bce_with_logits(logits, labels)
    per_sample = bce.mean(axis=1) + lambda_quant * (1.0 - relaxed**2).mean(axis=1)
    # activations are checked too: a saturated tanh can hide an overflow
    # upstream and poison the gradients while the loss still looks finite
    sample_ok = (
        np.isfinite(per_sample)
        & np.isfinite(np.atleast_2d(trace.x_fusion)).all(axis=1)
        & np.isfinite(np.atleast_2d(trace.pre_tanh)).all(axis=1)
    )
    if not sample_ok.all():
        bad = int(np.flatnonzero(~sample_ok)[0])
        sample_id = int(ids[bad]) if ids is not None else bad
        raise NumericError(f"non-finite loss for sample id {sample_id}")

    classification = float(bce.mean())
    quantization = quantization_penalty(relaxed)
    terms = LossTerms(
        classification=classification,
        quantization=quantization,
        total=classification + lambda_quant * quantization,
    )

    # head gradients, then the upstream gradient on the relaxed code
    d_logits = (sigmoid(logits) - labels) / (m * params.category_count)
    upstream = d_logits @ head.w_head
    upstream += lambda_quant * (-2.0 * relaxed) / (m * params.k)
    grads = model_backward(params, trace, upstream)
    grads.w_head = d_logits.T @ relaxed
    grads.b_head = d_logits.sum(axis=0)
    return terms, grads


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Adam moment buffers; unused (empty) for plain SGD."""

    step: int
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]


def init_optimizer_state(params: ModelParams, config: TrainConfig) -> OptimizerState:
    if config.optimizer == "sgd":
        return OptimizerState(step=0, m=(), v=())
    zeros = tuple(np.zeros_like(t) for t in params.tensors())
    return OptimizerState(step=0, m=zeros, v=zeros)


def optimizer_step(
    params: ModelParams,
    grads: ParamGrads,
    state: OptimizerState,
    config: TrainConfig,
) -> tuple[ModelParams, OptimizerState]:
    """One SGD or bias-corrected Adam update; purely functional."""
    tensors = params.tensors()
    gs = grads.tensors()
    for t, g in zip(tensors, gs):
        if t.shape != g.shape:
            raise DimensionMismatchError(
                f"gradient shape {g.shape} != parameter shape {t.shape}"
            )

    lr = config.learning_rate
    if config.optimizer == "sgd":
        new_tensors = tuple(t - lr * g for t, g in zip(tensors, gs))
        return ModelParams.from_tensors(new_tensors), state

    t_step = state.step + 1
    b1, b2, eps = config.beta1, config.beta2, config.epsilon
    new_m = tuple(b1 * m + (1 - b1) * g for m, g in zip(state.m, gs))
    new_v = tuple(b2 * v + (1 - b2) * g**2 for v, g in zip(state.v, gs))
    c1 = 1.0 - b1**t_step
    c2 = 1.0 - b2**t_step
    new_tensors = tuple(
        t - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        for t, m, v in zip(tensors, new_m, new_v)
    )
    return (
        ModelParams.from_tensors(new_tensors),
        OptimizerState(step=t_step, m=new_m, v=new_v),
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    epoch_log: tuple[LossTerms, ...]


def train(split: DatasetSplit, config: TrainConfig) -> TrainResult:
    """Train on split.train; deterministic for identical (split, config)."""
    config.validate()
    split.validate()
    train_set = split.train
    if config.batch_size > train_set.sample_count:
        raise ValidationError(
            f"batch_size {config.batch_size} exceeds training set size "
            f"{train_set.sample_count}"
        )

    features = stack_concat(train_set, normalize=config.normalize_inputs)
    labels = train_set.labels.astype(np.float64)
    m, n = features.shape

    params = init_params(n, config.k, split.category_count, config.seed)
    state = init_optimizer_state(params, config)

    log: list[LossTerms] = []
    for epoch in range(config.epochs):
        # per-epoch shuffle keyed by (seed, epoch); last partial batch is kept
        perm = np.random.default_rng([config.seed, epoch]).permutation(m)
        sum_cls = sum_quant = 0.0
        for start in range(0, m, config.batch_size):
            rows = perm[start:start + config.batch_size]
            try:
                terms, grads = compute_loss(
                    params, features[rows], labels[rows],
                    config.lambda_quant, ids=train_set.ids[rows],
                )
            except NumericError as err:
                raise NumericError(
                    f"epoch {epoch}, batch {start // config.batch_size}: {err}"
                ) from err
            params, state = optimizer_step(params, grads, state, config)
            sum_cls += terms.classification * rows.size
            sum_quant += terms.quantization * rows.size
        cls, quant = sum_cls / m, sum_quant / m
        log.append(LossTerms(
            classification=cls,
            quantization=quant,
            total=cls + config.lambda_quant * quant,
        ))
    return TrainResult(params=params, epoch_log=tuple(log))


def render_epoch_log(log: tuple[LossTerms, ...] | list[LossTerms]) -> str:
    """Tab-separated training log, one line per epoch."""
    lines = ["epoch\tclassification\tquantization\ttotal"]
    for i, terms in enumerate(log):
        lines.append(
            f"{i}\t{terms.classification:.9f}\t{terms.quantization:.9f}"
            f"\t{terms.total:.9f}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

FD_STEP = 1e-5


def max_relative_gradient_error(
    loss_fn: Callable[[ModelParams], float],
    params: ModelParams,
    grads: ParamGrads,
    step: float = FD_STEP,
) -> float:
    """Compare every analytic gradient entry against central finite differences.

    Relative error per entry is |analytic - numeric| / max(|analytic|,
    |numeric|, 1e-8); returns the maximum over all entries of all tensors.
    """
    worst = 0.0
    tensors = params.tensors()
    for ti, grad in enumerate(grads.tensors()):
        flat_grad = grad.ravel()

        def loss_with_bump(entry: int, delta: float) -> float:
            bumped = [t.copy() if i == ti else t for i, t in enumerate(tensors)]
            bumped[ti].ravel()[entry] += delta
            return loss_fn(ModelParams.from_tensors(tuple(bumped)))

        for j in range(flat_grad.size):
            numeric = (loss_with_bump(j, step) - loss_with_bump(j, -step)) / (2.0 * step)
            analytic = float(flat_grad[j])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def finite_diff_check(n: int, k: int, categories: int, seed: int) -> float:
    """Max relative error of the analytic total-loss gradient on a random instance.

    Kept cheap by contract: n <= 8, k <= 4.
    """
    if n > 8 or k > 4:
        raise ValidationError("finite_diff_check is restricted to n <= 8, k <= 4")
    rng = np.random.default_rng(seed)
    params = init_params(n, k, categories, seed)
    features = rng.standard_normal((3, n))
    labels = rng.integers(0, 2, size=(3, categories)).astype(np.float64)
    for row in range(labels.shape[0]):  # every sample needs at least one label
        if not labels[row].any():
            labels[row, int(rng.integers(categories))] = 1.0
    lambda_quant = 0.1

    _, grads = compute_loss(params, features, labels, lambda_quant)
    return max_relative_gradient_error(
        lambda p: compute_loss(p, features, labels, lambda_quant)[0].total,
        params,
        grads,
    )
