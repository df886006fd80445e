"""Gated-fusion hash network: forward maps, exact gradients, checkpoints.

The network is two stages applied to a concatenated multi-modal feature
vector x of dimension n:

    gate    = sigmoid(w_fusion @ x + b_fusion)      element-wise gates in (0,1)
    x_fused = gate * x                              re-weighted features
    code    = tanh(w_hash @ x_fused + b_hash)       relaxed k-bit code in (-1,1)

Binary codes are sign(code) with the tie rule sign(0) := +1; since tanh is
odd and monotone, binarizing the pre-activation gives the same bits.
Training always uses the tanh relaxation; sign is applied only at encode
time.

All functions accept a single vector (n,) or a batch (m, n) and are pure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    NonFiniteError,
    SchemaError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)

CHECKPOINT_MAGIC = b"CMHW"
CHECKPOINT_VERSION = 1

SUPPORTED_CODE_LENGTHS = (16, 32, 64, 128)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable sigmoid (separate branches for each sign)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class GatingParams:
    """Square projection producing the per-dimension gates."""

    w_fusion: np.ndarray  # (n, n)
    b_fusion: np.ndarray  # (n,)


@dataclass(frozen=True)
class HashParams:
    """Linear map from fused features to k pre-activation values."""

    w_hash: np.ndarray  # (k, n)
    b_hash: np.ndarray  # (k,)

    @property
    def k(self) -> int:
        return int(self.w_hash.shape[0])


@dataclass(frozen=True)
class LossHeadParams:
    """Linear classification head on the relaxed code (training only)."""

    w_head: np.ndarray  # (category_count, k)
    b_head: np.ndarray  # (category_count,)


@dataclass(frozen=True)
class ModelParams:
    """All trainable tensors; immutable during inference."""

    gating: GatingParams
    hash: HashParams
    loss_head: LossHeadParams

    @property
    def n(self) -> int:
        return int(self.gating.w_fusion.shape[0])

    @property
    def k(self) -> int:
        return self.hash.k

    @property
    def category_count(self) -> int:
        return int(self.loss_head.w_head.shape[0])

    def tensors(self) -> tuple[np.ndarray, ...]:
        """All tensors in fixed declaration order (used by optimizer and I/O)."""
        return (
            self.gating.w_fusion,
            self.gating.b_fusion,
            self.hash.w_hash,
            self.hash.b_hash,
            self.loss_head.w_head,
            self.loss_head.b_head,
        )

    @staticmethod
    def from_tensors(t: tuple[np.ndarray, ...]) -> "ModelParams":
        return ModelParams(
            gating=GatingParams(w_fusion=t[0], b_fusion=t[1]),
            hash=HashParams(w_hash=t[2], b_hash=t[3]),
            loss_head=LossHeadParams(w_head=t[4], b_head=t[5]),
        )

    def validate(self) -> None:
        n, k, c = self.n, self.k, self.category_count
        shapes = ((n, n), (n,), (k, n), (k,), (c, k), (c,))
        for tensor, shape in zip(self.tensors(), shapes):
            if tensor.shape != shape:
                raise DimensionMismatchError(
                    f"parameter tensor has shape {tensor.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(tensor)):
                raise NonFiniteError("parameter tensor contains non-finite values")
        if k < 1 or n < 1 or c < 1:
            raise ValidationError("n, k and category_count must be positive")


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate values of one forward pass, consumed by the backward pass."""

    x_concat: np.ndarray
    gate: np.ndarray
    x_fusion: np.ndarray
    pre_tanh: np.ndarray
    relaxed_code: np.ndarray


@dataclass
class ParamGrads:
    """Gradients shaped like ModelParams.tensors(), in the same order."""

    w_fusion: np.ndarray
    b_fusion: np.ndarray
    w_hash: np.ndarray
    b_hash: np.ndarray
    w_head: np.ndarray
    b_head: np.ndarray

    def tensors(self) -> tuple[np.ndarray, ...]:
        return (self.w_fusion, self.b_fusion, self.w_hash, self.b_hash,
                self.w_head, self.b_head)


def gate_forward(params: GatingParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gated re-weighting: gate = sigmoid(w x + b), fused = gate * x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.w_fusion.shape[1]:
        raise DimensionMismatchError(
            f"input has dim {x.shape[-1]}, gating expects {params.w_fusion.shape[1]}"
        )
    gate = sigmoid(x @ params.w_fusion.T + params.b_fusion)
    return gate, gate * x


def hash_forward(params: HashParams, x_fusion: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hash layer: pre = w x + b, relaxed code = tanh(pre)."""
    x_fusion = np.asarray(x_fusion, dtype=np.float64)
    if x_fusion.shape[-1] != params.w_hash.shape[1]:
        raise DimensionMismatchError(
            f"input has dim {x_fusion.shape[-1]}, hash layer expects {params.w_hash.shape[1]}"
        )
    pre_tanh = x_fusion @ params.w_hash.T + params.b_hash
    return pre_tanh, np.tanh(pre_tanh)


def model_forward(params: ModelParams, x: np.ndarray) -> ForwardTrace:
    """Run both stages, keeping every intermediate for the backward pass."""
    gate, x_fusion = gate_forward(params.gating, x)
    pre_tanh, relaxed = hash_forward(params.hash, x_fusion)
    return ForwardTrace(
        x_concat=np.asarray(x, dtype=np.float64),
        gate=gate,
        x_fusion=x_fusion,
        pre_tanh=pre_tanh,
        relaxed_code=relaxed,
    )


def binarize(vec: np.ndarray) -> np.ndarray:
    """Sign bits of a relaxed code or pre-activation: bit = 1 iff value >= 0.

    The >= 0 rule makes the map total and deterministic on exact zeros.
    """
    vec = np.asarray(vec)
    if not np.all(np.isfinite(vec)):
        raise NonFiniteError("cannot binarize non-finite values")
    return (vec >= 0).astype(np.uint8)


def model_backward(
    params: ModelParams,
    trace: ForwardTrace,
    upstream_grad: np.ndarray,
) -> ParamGrads:
    """Exact gradients of the relaxed forward map.

    upstream_grad is dLoss/d(relaxed_code), one row per sample; gradients are
    summed over the batch. The gating path contributes through both the
    sigmoid argument and the element-wise product. Loss-head gradients are
    zero here (the head sits downstream of the relaxed code; see trainer).
    """
    upstream = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
    x = np.atleast_2d(trace.x_concat)
    gate = np.atleast_2d(trace.gate)
    x_fusion = np.atleast_2d(trace.x_fusion)
    relaxed = np.atleast_2d(trace.relaxed_code)
    if upstream.shape != relaxed.shape:
        raise DimensionMismatchError(
            f"upstream grad shape {upstream.shape} != code shape {relaxed.shape}"
        )

    d_pre = upstream * (1.0 - relaxed**2)          # through tanh
    d_w_hash = d_pre.T @ x_fusion
    d_b_hash = d_pre.sum(axis=0)
    d_fusion = d_pre @ params.hash.w_hash          # into the fused features
    d_gate = d_fusion * x                          # product rule, gate side
    d_arg = d_gate * gate * (1.0 - gate)           # through the sigmoid
    d_w_fusion = d_arg.T @ x
    d_b_fusion = d_arg.sum(axis=0)

    return ParamGrads(
        w_fusion=d_w_fusion,
        b_fusion=d_b_fusion,
        w_hash=d_w_hash,
        b_hash=d_b_hash,
        w_head=np.zeros_like(params.loss_head.w_head),
        b_head=np.zeros_like(params.loss_head.b_head),
    )


def init_params(n: int, k: int, category_count: int, seed: int) -> ModelParams:
    """Deterministic Glorot-uniform weights, zero biases.

    Each matrix is drawn uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
    """
    if n < 1 or k < 1 or category_count < 1:
        raise ValidationError("n, k and category_count must be positive")
    rng = np.random.default_rng(seed)

    def glorot(fan_out: int, fan_in: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    params = ModelParams(
        gating=GatingParams(w_fusion=glorot(n, n), b_fusion=np.zeros(n)),
        hash=HashParams(w_hash=glorot(k, n), b_hash=np.zeros(k)),
        loss_head=LossHeadParams(
            w_head=glorot(category_count, k), b_head=np.zeros(category_count)
        ),
    )
    params.validate()
    return params


# ---------------------------------------------------------------------------
# Checkpoint format (CMHW)
# ---------------------------------------------------------------------------
#
#   magic "CMHW" | version u32 | n u32 | k u32 | category_count u32
#   | seed u64 | flags u32 (bit 0: inputs were L2-normalized per modality)
#   | all tensors float64 little-endian in declaration order
#
# The flags word records the trainer's normalize_inputs switch so encoding
# reproduces the training-time input transform.

_FLAG_NORMALIZE_INPUTS = 1


@dataclass(frozen=True)
class Checkpoint:
    """Trained parameters plus the metadata needed to reuse them."""

    params: ModelParams
    seed: int
    normalize_inputs: bool


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    ckpt.params.validate()
    if ckpt.seed < 0:
        raise ValidationError("checkpoint seed must be non-negative")
    flags = _FLAG_NORMALIZE_INPUTS if ckpt.normalize_inputs else 0
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack(
            "<IIIIQI",
            CHECKPOINT_VERSION,
            ckpt.params.n,
            ckpt.params.k,
            ckpt.params.category_count,
            ckpt.seed,
            flags,
        ))
        for tensor in ckpt.params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: expected magic {CHECKPOINT_MAGIC!r}, found {buf[:4]!r}")
    header_size = 4 + struct.calcsize("<IIIIQI")
    if len(buf) < header_size:
        raise TruncatedFileError(f"{path}: file ends inside checkpoint header")
    version, n, k, category_count, seed, flags = struct.unpack(
        "<IIIIQI", buf[4:header_size]
    )
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")

    shapes = ((n, n), (n,), (k, n), (k,), (category_count, k), (category_count,))
    tensors = []
    off = header_size
    for shape in shapes:
        size = 8 * int(np.prod(shape))
        if off + size > len(buf):
            raise TruncatedFileError(f"{path}: file ends inside tensor payload")
        tensors.append(
            np.frombuffer(buf[off:off + size], dtype="<f8").reshape(shape).copy()
        )
        off += size
    if off != len(buf):
        raise SchemaError(f"{path}: {len(buf) - off} trailing bytes")

    params = ModelParams.from_tensors(tuple(tensors))
    params.validate()
    return Checkpoint(
        params=params,
        seed=seed,
        normalize_inputs=bool(flags & _FLAG_NORMALIZE_INPUTS),
    )
