"""Training loop: per-video Adam updates in three supervision modes.

Each epoch visits every training video once in a freshly shuffled order
(seeded, so runs are bit-reproducible) and applies one
forward/backward/update step per video.  Semi-supervised training
interleaves labeled videos (scored + variation loss) and unlabeled
videos (length + repelling loss) in the same stream.  Gradients are
clipped by global norm before each update to guard the log-det term.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SourceDataset, SplitSpec, VideoRecord
from .losses import LossBreakdown, LossWeights, NumericalError, backward, total_loss
from .model import HyperParams, ModelParams, forward, init_params

CHECKPOINT_FORMAT = "gdasum-checkpoint"
CHECKPOINT_VERSION = 1
DEFAULT_LEARNING_RATES = {
    SourceDataset.SUMME_LIKE: 5e-5,
    SourceDataset.TVSUM_LIKE: 1e-4,
    SourceDataset.OTHER: 5e-4,
}


class CheckpointError(ValueError):
    """Checkpoint file is unreadable, corrupt, or from another format version."""


class TrainMode(enum.Enum):
    SUPERVISED = "supervised"
    UNSUPERVISED = "unsupervised"
    SEMI = "semi"


@dataclass
class TrainConfig:
    mode: TrainMode = TrainMode.SUPERVISED
    epochs: int = 200
    learning_rate: float | None = None
    sigma: float = 0.3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    grad_clip: float | None = 5.0
    early_stop_patience: int | None = None
    loss_weights: LossWeights | None = None

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = TrainMode(self.mode)
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")


@dataclass
class AdamState:
    """First and second moment estimates, shapes mirroring the parameters."""

    m: ModelParams
    v: ModelParams
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), t=0)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: LossBreakdown
    wall_seconds: float
    validation_score: float | None = None

    def to_dict(self) -> dict:
        out = {
            "epoch": self.epoch,
            "loss": self.mean_loss.to_dict(),
            "wall_seconds": self.wall_seconds,
        }
        if self.validation_score is not None:
            out["validation_score"] = self.validation_score
        return out


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoint_path: str | None = None

    def to_json_lines(self) -> str:
        lines = [json.dumps(e.to_dict()) for e in self.epochs]
        if self.checkpoint_path is not None:
            lines.append(json.dumps({"checkpoint_path": self.checkpoint_path}))
        return "\n".join(lines) + ("\n" if lines else "")


def default_learning_rate(source: SourceDataset) -> float:
    return DEFAULT_LEARNING_RATES[source]


def resolve_learning_rate(config: TrainConfig, test_records: list[VideoRecord]) -> float:
    """Configured rate, or the default for the test set's majority source."""
    if config.learning_rate is not None:
        return config.learning_rate
    if not test_records:
        return DEFAULT_LEARNING_RATES[SourceDataset.OTHER]
    counts = {}
    for rec in test_records:
        counts[rec.source_dataset] = counts.get(rec.source_dataset, 0) + 1
    majority = max(counts, key=lambda s: (counts[s], s.value))
    return DEFAULT_LEARNING_RATES[majority]


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    try:
        grads.check_finite()
    except ValueError as exc:
        raise NumericalError(f"adam_step: {exc}") from exc
    t = state.t + 1
    new_params = params.zeros_like()
    new_m = params.zeros_like()
    new_v = params.zeros_like()
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, theta in params.items():
        g = getattr(grads, name)
        m = beta1 * getattr(state.m, name) + (1.0 - beta1) * g
        v = beta2 * getattr(state.v, name) + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        setattr(new_params, name, theta - lr * m_hat / (np.sqrt(v_hat) + eps))
        setattr(new_m, name, m)
        setattr(new_v, name, v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def clip_gradients(grads: ModelParams, max_norm: float) -> tuple[ModelParams, float]:
    """Scale all gradients down so their joint L2 norm is at most max_norm."""
    total_sq = sum(float((g * g).sum()) for g in grads.arrays())
    norm = float(np.sqrt(total_sq))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    clipped = grads.copy()
    for name, g in clipped.items():
        setattr(clipped, name, g * scale)
    return clipped, norm


def _video_mode(config_mode: TrainMode, record: VideoRecord) -> str:
    if config_mode is TrainMode.SUPERVISED:
        return "supervised"
    if config_mode is TrainMode.UNSUPERVISED:
        return "unsupervised"
    return (
        "supervised"
        if record.annotations.keyframe_labels is not None
        else "unsupervised"
    )


def train(
    records: list[VideoRecord],
    split: SplitSpec,
    config: TrainConfig,
    hyper: HyperParams,
    validate=None,
) -> tuple[ModelParams, TrainReport]:
    """Run the full training loop on one split and return final parameters.

    ``validate``, when given, is called as validate(params, epoch) after
    each epoch and should return a scalar score (higher is better); with
    early_stop_patience set, training stops once the score fails to
    improve for that many consecutive epochs and the best-scoring
    parameters are returned.
    """
    by_id = {r.id: r for r in records}
    missing = [vid for vid in split.train_ids if vid not in by_id]
    if missing:
        raise ValueError(f"split names unknown video ids: {missing}")
    train_records = [by_id[vid] for vid in split.train_ids]
    if not train_records:
        raise ValueError("split has no training videos")

    dims = {r.features.dim for r in train_records}
    if len(dims) != 1:
        raise ValueError(f"training videos disagree on feature dim: {sorted(dims)}")
    feature_dim = dims.pop()

    if config.mode is TrainMode.SUPERVISED:
        unlabeled = [
            r.id for r in train_records if r.annotations.keyframe_labels is None
        ]
        if unlabeled:
            raise ValueError(f"supervised mode needs keyframe labels; missing on {unlabeled}")
    if config.mode is TrainMode.SEMI and not any(
        r.annotations.keyframe_labels is not None for r in train_records
    ):
        raise ValueError("semi mode needs at least one labeled training video")

    test_records = [by_id[vid] for vid in split.test_ids if vid in by_id]
    lr = resolve_learning_rate(config, test_records)

    rng = np.random.default_rng(config.seed)
    params = init_params(feature_dim, hyper, config.seed)
    state = AdamState.zeros(params)
    report = TrainReport()
    best_params = params
    best_score = -np.inf
    stale = 0

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(train_records))
        sums = np.zeros(6)
        for idx in order:
            rec = train_records[idx]
            mode = _video_mode(config.mode, rec)
            x = rec.features.matrix
            trace = forward(x, params, hyper, mode="train", rng=rng)
            breakdown = total_loss(
                trace,
                params,
                hyper,
                mode,
                labels=rec.annotations.keyframe_labels,
                sigma=config.sigma,
                weights=config.loss_weights,
            )
            if not np.isfinite(breakdown.total):
                raise NumericalError(
                    f"non-finite loss on video {rec.id!r} at epoch {epoch}"
                )
            grads = backward(
                trace,
                x,
                params,
                hyper,
                mode,
                labels=rec.annotations.keyframe_labels,
                sigma=config.sigma,
                weights=config.loss_weights,
            )
            if config.grad_clip is not None:
                grads, _ = clip_gradients(grads, config.grad_clip)
            params, state = adam_step(
                params, grads, state, lr, config.beta1, config.beta2, config.adam_eps
            )
            sums += [
                breakdown.variation,
                breakdown.keyframe,
                breakdown.length,
                breakdown.repelling,
                breakdown.weight_penalty,
                breakdown.total,
            ]
        means = sums / len(train_records)
        mean_loss = LossBreakdown(*means)
        score = validate(params, epoch) if validate is not None else None
        report.epochs.append(
            EpochStats(
                epoch=epoch,
                mean_loss=mean_loss,
                wall_seconds=time.perf_counter() - started,
                validation_score=score,
            )
        )
        if score is not None and config.early_stop_patience is not None:
            if score > best_score:
                best_score = score
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    return best_params, report
    if config.early_stop_patience is not None and best_score > -np.inf:
        return best_params, report
    return params, report


def save_checkpoint(
    params: ModelParams,
    path,
    hyper: HyperParams | None = None,
    dtype: str = "<f8",
    extra_header: dict | None = None,
) -> None:
    """Write params as a one-line JSON header plus raw binary payloads.

    The header records the format version, payload dtype, a name-to-shape
    table in payload order, and the hyperparameters when given; callers
    may attach extra provenance fields.  float64 payloads (the default)
    round-trip the in-memory values bit-exactly; "<f4" is accepted for
    compactness at reduced precision.
    """
    if dtype not in ("<f8", "<f4"):
        raise CheckpointError(f"unsupported payload dtype {dtype!r}")
    params.check_finite()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": dtype,
        "shapes": {name: list(arr.shape) for name, arr in params.items()},
    }
    if extra_header:
        reserved = set(header) | {"hyper"}
        clash = reserved & set(extra_header)
        if clash:
            raise CheckpointError(f"extra header fields clash with reserved keys: {sorted(clash)}")
        header.update(extra_header)
    if hyper is not None:
        header["hyper"] = {
            "hidden": hyper.hidden,
            "embed": hyper.embed,
            "dropout_rate": hyper.dropout_rate,
            "weight_decay": hyper.weight_decay,
            "beta": hyper.beta,
            "alpha_clip": hyper.alpha_clip,
        }
    blob = json.dumps(header).encode() + b"\n"
    np_dtype = np.dtype(dtype)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype=np_dtype).tobytes() for arr in params.arrays()
    )
    Path(path).write_bytes(blob + payload)


def load_checkpoint(path, expect_feature_dim: int | None = None):
    """Read a checkpoint; returns (ModelParams, HyperParams or None)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError("missing header line")
    try:
        header = json.loads(raw[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"format version {header.get('version')} != {CHECKPOINT_VERSION}"
        )
    dtype = header.get("dtype")
    if dtype not in ("<f8", "<f4"):
        raise CheckpointError(f"unsupported payload dtype {dtype!r}")
    shapes = header.get("shapes")
    expected_names = set(ModelParams.__dataclass_fields__)
    if not isinstance(shapes, dict) or set(shapes) != expected_names:
        raise CheckpointError("header shape table does not match the parameter set")

    np_dtype = np.dtype(dtype)
    payload = raw[newline + 1 :]
    expected_bytes = sum(
        int(np.prod(shape)) * np_dtype.itemsize for shape in shapes.values()
    )
    if len(payload) != expected_bytes:
        raise CheckpointError(
            f"payload is {len(payload)} bytes, header promises {expected_bytes}"
        )

    arrays = {}
    offset = 0
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        chunk = payload[offset : offset + count * np_dtype.itemsize]
        offset += count * np_dtype.itemsize
        arrays[name] = (
            np.frombuffer(chunk, dtype=np_dtype)
            .astype(np.float64)
            .reshape([int(s) for s in shape])
        )
    params = ModelParams(**arrays)
    params.check_finite()
    if expect_feature_dim is not None and params.dims[0] != expect_feature_dim:
        raise CheckpointError(
            f"checkpoint feature dim {params.dims[0]} != expected {expect_feature_dim}"
        )

    hyper = None
    if "hyper" in header:
        h = header["hyper"]
        hyper = HyperParams(
            hidden=int(h["hidden"]),
            embed=int(h["embed"]),
            dropout_rate=float(h["dropout_rate"]),
            weight_decay=float(h["weight_decay"]),
            beta=float(h["beta"]),
            alpha_clip=float(h["alpha_clip"]),
        )
    return params, hyper
