"""
Trainer module for PoseLift
Adam with bias correction, staircase learning-rate decay, and the mini-batch training loop
with per-epoch evaluation and checkpointing
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError, DatasetError, DivergenceError, NumericalError, config_error
from .lifter_model import Lifter, save_checkpoint
from .metrics import JointWeights, LossKind, default_joint_weights, loss_function, mpjpe, weighted_mpjpe
from .nncore import LayerMode, Param, new_rng
from .pose_data import NormStats, PosePair, denormalize, normalize, stack_2d, stack_3d

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["epoch", "train_loss", "eval_mpjpe_mm", "eval_wmpjpe_mm", "lr", "seconds"]
EVAL_CHUNK = 8192


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(150, ge=1)
    batch_size: int = Field(64, ge=2)
    learning_rate: float = Field(1e-3, gt=0.0)
    decay_factor: float = Field(0.96, gt=0.0, le=1.0)
    decay_interval: int = Field(25000, ge=1)
    loss: LossKind = LossKind.MSE
    seed: int = 0
    shuffle: bool = True
    eval_every: int = Field(1, ge=1)
    max_grad_norm: Optional[float] = Field(None, gt=0.0)

    @classmethod
    def create(cls, **kwargs) -> "TrainConfig":
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise config_error(e, "training config") from None


@dataclass
class AdamState:
    """First and second moments keyed by parameter name"""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Param], state: AdamState, lr: float):
    """One in-place Adam update of every parameter from its accumulated gradient"""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient in parameter {p.name}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        if m.shape != p.value.shape:
            raise ConfigError(f"optimizer state for {p.name} has shape {m.shape}, parameter is {p.value.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (p.grad * p.grad)
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def lr_at(config: TrainConfig, global_step: int) -> float:
    """Staircase decay: lr * decay_factor ** floor(step / decay_interval)"""
    if global_step < 0:
        raise ConfigError(f"global_step must be non-negative, got {global_step}")
    return config.learning_rate * config.decay_factor ** (global_step // config.decay_interval)


def clip_grad_norm(params: Sequence[Param], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm; returns the norm before clipping"""
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return total


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_mpjpe_mm: float
    eval_wmpjpe_mm: float
    lr: float
    seconds: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=TRAIN_LOG_COLUMNS)

    def save_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def load_csv(cls, path) -> "TrainLog":
        df = pd.read_csv(path, float_precision="round_trip")
        return cls([EpochRecord(**{k: row[k] for k in TRAIN_LOG_COLUMNS}) for row in df.to_dict("records")])


def predict_mm(model: Lifter, poses2d: np.ndarray, stats: NormStats) -> np.ndarray:
    """Eval-mode inference on pixel poses, returned in millimeters"""
    x = normalize(poses2d, stats)
    out = [model.forward(x[s : s + EVAL_CHUNK], LayerMode.EVAL) for s in range(0, x.shape[0], EVAL_CHUNK)]
    return denormalize(np.vstack(out), stats)


class Trainer:
    """Runs epochs of shuffled mini-batch Adam on a Lifter"""

    def __init__(
        self,
        config: TrainConfig,
        weights: Optional[JointWeights] = None,
        checkpoint_path=None,
        meta: Optional[Dict[str, Any]] = None,
    ):
        self.config = config
        if config.loss is LossKind.WMSE and weights is None:
            weights = default_joint_weights()
        self.weights = weights
        self.eval_weights = weights or default_joint_weights()
        self.loss_fn = loss_function(config.loss, weights)
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.meta = dict(meta or {})
        self.rng = new_rng(config.seed)
        self.adam = AdamState()
        self.global_step = 0
        self.log = TrainLog()

    def _batches(self, n: int) -> List[np.ndarray]:
        order = self.rng.permutation(n) if self.config.shuffle else np.arange(n)
        bs = self.config.batch_size
        # BatchNorm needs at least two rows
        return [order[s : s + bs] for s in range(0, n, bs) if len(order[s : s + bs]) >= 2]

    def _checkpoint(self, model: Lifter, stats: NormStats, epoch: int):
        if self.checkpoint_path is None:
            return
        meta = {
            "epoch": epoch,
            "seed": model.seed,
            "train_seed": self.config.seed,
            "loss": self.config.loss.value,
            "joint_weights": self.weights.as_dict() if self.weights is not None else None,
            **self.meta,
        }
        save_checkpoint(model, self.checkpoint_path, stats, meta)

    def evaluate(self, model: Lifter, test_data: Sequence[PosePair], stats: NormStats) -> Tuple[float, float]:
        if not test_data:
            return float("nan"), float("nan")
        pred = predict_mm(model, stack_2d(test_data), stats)
        gt = stack_3d(test_data)
        return mpjpe(pred, gt), weighted_mpjpe(pred, gt, self.eval_weights)

    def train(
        self,
        model: Lifter,
        train_data: Sequence[PosePair],
        test_data: Sequence[PosePair],
        stats: NormStats,
    ) -> TrainLog:
        cfg = self.config
        n = len(train_data)
        if n == 0:
            raise DatasetError("training data is empty")
        if cfg.batch_size > n:
            raise ConfigError(f"batch_size {cfg.batch_size} exceeds the training set size {n}")
        if self.weights is not None and self.weights.num_joints != model.config.num_joints:
            raise ConfigError(f"{self.weights.num_joints} joint weights for a {model.config.num_joints}-joint model")

        x = normalize(stack_2d(train_data), stats)
        y = normalize(stack_3d(train_data), stats)
        params = model.parameters()
        self.log = log = TrainLog()
        logger.info(
            f"Training {model!r} on {n} samples for {cfg.epochs} epochs "
            f"(batch {cfg.batch_size}, lr {cfg.learning_rate:g}, loss {cfg.loss.value})"
        )

        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            model.set_mode(LayerMode.TRAIN)
            total, seen, lr = 0.0, 0, lr_at(cfg, self.global_step)
            for idx in self._batches(n):
                model.zero_grad()
                pred = model.forward(x[idx])
                value, grad = self.loss_fn(pred, y[idx])
                if not np.isfinite(value):
                    logger.error(f"Loss became non-finite at epoch {epoch}, step {self.global_step}")
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}, step {self.global_step}", epoch, self.global_step)
                model.backward(grad)
                if cfg.max_grad_norm is not None:
                    clip_grad_norm(params, cfg.max_grad_norm)
                lr = lr_at(cfg, self.global_step)
                try:
                    adam_step(params, self.adam, lr)
                except NumericalError as e:
                    logger.error(f"Divergence at epoch {epoch}, step {self.global_step}: {e}")
                    raise DivergenceError(str(e), epoch, self.global_step) from None
                self.global_step += 1
                total += value * len(idx)
                seen += len(idx)

            evaluate_now = epoch % cfg.eval_every == 0 or epoch == cfg.epochs
            eval_mm, eval_wmm = self.evaluate(model, test_data, stats) if evaluate_now else (float("nan"), float("nan"))
            record = EpochRecord(epoch, total / seen, eval_mm, eval_wmm, lr, time.perf_counter() - started)
            log.records.append(record)
            logger.info(
                f"epoch {epoch}/{cfg.epochs}: loss {record.train_loss:.6f}, "
                f"MPJPE {eval_mm:.2f} mm, weighted {eval_wmm:.2f} mm, lr {lr:.3g}, {record.seconds:.1f}s"
            )
            if evaluate_now:
                self._checkpoint(model, stats, epoch)

        model.set_mode(LayerMode.EVAL)
        return log


def train(
    model: Lifter,
    train_data: Sequence[PosePair],
    test_data: Sequence[PosePair],
    stats: NormStats,
    config: TrainConfig,
    weights: Optional[JointWeights] = None,
    checkpoint_path=None,
    meta: Optional[Dict[str, Any]] = None,
) -> Tuple[Lifter, TrainLog]:
    log = Trainer(config, weights, checkpoint_path, meta).train(model, train_data, test_data, stats)
    return model, log
