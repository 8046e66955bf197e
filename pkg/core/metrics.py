"""
Metrics module for PoseLift
Training losses with their gradients (MSE, L1, weighted MSE) and evaluation metrics in
millimeters (MPJPE, weighted MPJPE)
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .pose_data import DATA_DIR, load_skeleton

logger = logging.getLogger(__name__)

JOINT_WEIGHTS_FILE = DATA_DIR / "joint_weights.json"
RANK_WEIGHTS = (4.0, 3.0, 2.0, 1.0)

# (value, gradient w.r.t. pred)
LossResult = Tuple[float, np.ndarray]


class LossKind(str, Enum):
    MSE = "mse"
    L1 = "l1"
    WMSE = "wmse"


@dataclass(frozen=True, eq=False)
class JointWeights:
    """Positive importance weight per joint, in canonical joint order"""
    weights: np.ndarray
    joint_names: Tuple[str, ...]
    provenance: str = "default"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.size != len(self.joint_names):
            raise ConfigError(f"joint weights: {w.size} weights for {len(self.joint_names)} joints")
        bad = np.flatnonzero(~(np.isfinite(w) & (w > 0)))
        if bad.size:
            j = int(bad[0])
            raise ConfigError(f"joint weights: weight for {self.joint_names[j]} must be positive, got {w[j]}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))

    @property
    def num_joints(self) -> int:
        return self.weights.size

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def normalized(self) -> np.ndarray:
        """Weights divided by their mean; exactly ones when uniform"""
        if self.is_uniform:
            return np.ones_like(self.weights)
        return self.weights / self.weights.mean()

    def per_coordinate(self, dims: int = 3) -> np.ndarray:
        return np.repeat(self.normalized(), dims)

    def softened(self, alpha: float) -> "JointWeights":
        """w ** alpha: 0 flattens to uniform, 1 keeps the weights as they are"""
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"weight softening must be in [0, 1], got {alpha}")
        if alpha == 1.0:
            return self
        return JointWeights(self.weights ** alpha, self.joint_names, f"{self.provenance} (softened {alpha:g})")

    def as_dict(self) -> Dict[str, float]:
        return {name: float(w) for name, w in zip(self.joint_names, self.weights)}

    @classmethod
    def uniform(cls, joint_names: Optional[Sequence[str]] = None) -> "JointWeights":
        names = tuple(joint_names or load_skeleton().joint_names)
        return cls(np.ones(len(names)), names, "uniform")

    @classmethod
    def from_ranks(
        cls,
        rank_of_joint: Dict[str, int],
        rank_weights: Sequence[float] = RANK_WEIGHTS,
        joint_names: Optional[Sequence[str]] = None,
    ) -> "JointWeights":
        """Rank 1 is the most important joint group and gets rank_weights[0]"""
        names = tuple(joint_names or load_skeleton().joint_names)
        _check_names(set(rank_of_joint), names, "joint ranks")
        weights = []
        for name in names:
            rank = rank_of_joint[name]
            if not 1 <= rank <= len(rank_weights):
                raise ConfigError(f"joint ranks: {name} has rank {rank}, expected 1..{len(rank_weights)}")
            weights.append(rank_weights[rank - 1])
        return cls(np.array(weights, dtype=np.float64), names, "ranks")


def _check_names(given: set, names: Sequence[str], what: str):
    missing = [n for n in names if n not in given]
    extra = sorted(given - set(names))
    if missing:
        raise ConfigError(f"{what}: missing joints {missing}")
    if extra:
        raise ConfigError(f"{what}: unknown joints {extra}")


def load_joint_weights(path=None) -> JointWeights:
    """Read a JSON object mapping every canonical joint name to a positive weight"""
    path = Path(path) if path else JOINT_WEIGHTS_FILE
    if not path.exists():
        raise ConfigError(f"joint weight file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object of joint name -> weight")
    names = load_skeleton().joint_names
    _check_names(set(doc), names, str(path))
    values = []
    for name in names:
        v = doc[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}: weight for {name} is not a number: {v!r}")
        values.append(float(v))
    provenance = "default" if path == JOINT_WEIGHTS_FILE else str(path)
    return JointWeights(np.array(values), names, provenance)


def default_joint_weights() -> JointWeights:
    return load_joint_weights(JOINT_WEIGHTS_FILE)


def _check_pair(pred: np.ndarray, target: np.ndarray, what: str):
    if pred.shape != target.shape:
        raise ShapeError(f"{what}: prediction shape {pred.shape} != target shape {target.shape}")


def _squared_error(pred: np.ndarray, target: np.ndarray, coord_weights: Optional[np.ndarray] = None) -> LossResult:
    """Shared MSE/WMSE path: mean(w * d^2) and 2 * w * d / n"""
    d = pred - target
    wd = d if coord_weights is None else coord_weights * d
    n = d.size
    return float(np.mean(wd * d)), 2.0 * wd / n


def mse(pred: np.ndarray, target: np.ndarray) -> LossResult:
    _check_pair(pred, target, "mse")
    return _squared_error(pred, target)


def l1(pred: np.ndarray, target: np.ndarray) -> LossResult:
    _check_pair(pred, target, "l1")
    d = pred - target
    return float(np.mean(np.abs(d))), np.sign(d) / d.size


def wmse(pred: np.ndarray, target: np.ndarray, weights: JointWeights) -> LossResult:
    """sum_i sum_c w_i d^2 / (batch * 3 * sum_i w_i); uniform weights reduce to mse exactly"""
    _check_pair(pred, target, "wmse")
    if pred.ndim != 2 or pred.shape[1] != 3 * weights.num_joints:
        raise ShapeError(f"wmse: expected (batch, {3 * weights.num_joints}) for {weights.num_joints} weights, got {pred.shape}")
    if weights.is_uniform:
        return _squared_error(pred, target)
    return _squared_error(pred, target, weights.per_coordinate())


def loss_function(kind: LossKind, weights: Optional[JointWeights] = None) -> Callable[[np.ndarray, np.ndarray], LossResult]:
    kind = LossKind(kind)
    if kind is LossKind.MSE:
        return mse
    if kind is LossKind.L1:
        return l1
    if weights is None:
        raise ConfigError("wmse loss needs joint weights")
    return lambda pred, target: wmse(pred, target, weights)


def _as_joints(pose: np.ndarray, what: str) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.ndim == 2 and pose.shape[1] % 3 == 0:
        return pose.reshape(pose.shape[0], -1, 3)
    if pose.ndim == 3 and pose.shape[2] == 3:
        return pose
    raise ShapeError(f"{what}: expected (batch, joints, 3) or (batch, 3*joints), got {pose.shape}")


def per_joint_errors(pred3d: np.ndarray, gt3d: np.ndarray) -> np.ndarray:
    """(batch, joints) Euclidean distances"""
    pred, gt = _as_joints(pred3d, "prediction"), _as_joints(gt3d, "ground truth")
    _check_pair(pred, gt, "mpjpe")
    diff = pred - gt
    return np.sqrt(np.sum(diff * diff, axis=-1))


def mpjpe(pred3d: np.ndarray, gt3d: np.ndarray) -> float:
    """Mean per-joint position error over batch and joints, in the input units"""
    return float(np.mean(per_joint_errors(pred3d, gt3d)))


def weighted_mpjpe(pred3d: np.ndarray, gt3d: np.ndarray, weights: JointWeights) -> float:
    """Per sample sum_i w_i d_i / sum_i w_i, averaged over the batch"""
    dist = per_joint_errors(pred3d, gt3d)
    if dist.shape[1] != weights.num_joints:
        raise ShapeError(f"weighted_mpjpe: {dist.shape[1]} joints but {weights.num_joints} weights")
    if weights.is_uniform:
        return float(np.mean(dist))
    w = weights.weights
    return float(np.mean(dist @ w / w.sum()))
