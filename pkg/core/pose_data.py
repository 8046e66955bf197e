"""
Pose data module for PoseLift
Canonical skeleton, pose samples, normalization statistics, subject splits and pinhole projection
"""

import json
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DatasetError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
SKELETON_FILE = DATA_DIR / "skeleton.json"
BONE_MODEL_FILE = DATA_DIR / "bone_model.json"

ACTIONS: Tuple[str, ...] = (
    "Directions", "Discussion", "Eating", "Greeting", "Phoning",
    "Photo", "Posing", "Purchases", "Sitting", "SittingDown",
    "Smoking", "Waiting", "WalkDog", "Walking", "WalkTogether",
)

STD_FLOOR = 1e-8


def validate_action(name: str) -> str:
    if name not in ACTIONS:
        raise DatasetError(f"unknown action '{name}', expected one of {', '.join(ACTIONS)}")
    return name


@dataclass(frozen=True)
class SkeletonSpec:
    """Ordered joint names and the parent of each joint (-1 for the root)"""
    joint_names: Tuple[str, ...]
    parents: Tuple[int, ...]

    def __post_init__(self):
        if len(self.joint_names) != len(self.parents):
            raise DatasetError("skeleton: joint_names and parents differ in length")
        if len(set(self.joint_names)) != len(self.joint_names):
            raise DatasetError("skeleton: duplicate joint names")
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise DatasetError(f"skeleton: expected exactly one root, found {len(roots)}")
        for i in range(len(self.parents)):
            seen = set()
            j = i
            while j >= 0:
                if j in seen:
                    raise DatasetError(f"skeleton: cycle through joint {self.joint_names[i]}")
                seen.add(j)
                j = self.parents[j]

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def root(self) -> int:
        return self.parents.index(-1)

    @property
    def bones(self) -> List[Tuple[int, int]]:
        """(parent, child) pairs in joint order"""
        return [(p, c) for c, p in enumerate(self.parents) if p >= 0]

    def index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise DatasetError(f"unknown joint '{name}'") from None

    def side(self, joint: int) -> str:
        name = self.joint_names[joint]
        if re.match(r"^L[A-Z]", name):
            return "left"
        if re.match(r"^R[A-Z]", name):
            return "right"
        return "torso"

    def topological_order(self) -> List[int]:
        order: List[int] = []
        placed = set()
        while len(order) < self.num_joints:
            for j, p in enumerate(self.parents):
                if j not in placed and (p < 0 or p in placed):
                    order.append(j)
                    placed.add(j)
        return order


@lru_cache(maxsize=None)
def _load_skeleton_file(path: str) -> SkeletonSpec:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    names = tuple(j["name"] for j in doc["joints"])
    parents = tuple(-1 if j["parent"] is None else names.index(j["parent"]) for j in doc["joints"])
    return SkeletonSpec(joint_names=names, parents=parents)


def load_skeleton(path: Optional[str] = None) -> SkeletonSpec:
    return _load_skeleton_file(str(path or SKELETON_FILE))


@lru_cache(maxsize=None)
def load_bone_model(path: Optional[str] = None) -> Dict:
    with open(path or BONE_MODEL_FILE, encoding="utf-8") as f:
        return json.load(f)


@dataclass(frozen=True, eq=False)
class PosePair:
    """One sample: 2D pose in pixels, root-relative 3D pose in millimeters"""
    pose2d: np.ndarray
    pose3d: np.ndarray
    subject: str
    action: str
    frame: int

    def __post_init__(self):
        p2 = np.asarray(self.pose2d, dtype=np.float64)
        p3 = np.asarray(self.pose3d, dtype=np.float64)
        if p2.ndim != 2 or p2.shape[1] != 2:
            raise ShapeError(f"pose2d must be (joints, 2), got {p2.shape}")
        if p3.shape != (p2.shape[0], 3):
            raise ShapeError(f"pose3d must be ({p2.shape[0]}, 3), got {p3.shape}")
        if not (np.all(np.isfinite(p2)) and np.all(np.isfinite(p3))):
            raise NumericalError(f"{self.subject}/{self.action}/{self.frame}: non-finite coordinate")
        object.__setattr__(self, "pose2d", p2)
        object.__setattr__(self, "pose3d", p3)

    @property
    def num_joints(self) -> int:
        return self.pose2d.shape[0]


def stack_2d(data: Sequence[PosePair]) -> np.ndarray:
    """(N, 2J) row-major x, y per joint"""
    return np.stack([p.pose2d.reshape(-1) for p in data]) if data else np.zeros((0, 0))


def stack_3d(data: Sequence[PosePair]) -> np.ndarray:
    """(N, 3J) row-major x, y, z per joint"""
    return np.stack([p.pose3d.reshape(-1) for p in data]) if data else np.zeros((0, 0))


@dataclass
class NormStats:
    """Per-coordinate mean and std of the training split"""
    mean2d: np.ndarray
    std2d: np.ndarray
    mean3d: np.ndarray
    std3d: np.ndarray
    source: str = "train"
    floored2d: Tuple[int, ...] = field(default_factory=tuple)
    floored3d: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("mean2d", "std2d", "mean3d", "std3d"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        if self.mean2d.shape != self.std2d.shape or self.mean3d.shape != self.std3d.shape:
            raise ShapeError("norm stats: mean and std lengths differ")
        if np.any(self.std2d <= 0) or np.any(self.std3d <= 0):
            raise NumericalError("norm stats: std values must be positive")

    @property
    def num_joints(self) -> int:
        return self.mean2d.size // 2

    def for_width(self, width: int) -> Tuple[np.ndarray, np.ndarray]:
        if width == self.mean2d.size:
            return self.mean2d, self.std2d
        if width == self.mean3d.size:
            return self.mean3d, self.std3d
        raise ShapeError(f"no normalization statistics for width {width} (have {self.mean2d.size} and {self.mean3d.size})")

    def to_dict(self) -> Dict:
        return {
            "mean2d": self.mean2d.tolist(),
            "std2d": self.std2d.tolist(),
            "mean3d": self.mean3d.tolist(),
            "std3d": self.std3d.tolist(),
            "source": self.source,
            "floored2d": list(self.floored2d),
            "floored3d": list(self.floored3d),
        }

    @classmethod
    def from_dict(cls, doc: Dict) -> "NormStats":
        return cls(
            mean2d=np.array(doc["mean2d"], dtype=np.float64),
            std2d=np.array(doc["std2d"], dtype=np.float64),
            mean3d=np.array(doc["mean3d"], dtype=np.float64),
            std3d=np.array(doc["std3d"], dtype=np.float64),
            source=doc.get("source", "train"),
            floored2d=tuple(doc.get("floored2d", ())),
            floored3d=tuple(doc.get("floored3d", ())),
        )


def _mean_std(values: np.ndarray, std_floor: float) -> Tuple[np.ndarray, np.ndarray, Tuple[int, ...]]:
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    floored = tuple(int(i) for i in np.flatnonzero(std < std_floor))
    std = np.maximum(std, std_floor)
    return mean, std, floored


def compute_norm_stats(train: Sequence[PosePair], source: str = "train", std_floor: float = STD_FLOOR) -> NormStats:
    """Per-coordinate mean and population std over the training split only"""
    if len(train) < 2:
        raise DatasetError(f"normalization statistics need at least 2 samples, got {len(train)}")
    mean2d, std2d, floored2d = _mean_std(stack_2d(train), std_floor)
    mean3d, std3d, floored3d = _mean_std(stack_3d(train), std_floor)
    stats = NormStats(mean2d, std2d, mean3d, std3d, source=source, floored2d=floored2d, floored3d=floored3d)

    # the root is constant in root-relative 3D and in synthetic 2D
    skeleton = load_skeleton()
    root2d, root3d = set(), set()
    if train[0].num_joints == skeleton.num_joints:
        root2d = {2 * skeleton.root, 2 * skeleton.root + 1}
        root3d = set(range(3 * skeleton.root, 3 * skeleton.root + 3))
    unexpected = [i for i in floored2d if i not in root2d] + [i for i in floored3d if i not in root3d]
    message = f"std floored at {std_floor} for constant coordinates: 2D {list(floored2d)}, 3D {list(floored3d)}"
    if unexpected:
        logger.warning(message)
    elif floored2d or floored3d:
        logger.debug(message)
    logger.info(f"Computed normalization statistics from {len(train)} samples ({source})")
    return stats


def normalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """(x - mean) / std per coordinate; width selects the 2D or 3D statistics"""
    values = np.asarray(values, dtype=np.float64)
    mean, std = stats.for_width(values.shape[-1])
    return (values - mean) / std


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    mean, std = stats.for_width(values.shape[-1])
    return values * std + mean


def _subject_key(subject: str) -> Tuple[int, str]:
    m = re.search(r"(\d+)$", subject)
    return (int(m.group(1)) if m else 1 << 30, subject)


def default_subject_split(data: Sequence[PosePair], n_train: int = 5) -> Tuple[List[str], List[str]]:
    """First n_train subjects (by numeric suffix) train, the rest test"""
    subjects = sorted({p.subject for p in data}, key=_subject_key)
    return subjects[:n_train], subjects[n_train:]


def split_by_subject(
    data: Sequence[PosePair], train_subjects: Iterable[str], test_subjects: Iterable[str]
) -> Tuple[List[PosePair], List[PosePair]]:
    """Partition samples by subject id, preserving order"""
    train_set, test_set = set(train_subjects), set(test_subjects)
    overlap = train_set & test_set
    if overlap:
        raise DatasetError(f"train and test subjects overlap: {sorted(overlap)}")
    train = [p for p in data if p.subject in train_set]
    test = [p for p in data if p.subject in test_set]
    unassigned = len(data) - len(train) - len(test)
    if unassigned:
        logger.warning(f"{unassigned} samples belong to subjects in neither split and were left out")
    if not test:
        logger.warning(f"test split is empty: none of {sorted(test_set)} present in the data")
    logger.info(f"Split {len(data)} samples: {len(train)} train, {len(test)} test")
    return train, test


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera looking down +z; z_offset places the subject in front of it"""
    focal: float = 1145.0
    cx: float = 500.0
    cy: float = 500.0
    z_offset: float = 0.0

    def __post_init__(self):
        if not self.focal > 0:
            raise ConfigError(f"focal length must be positive, got {self.focal}")

    def to_camera(self, pose3d: np.ndarray) -> np.ndarray:
        return np.asarray(pose3d, dtype=np.float64) + np.array([0.0, 0.0, self.z_offset])


def project(pose3d: np.ndarray, cam: CameraModel, joint_names: Optional[Sequence[str]] = None) -> np.ndarray:
    """u = f X / Z + cx, v = f Y / Z + cy with Z = z + z_offset"""
    cam_pts = cam.to_camera(pose3d)
    if cam_pts.ndim != 2 or cam_pts.shape[1] != 3:
        raise ShapeError(f"project expects (joints, 3), got {cam_pts.shape}")
    z = cam_pts[:, 2]
    bad = np.flatnonzero(~(z > 0))
    if bad.size:
        j = int(bad[0])
        label = joint_names[j] if joint_names is not None else f"joint {j}"
        raise NumericalError(f"{label} has non-positive depth {z[j]} and cannot be projected")
    u = cam.focal * cam_pts[:, 0] / z + cam.cx
    v = cam.focal * cam_pts[:, 1] / z + cam.cy
    return np.stack([u, v], axis=1)
