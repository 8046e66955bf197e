#!/usr/bin/env python3
"""
Synthetic pose generator for PoseLift
Samples articulated skeletons from the bone model, places them in front of a pinhole
camera and projects them to pixels
"""

import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import ConfigError
from core.nncore import new_rng
from core.pose_data import ACTIONS, CameraModel, PosePair, SkeletonSpec, load_bone_model, load_skeleton, project

logger = logging.getLogger(__name__)

NUM_SUBJECTS = 7
DEFAULT_CAMERA = CameraModel(focal=1145.0, cx=500.0, cy=500.0, z_offset=4500.0)


def rotation_xyz(angles_deg: np.ndarray) -> np.ndarray:
    """Rz @ Ry @ Rx for angles (about x, y, z) in degrees"""
    ax, ay, az = np.radians(angles_deg)
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def action_amplitude(action_index: int) -> float:
    """Fraction of each joint's range an action uses, in [0.5, 1]"""
    return 0.5 + 0.5 * ((action_index * 7) % len(ACTIONS)) / (len(ACTIONS) - 1)


class SyntheticPoseGenerator:
    """Forward kinematics over the skeleton tree with bounded joint angles"""

    def __init__(
        self,
        cam: Optional[CameraModel] = None,
        noise_std: float = 0.0,
        skeleton: Optional[SkeletonSpec] = None,
        bone_model: Optional[Dict] = None,
    ):
        if noise_std < 0 or not np.isfinite(noise_std):
            raise ConfigError(f"noise_std must be a finite non-negative number, got {noise_std}")
        self.cam = cam or DEFAULT_CAMERA
        self.noise_std = float(noise_std)
        self.skeleton = skeleton or load_skeleton()
        model = bone_model or load_bone_model()
        self.root_limits = np.array(model["root_limits_deg"], dtype=np.float64)
        self.order = [j for j in self.skeleton.topological_order() if j != self.skeleton.root]
        self.offsets: Dict[int, np.ndarray] = {}
        self.limits: Dict[int, np.ndarray] = {}
        for j in self.order:
            name = self.skeleton.joint_names[j]
            if name not in model["bones"]:
                raise ConfigError(f"bone model has no entry for joint {name}")
            bone = model["bones"][name]
            direction = np.array(bone["direction"], dtype=np.float64)
            direction /= np.linalg.norm(direction)
            self.offsets[j] = direction * float(bone["length"])
            self.limits[j] = np.array(bone["limits_deg"], dtype=np.float64)

    @staticmethod
    def _sample_angles(rng: np.random.Generator, limits: np.ndarray, amplitude: float) -> np.ndarray:
        centre = limits.mean(axis=1)
        half = (limits[:, 1] - limits[:, 0]) / 2.0
        return centre + amplitude * half * rng.uniform(-1.0, 1.0, size=3)

    def sample_pose3d(self, rng: np.random.Generator, action_index: int) -> np.ndarray:
        """Root-relative joint positions in millimeters"""
        amplitude = action_amplitude(action_index)
        j_count = self.skeleton.num_joints
        positions = np.zeros((j_count, 3))
        rotations = [np.eye(3)] * j_count
        rotations[self.skeleton.root] = rotation_xyz(self._sample_angles(rng, self.root_limits, amplitude))
        for j in self.order:
            parent = self.skeleton.parents[j]
            rotations[j] = rotations[parent] @ rotation_xyz(self._sample_angles(rng, self.limits[j], amplitude))
            positions[j] = positions[parent] + rotations[j] @ self.offsets[j]
        return positions

    def generate(self, n: int, seed: int) -> List[PosePair]:
        if n < 1:
            raise ConfigError(f"n must be at least 1, got {n}")
        rng = new_rng(seed)
        data = []
        for i in range(n):
            k = i % len(ACTIONS)
            pose3d = self.sample_pose3d(rng, k)
            pose2d = project(pose3d, self.cam, self.skeleton.joint_names)
            if self.noise_std > 0:
                pose2d = pose2d + rng.normal(0.0, self.noise_std, size=pose2d.shape)
            data.append(
                PosePair(pose2d=pose2d, pose3d=pose3d, subject=f"S{(i % NUM_SUBJECTS) + 1}", action=ACTIONS[k], frame=i)
            )
        logger.info(f"Generated {n} synthetic poses (seed {seed}, noise_std {self.noise_std})")
        return data


def synth_generate(n: int, seed: int, cam: Optional[CameraModel] = None, noise_std: float = 0.0) -> List[PosePair]:
    return SyntheticPoseGenerator(cam=cam, noise_std=noise_std).generate(n, seed)
