#!/usr/bin/env python3
"""
Dataset CSV reader/writer for PoseLift
One row per sample: subject, action, frame, then 2D pixels and 3D millimeters per joint
in canonical joint order
"""

import logging
import os
import re
import sys
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import DatasetError
from core.pose_data import ACTIONS, PosePair, load_skeleton

logger = logging.getLogger(__name__)

META_COLUMNS = ["subject", "action", "frame"]


def columns_2d(num_joints: int) -> List[str]:
    return [f"j{i}_{axis}2d" for i in range(num_joints) for axis in ("x", "y")]


def columns_3d(num_joints: int) -> List[str]:
    return [f"j{i}_{axis}3d" for i in range(num_joints) for axis in ("x", "y", "z")]


def dataset_columns(num_joints: int = None) -> List[str]:
    j = num_joints or load_skeleton().num_joints
    return META_COLUMNS + columns_2d(j) + columns_3d(j)


def _bad_row(values: np.ndarray, columns: Sequence[str]) -> str:
    """Locate the first cell float() rejects, for the error message"""
    for r, row in enumerate(values):
        for c, cell in enumerate(row):
            try:
                float(cell)
            except (TypeError, ValueError):
                return f"row {r + 1}: column {columns[c]} is not a number: '{cell}'"
    return "unparseable numeric value"


def load_dataset(path) -> List[PosePair]:
    """Parse and validate a dataset CSV; 3D poses are re-centred on the root joint"""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    skeleton = load_skeleton()
    expected = dataset_columns(skeleton.num_joints)

    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: file is empty, expected a header row") from None
    except pd.errors.ParserError as e:
        m = re.search(r"line (\d+), saw (\d+)", str(e))
        if m:
            raise DatasetError(
                f"{path}: row {int(m.group(1)) - 1}: expected {len(expected)} columns, found {m.group(2)}"
            ) from None
        raise DatasetError(f"{path}: {e}") from None

    if list(df.columns) != expected:
        if len(df.columns) != len(expected):
            raise DatasetError(f"{path}: header: expected {len(expected)} columns, found {len(df.columns)}")
        wrong = next(c for c, e in zip(df.columns, expected) if c != e)
        raise DatasetError(f"{path}: header: unexpected column '{wrong}'")

    if df.empty:
        logger.warning(f"{path}: dataset has a header but no rows")
        return []

    # short rows are padded with NaN by the parser
    missing = df.isna().sum(axis=1).to_numpy()
    if missing.any():
        r = int(np.flatnonzero(missing)[0])
        raise DatasetError(f"{path}: row {r + 1}: expected {len(expected)} columns, found {len(expected) - int(missing[r])}")

    coord_cols = expected[len(META_COLUMNS):]
    raw = df[coord_cols].to_numpy(dtype=object)
    try:
        coords = raw.astype(np.float64)
    except (TypeError, ValueError):
        raise DatasetError(f"{path}: {_bad_row(raw, coord_cols)}") from None

    finite = np.isfinite(coords)
    if not finite.all():
        r, c = (int(v) for v in np.argwhere(~finite)[0])
        raise DatasetError(f"{path}: row {r + 1}: non-finite value in column {coord_cols[c]}")

    unknown = ~df["action"].isin(ACTIONS)
    if unknown.any():
        r = int(np.flatnonzero(unknown.to_numpy())[0])
        raise DatasetError(f"{path}: row {r + 1}: unknown action '{df['action'].iloc[r]}'")

    try:
        frames = df["frame"].astype(int).to_numpy()
    except ValueError:
        bad = next(i for i, v in enumerate(df["frame"]) if not re.fullmatch(r"-?\d+", v.strip()))
        raise DatasetError(f"{path}: row {bad + 1}: frame is not an integer: '{df['frame'].iloc[bad]}'") from None

    j = skeleton.num_joints
    poses2d = coords[:, : 2 * j].reshape(-1, j, 2)
    poses3d = coords[:, 2 * j :].reshape(-1, j, 3)
    root = poses3d[:, skeleton.root : skeleton.root + 1, :]
    offset = np.any(root != 0.0, axis=(1, 2))
    if offset.any():
        poses3d = np.where(offset[:, None, None], poses3d - root, poses3d)
        logger.info(f"{path}: re-centred {int(offset.sum())} poses on the root joint")

    data = [
        PosePair(pose2d=poses2d[i], pose3d=poses3d[i], subject=s, action=a, frame=int(frames[i]))
        for i, (s, a) in enumerate(zip(df["subject"], df["action"]))
    ]
    logger.info(f"Loaded {len(data)} samples from {path}")
    return data


def save_dataset(data: Sequence[PosePair], path) -> Path:
    """Write samples with 17 significant digits so a reload is bit-identical"""
    path = Path(path)
    j = load_skeleton().num_joints
    for p in data:
        if p.num_joints != j:
            raise DatasetError(f"sample {p.subject}/{p.action}/{p.frame} has {p.num_joints} joints, expected {j}")

    meta = pd.DataFrame(
        {
            "subject": [p.subject for p in data],
            "action": [p.action for p in data],
            "frame": [int(p.frame) for p in data],
        }
    )
    if data:
        coords = np.hstack([np.stack([p.pose2d.reshape(-1) for p in data]), np.stack([p.pose3d.reshape(-1) for p in data])])
    else:
        coords = np.zeros((0, 5 * j))
    df = pd.concat([meta, pd.DataFrame(coords, columns=columns_2d(j) + columns_3d(j))], axis=1)

    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Saved {len(data)} samples to {path}")
    return path
