"""
Visualization module for PoseLift
SVG skeleton drawings: 2D poses, 3D poses under a fixed orthographic view, and the
three-panel ground-truth / prediction layout
"""

import logging
from typing import List, Optional, Tuple
from xml.sax.saxutils import escape

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import NumericalError, ShapeError
from .pose_data import SkeletonSpec, load_skeleton

logger = logging.getLogger(__name__)

TRIPTYCH_TITLES = ("2D Pose Ground Truth", "3D Pose Ground Truth", "Predicted 3D Pose")
TITLE_HEIGHT = 24


class RenderStyle(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = Field(360, gt=0)
    height: int = Field(360, gt=0)
    background: str = "#ffffff"
    left_color: str = "#1f77b4"
    right_color: str = "#d62728"
    torso_color: str = "#444444"
    joint_color: str = "#111111"
    joint_radius: float = Field(3.0, ge=0.0)
    stroke_width: float = Field(2.5, gt=0.0)
    azimuth: float = 70.0
    elevation: float = 15.0
    margin: float = Field(0.05, ge=0.0, lt=0.5)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _attr(value) -> str:
    return escape(str(value), {'"': "&quot;"})


def _rot_x(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(deg: float) -> np.ndarray:
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotate_about_vertical(pose3d: np.ndarray, degrees: float) -> np.ndarray:
    """Turn a pose about the camera's vertical (y) axis"""
    return np.asarray(pose3d, dtype=np.float64) @ _rot_y(degrees).T


def project_orthographic(pose3d: np.ndarray, azimuth: float, elevation: float) -> np.ndarray:
    """Rotate by -azimuth about y, then elevation about x, and drop depth"""
    view = _rot_x(elevation) @ _rot_y(-azimuth)
    return (np.asarray(pose3d, dtype=np.float64) @ view.T)[:, :2]


def _check(pose: np.ndarray, dims: int, skeleton: SkeletonSpec) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (skeleton.num_joints, dims):
        raise ShapeError(f"expected a ({skeleton.num_joints}, {dims}) pose, got {pose.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(pose), axis=1))
    if bad.size:
        raise NumericalError(f"joint {skeleton.joint_names[int(bad[0])]} has a non-finite coordinate")
    return pose


def fit_to_canvas(points: np.ndarray, style: RenderStyle) -> np.ndarray:
    """Uniform scale and centre into the canvas minus the margin and the joint marker size;
    coincident points get scale 1"""
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = float(np.max(hi - lo))
    pad = max(style.joint_radius, style.stroke_width / 2.0)
    usable = max(min(style.width, style.height) * (1.0 - 2.0 * style.margin) - 2.0 * pad, 0.0)
    scale = usable / extent if extent > 1e-12 else 1.0
    centre = (lo + hi) / 2.0
    return (points - centre) * scale + np.array([style.width / 2.0, style.height / 2.0])


def _skeleton_elements(canvas_pts: np.ndarray, style: RenderStyle, skeleton: SkeletonSpec) -> List[str]:
    colors = {"left": style.left_color, "right": style.right_color, "torso": style.torso_color}
    out = []
    for parent, child in skeleton.bones:
        (x1, y1), (x2, y2) = canvas_pts[parent], canvas_pts[child]
        out.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{_attr(colors[skeleton.side(child)])}" stroke-width="{style.stroke_width:g}" stroke-linecap="round"/>'
        )
    for x, y in canvas_pts:
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{style.joint_radius:g}" fill="{_attr(style.joint_color)}"/>')
    return out


def _document(width: int, height: int, background: str, body: List[str]) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="{_attr(background)}"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _panel_points(pose: np.ndarray, is_3d: bool, style: RenderStyle, skeleton: SkeletonSpec) -> np.ndarray:
    if is_3d:
        pts = project_orthographic(_check(pose, 3, skeleton), style.azimuth, style.elevation)
    else:
        pts = _check(pose, 2, skeleton)
    return fit_to_canvas(pts, style)


def render_pose2d(pose: np.ndarray, style: Optional[RenderStyle] = None, skeleton: Optional[SkeletonSpec] = None) -> str:
    style = style or RenderStyle()
    skeleton = skeleton or load_skeleton()
    pts = _panel_points(pose, False, style, skeleton)
    return _document(style.width, style.height, style.background, _skeleton_elements(pts, style, skeleton))


def render_pose3d(pose: np.ndarray, style: Optional[RenderStyle] = None, skeleton: Optional[SkeletonSpec] = None) -> str:
    style = style or RenderStyle()
    skeleton = skeleton or load_skeleton()
    pts = _panel_points(pose, True, style, skeleton)
    return _document(style.width, style.height, style.background, _skeleton_elements(pts, style, skeleton))


def render_triptych(
    pose2d_gt: np.ndarray,
    pose3d_gt: np.ndarray,
    pose3d_pred: np.ndarray,
    style: Optional[RenderStyle] = None,
    skeleton: Optional[SkeletonSpec] = None,
    titles: Tuple[str, str, str] = TRIPTYCH_TITLES,
) -> str:
    """2D ground truth, 3D ground truth and 3D prediction side by side, left to right"""
    style = style or RenderStyle()
    skeleton = skeleton or load_skeleton()
    panels = [(pose2d_gt, False), (pose3d_gt, True), (pose3d_pred, True)]
    body = []
    for i, ((pose, is_3d), title) in enumerate(zip(panels, titles)):
        pts = _panel_points(pose, is_3d, style, skeleton)
        body.append(f'<g transform="translate({i * style.width},{TITLE_HEIGHT})">')
        body.append(
            f'<text x="{_fmt(style.width / 2.0)}" y="-8" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{escape(title)}</text>'
        )
        body.extend(_skeleton_elements(pts, style, skeleton))
        body.append("</g>")
    return _document(3 * style.width, style.height + TITLE_HEIGHT, style.background, body)
