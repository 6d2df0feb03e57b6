"""Evaluation metrics: ICP rigid alignment, Chamfer distance, MPJPE,
Joint2D error, MPVPE, and the text report table."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError


def _as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("empty or malformed point cloud")
    return pts


def chamfer(a, b, squared: bool = False) -> float:
    """Symmetric mean nearest-neighbor distance (meters; optionally squared)."""
    a, b = _as_cloud(a), _as_cloud(b)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    if squared:
        d_ab, d_ba = d_ab ** 2, d_ba ** 2
    return float(0.5 * d_ab.mean() + 0.5 * d_ba.mean())


def _rigid_fit(source: np.ndarray, target: np.ndarray):
    """Least-squares rotation + translation mapping source onto target
    (cross-covariance SVD, reflection-safe)."""
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    cov = (source - mu_s).T @ (target - mu_t)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, mu_t - rot @ mu_s


def icp_align(source, target, max_iter: int = 50, tol: float = 1e-8):
    """Iterative closest point: returns (R, t, rms) with R @ source + t ~ target.

    RMS over current correspondences is non-increasing per iteration; stops
    when the improvement drops below tol.
    """
    source, target = _as_cloud(source), _as_cloud(target)
    if len(source) < 3 or len(target) < 3:
        raise DegenerateGeometryError("need at least 3 points per cloud")
    if (np.linalg.matrix_rank(source - source.mean(axis=0), tol=1e-9) < 2
            or np.linalg.matrix_rank(target - target.mean(axis=0), tol=1e-9) < 2):
        raise DegenerateGeometryError("cloud is collinear or coincident")
    tree = cKDTree(target)
    rot = np.eye(3)
    trans = np.zeros(3)
    prev_rms = np.inf
    for _ in range(max_iter):
        moved = source @ rot.T + trans
        d, idx = tree.query(moved)
        rms = float(np.sqrt((d ** 2).mean()))
        if prev_rms - rms < tol:
            break
        prev_rms = rms
        rot, trans = _rigid_fit(source, target[idx])
    return rot, trans, prev_rms if np.isfinite(prev_rms) else rms


def apply_rigid(points, rot, trans) -> np.ndarray:
    return np.asarray(points, dtype=float) @ np.asarray(rot).T + np.asarray(trans)


def _paired_mean_norm(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"cardinality mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b, axis=-1).mean())


def mpjpe(joints_a, joints_b) -> float:
    """Mean per-joint 3D position error, meters (index-matched)."""
    return _paired_mean_norm(joints_a, joints_b)


def joint2d_error(px_a, px_b) -> float:
    """Mean 2D joint error in pixels (index-matched)."""
    return _paired_mean_norm(px_a, px_b)


def mpvpe(points_a, points_b) -> float:
    """Mean per-vertex error over corresponded surface samples, meters."""
    return _paired_mean_norm(points_a, points_b)


def format_report(rows: dict[str, dict[str, float]], title: str = "") -> str:
    """Fixed-layout table with the four metric columns."""
    cols = ["Chamfer", "Joint3D", "Joint2D", "MPVPE"]
    name_w = max([len(n) for n in rows] + [8])
    lines = []
    if title:
        lines.append(title)
    lines.append(" | ".join([" " * name_w] + [f"{c:>9}" for c in cols]))
    lines.append("-+-".join(["-" * name_w] + ["-" * 9 for _ in cols]))
    for name, vals in rows.items():
        cells = []
        for c in cols:
            v = vals.get(c)
            cells.append(f"{v:9.4f}" if v is not None else " " * 9)
        lines.append(" | ".join([f"{name:<{name_w}}"] + cells))
    return "\n".join(lines)
