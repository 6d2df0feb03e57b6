"""Pinhole camera: world <-> canvas pixel projection and ray generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProjectionError


@dataclass
class Camera:
    position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.9, -3.5]))
    look_at: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.9, 0.0]))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_y: float = np.deg2rad(40.0)
    size: tuple[int, int] = (512, 512)  # (width, height) pixels

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.look_at = np.asarray(self.look_at, dtype=float)
        self.up = np.asarray(self.up, dtype=float)
        if not (0.0 < self.fov_y < np.pi):
            raise ValueError("fov_y must lie in (0, pi)")
        if min(self.size) < 64:
            raise ValueError("canvas must be at least 64 px per side")

    @property
    def f_px(self) -> float:
        return (self.size[1] / 2.0) / np.tan(self.fov_y / 2.0)

    def basis(self):
        """(right, true_up, forward) unit vectors; canvas y runs downward."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        right = right / np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    def project(self, points: np.ndarray, strict: bool = True):
        """World points (n,3) -> pixel coords (n,2) and camera depth (n,).

        strict raises ProjectionError for points at or behind the camera
        plane; otherwise such points get non-finite pixels.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        right, true_up, fwd = self.basis()
        rel = pts - self.position
        x = rel @ right
        y = rel @ true_up
        z = rel @ fwd
        if strict and np.any(z <= 1e-9):
            raise ProjectionError("point behind camera")
        with np.errstate(divide="ignore", invalid="ignore"):
            px = self.size[0] / 2.0 + self.f_px * x / z
            py = self.size[1] / 2.0 - self.f_px * y / z
        bad = z <= 1e-9
        px[bad] = np.nan
        py[bad] = np.nan
        return np.stack([px, py], axis=1), z

    def rays_to(self, points: np.ndarray):
        """Unit rays from the eye toward world points; returns (dirs, distances)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - self.position
        dist = np.linalg.norm(d, axis=1)
        return d / dist[:, None], dist

    def pixel_rays(self, px: np.ndarray):
        """Unit world rays through pixel coordinates (n,2)."""
        px = np.atleast_2d(np.asarray(px, dtype=float))
        right, true_up, fwd = self.basis()
        x = (px[:, 0] - self.size[0] / 2.0) / self.f_px
        y = (self.size[1] / 2.0 - px[:, 1]) / self.f_px
        d = x[:, None] * right + y[:, None] * true_up + fwd
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "look_at": [float(v) for v in self.look_at],
            "up": [float(v) for v in self.up],
            "fov_y_deg": float(np.rad2deg(self.fov_y)),
            "size": [int(self.size[0]), int(self.size[1])],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(np.asarray(d["position"]), np.asarray(d["look_at"]),
                   np.asarray(d["up"]), np.deg2rad(d["fov_y_deg"]),
                   (int(d["size"][0]), int(d["size"][1])))
