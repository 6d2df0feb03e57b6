"""Clean vector-sketch rendering of a primitive body.

Per primitive: spheres and the head ellipsoid contribute their exact
occluding-contour conic as one closed stroke; tapered cylinders contribute
two straight silhouette rulings plus their base and tip rim circles; the
head additionally carries a vertical and a horizontal face mark on its
forward side. Per-node occlusion flags come from analytic ray casting
against the whole body.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .errors import RenderViewpointError
from .primitives import (FACE_MARK, HEAD, LOWER_TORSO, UPPER_TORSO,
                         Primitive, PrimitiveBody)
from .skeleton import JOINT_INDEX, JOINTS, Pose, SkeletonTemplate, forward_kinematics

LINE_TYPES = ("silhouette", "contour", "crease", "border", "face_mark")

NODE_SPACING_PX = 4.0
MIN_CLOSED_NODES = 8
OCCLUSION_DEPTH_MARGIN = 1e-4  # meters


@dataclass
class Stroke:
    """One polyline with per-node canvas/world data and occlusion metadata."""

    points: np.ndarray                     # (n, 2) canvas px
    line_type: str
    part: str
    source_points: np.ndarray | None = None  # (n, 3) world, on the source primitive
    occluded: np.ndarray | None = None        # (n,) bool
    occlusion: float = 0.0                    # o_s = occluded / total
    hidden: bool = False
    source_index: int = -1                    # generating primitive, -1 if unknown

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.source_points is not None:
            self.source_points = np.asarray(self.source_points, dtype=float)
        if self.occluded is not None:
            self.occluded = np.asarray(self.occluded, dtype=bool)

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    def copy(self) -> "Stroke":
        return Stroke(self.points.copy(), self.line_type, self.part,
                      None if self.source_points is None else self.source_points.copy(),
                      None if self.occluded is None else self.occluded.copy(),
                      self.occlusion, self.hidden, self.source_index)

    def is_closed(self, tol: float = 1e-6) -> bool:
        return bool(np.linalg.norm(self.points[0] - self.points[-1]) < tol)


@dataclass
class VectorSketch:
    strokes: list[Stroke]
    size: tuple[int, int] = (512, 512)
    provenance: dict = field(default_factory=dict)

    def copy(self) -> "VectorSketch":
        return VectorSketch([s.copy() for s in self.strokes], self.size,
                            dict(self.provenance))

    def visible_strokes(self) -> list[Stroke]:
        return [s for s in self.strokes if not s.hidden]

    def parts(self) -> list[str]:
        return sorted({s.part for s in self.strokes})

    def validate(self) -> None:
        w, h = self.size
        for s in self.strokes:
            if s.n_nodes < 2:
                raise ValueError("stroke with fewer than 2 nodes")
            if s.line_type not in LINE_TYPES:
                raise ValueError(f"unknown line type {s.line_type!r}")
            if not np.all(np.isfinite(s.points)):
                raise ValueError("non-finite stroke points")
            if (np.any(s.points[:, 0] < -0.25 * w) or np.any(s.points[:, 0] > 1.25 * w)
                    or np.any(s.points[:, 1] < -0.25 * h) or np.any(s.points[:, 1] > 1.25 * h)):
                raise ValueError("stroke far outside canvas")


def polyline_length(points: np.ndarray) -> float:
    d = np.diff(np.asarray(points, dtype=float), axis=0)
    return float(np.linalg.norm(d, axis=1).sum())


# -- contour curve generation -------------------------------------------------


def _circle_basis(axis: np.ndarray):
    axis = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    a = ref - np.dot(ref, axis) * axis
    a /= np.linalg.norm(a)
    return a, np.cross(axis, a)


def _sphere_contour(center, radius, eye):
    w = center - eye
    d = np.linalg.norm(w)
    if d <= radius * (1.0 + 1e-9):
        return None
    what = w / d
    ccenter = center - (radius ** 2 / d) * what
    crad = radius * np.sqrt(d * d - radius * radius) / d
    a, b = _circle_basis(what)
    return lambda phi: (ccenter[None, :] + crad * (np.cos(phi)[:, None] * a
                                                   + np.sin(phi)[:, None] * b))


def _ellipsoid_contour(prim: Primitive, eye):
    s = prim.semi_axes
    e = prim.to_local(eye)[0] / s
    m2 = float(np.dot(e, e))
    if m2 <= 1.0 + 1e-9:
        return None
    k = e / m2
    rho = np.sqrt(1.0 - 1.0 / m2)
    a, b = _circle_basis(e)

    def curve(phi):
        x = k[None, :] + rho * (np.cos(phi)[:, None] * a + np.sin(phi)[:, None] * b)
        return prim.to_world(x * s)

    return curve


def _densify_closed(curve, camera: Camera, spacing: float = NODE_SPACING_PX):
    coarse = curve(np.linspace(0.0, 2.0 * np.pi, 33))
    px, _ = camera.project(coarse, strict=True)
    perim = polyline_length(px)
    n = max(MIN_CLOSED_NODES, int(round(perim / spacing)))
    phi = np.linspace(0.0, 2.0 * np.pi, n + 1)  # endpoint repeats node 0
    return curve(phi)


def _densify_segment(p0, p1, camera: Camera, spacing: float = NODE_SPACING_PX):
    px, _ = camera.project(np.stack([p0, p1]), strict=True)
    n = max(2, int(round(np.linalg.norm(px[1] - px[0]) / spacing)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0[None, :] * (1.0 - t) + p1[None, :] * t


def _cylinder_curves(prim: Primitive, eye):
    """Silhouette rulings and rim circles of a cone frustum, world space."""
    o = prim.to_local(eye)[0]
    r0, r1, length = prim.r_base, prim.r_tip, prim.length
    k = (r1 - r0) / length
    big_w = np.hypot(o[0], o[1])
    h = r0 + k * o[2]
    rulings = []
    if big_w > 1e-12 and abs(h) <= big_w:
        phi0 = np.arctan2(o[1], o[0])
        delta = np.arccos(np.clip(h / big_w, -1.0, 1.0))
        for phi in (phi0 + delta, phi0 - delta):
            c, s = np.cos(phi), np.sin(phi)
            p0 = prim.to_world(np.array([[r0 * c, r0 * s, 0.0]]))[0]
            p1 = prim.to_world(np.array([[r1 * c, r1 * s, length]]))[0]
            rulings.append((p0, p1))

    def rim(r_end, z_end):
        def curve(phi):
            local = np.stack([r_end * np.cos(phi), r_end * np.sin(phi),
                              np.full(len(phi), z_end)], axis=1)
            return prim.to_world(local)
        return curve

    return rulings, rim(r0, 0.0), rim(r1, length)


def _face_mark_curves(prim: Primitive):
    """Horizontal eye line and vertical nose line on the head's -z side."""
    a, b, c = prim.semi_axes
    y_eye = 0.10 * b

    def eye_line(t):  # t in [0, 1]
        x = (t * 0.9 - 0.45) * a
        z = -c * np.sqrt(np.maximum(0.0, 1.0 - (x / a) ** 2 - (y_eye / b) ** 2))
        return prim.to_world(np.stack([x, np.full(len(t), y_eye), z], axis=1))

    def nose_line(t):
        y = (t * 0.7 - 0.35) * b
        z = -c * np.sqrt(np.maximum(0.0, 1.0 - (y / b) ** 2))
        return prim.to_world(np.stack([np.zeros(len(t)), y, z], axis=1))

    return eye_line, nose_line


def _densify_param(curve, camera: Camera, spacing: float = NODE_SPACING_PX):
    coarse = curve(np.linspace(0.0, 1.0, 17))
    px, _ = camera.project(coarse, strict=True)
    n = max(2, int(round(polyline_length(px) / spacing)) + 1)
    return curve(np.linspace(0.0, 1.0, n))


# -- occlusion ----------------------------------------------------------------


def _camera_inside(body: PrimitiveBody, eye: np.ndarray) -> bool:
    for p in body.primitives:
        q = p.to_local(eye)[0]
        if p.kind == "sphere" and np.linalg.norm(q) < p.radius:
            return True
        if p.kind == "ellipsoid" and np.linalg.norm(q / p.semi_axes) < 1.0:
            return True
        if p.kind == "tapered_cylinder":
            if 0.0 <= q[2] <= p.length:
                r = p.r_base + (p.r_tip - p.r_base) * q[2] / p.length
                if np.hypot(q[0], q[1]) < r:
                    return True
    return False


def _occlusion_flags(nodes: np.ndarray, own_index: np.ndarray,
                     body: PrimitiveBody, camera: Camera) -> np.ndarray:
    """occluded iff a structurally non-adjacent primitive intersects the
    camera ray strictly before the node (adjacent parts interpenetrate at
    joints, which is assembly overlap rather than occlusion)."""
    dirs, dist = camera.rays_to(nodes)
    origins = np.broadcast_to(camera.position, dirs.shape)
    tm = body.ray_intersections(origins, dirs)  # (P, N)
    closer = tm < (dist[None, :] - OCCLUSION_DEPTH_MARGIN)
    closer &= ~body.adjacency()[:, own_index]
    return np.any(closer, axis=0)


def occlusion_rating(stroke: Stroke, body: PrimitiveBody, camera: Camera) -> float:
    """Fraction of a stroke's nodes hidden behind other primitives."""
    if stroke.source_points is None:
        raise ValueError("stroke carries no source 3D points")
    own = stroke.source_index
    if own < 0:
        label = HEAD if stroke.part == FACE_MARK else stroke.part
        own = body.index_of(label)
    flags = _occlusion_flags(stroke.source_points, np.full(stroke.n_nodes, own),
                             body, camera)
    return float(flags.mean())


# -- rendering ---------------------------------------------------------------


def render_sketch(body: PrimitiveBody, camera: Camera) -> VectorSketch:
    eye = camera.position
    try:
        camera.project(body.center(), strict=True)
    except Exception as exc:
        raise RenderViewpointError("camera cannot see the body center") from exc
    if _camera_inside(body, eye):
        raise RenderViewpointError("camera is inside the body")

    strokes: list[Stroke] = []

    def add(world_pts, line_type, part, src_idx):
        px, _ = camera.project(world_pts, strict=True)
        strokes.append(Stroke(px, line_type, part, source_points=world_pts,
                              source_index=src_idx))

    for i, prim in enumerate(body.primitives):
        if prim.kind == "sphere":
            curve = _sphere_contour(prim.position, prim.radius, eye)
            if curve is not None:
                add(_densify_closed(curve, camera), "contour", prim.label, i)
        elif prim.kind == "ellipsoid":
            curve = _ellipsoid_contour(prim, eye)
            if curve is not None:
                add(_densify_closed(curve, camera), "contour", prim.label, i)
            if prim.label == HEAD:
                for mark in _face_mark_curves(prim):
                    add(_densify_param(mark, camera), "face_mark", FACE_MARK, i)
        else:
            rulings, base_rim, tip_rim = _cylinder_curves(prim, eye)
            for p0, p1 in rulings:
                add(_densify_segment(p0, p1, camera), "silhouette", prim.label, i)
            torso = prim.label in (UPPER_TORSO, LOWER_TORSO)
            add(_densify_closed(base_rim, camera), "border", prim.label, i)
            # both torso pieces meet at spine_mid: that shared rim is the crease
            add(_densify_closed(tip_rim, camera),
                "crease" if torso else "border", prim.label, i)

    all_nodes = np.concatenate([s.source_points for s in strokes])
    owners = np.concatenate([np.full(s.n_nodes, s.source_index) for s in strokes])
    flags = _occlusion_flags(all_nodes, owners, body, camera)
    at = 0
    for s in strokes:
        s.occluded = flags[at:at + s.n_nodes]
        s.occlusion = float(s.occluded.mean())
        at += s.n_nodes

    sketch = VectorSketch(strokes, camera.size,
                          provenance={"camera": camera.to_dict()})
    sketch.validate()
    return sketch


def ray_cast(origin: np.ndarray, direction: np.ndarray, body: PrimitiveBody):
    """Nearest positive hit of one ray: (distance, primitive_index) or None."""
    direction = np.asarray(direction, dtype=float)
    t, idx = body.ray_cast(np.atleast_2d(origin), np.atleast_2d(direction))
    if idx[0] < 0:
        return None
    return float(t[0]), int(idx[0])


def render_silhouette(body: PrimitiveBody, camera: Camera, resolution: int) -> np.ndarray:
    """Boolean mask over the camera canvas: pixel rays that hit any primitive."""
    if resolution < 64:
        raise ValueError("resolution must be >= 64")
    w, h = camera.size
    res_h = int(resolution)
    res_w = int(round(resolution * w / h))
    jj, ii = np.meshgrid(np.arange(res_w), np.arange(res_h))
    px = np.stack([(jj.ravel() + 0.5) * (w / res_w),
                   (ii.ravel() + 0.5) * (h / res_h)], axis=1)
    dirs = camera.pixel_rays(px)
    origins = np.broadcast_to(camera.position, dirs.shape)
    if not body.primitives:
        return np.zeros((res_h, res_w), dtype=bool)
    t, _ = body.ray_cast(origins, dirs)
    return np.isfinite(t).reshape(res_h, res_w)


def project_joints(template: SkeletonTemplate, pose: Pose, camera: Camera) -> np.ndarray:
    """(J, 2) pixel positions of all joints, indexed like JOINTS."""
    px, _ = camera.project(forward_kinematics(template, pose), strict=True)
    return px


def joint_visibility(body: PrimitiveBody, camera: Camera) -> np.ndarray:
    """(J,) bool: the first surface hit toward each joint belongs to a
    primitive attached to that joint (the joint's body part is what you see)."""
    dirs, dist = camera.rays_to(body.joint_world)
    origins = np.broadcast_to(camera.position, dirs.shape)
    t, idx = body.ray_cast(origins, dirs)
    vis = np.zeros(len(JOINTS), dtype=bool)
    for n, j in enumerate(JOINTS):
        vis[n] = idx[n] >= 0 and j in body.adjacent_joints(int(idx[n]))
    return vis


def strip_occluded(sketch: VectorSketch, max_occlusion: float = 0.3) -> VectorSketch:
    """Keep only strokes with occlusion rating below the threshold."""
    kept = [s.copy() for s in sketch.strokes if s.occlusion < max_occlusion]
    return VectorSketch(kept, sketch.size, dict(sketch.provenance))
