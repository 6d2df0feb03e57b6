"""Primitive mannequin body: fitting to a posed skeleton, surface sampling,
and analytic ray intersection for spheres, ellipsoids, and cone frustums.

The body is one head ellipsoid, two tapered torso cylinders, eight tapered
limb cylinders whose axes span joint pairs, and twelve joint spheres.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePrimitiveError
from .skeleton import (JOINT_INDEX, Joint, Pose, SkeletonTemplate,
                       forward_kinematics_full)

# part labels (strings so they serialize directly into SVG attributes)
HEAD = "head"
NECK = "neck"
UPPER_TORSO = "upper_torso"
LOWER_TORSO = "lower_torso"
FACE_MARK = "face_mark"

LIMB_SEGMENTS: dict[str, tuple[Joint, Joint, float, float]] = {
    "l_upper_arm": (Joint.L_SHOULDER, Joint.L_ELBOW, 0.050, 0.040),
    "l_forearm":   (Joint.L_ELBOW,    Joint.L_WRIST, 0.040, 0.030),
    "r_upper_arm": (Joint.R_SHOULDER, Joint.R_ELBOW, 0.050, 0.040),
    "r_forearm":   (Joint.R_ELBOW,    Joint.R_WRIST, 0.040, 0.030),
    "l_thigh":     (Joint.L_HIP,      Joint.L_KNEE,  0.080, 0.060),
    "l_shin":      (Joint.L_KNEE,     Joint.L_ANKLE, 0.060, 0.045),
    "r_thigh":     (Joint.R_HIP,      Joint.R_KNEE,  0.080, 0.060),
    "r_shin":      (Joint.R_KNEE,     Joint.R_ANKLE, 0.060, 0.045),
}

WAIST_RADIUS = 0.08          # shared rim where the two torso pieces meet
HEAD_EAR_SEMI_AXIS = 0.075   # half the ear-to-ear width
HEAD_DEPTH_SEMI_AXIS = 0.095
JOINT_SPHERE_SCALE = 1.1     # sphere radius over adjoining cylinder radius

# joint -> radius of the rendered joint sphere
SPHERE_JOINTS: dict[Joint, float] = {
    Joint.L_SHOULDER: JOINT_SPHERE_SCALE * 0.050,
    Joint.R_SHOULDER: JOINT_SPHERE_SCALE * 0.050,
    Joint.L_ELBOW: JOINT_SPHERE_SCALE * 0.040,
    Joint.R_ELBOW: JOINT_SPHERE_SCALE * 0.040,
    Joint.L_WRIST: JOINT_SPHERE_SCALE * 0.030,
    Joint.R_WRIST: JOINT_SPHERE_SCALE * 0.030,
    Joint.L_HIP: JOINT_SPHERE_SCALE * 0.080,
    Joint.R_HIP: JOINT_SPHERE_SCALE * 0.080,
    Joint.L_KNEE: JOINT_SPHERE_SCALE * 0.060,
    Joint.R_KNEE: JOINT_SPHERE_SCALE * 0.060,
    Joint.L_ANKLE: JOINT_SPHERE_SCALE * 0.045,
    Joint.R_ANKLE: JOINT_SPHERE_SCALE * 0.045,
}


def joint_sphere_label(joint: Joint) -> str:
    return f"joint_sphere:{joint.value}"


def parse_joint_sphere(label: str) -> Joint | None:
    if label.startswith("joint_sphere:"):
        return Joint(label.split(":", 1)[1])
    return None


PART_LABELS = ([HEAD, NECK, UPPER_TORSO, LOWER_TORSO, FACE_MARK]
               + list(LIMB_SEGMENTS)
               + [joint_sphere_label(j) for j in SPHERE_JOINTS])


def _orthobasis(z: np.ndarray) -> np.ndarray:
    """3x3 rotation whose third column is z (deterministic choice)."""
    z = z / np.linalg.norm(z)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = ref - np.dot(ref, z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


@dataclass
class Primitive:
    """One body primitive in a world frame.

    kind: "sphere" (radius), "ellipsoid" (semi_axes), or
    "tapered_cylinder" (r_base >= r_tip, length along local +z from position).
    """

    kind: str
    position: np.ndarray             # sphere/ellipsoid: center; cylinder: base center
    rotation: np.ndarray             # (3,3) columns = local axes in world
    label: str
    radius: float = 0.0
    semi_axes: np.ndarray | None = None
    r_base: float = 0.0
    r_tip: float = 0.0
    length: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        if self.semi_axes is not None:
            self.semi_axes = np.asarray(self.semi_axes, dtype=float)
        dims = ([self.radius] if self.kind == "sphere"
                else list(self.semi_axes) if self.kind == "ellipsoid"
                else [self.r_base, self.r_tip, self.length])
        if any(d <= 0 for d in dims):
            raise DegeneratePrimitiveError(f"{self.kind} '{self.label}' has "
                                           f"non-positive dimension {dims}")
        if self.kind == "tapered_cylinder" and self.r_base < self.r_tip:
            raise DegeneratePrimitiveError(f"cylinder '{self.label}' base radius "
                                           f"< tip radius")

    # -- frame helpers -------------------------------------------------------

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.position) @ self.rotation

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.rotation.T + self.position

    @property
    def axis_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        assert self.kind == "tapered_cylinder"
        return self.position, self.position + self.rotation[:, 2] * self.length

    # -- measure -------------------------------------------------------------

    def surface_area(self) -> float:
        if self.kind == "sphere":
            return 4.0 * np.pi * self.radius ** 2
        if self.kind == "ellipsoid":
            a, b, c = self.semi_axes
            p = 1.6075  # Thomsen approximation, <1.1% error
            return 4.0 * np.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)
        slant = np.hypot(self.length, self.r_base - self.r_tip)
        lateral = np.pi * (self.r_base + self.r_tip) * slant
        return lateral + np.pi * (self.r_base ** 2 + self.r_tip ** 2)

    def surface_residual(self, points: np.ndarray) -> np.ndarray:
        """Approximate metric distance to the surface (exact at 0)."""
        q = self.to_local(points)
        if self.kind == "sphere":
            return np.abs(np.linalg.norm(q, axis=1) - self.radius)
        if self.kind == "ellipsoid":
            s = self.semi_axes
            u = q / s
            f = np.linalg.norm(u, axis=1) - 1.0
            grad = np.linalg.norm(u / (np.linalg.norm(u, axis=1, keepdims=True) + 1e-300) / s, axis=1)
            return np.abs(f) / np.maximum(grad, 1e-12)
        r0, r1, L = self.r_base, self.r_tip, self.length
        rad = np.hypot(q[:, 0], q[:, 1])
        z = q[:, 2]
        cos_a = L / np.hypot(L, r0 - r1)
        lateral = np.abs(rad - (r0 + (r1 - r0) * np.clip(z, 0, L) / L)) * cos_a
        res = lateral.copy()
        on_base = rad <= r0
        res[on_base] = np.minimum(res[on_base], np.abs(z[on_base]))
        on_tip = rad <= r1
        res[on_tip] = np.minimum(res[on_tip], np.abs(z[on_tip] - L))
        return res

    # -- surface sampling ------------------------------------------------------

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "sphere":
            u = rng.normal(size=(n, 3))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            return self.to_world(u * self.radius)
        if self.kind == "ellipsoid":
            a, b, c = self.semi_axes
            m_max = max(a * b, a * c, b * c)
            out = np.empty((n, 3))
            got = 0
            while got < n:
                u = rng.normal(size=(max(2 * (n - got), 16), 3))
                u /= np.linalg.norm(u, axis=1, keepdims=True)
                m = np.sqrt((b * c * u[:, 0]) ** 2 + (a * c * u[:, 1]) ** 2
                            + (a * b * u[:, 2]) ** 2)
                keep = rng.random(len(u)) < m / m_max
                u = u[keep][:n - got]
                out[got:got + len(u)] = u * self.semi_axes
                got += len(u)
            return self.to_world(out)
        return self.to_world(self._sample_frustum(n, rng))

    def _sample_frustum(self, n: int, rng: np.random.Generator) -> np.ndarray:
        r0, r1, L = self.r_base, self.r_tip, self.length
        slant = np.hypot(L, r0 - r1)
        areas = np.array([np.pi * (r0 + r1) * slant, np.pi * r0 ** 2, np.pi * r1 ** 2])
        which = rng.choice(3, size=n, p=areas / areas.sum())
        pts = np.empty((n, 3))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        u = rng.random(n)
        lat = which == 0
        # lateral density along z is proportional to r(z); invert its CDF
        if np.any(lat):
            if abs(r1 - r0) < 1e-12:
                z = u[lat] * L
            else:
                z = L * (np.sqrt(r0 ** 2 + u[lat] * (r1 ** 2 - r0 ** 2)) - r0) / (r1 - r0)
            r = r0 + (r1 - r0) * z / L
            pts[lat] = np.stack([r * np.cos(phi[lat]), r * np.sin(phi[lat]), z], axis=1)
        for idx, (r_end, z_end) in ((1, (r0, 0.0)), (2, (r1, L))):
            m = which == idx
            if np.any(m):
                r = r_end * np.sqrt(u[m])
                pts[m] = np.stack([r * np.cos(phi[m]), r * np.sin(phi[m]),
                                   np.full(m.sum(), z_end)], axis=1)
        return pts

    # -- ray intersection --------------------------------------------------------

    def ray_intersect(self, origins: np.ndarray, dirs: np.ndarray,
                      eps: float = 1e-9) -> np.ndarray:
        """Smallest positive ray parameter per ray, +inf on miss."""
        o = self.to_local(origins)
        d = np.atleast_2d(dirs) @ self.rotation
        if self.kind == "sphere":
            return _quadric_sphere(o, d, self.radius, eps)
        if self.kind == "ellipsoid":
            return _quadric_sphere(o / self.semi_axes, d / self.semi_axes, 1.0, eps)
        return _ray_frustum(o, d, self.r_base, self.r_tip, self.length, eps)


def _quadric_sphere(o, d, radius, eps):
    a = np.einsum("ij,ij->i", d, d)
    b = np.einsum("ij,ij->i", o, d)
    c = np.einsum("ij,ij->i", o, o) - radius ** 2
    disc = b * b - a * c
    t = np.full(len(o), np.inf)
    hit = disc >= 0
    if np.any(hit):
        sq = np.sqrt(disc[hit])
        t0 = (-b[hit] - sq) / a[hit]
        t1 = (-b[hit] + sq) / a[hit]
        cand = np.where(t0 > eps, t0, np.where(t1 > eps, t1, np.inf))
        t[hit] = cand
    return t


def _ray_frustum(o, d, r0, r1, length, eps):
    k = (r1 - r0) / length
    n = len(o)
    best = np.full(n, np.inf)
    # lateral surface: x^2 + y^2 = (r0 + k z)^2, z in [0, L]
    a = d[:, 0] ** 2 + d[:, 1] ** 2 - (k * d[:, 2]) ** 2
    rz = r0 + k * o[:, 2]
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1] - k * rz * d[:, 2]
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - rz ** 2
    quad = np.abs(a) > 1e-14
    disc = b * b - a * c
    ok = quad & (disc >= 0)
    if np.any(ok):
        sq = np.sqrt(disc[ok])
        for sign in (-1.0, 1.0):
            t = (-b[ok] + sign * sq) / a[ok]
            z = o[ok, 2] + t * d[ok, 2]
            good = (t > eps) & (z >= 0) & (z <= length)
            idx = np.flatnonzero(ok)[good]
            best[idx] = np.minimum(best[idx], t[good])
    lin = ~quad & (np.abs(b) > 1e-14)
    if np.any(lin):
        t = -c[lin] / (2.0 * b[lin])
        z = o[lin, 2] + t * d[lin, 2]
        good = (t > eps) & (z >= 0) & (z <= length)
        idx = np.flatnonzero(lin)[good]
        best[idx] = np.minimum(best[idx], t[good])
    # end caps
    moving = np.abs(d[:, 2]) > 1e-14
    for z_end, r_end in ((0.0, r0), (length, r1)):
        t = np.where(moving, (z_end - o[:, 2]) / np.where(moving, d[:, 2], 1.0), np.inf)
        x = o[:, 0] + t * d[:, 0]
        y = o[:, 1] + t * d[:, 1]
        good = (t > eps) & (x * x + y * y <= r_end ** 2)
        best[good] = np.minimum(best[good], t[good])
    return best


@dataclass
class PrimitiveBody:
    """Posed assembly of primitives, plus its source pose and template."""

    primitives: list[Primitive]
    pose: Pose
    template: SkeletonTemplate
    joint_world: np.ndarray = field(default=None, repr=False)  # (J, 3)
    _adjacency: np.ndarray | None = field(default=None, repr=False)

    def labels(self) -> list[str]:
        return [p.label for p in self.primitives]

    def index_of(self, label: str) -> int:
        return self.labels().index(label)

    def center(self) -> np.ndarray:
        return self.joint_world.mean(axis=0)

    def ray_intersections(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """(P, N) matrix of smallest positive hit parameters."""
        return np.stack([p.ray_intersect(origins, dirs) for p in self.primitives])

    def ray_cast(self, origins: np.ndarray, dirs: np.ndarray):
        """Nearest hit: (t, primitive_index), t=inf and index=-1 on miss."""
        tm = self.ray_intersections(origins, dirs)
        idx = np.argmin(tm, axis=0)
        t = tm[idx, np.arange(tm.shape[1])]
        idx = np.where(np.isinf(t), -1, idx)
        return t, idx

    def adjacent_joints(self, prim_index: int) -> list[Joint]:
        """Joints structurally attached to a primitive (for visibility labels)."""
        label = self.primitives[prim_index].label
        j = parse_joint_sphere(label)
        if j is not None:
            return [j]
        if label in LIMB_SEGMENTS:
            a, b, *_ = LIMB_SEGMENTS[label]
            return [a, b]
        return {
            HEAD: [Joint.NECK, Joint.HEAD_TOP],
            UPPER_TORSO: [Joint.SPINE_MID, Joint.CHEST,
                          Joint.L_SHOULDER, Joint.R_SHOULDER],
            LOWER_TORSO: [Joint.PELVIS, Joint.SPINE_MID,
                          Joint.L_HIP, Joint.R_HIP],
        }.get(label, [])

    def adjacency(self) -> np.ndarray:
        """(P, P) bool: primitives that share a structural joint.

        Adjacent primitives interpenetrate by construction (joint spheres sit
        on cylinder ends), so occlusion tests ignore hits between them.
        """
        if self._adjacency is None:
            sets = [set(self.adjacent_joints(i)) for i in range(len(self.primitives))]
            n = len(sets)
            adj = np.eye(n, dtype=bool)
            for i in range(n):
                for k in range(i + 1, n):
                    if sets[i] & sets[k]:
                        adj[i, k] = adj[k, i] = True
            self._adjacency = adj
        return self._adjacency


def _segment_frame(p0: np.ndarray, p1: np.ndarray):
    v = p1 - p0
    length = float(np.linalg.norm(v))
    if length < 1e-9:
        raise DegeneratePrimitiveError("coincident joints for cylinder axis")
    return _orthobasis(v), length


def fit_primitives(template: SkeletonTemplate, pose: Pose) -> PrimitiveBody:
    """Place the primitive body on a posed skeleton.

    Limb and torso cylinders span their joint pairs exactly; torso radii come
    from the posed hip and shoulder widths; the head ellipsoid spans
    neck->head_top with its facing axis taken from the neck joint frame.
    """
    pos, rot = forward_kinematics_full(template, pose)

    def at(j: Joint) -> np.ndarray:
        return pos[JOINT_INDEX[j]]

    prims: list[Primitive] = []

    # head: long axis neck->head_top, forward = neck frame -z
    neck, top = at(Joint.NECK), at(Joint.HEAD_TOP)
    long_semi = np.linalg.norm(top - neck) / 2.0
    if long_semi < 1e-9:
        raise DegeneratePrimitiveError("neck and head_top coincide")
    head_r = rot[JOINT_INDEX[Joint.NECK]]
    prims.append(Primitive("ellipsoid", (neck + top) / 2.0, head_r, HEAD,
                           semi_axes=[HEAD_EAR_SEMI_AXIS, long_semi,
                                      HEAD_DEPTH_SEMI_AXIS]))

    # torso pieces; their shared rim at spine_mid uses one waist radius
    shoulder_half = np.linalg.norm(at(Joint.R_SHOULDER) - at(Joint.L_SHOULDER)) / 2.0
    hip_half = np.linalg.norm(at(Joint.R_HIP) - at(Joint.L_HIP)) / 2.0
    r_up, l_up = _segment_frame(at(Joint.CHEST), at(Joint.SPINE_MID))
    prims.append(Primitive("tapered_cylinder", at(Joint.CHEST), r_up, UPPER_TORSO,
                           r_base=shoulder_half, r_tip=WAIST_RADIUS, length=l_up))
    r_lo, l_lo = _segment_frame(at(Joint.PELVIS), at(Joint.SPINE_MID))
    prims.append(Primitive("tapered_cylinder", at(Joint.PELVIS), r_lo, LOWER_TORSO,
                           r_base=hip_half, r_tip=WAIST_RADIUS, length=l_lo))

    for label, (ja, jb, rb, rt) in LIMB_SEGMENTS.items():
        r, length = _segment_frame(at(ja), at(jb))
        prims.append(Primitive("tapered_cylinder", at(ja), r, label,
                               r_base=rb, r_tip=rt, length=length))

    for j, radius in SPHERE_JOINTS.items():
        prims.append(Primitive("sphere", at(j), np.eye(3),
                               joint_sphere_label(j), radius=radius))

    return PrimitiveBody(prims, pose.copy(), template, joint_world=pos)


def sample_surface_points(body: PrimitiveBody, n: int, seed: int):
    """Area-weighted deterministic surface samples.

    Returns (points (n,3), primitive_index (n,)). Per-primitive counts use
    largest-remainder allocation and per-primitive substreams, so two bodies
    fitted from the same template produce index-corresponded point sets for
    the same seed.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    areas = np.array([p.surface_area() for p in body.primitives])
    quota = areas / areas.sum() * n
    counts = np.floor(quota).astype(int)
    rem = n - counts.sum()
    if rem > 0:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:rem]] += 1
    pts = np.empty((n, 3))
    idx = np.empty(n, dtype=int)
    at = 0
    for i, (prim, c) in enumerate(zip(body.primitives, counts)):
        if c == 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        pts[at:at + c] = prim.sample_surface(c, rng)
        idx[at:at + c] = i
        at += c
    return pts, idx
