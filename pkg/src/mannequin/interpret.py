"""Deterministic geometric sketch interpretation.

Turns raw unlabeled 2D strokes into 17 joint locations with confidences, a
2D silhouette mask, and per-stroke part labels. Pipeline: resample ->
classify (joint circles, head ellipse, face marks, limb edges) -> pair
parallel edges into limb segments -> assemble a node graph -> branch-and-
bound assignment of segment chains to the four limbs -> fill unmatched
joints from the scaled rest layout.

All pixel-space gates live in the THRESHOLDS block below; they were tuned
once on clean rendered sketches and are deliberately loose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .errors import SearchBudgetError, UninterpretableSketchError
from .primitives import (FACE_MARK, HEAD, LIMB_SEGMENTS, LOWER_TORSO,
                         UPPER_TORSO, joint_sphere_label)
from .render import VectorSketch, polyline_length
from .skeleton import (JOINT_INDEX, JOINTS, Joint, Pose, SkeletonTemplate,
                       forward_kinematics)

# -- THRESHOLDS (all pixel units at the default 512 canvas) -------------------
RESAMPLE_SPACING = 2.0
CLOSURE_GAP_FRAC = 0.15        # endpoint gap / perimeter for "closed"
CIRCLE_RMS_FRAC = 0.08         # circle fit RMS / radius
HEAD_ASPECT_RANGE = (1.2, 2.2)
FACE_MARK_FRAC = 0.5           # max face-mark length / head minor axis
PARALLEL_MAX_DEG = 25.0
PAIR_GAP_RANGE = (6.0, 60.0)
PAIR_OVERLAP_MIN = 0.5
MIN_SINGLE_EDGE_PX = 30.0      # unpaired edges shorter than this are dropped
SNAP_PX = 20.0
DEFAULT_SINGLE_WIDTH = 12.0
SEARCH_BUDGET = 10_000
CHAIN_MAX_COST = 3.0
SINGLE_EDGE_PENALTY = 0.35     # per bone evidenced by one edge only
MISSING_BONE_PENALTY = 1.2
MISSING_CHAIN_PENALTY = 2.8
ANCHOR_WEIGHT = 3.0
ORIENTATION_PENALTY = 0.5      # proximal end should sit nearer the anchor

ARM_BONES_M = (0.28, 0.26)
LEG_BONES_M = (0.42, 0.42)
HEAD_HEIGHT_M = 0.25
PELVIS_TO_CHEST_M = 0.35
NECK_ABOVE_CHEST_M = 0.10
ANCHOR_SLACK_M = {"arm": 0.25, "leg": 0.32}


# -- basic stroke operations ---------------------------------------------------


def resample(points: np.ndarray, spacing: float) -> np.ndarray:
    """Uniform arc-length resampling, endpoints preserved."""
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return pts[[0, -1]].copy()
    n = max(2, int(round(total / spacing)) + 1)
    t = np.linspace(0.0, total, n)
    out = np.stack([np.interp(t, cum, pts[:, 0]), np.interp(t, cum, pts[:, 1])], axis=1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def fit_circle(points: np.ndarray):
    """Least-squares (Kasa) circle fit: (center, radius, rms_residual)."""
    pts = np.asarray(points, dtype=float)
    mean = pts.mean(axis=0)
    q = pts - mean
    a = np.column_stack([2.0 * q, np.ones(len(q))])
    b = (q ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    center = sol[:2]
    radius = float(np.sqrt(max(sol[2] + center @ center, 1e-12)))
    rms = float(np.sqrt(((np.linalg.norm(q - center, axis=1) - radius) ** 2).mean()))
    return center + mean, radius, rms


def fit_ellipse(points: np.ndarray):
    """Direct least-squares conic fit (Halir-Flusser).

    Returns (center, (semi_major, semi_minor), angle_rad) or None when the
    points do not support a real ellipse.
    """
    pts = np.asarray(points, dtype=float)
    mean = pts.mean(axis=0)
    x, y = (pts - mean).T
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones(len(x))])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        return None
    m = s1 + s2 @ t
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    try:
        eigval, eigvec = np.linalg.eig(m)
    except np.linalg.LinAlgError:
        return None
    cond = 4.0 * eigvec[0] * eigvec[2] - eigvec[1] ** 2
    ok = np.flatnonzero((cond > 0) & np.isfinite(eigval))
    if len(ok) == 0:
        return None
    a1 = np.real(eigvec[:, ok[0]])
    conic = np.concatenate([a1, t @ a1])  # A B C D E F
    big_a, big_b, big_c, big_d, big_e, big_f = conic
    den = big_b ** 2 - 4.0 * big_a * big_c
    if den >= 0:
        return None
    x0 = (2.0 * big_c * big_d - big_b * big_e) / den
    y0 = (2.0 * big_a * big_e - big_b * big_d) / den
    c_val = (big_a * x0 * x0 + big_b * x0 * y0 + big_c * y0 * y0
             + big_d * x0 + big_e * y0 + big_f)
    qmat = np.array([[big_a, big_b / 2.0], [big_b / 2.0, big_c]])
    lam, vec = np.linalg.eigh(qmat)
    with np.errstate(invalid="ignore", divide="ignore"):
        semis = np.sqrt(-c_val / lam)
    if not np.all(np.isfinite(semis)) or np.any(semis <= 0):
        return None
    order = np.argsort(-semis)
    major_dir = vec[:, order[0]]
    return (np.array([x0, y0]) + mean,
            (float(semis[order[0]]), float(semis[order[1]])),
            float(np.arctan2(major_dir[1], major_dir[0])))


@dataclass
class StrokeClass:
    kind: str                  # joint_circle | head_ellipse | limb_edge | face_mark | unknown
    points: np.ndarray         # resampled polyline
    residual: float = 0.0
    center: np.ndarray | None = None
    radius: float = 0.0
    semi_axes: tuple[float, float] = (0.0, 0.0)
    angle: float = 0.0


def classify_stroke(points: np.ndarray) -> StrokeClass:
    """Classify one resampled stroke by closed-conic and open-edge gates.

    Face marks need head context and are re-labelled in a second pass by
    interpret_sketch.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 4:
        return StrokeClass("unknown", pts)
    gap = float(np.linalg.norm(pts[0] - pts[-1]))
    perim = polyline_length(pts) + gap
    if perim <= 1e-9:
        return StrokeClass("unknown", pts)
    if gap < CLOSURE_GAP_FRAC * perim:
        center, radius, rms = fit_circle(pts)
        if radius > 1e-6 and rms / radius < CIRCLE_RMS_FRAC:
            return StrokeClass("joint_circle", pts, residual=rms,
                               center=center, radius=radius)
        ell = fit_ellipse(pts)
        if ell is not None:
            center, (major, minor), angle = ell
            aspect = major / max(minor, 1e-9)
            if HEAD_ASPECT_RANGE[0] <= aspect <= HEAD_ASPECT_RANGE[1]:
                return StrokeClass("head_ellipse", pts, residual=0.0,
                                   center=center, semi_axes=(major, minor),
                                   angle=angle)
        return StrokeClass("unknown", pts)
    return StrokeClass("limb_edge", pts)


@dataclass
class LimbSegment:
    midline: np.ndarray         # (K, 2)
    width: float
    stroke_ids: tuple[int, ...]
    paired: bool

    @property
    def ends(self) -> np.ndarray:
        return np.stack([self.midline[0], self.midline[-1]])

    @property
    def length(self) -> float:
        return polyline_length(self.midline)


def _edge_direction(points: np.ndarray) -> float:
    """Undirected orientation angle in [0, pi)."""
    d = points[-1] - points[0]
    if np.linalg.norm(d) < 1e-9:
        d = points[len(points) // 2] - points[0]
    return float(np.arctan2(d[1], d[0]) % np.pi)


def _angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % np.pi
    return min(d, np.pi - d)


def _enumerate_pairs(edges: list[np.ndarray]):
    """All legal (gap, i, j, midline) pairings, sorted by gap.

    Legal = near-parallel (< 25 deg), mean lateral gap in [6, 60] px, and
    at least half of the shorter edge overlapping along the shared direction.
    """
    k = 16
    rs = [resample(e, max(polyline_length(e) / (k - 1), 1e-6)) for e in edges]
    rs = [r if len(r) == k else np.stack([np.interp(np.linspace(0, 1, k),
                                                    np.linspace(0, 1, len(r)), r[:, c])
                                          for c in range(2)], axis=1) for r in rs]
    angles = [_edge_direction(e) for e in edges]
    cands = []
    for i in range(len(edges)):
        for j in range(i + 1, len(edges)):
            if np.rad2deg(_angle_diff(angles[i], angles[j])) >= PARALLEL_MAX_DEG:
                continue
            a, b = rs[i], rs[j]
            # orient b to match a before pointwise pairing
            if (np.linalg.norm(a[0] - b[0]) + np.linalg.norm(a[-1] - b[-1])
                    > np.linalg.norm(a[0] - b[-1]) + np.linalg.norm(a[-1] - b[0])):
                b = b[::-1]
            gap = float(np.linalg.norm(a - b, axis=1).mean())
            if not PAIR_GAP_RANGE[0] <= gap <= PAIR_GAP_RANGE[1]:
                continue
            dirv = np.array([np.cos(angles[i]), np.sin(angles[i])])
            ta, tb = a @ dirv, b @ dirv
            lo = max(ta.min(), tb.min())
            hi = min(ta.max(), tb.max())
            shortest = max(min(ta.max() - ta.min(), tb.max() - tb.min()), 1e-9)
            if (hi - lo) / shortest < PAIR_OVERLAP_MIN:
                continue
            cands.append((gap, i, j, (a + b) / 2.0))
    cands.sort(key=lambda c: c[0])
    return rs, cands


def pair_limb_edges(edges: list[np.ndarray],
                    edge_ids: list[int] | None = None) -> list[LimbSegment]:
    """Greedily pair near-parallel overlapping edges into limb segments.

    Paired edges become a midline (pointwise average) with the mean gap as
    width; leftover long edges become single-line segments with a default
    width.
    """
    if edge_ids is None:
        edge_ids = list(range(len(edges)))
    rs, cands = _enumerate_pairs(edges)
    used: set[int] = set()
    segments = []
    for gap, i, j, mid in cands:
        if i in used or j in used:
            continue
        used.update((i, j))
        segments.append(LimbSegment(mid, gap, (edge_ids[i], edge_ids[j]), True))
    for i, e in enumerate(edges):
        if i not in used and polyline_length(e) >= MIN_SINGLE_EDGE_PX:
            segments.append(LimbSegment(rs[i], DEFAULT_SINGLE_WIDTH,
                                        (edge_ids[i],), False))
    return segments


def candidate_segments(edges: list[np.ndarray],
                       edge_ids: list[int] | None = None) -> list[LimbSegment]:
    """Every legal pairing plus every long single edge, without committing.

    Overlapping hypotheses share edge ids; the chain assignment resolves the
    conflicts globally instead of a local best-gap greedy choice.
    """
    if edge_ids is None:
        edge_ids = list(range(len(edges)))
    rs, cands = _enumerate_pairs(edges)
    segments = [LimbSegment(mid, gap, (edge_ids[i], edge_ids[j]), True)
                for gap, i, j, mid in cands]
    for i, e in enumerate(edges):
        if polyline_length(e) >= MIN_SINGLE_EDGE_PX:
            segments.append(LimbSegment(rs[i], DEFAULT_SINGLE_WIDTH,
                                        (edge_ids[i],), False))
    return segments


# -- joint graph and chain assignment -----------------------------------------


@dataclass
class Joints2D:
    """17 joint pixel positions + confidence in {0.0, 0.5, 1.0}."""

    positions: np.ndarray                  # (J, 2)
    confidence: np.ndarray                 # (J,)

    def of(self, joint: Joint) -> np.ndarray:
        return self.positions[JOINT_INDEX[joint]]

    def conf(self, joint: Joint) -> float:
        return float(self.confidence[JOINT_INDEX[joint]])

    def to_dict(self) -> dict:
        return {j.value: {"px": [float(v) for v in self.positions[i]],
                          "confidence": float(self.confidence[i])}
                for i, j in enumerate(JOINTS)}


@dataclass
class InterpretResult:
    joints: Joints2D
    silhouette: np.ndarray                 # (H, W) bool
    stroke_labels: list[str]
    scale: float                           # px per meter
    head_hint: tuple[int, int] = (0, 0)    # (yaw sign, pitch sign)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class _Node:
    pos: np.ndarray
    circle: int = -1        # index into merged circle list, -1 = free endpoint


@dataclass
class _Chain:
    nodes: list[_Node]      # anchor-side first
    segments: tuple[int, ...]
    cost: float
    n_bones: int


def _select_head(classes: list[StrokeClass]) -> StrokeClass | None:
    """Pick the head among closed shapes by size, contained short strokes
    (face marks), pair-likeness (joint balls come in equal-size pairs), and
    a top-of-figure position prior. A pitched head projects nearly circular,
    so plain joint circles are candidates too."""
    pts_all = np.concatenate([c.points for c in classes])
    y_lo = pts_all[:, 1].min()
    y_cut = y_lo + 0.45 * (pts_all[:, 1].max() - y_lo)
    cands = []
    for c in classes:
        if c.kind == "head_ellipse":
            cands.append((c, c.semi_axes[0], c.semi_axes[1]))
        elif c.kind == "joint_circle":
            cands.append((c, c.radius, c.radius))
    best, best_score = None, 0.0
    for c, major, minor in cands:
        if major < 10.0 or c.center[1] > y_cut:
            continue
        marks = 0
        ca, sa = np.cos(c.angle), np.sin(c.angle)
        for e in classes:
            if e.kind != "limb_edge" or polyline_length(e.points) >= minor:
                continue
            mid = e.points.mean(axis=0) - c.center
            u = (mid[0] * ca + mid[1] * sa) / major
            v = (-mid[0] * sa + mid[1] * ca) / minor
            if u * u + v * v <= 1.1:
                marks += 1
        paired = any(o is not c and abs(om - major) < 0.18 * major
                     for o, om, _ in cands)
        score = major * (1.0 + 0.6 * min(marks, 2)) * (0.8 if paired else 1.0)
        if score > best_score:
            best, best_score = c, score
    if best is None:
        return None
    if best.kind == "joint_circle":
        head = StrokeClass("head_ellipse", best.points, center=best.center,
                           semi_axes=(best.radius, best.radius), angle=np.pi / 2)
        best.kind = "head_promoted"
        return head
    return best


def _merge_circles(circles: list[StrokeClass]) -> list[dict]:
    """Cluster near-coincident circles (joint ball + buried limb rims)."""
    order = sorted(range(len(circles)), key=lambda i: -circles[i].radius)
    merged: list[dict] = []
    for i in order:
        c = circles[i]
        hit = None
        for m in merged:
            if np.linalg.norm(c.center - m["center"]) < max(0.7 * m["radius"], 4.0):
                hit = m
                break
        if hit is None:
            merged.append({"center": c.center.copy(), "radius": c.radius,
                           "members": [i]})
        else:
            hit["members"].append(i)
    return merged


FREE_NODE_PENALTY = 0.15


def _chain_candidates(segments, nodes_of, anchor, bones_px, slack_px):
    """Score 1- and 2-bone chains against expected bone lengths + anchor.

    Node endpoints snapped onto joint circles are trusted more than free
    endpoints; costs are non-negative so partial sums bound the search.
    """
    out = []
    n_seg = len(segments)
    for i in range(n_seg):
        for oriented in (False, True):
            a, b = (nodes_of[i][::-1] if oriented else nodes_of[i])
            base = abs(np.log(max(segments[i].length, 1e-6) / bones_px[0]))
            base += ANCHOR_WEIGHT * max(0.0, np.linalg.norm(a.pos - anchor) - slack_px) \
                / max(bones_px[0], 1.0)
            if not segments[i].paired:
                base += SINGLE_EDGE_PENALTY
            base += FREE_NODE_PENALTY * ((a.circle < 0) + (b.circle < 0))
            # prefer the orientation whose far end is distal to the anchor
            if np.linalg.norm(a.pos - anchor) > np.linalg.norm(b.pos - anchor):
                base += ORIENTATION_PENALTY
            if base > CHAIN_MAX_COST:
                continue
            partial = base + MISSING_BONE_PENALTY
            if partial <= CHAIN_MAX_COST:
                out.append(_Chain([a, b], (i,), partial, 1))
            for j in range(n_seg):
                if j == i:
                    continue
                for oj in (False, True):
                    c, d = (nodes_of[j][::-1] if oj else nodes_of[j])
                    # consecutive bones must share the middle node
                    if b.circle >= 0 and c.circle >= 0:
                        joined = b.circle == c.circle
                    else:
                        joined = np.linalg.norm(b.pos - c.pos) < SNAP_PX
                    if not joined:
                        continue
                    cost = base + abs(np.log(max(segments[j].length, 1e-6) / bones_px[1]))
                    if not segments[j].paired:
                        cost += SINGLE_EDGE_PENALTY
                    cost += FREE_NODE_PENALTY * (d.circle < 0)
                    if cost <= CHAIN_MAX_COST:
                        out.append(_Chain([a, b, d], (i, j), cost, 2))
    out.sort(key=lambda ch: ch.cost)
    # keep only the cheapest chain per joint-location signature
    seen: set[tuple] = set()
    unique = []
    for ch in out:
        sig = tuple((n.circle if n.circle >= 0
                     else (round(n.pos[0] / 8.0), round(n.pos[1] / 8.0)))
                    for n in ch.nodes)
        if sig in seen:
            continue
        seen.add(sig)
        unique.append(ch)
    return unique[:24]


def _assign_chains(segments, arm_cands, leg_cands, budget):
    """Pick two disjoint arm chains and two disjoint leg chains, minimum cost.

    Disjoint = no shared input edge and no shared joint circle. Depth-first
    branch and bound; partial cost is an admissible bound since every chain
    cost and the missing-chain penalty are non-negative.
    """
    roles = [arm_cands, arm_cands, leg_cands, leg_cands]
    best = {"cost": np.inf, "picks": [None, None, None, None]}
    lb = [min([c.cost for c in r] + [MISSING_CHAIN_PENALTY]) for r in roles]
    suffix_lb = [sum(lb[r:]) for r in range(4)] + [0.0]

    def circles_of(ch):
        return {n.circle for n in ch.nodes if n.circle >= 0}

    def edges_of(ch):
        out = set()
        for si in ch.segments:
            out.update(segments[si].stroke_ids)
        return out

    def rec(role, start, used_edges, used_circ, picks, cost):
        budget[0] += 1
        if budget[0] > SEARCH_BUDGET:
            raise SearchBudgetError("chain assignment exceeded search budget")
        if cost + suffix_lb[role] >= best["cost"]:
            return
        if role == 4:
            best["cost"] = cost
            best["picks"] = list(picks)
            return
        # the two same-kind roles are interchangeable: enforce ascending index
        for k in range(start if role in (1, 3) else 0, len(roles[role])):
            ch = roles[role][k]
            if cost + ch.cost + suffix_lb[role + 1] >= best["cost"]:
                break  # candidates are cost-sorted
            if used_edges & edges_of(ch) or used_circ & circles_of(ch):
                continue
            rec(role + 1, k + 1, used_edges | edges_of(ch),
                used_circ | circles_of(ch), picks + [ch], cost + ch.cost)
        rec(role + 1, 0, used_edges, used_circ, picks + [None],
            cost + MISSING_CHAIN_PENALTY)

    rec(0, 0, set(), set(), [], 0.0)
    return best["picks"]


def _rest_layout(template: SkeletonTemplate) -> np.ndarray:
    """Rest joint offsets from the pelvis, in canvas-aligned 2D (meters)."""
    pos = forward_kinematics(template, Pose.identity())
    rel = pos - pos[JOINT_INDEX[Joint.PELVIS]]
    return np.stack([-rel[:, 0], -rel[:, 1]], axis=1)  # world +x,+y -> canvas -x,-y


def _stamp_capsule(mask, p0, p1, radius):
    h, w = mask.shape
    lo = np.maximum(np.floor(np.minimum(p0, p1) - radius).astype(int), 0)
    hi = np.minimum(np.ceil(np.maximum(p0, p1) + radius).astype(int) + 1, [w, h])
    if np.any(hi <= lo):
        return
    xs = np.arange(lo[0], hi[0])
    ys = np.arange(lo[1], hi[1])
    gx, gy = np.meshgrid(xs, ys)
    p = np.stack([gx, gy], axis=-1).astype(float)
    d = p1 - p0
    den = float(d @ d)
    t = np.clip(((p - p0) @ d) / den, 0.0, 1.0) if den > 1e-12 else np.zeros(p.shape[:2])
    near = p0 + t[..., None] * d
    inside = np.linalg.norm(p - near, axis=-1) <= radius
    mask[lo[1]:hi[1], lo[0]:hi[0]] |= inside


def _stamp_ellipse(mask, center, semis, angle):
    h, w = mask.shape
    r = max(semis)
    lo = np.maximum(np.floor(center - r).astype(int), 0)
    hi = np.minimum(np.ceil(center + r).astype(int) + 1, [w, h])
    if np.any(hi <= lo):
        return
    xs = np.arange(lo[0], hi[0])
    ys = np.arange(lo[1], hi[1])
    gx, gy = np.meshgrid(xs, ys)
    ca, sa = np.cos(angle), np.sin(angle)
    u = (gx - center[0]) * ca + (gy - center[1]) * sa
    v = -(gx - center[0]) * sa + (gy - center[1]) * ca
    inside = (u / semis[0]) ** 2 + (v / semis[1]) ** 2 <= 1.0
    mask[lo[1]:hi[1], lo[0]:hi[0]] |= inside


_BONE_STAMPS = [
    (Joint.L_SHOULDER, Joint.L_ELBOW, 0.050), (Joint.L_ELBOW, Joint.L_WRIST, 0.040),
    (Joint.R_SHOULDER, Joint.R_ELBOW, 0.050), (Joint.R_ELBOW, Joint.R_WRIST, 0.040),
    (Joint.L_HIP, Joint.L_KNEE, 0.080), (Joint.L_KNEE, Joint.L_ANKLE, 0.060),
    (Joint.R_HIP, Joint.R_KNEE, 0.080), (Joint.R_KNEE, Joint.R_ANKLE, 0.060),
    (Joint.PELVIS, Joint.CHEST, 0.145), (Joint.NECK, Joint.HEAD_TOP, 0.075),
]

# (parent, child, rest length in meters); checked torso-outward
_SANITY_BONES = [
    (Joint.NECK, Joint.CHEST, 0.10),
    (Joint.CHEST, Joint.PELVIS, 0.35),
    (Joint.CHEST, Joint.L_SHOULDER, 0.18),
    (Joint.CHEST, Joint.R_SHOULDER, 0.18),
    (Joint.L_SHOULDER, Joint.L_ELBOW, 0.28),
    (Joint.L_ELBOW, Joint.L_WRIST, 0.26),
    (Joint.R_SHOULDER, Joint.R_ELBOW, 0.28),
    (Joint.R_ELBOW, Joint.R_WRIST, 0.26),
    (Joint.PELVIS, Joint.L_HIP, 0.233),
    (Joint.PELVIS, Joint.R_HIP, 0.233),
    (Joint.L_HIP, Joint.L_KNEE, 0.42),
    (Joint.L_KNEE, Joint.L_ANKLE, 0.42),
    (Joint.R_HIP, Joint.R_KNEE, 0.42),
    (Joint.R_KNEE, Joint.R_ANKLE, 0.42),
]


def interpret_sketch(strokes: list[np.ndarray], template: SkeletonTemplate,
                     camera: Camera) -> InterpretResult:
    """Parse raw strokes into joints, silhouette, and per-stroke labels."""
    if len(strokes) < 3:
        raise UninterpretableSketchError("need at least 3 strokes")
    budget = [0]
    classes = [classify_stroke(resample(np.asarray(s, dtype=float), RESAMPLE_SPACING))
               for s in strokes]
    labels = ["unknown"] * len(strokes)

    head = _select_head(classes)

    # second pass: short edges inside the head are face marks
    if head is not None:
        minor_full = 2.0 * head.semi_axes[1]
        ca, sa = np.cos(head.angle), np.sin(head.angle)
        for c in classes:
            if c.kind != "limb_edge":
                continue
            if polyline_length(c.points) >= FACE_MARK_FRAC * minor_full:
                continue
            mid = c.points.mean(axis=0) - head.center
            u = (mid[0] * ca + mid[1] * sa) / head.semi_axes[0]
            v = (-mid[0] * sa + mid[1] * ca) / head.semi_axes[1]
            if u * u + v * v <= 1.1:
                c.kind = "face_mark"

    circles = [c for c in classes if c.kind == "joint_circle"]
    merged = _merge_circles(circles)
    edge_idx = [i for i, c in enumerate(classes) if c.kind == "limb_edge"]
    segments = candidate_segments([classes[i].points for i in edge_idx], edge_idx)

    # global scale (px per meter): head height first, torso column fallback
    scale = None
    if head is not None:
        scale = 2.0 * head.semi_axes[0] / HEAD_HEIGHT_M
    torso_seg = None
    wide = [s for s in segments if s.paired and s.width >= 20.0]
    if wide:
        torso_seg = max(wide, key=lambda s: s.width)
    if scale is None:
        if torso_seg is None:
            raise UninterpretableSketchError("no head ellipse and no torso candidate")
        scale = torso_seg.length / 0.15  # waist-to-pelvis piece

    # torso down-direction: from the head toward the mass of the figure
    # (the head axis alone misleads when the neck is bent)
    centroid = np.concatenate([c.points for c in classes]).mean(axis=0)
    down = np.array([0.0, 1.0])
    if head is not None:
        d = centroid - head.center
        if np.linalg.norm(d) > 1e-6:
            down = d / np.linalg.norm(d)

    # head axis endpoints: neck = the end nearer the body
    neck_pt = head_top_pt = None
    if head is not None:
        axis_dir = np.array([np.cos(head.angle), np.sin(head.angle)])
        if abs(axis_dir @ down) < 0.3:  # promoted circle: no usable axis
            axis_dir = down
        e0 = head.center + axis_dir * head.semi_axes[0]
        e1 = head.center - axis_dir * head.semi_axes[0]
        neck_pt, head_top_pt = (e0, e1) if (e0 - e1) @ down > 0 else (e1, e0)

    if neck_pt is not None:
        chest_est = neck_pt + down * NECK_ABOVE_CHEST_M * scale
        pelvis_est = chest_est + down * PELVIS_TO_CHEST_M * scale
    else:
        pelvis_est = torso_seg.ends[np.argmax(torso_seg.ends[:, 1])]
        chest_est = pelvis_est - down * PELVIS_TO_CHEST_M * scale

    # node endpoints of segments snapped onto merged circles
    centers = np.array([m["center"] for m in merged]) if merged else np.zeros((0, 2))
    nodes_of = []
    for seg in segments:
        ends = []
        for p in seg.ends:
            ci = -1
            if len(centers):
                d = np.linalg.norm(centers - p, axis=1)
                k = int(np.argmin(d))
                if d[k] < SNAP_PX:
                    ci = k
                    p = centers[k]
            ends.append(_Node(np.asarray(p, dtype=float), ci))
        nodes_of.append(tuple(ends))

    arm_px = tuple(v * scale for v in ARM_BONES_M)
    leg_px = tuple(v * scale for v in LEG_BONES_M)
    arm_cands = _chain_candidates(segments, nodes_of, chest_est, arm_px,
                                  ANCHOR_SLACK_M["arm"] * scale)
    leg_cands = _chain_candidates(segments, nodes_of, pelvis_est, leg_px,
                                  ANCHOR_SLACK_M["leg"] * scale)
    arm_a, arm_b, leg_a, leg_b = _assign_chains(segments, arm_cands, leg_cands, budget)

    # left/right by the signed side of the chain's proximal node against the
    # torso axis (hands and feet cross the body midline; shoulders and hips
    # do not at these view angles); canvas-left = figure right
    def side_of(chain):
        rel = chain.nodes[0].pos - pelvis_est
        return float(down[0] * rel[1] - down[1] * rel[0])

    def order_lr(ca, cb):
        if ca is None or cb is None:
            sided = []
            for ch in (ca, cb):
                if ch is not None:
                    sided.append(("r" if side_of(ch) >= 0 else "l", ch))
            return sided
        sa_, sb_ = side_of(ca), side_of(cb)
        if sa_ == sb_:  # tie: break by canvas x
            xa = np.mean([n.pos[0] for n in ca.nodes])
            xb = np.mean([n.pos[0] for n in cb.nodes])
            return [("r", ca), ("l", cb)] if xa <= xb else [("r", cb), ("l", ca)]
        return [("r", ca), ("l", cb)] if sa_ > sb_ else [("r", cb), ("l", ca)]

    positions = np.zeros((len(JOINTS), 2))
    confidence = np.zeros(len(JOINTS))

    def put(joint, pos, conf):
        i = JOINT_INDEX[joint]
        if conf > confidence[i]:
            positions[i] = pos
            confidence[i] = conf

    consumed_circles: dict[int, Joint] = {}
    chain_parts: list[tuple[_Chain, list[str]]] = []
    arm_joints = {"l": (Joint.L_SHOULDER, Joint.L_ELBOW, Joint.L_WRIST),
                  "r": (Joint.R_SHOULDER, Joint.R_ELBOW, Joint.R_WRIST)}
    leg_joints = {"l": (Joint.L_HIP, Joint.L_KNEE, Joint.L_ANKLE),
                  "r": (Joint.R_HIP, Joint.R_KNEE, Joint.R_ANKLE)}
    for side, chain in order_lr(arm_a, arm_b):
        chain_parts.append((chain, [f"{side}_upper_arm", f"{side}_forearm"]))
        for node, joint in zip(chain.nodes, arm_joints[side]):
            put(joint, node.pos, 1.0 if node.circle >= 0 else 0.5)
            if node.circle >= 0:
                consumed_circles[node.circle] = joint
    for side, chain in order_lr(leg_a, leg_b):
        chain_parts.append((chain, [f"{side}_thigh", f"{side}_shin"]))
        for node, joint in zip(chain.nodes, leg_joints[side]):
            put(joint, node.pos, 1.0 if node.circle >= 0 else 0.5)
            if node.circle >= 0:
                consumed_circles[node.circle] = joint

    if head is not None:
        put(Joint.NECK, neck_pt, 1.0)
        put(Joint.HEAD_TOP, head_top_pt, 1.0)

    sh_l, sh_r = confidence[JOINT_INDEX[Joint.L_SHOULDER]], confidence[JOINT_INDEX[Joint.R_SHOULDER]]
    if sh_l > 0 and sh_r > 0:
        put(Joint.CHEST, (positions[JOINT_INDEX[Joint.L_SHOULDER]]
                          + positions[JOINT_INDEX[Joint.R_SHOULDER]]) / 2.0, 0.5)
    hp_l, hp_r = confidence[JOINT_INDEX[Joint.L_HIP]], confidence[JOINT_INDEX[Joint.R_HIP]]
    if hp_l > 0 and hp_r > 0:
        hip_mid = (positions[JOINT_INDEX[Joint.L_HIP]]
                   + positions[JOINT_INDEX[Joint.R_HIP]]) / 2.0
        hip_drop = abs(template.offsets[JOINT_INDEX[Joint.L_HIP]][1])
        put(Joint.PELVIS, hip_mid - down * hip_drop * scale, 0.5)
    if confidence[JOINT_INDEX[Joint.PELVIS]] > 0 and confidence[JOINT_INDEX[Joint.CHEST]] > 0:
        frac = 0.15 / PELVIS_TO_CHEST_M
        put(Joint.SPINE_MID,
            positions[JOINT_INDEX[Joint.PELVIS]] * (1 - frac)
            + positions[JOINT_INDEX[Joint.CHEST]] * frac, 0.5)

    # bone-length sanity: a matched joint whose bone comes out far longer
    # than anatomically possible at this scale is a misassignment; demote it
    # to a template fill rather than feeding the lift a confident lie
    for ja, jb, exp_m in _SANITY_BONES:
        ia, ib = JOINT_INDEX[ja], JOINT_INDEX[jb]
        if confidence[ia] > 0 and confidence[ib] > 0:
            obs = np.linalg.norm(positions[ia] - positions[ib])
            exp_px = exp_m * scale
            if obs > 2.0 * exp_px or obs < exp_px / 4.0:
                confidence[ib] = 0.0

    # fill whatever is left from the scaled rest layout, anchored at the
    # best available torso reference (confidence 0)
    layout = _rest_layout(template) * scale
    if confidence[JOINT_INDEX[Joint.PELVIS]] > 0:
        ref_j, ref_pt = Joint.PELVIS, positions[JOINT_INDEX[Joint.PELVIS]]
    elif neck_pt is not None:
        ref_j, ref_pt = Joint.NECK, neck_pt
    else:
        ref_j, ref_pt = Joint.PELVIS, pelvis_est
    origin = ref_pt - layout[JOINT_INDEX[ref_j]]
    for i in range(len(JOINTS)):
        if confidence[i] == 0.0:
            positions[i] = origin + layout[i]

    # stroke labels
    for i, c in enumerate(classes):
        if c.kind == "face_mark":
            labels[i] = FACE_MARK
        elif c.kind == "head_promoted" or (c.kind == "head_ellipse" and c is head):
            labels[i] = HEAD
    circle_stroke_idx = [i for i, c in enumerate(classes) if c.kind == "joint_circle"]
    for mi, m in enumerate(merged):
        if mi in consumed_circles:
            for member in m["members"]:
                labels[circle_stroke_idx[member]] = joint_sphere_label(consumed_circles[mi])
    for chain, parts in chain_parts:
        for seg_i, part in zip(chain.segments, parts):
            for sid in segments[seg_i].stroke_ids:
                labels[sid] = part
    # torso side lines: unlabeled long edges hugging the torso column
    col_top, col_bot = chest_est, pelvis_est
    for i, c in enumerate(classes):
        if labels[i] != "unknown" or c.kind != "limb_edge":
            continue
        mid = c.points.mean(axis=0)
        t = np.clip(np.dot(mid - col_bot, col_top - col_bot)
                    / max(np.dot(col_top - col_bot, col_top - col_bot), 1e-9), 0.0, 1.0)
        near = col_bot + t * (col_top - col_bot)
        if np.linalg.norm(mid - near) < 0.25 * scale:
            labels[i] = UPPER_TORSO if t > 0.55 else LOWER_TORSO

    # head orientation hint from the face-mark offset (sign only)
    head_hint = (0, 0)
    if head is not None:
        marks = [c.points for c in classes if c.kind == "face_mark"]
        if marks:
            off = np.concatenate(marks).mean(axis=0) - head.center
            yaw = int(np.sign(off[0])) if abs(off[0]) > 0.12 * head.semi_axes[1] else 0
            pitch = int(-np.sign(off[1])) if abs(off[1]) > 0.12 * head.semi_axes[0] else 0
            head_hint = (yaw, pitch)

    # silhouette: union of capsule stamps over the resolved skeleton + head
    w, h = camera.size
    mask = np.zeros((h, w), dtype=bool)
    for ja, jb, radius in _BONE_STAMPS:
        _stamp_capsule(mask, positions[JOINT_INDEX[ja]], positions[JOINT_INDEX[jb]],
                       radius * scale)
    if head is not None:
        _stamp_ellipse(mask, head.center, head.semi_axes, head.angle)
    else:
        _stamp_ellipse(mask, (positions[JOINT_INDEX[Joint.NECK]]
                              + positions[JOINT_INDEX[Joint.HEAD_TOP]]) / 2.0,
                       (0.125 * scale, 0.075 * scale), np.pi / 2.0)

    joints = Joints2D(positions, confidence)
    return InterpretResult(joints, mask, labels, scale, head_hint,
                           diagnostics={"search_nodes": budget[0],
                                        "n_circles": len(merged),
                                        "n_segments": len(segments)})


def interpret_vector_sketch(sketch: VectorSketch, template: SkeletonTemplate,
                            camera: Camera) -> InterpretResult:
    """Interpret a sketch's visible strokes, ignoring its labels."""
    return interpret_sketch([s.points for s in sketch.visible_strokes()],
                            template, camera)
