"""Articulated skeleton: template, pose, forward kinematics, pose sampling.

Coordinate conventions used throughout the package:
  world x = figure's right, y = up, z = figure's back (figure faces -z),
  all lengths in meters, all angles in radians unless a name says _deg.

A pose is a root transform (translation + unit quaternion, xyzw) plus one
axis-angle rotation vector per non-root joint, expressed in the parent
frame. Joint limits are intrinsic XYZ Euler ranges; an axis with range
[0, 0] is locked. Every middle-axis (Y) range stays inside (-90, 90) deg
so the Euler decomposition used for limit checks is unique.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import MalformedPoseError

EULER_ORDER = "XYZ"  # intrinsic


class Joint(str, enum.Enum):
    PELVIS = "pelvis"
    SPINE_MID = "spine_mid"
    CHEST = "chest"
    NECK = "neck"
    HEAD_TOP = "head_top"
    L_SHOULDER = "l_shoulder"
    L_ELBOW = "l_elbow"
    L_WRIST = "l_wrist"
    R_SHOULDER = "r_shoulder"
    R_ELBOW = "r_elbow"
    R_WRIST = "r_wrist"
    L_HIP = "l_hip"
    L_KNEE = "l_knee"
    L_ANKLE = "l_ankle"
    R_HIP = "r_hip"
    R_KNEE = "r_knee"
    R_ANKLE = "r_ankle"

    def __str__(self) -> str:  # keep "r_wrist" instead of "Joint.R_WRIST" in messages
        return self.value


# Definition order is topological (parents precede children).
JOINTS: list[Joint] = list(Joint)
JOINT_INDEX: dict[Joint, int] = {j: i for i, j in enumerate(JOINTS)}
N_JOINTS = len(JOINTS)
ROOT = Joint.PELVIS

MIRROR_MAP: dict[Joint, Joint] = {
    Joint.L_SHOULDER: Joint.R_SHOULDER, Joint.R_SHOULDER: Joint.L_SHOULDER,
    Joint.L_ELBOW: Joint.R_ELBOW, Joint.R_ELBOW: Joint.L_ELBOW,
    Joint.L_WRIST: Joint.R_WRIST, Joint.R_WRIST: Joint.L_WRIST,
    Joint.L_HIP: Joint.R_HIP, Joint.R_HIP: Joint.L_HIP,
    Joint.L_KNEE: Joint.R_KNEE, Joint.R_KNEE: Joint.L_KNEE,
    Joint.L_ANKLE: Joint.R_ANKLE, Joint.R_ANKLE: Joint.L_ANKLE,
}


def derive_seed(master_seed: int, *keys) -> int:
    """Stable 64-bit sub-seed from a master seed and arbitrary keys."""
    text = ":".join([str(int(master_seed))] + [str(k) for k in keys])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rotvec_to_euler(rotvecs: np.ndarray) -> np.ndarray:
    return Rotation.from_rotvec(np.atleast_2d(rotvecs)).as_euler(EULER_ORDER)


def euler_to_rotvec(eulers: np.ndarray) -> np.ndarray:
    return Rotation.from_euler(EULER_ORDER, np.atleast_2d(eulers)).as_rotvec()


@dataclass
class SkeletonTemplate:
    """Fixed kinematic tree: parents, rest offsets, per-axis Euler limits."""

    parents: np.ndarray          # (J,) int, -1 for root
    offsets: np.ndarray          # (J, 3) meters, in parent frame
    limits_lo: np.ndarray        # (J, 3) radians
    limits_hi: np.ndarray        # (J, 3) radians
    format_version: int = 1

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=int)
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.limits_lo = np.asarray(self.limits_lo, dtype=float)
        self.limits_hi = np.asarray(self.limits_hi, dtype=float)

    # -- construction ------------------------------------------------------

    @classmethod
    def default(cls) -> "SkeletonTemplate":
        text = resources.files("mannequin.data").joinpath("skeleton_default.json").read_text()
        return cls.from_config(json.loads(text))

    @classmethod
    def from_config(cls, cfg: dict) -> "SkeletonTemplate":
        if cfg.get("format") != 1:
            raise ValueError(f"unsupported template format: {cfg.get('format')!r}")
        by_name = {e["name"]: e for e in cfg["joints"]}
        parents = np.full(N_JOINTS, -1, dtype=int)
        offsets = np.zeros((N_JOINTS, 3))
        lo = np.zeros((N_JOINTS, 3))
        hi = np.zeros((N_JOINTS, 3))
        for j in JOINTS:
            e = by_name[j.value]
            i = JOINT_INDEX[j]
            if e["parent"] is not None:
                parents[i] = JOINT_INDEX[Joint(e["parent"])]
            offsets[i] = e["offset"]
            lim = np.asarray(e["limits_deg"], dtype=float)
            lo[i] = np.deg2rad(lim[:, 0])
            hi[i] = np.deg2rad(lim[:, 1])
        tpl = cls(parents, offsets, lo, hi, format_version=1)
        tpl.validate()
        return tpl

    def to_config(self) -> dict:
        joints = []
        for j in JOINTS:
            i = JOINT_INDEX[j]
            p = self.parents[i]
            joints.append({
                "name": j.value,
                "parent": None if p < 0 else JOINTS[p].value,
                "offset": [round(v, 9) for v in self.offsets[i]],
                "limits_deg": [
                    [round(np.rad2deg(self.limits_lo[i, a]), 6),
                     round(np.rad2deg(self.limits_hi[i, a]), 6)]
                    for a in range(3)
                ],
            })
        return {"format": self.format_version, "joints": joints}

    @classmethod
    def load(cls, path) -> "SkeletonTemplate":
        with open(path) as f:
            return cls.from_config(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_config(), f, indent=2)
            f.write("\n")

    # -- queries -----------------------------------------------------------

    def validate(self) -> None:
        for j in JOINTS:
            i = JOINT_INDEX[j]
            if j is ROOT:
                if self.parents[i] != -1:
                    raise ValueError("root joint must have no parent")
                continue
            if self.parents[i] < 0 or self.parents[i] >= N_JOINTS:
                raise ValueError(f"{j} has invalid parent index")
            if np.linalg.norm(self.offsets[i]) <= 0:
                raise ValueError(f"{j} has zero-length rest offset")
        if not np.all(self.limits_lo <= 0) or not np.all(self.limits_hi >= 0):
            raise ValueError("joint limits must bracket zero (rest pose legal)")
        h = self.rest_height()
        if not (1.6 <= h <= 1.9):
            raise ValueError(f"rest height {h:.3f} m outside [1.6, 1.9]")

    def bone_length(self, joint: Joint) -> float:
        return float(np.linalg.norm(self.offsets[JOINT_INDEX[joint]]))

    def rest_height(self) -> float:
        pos = forward_kinematics(self, Pose.identity())
        ys = pos[:, 1]
        return float(ys.max() - ys.min())

    def standing_root_translation(self) -> np.ndarray:
        """Root translation that puts the lowest rest joint on the ground plane."""
        pos = forward_kinematics(self, Pose.identity())
        return np.array([0.0, -pos[:, 1].min(), 0.0])

    @property
    def movable(self) -> np.ndarray:
        """(J, 3) bool: axes with a non-degenerate limit range (root excluded)."""
        m = self.limits_hi > self.limits_lo
        m[JOINT_INDEX[ROOT]] = False
        return m

    def children(self, joint: Joint) -> list[Joint]:
        i = JOINT_INDEX[joint]
        return [JOINTS[c] for c in range(N_JOINTS) if self.parents[c] == i]

    def chain_to_root(self, joint: Joint) -> list[Joint]:
        """Path root -> ... -> joint (inclusive)."""
        path = [joint]
        i = JOINT_INDEX[joint]
        while self.parents[i] >= 0:
            i = self.parents[i]
            path.append(JOINTS[i])
        return path[::-1]


@dataclass
class Pose:
    """Root transform plus per-joint axis-angle rotations (row 0 unused)."""

    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    root_orientation: np.ndarray = field(default_factory=lambda: np.array([0., 0., 0., 1.]))  # xyzw
    rotations: np.ndarray = field(default_factory=lambda: np.zeros((N_JOINTS, 3)))

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=float)
        self.root_orientation = np.asarray(self.root_orientation, dtype=float)
        self.rotations = np.asarray(self.rotations, dtype=float)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def copy(self) -> "Pose":
        return Pose(self.root_translation.copy(), self.root_orientation.copy(),
                    self.rotations.copy())

    def rotation(self, joint: Joint) -> np.ndarray:
        return self.rotations[JOINT_INDEX[joint]]

    def set_rotation(self, joint: Joint, rotvec) -> None:
        self.rotations[JOINT_INDEX[joint]] = np.asarray(rotvec, dtype=float)

    def validate(self) -> None:
        if self.rotations.shape != (N_JOINTS, 3):
            raise MalformedPoseError(f"rotations shape {self.rotations.shape}, "
                                     f"expected {(N_JOINTS, 3)}")
        if self.root_translation.shape != (3,) or self.root_orientation.shape != (4,):
            raise MalformedPoseError("bad root transform shape")
        if not (np.all(np.isfinite(self.rotations))
                and np.all(np.isfinite(self.root_translation))
                and np.all(np.isfinite(self.root_orientation))):
            raise MalformedPoseError("pose contains non-finite values")
        n = np.linalg.norm(self.root_orientation)
        if abs(n - 1.0) > 1e-9:
            raise MalformedPoseError(f"root quaternion norm {n} != 1")

    def to_dict(self) -> dict:
        return {
            "root_translation": [float(v) for v in self.root_translation],
            "root_orientation": [float(v) for v in self.root_orientation],
            "rotations": {j.value: [float(v) for v in self.rotations[JOINT_INDEX[j]]]
                          for j in JOINTS if j is not ROOT},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        rots = np.zeros((N_JOINTS, 3))
        for name, v in d.get("rotations", {}).items():
            rots[JOINT_INDEX[Joint(name)]] = v
        return cls(np.asarray(d["root_translation"], dtype=float),
                   np.asarray(d["root_orientation"], dtype=float), rots)


def rest_pose(template: SkeletonTemplate) -> Pose:
    """Identity rotations with the figure standing on the ground plane."""
    p = Pose.identity()
    p.root_translation = template.standing_root_translation()
    return p


def forward_kinematics_full(template: SkeletonTemplate, pose: Pose):
    """World position (J,3) and world rotation matrix (J,3,3) per joint."""
    pose.validate()
    local = Rotation.from_rotvec(pose.rotations).as_matrix()
    world_r = np.empty((N_JOINTS, 3, 3))
    world_p = np.empty((N_JOINTS, 3))
    world_r[0] = Rotation.from_quat(pose.root_orientation).as_matrix()
    world_p[0] = pose.root_translation
    for i in range(1, N_JOINTS):
        p = template.parents[i]
        world_p[i] = world_p[p] + world_r[p] @ template.offsets[i]
        world_r[i] = world_r[p] @ local[i]
    return world_p, world_r


def forward_kinematics(template: SkeletonTemplate, pose: Pose) -> np.ndarray:
    """World joint positions, (J, 3) indexed by JOINT_INDEX."""
    return forward_kinematics_full(template, pose)[0]


def joint_positions(template: SkeletonTemplate, pose: Pose) -> dict[Joint, np.ndarray]:
    pos = forward_kinematics(template, pose)
    return {j: pos[JOINT_INDEX[j]] for j in JOINTS}


# -- joint limits ----------------------------------------------------------


def clamp_euler(template: SkeletonTemplate, joint: Joint, euler: np.ndarray) -> np.ndarray:
    i = JOINT_INDEX[joint]
    return np.clip(euler, template.limits_lo[i], template.limits_hi[i])


def clamp_rotation(template: SkeletonTemplate, joint: Joint, rotvec) -> np.ndarray:
    """Clamp an axis-angle rotation into the joint's Euler limit box."""
    eul = rotvec_to_euler(np.asarray(rotvec, dtype=float))[0]
    return euler_to_rotvec(clamp_euler(template, joint, eul))[0]


def limit_violation(template: SkeletonTemplate, pose: Pose) -> float:
    """Largest per-axis Euler excursion outside the limits, radians."""
    eul = rotvec_to_euler(pose.rotations)
    over = np.maximum(eul - template.limits_hi, 0.0)
    under = np.maximum(template.limits_lo - eul, 0.0)
    mask = np.ones((N_JOINTS, 1))
    mask[JOINT_INDEX[ROOT]] = 0.0
    return float(((over + under) * mask).max())


def is_limit_respecting(template: SkeletonTemplate, pose: Pose, tol: float = 1e-6) -> bool:
    return limit_violation(template, pose) <= tol


def clamp_pose(template: SkeletonTemplate, pose: Pose) -> Pose:
    out = pose.copy()
    eul = rotvec_to_euler(pose.rotations)
    eul = np.clip(eul, template.limits_lo, template.limits_hi)
    out.rotations = euler_to_rotvec(eul)
    out.rotations[JOINT_INDEX[ROOT]] = 0.0
    return out


def mirror_pose(pose: Pose) -> Pose:
    """Reflect a pose across the sagittal (x = 0) plane, swapping sides."""
    flip = np.array([1.0, -1.0, -1.0])
    out = pose.copy()
    out.root_translation = pose.root_translation * np.array([-1.0, 1.0, 1.0])
    out.root_orientation = pose.root_orientation * np.array([1.0, -1.0, -1.0, 1.0])
    for j in JOINTS:
        if j is ROOT:
            continue
        src = MIRROR_MAP.get(j, j)
        out.rotations[JOINT_INDEX[j]] = pose.rotations[JOINT_INDEX[src]] * flip
    return out


# -- pose sampling ---------------------------------------------------------


@dataclass
class PoseSampling:
    """Mixture sampler: mostly small perturbations of rest, some uniform."""

    gauss_fraction: float = 0.7
    gauss_sigma: float = np.deg2rad(15.0)
    root_yaw_range: float = np.deg2rad(45.0)
    standing: bool = True


def sample_pose(template: SkeletonTemplate, seed: int,
                config: PoseSampling | None = None) -> Pose:
    """Draw a deterministic limit-respecting pose for a seed."""
    cfg = config or PoseSampling()
    rng = np.random.default_rng(seed)
    lo, hi = template.limits_lo, template.limits_hi
    if rng.random() < cfg.gauss_fraction:
        eul = np.clip(rng.normal(0.0, cfg.gauss_sigma, size=(N_JOINTS, 3)), lo, hi)
    else:
        eul = rng.uniform(lo, hi)
    eul[~template.movable] = 0.0
    pose = Pose.identity()
    pose.rotations = euler_to_rotvec(eul)
    pose.rotations[JOINT_INDEX[ROOT]] = 0.0
    yaw = rng.uniform(-cfg.root_yaw_range, cfg.root_yaw_range)
    pose.root_orientation = Rotation.from_euler("y", yaw).as_quat()
    if cfg.standing:
        pose.root_translation = template.standing_root_translation()
    return pose
