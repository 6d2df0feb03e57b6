"""3D pose recovery from 2D joints by damped least squares.

The pose is parameterized as [root translation (3), root rotation vector
(3), intrinsic-XYZ Euler angles of every movable joint axis]. Euler limits
are plain box constraints, so iterates are projected onto the box after
every accepted step and the returned pose is limit-respecting without a
distorting final clamp. A Levenberg-Marquardt loop with monotone step
acceptance runs from several starts (rest pose, noisy perturbations with
alternating root-yaw sign to cover the depth ambiguity); the lowest final
objective wins.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import Camera
from .errors import UnderconstrainedLiftError
from .interpret import Joints2D
from .skeleton import (EULER_ORDER, JOINT_INDEX, N_JOINTS, Joint, Pose,
                       SkeletonTemplate, derive_seed, rest_pose)

SOFTPLUS_SHARPNESS = 50.0


@dataclass
class LiftConfig:
    weight_conf_full: float = 1.0
    weight_conf_half: float = 0.3
    weight_conf_zero: float = 0.0
    lambda_limit: float = 10.0
    lambda_prior: float = 0.05
    lambda_sil: float = 0.0
    lambda_head_hint: float = 2.0
    huber_px: float = 12.0      # pseudo-Huber scale; 0 disables the kernel
    max_iterations: int = 60
    damping_init: float = 1e-3
    tol_step: float = 1e-7
    tol_decrease: float = 1e-10
    n_starts: int = 8
    start_sigma: float = np.deg2rad(20.0)

    def weight_for(self, conf: float) -> float:
        if conf >= 0.75:
            return self.weight_conf_full
        if conf >= 0.25:
            return self.weight_conf_half
        return self.weight_conf_zero


@dataclass
class LiftResult:
    pose: Pose
    objective: float
    per_joint_error_px: np.ndarray
    converged: bool
    starts_evaluated: int
    wall_time_s: float = 0.0
    diagnostics: dict = field(default_factory=dict)


# -- fast fixed-topology kinematics for the optimizer --------------------------


def _euler_mats(eulers: np.ndarray) -> np.ndarray:
    """(..., 3) intrinsic XYZ Euler -> (..., 3, 3) rotations, vectorized."""
    a, b, c = eulers[..., 0], eulers[..., 1], eulers[..., 2]
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    m = np.empty(eulers.shape[:-1] + (3, 3))
    m[..., 0, 0] = cb * cc
    m[..., 0, 1] = -cb * sc
    m[..., 0, 2] = sb
    m[..., 1, 0] = ca * sc + sa * sb * cc
    m[..., 1, 1] = ca * cc - sa * sb * sc
    m[..., 1, 2] = -sa * cb
    m[..., 2, 0] = sa * sc - ca * sb * cc
    m[..., 2, 1] = sa * cc + ca * sb * sc
    m[..., 2, 2] = ca * cb
    return m


def _rotvec_mats(v: np.ndarray) -> np.ndarray:
    """(..., 3) rotation vectors -> (..., 3, 3) matrices (Rodrigues)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    axis = v / np.maximum(angle, 1e-12)
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    k = np.stack([np.stack([zero, -z, y], axis=-1),
                  np.stack([z, zero, -x], axis=-1),
                  np.stack([-y, x, zero], axis=-1)], axis=-2)
    s = np.sin(angle)[..., None]
    c = np.cos(angle)[..., None]
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + s * k + (1.0 - c) * (k @ k)


class _Params:
    """Flat optimization vector <-> pose conversion for one template."""

    def __init__(self, template: SkeletonTemplate):
        self.template = template
        self.movable = template.movable            # (J, 3) bool
        self.joint_rows, self.axis_cols = np.nonzero(self.movable)
        self.n_joint_params = len(self.joint_rows)
        self.n = 6 + self.n_joint_params
        self.lo = np.concatenate([np.full(6, -np.inf),
                                  template.limits_lo[self.movable]])
        self.hi = np.concatenate([np.full(6, np.inf),
                                  template.limits_hi[self.movable]])

    def from_pose(self, pose: Pose) -> np.ndarray:
        eul = Rotation.from_rotvec(pose.rotations).as_euler(EULER_ORDER)
        x = np.empty(self.n)
        x[:3] = pose.root_translation
        x[3:6] = Rotation.from_quat(pose.root_orientation).as_rotvec()
        x[6:] = eul[self.joint_rows, self.axis_cols]
        return x

    def to_pose(self, x: np.ndarray) -> Pose:
        eul = np.zeros((N_JOINTS, 3))
        eul[self.joint_rows, self.axis_cols] = x[6:]
        pose = Pose(x[:3].copy(), Rotation.from_rotvec(x[3:6]).as_quat(),
                    Rotation.from_euler(EULER_ORDER, eul).as_rotvec())
        pose.rotations[JOINT_INDEX[Joint.PELVIS]] = 0.0
        return pose

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def fk(self, x: np.ndarray) -> np.ndarray:
        """World joint positions for a parameter vector."""
        return self.fk_batch(x[None, :])[0]

    def fk_batch(self, xs: np.ndarray) -> np.ndarray:
        """(B, n) parameter vectors -> (B, J, 3) world joint positions."""
        b = len(xs)
        eul = np.zeros((b, N_JOINTS, 3))
        eul[:, self.joint_rows, self.axis_cols] = xs[:, 6:]
        local = _euler_mats(eul)
        world_r = np.empty((b, N_JOINTS, 3, 3))
        world_p = np.empty((b, N_JOINTS, 3))
        world_r[:, 0] = _rotvec_mats(xs[:, 3:6])
        world_p[:, 0] = xs[:, :3]
        parents = self.template.parents
        offsets = self.template.offsets
        for i in range(1, N_JOINTS):
            p = parents[i]
            world_p[:, i] = world_p[:, p] + (world_r[:, p] @ offsets[i])
            world_r[:, i] = world_r[:, p] @ local[:, i]
        return world_p


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, SOFTPLUS_SHARPNESS * x) / SOFTPLUS_SHARPNESS


class _Objective:
    """Residual vector builder shared by residuals() and lift()."""

    def __init__(self, joints2d: Joints2D, template: SkeletonTemplate,
                 camera: Camera, config: LiftConfig,
                 head_hint: tuple[int, int] = (0, 0),
                 silhouette: np.ndarray | None = None):
        self.params = _Params(template)
        self.camera = camera
        self.config = config
        self.weights = np.array([config.weight_for(c) for c in joints2d.confidence])
        self.active = self.weights > 0.0
        self.obs = joints2d.positions[self.active]
        self.w = self.weights[self.active]
        # camera basis cached for fast projection
        self.right, self.true_up, self.fwd = camera.basis()
        self.eye = camera.position
        self.f_px = camera.f_px
        self.cx, self.cy = camera.size[0] / 2.0, camera.size[1] / 2.0
        self.hint = head_hint
        self.hint_idx = []
        if config.lambda_head_hint > 0:
            neck = JOINT_INDEX[Joint.NECK]
            cols = self.params.joint_rows == neck
            # column order within a joint is x, y, z
            for axis, sgn in ((1, head_hint[0]), (0, head_hint[1])):
                if sgn != 0:
                    sel = np.flatnonzero(cols & (self.params.axis_cols == axis))
                    if len(sel):
                        self.hint_idx.append((6 + sel[0],
                                              sgn * np.deg2rad(15.0)))
        self.sil_dt = None
        if config.lambda_sil > 0 and silhouette is not None:
            from scipy.ndimage import distance_transform_edt
            self.sil_dt = distance_transform_edt(~silhouette)

    def project(self, pts: np.ndarray) -> np.ndarray:
        rel = pts - self.eye
        z = rel @ self.fwd
        px = self.cx + self.f_px * (rel @ self.right) / z
        py = self.cy - self.f_px * (rel @ self.true_up) / z
        return np.stack([px, py], axis=-1)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        return self.residuals_batch(x[None, :])[0]

    def residuals_batch(self, xs: np.ndarray) -> np.ndarray:
        """(B, n) parameter vectors -> (B, R) residual matrix."""
        world = self.params.fk_batch(xs)
        px = self.project(world[:, self.active])
        joint_r = (px - self.obs) * self.w[:, None]
        if self.config.huber_px > 0:
            # pseudo-Huber per joint: a single misassigned confident joint
            # must not dominate the fit
            d2 = self.config.huber_px ** 2
            sq = np.sum(joint_r ** 2, axis=-1)
            rho = 2.0 * d2 * (np.sqrt(1.0 + sq / d2) - 1.0)
            scale = np.sqrt(rho / np.maximum(sq, 1e-12))
            joint_r = joint_r * scale[..., None]
        parts = [joint_r.reshape(len(xs), -1)]
        cfg = self.config
        if cfg.lambda_limit > 0:
            th = xs[:, 6:]
            viol = (_softplus(th - self.params.hi[6:])
                    + _softplus(self.params.lo[6:] - th))
            parts.append(np.sqrt(cfg.lambda_limit) * viol)
        if cfg.lambda_prior > 0:
            parts.append(np.sqrt(cfg.lambda_prior) * xs[:, 6:])
        for idx, target in self.hint_idx:
            parts.append(np.sqrt(cfg.lambda_head_hint)
                         * (xs[:, idx, None] - target))
        if self.sil_dt is not None:
            parts.append(np.stack([self._silhouette_residual(x) for x in xs]))
        return np.concatenate(parts, axis=1)

    def _silhouette_residual(self, x: np.ndarray) -> np.ndarray:
        from .primitives import fit_primitives, sample_surface_points
        body = fit_primitives(self.params.template, self.params.to_pose(x))
        pts, _ = sample_surface_points(body, 128, seed=0)
        px = self.project(pts)
        h, w = self.sil_dt.shape
        xi = np.clip(px[:, 0].astype(int), 0, w - 1)
        yi = np.clip(px[:, 1].astype(int), 0, h - 1)
        return np.sqrt(self.config.lambda_sil) * self.sil_dt[yi, xi] / 16.0

    def joint_errors(self, x: np.ndarray) -> np.ndarray:
        world = self.params.fk(x)
        px = self.project(world)
        full = np.full(N_JOINTS, np.nan)
        obs_full = np.full((N_JOINTS, 2), np.nan)
        obs_full[self.active] = self.obs
        err = np.linalg.norm(px - obs_full, axis=1)
        full[self.active] = err[self.active]
        return full


def jacobian_fd(fun, x: np.ndarray, h: float = 1e-6,
                batch_fun=None) -> np.ndarray:
    """Forward-difference Jacobian of a residual function.

    batch_fun, when given, evaluates all perturbed vectors in one call.
    """
    r0 = fun(x)
    if batch_fun is not None:
        xs = np.tile(x, (len(x), 1))
        xs[np.arange(len(x)), np.arange(len(x))] += h
        return (batch_fun(xs) - r0).T / h
    jac = np.empty((len(r0), len(x)))
    for k in range(len(x)):
        xp = x.copy()
        xp[k] += h
        jac[:, k] = (fun(xp) - r0) / h
    return jac


def _lm_minimize(fun, x0, clip, max_iter, damping_init, tol_step, tol_decrease,
                 trace: list | None = None, batch_fun=None):
    """Damped least squares with strictly monotone step acceptance."""
    x = clip(x0.copy())
    r = fun(x)
    cost = float(r @ r)
    mu = damping_init
    jac = None
    converged = False
    for _ in range(max_iter):
        if jac is None:
            jac = jacobian_fd(fun, x, batch_fun=batch_fun)
            jtj = jac.T @ jac
            g = jac.T @ r
        try:
            step = np.linalg.solve(jtj + mu * np.eye(len(x)), -g)
        except np.linalg.LinAlgError:
            mu *= 10.0
            continue
        x_new = clip(x + step)
        r_new = fun(x_new)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            if trace is not None:
                trace.append((cost, cost_new))
            decrease = cost - cost_new
            step_norm = float(np.linalg.norm(x_new - x))
            x, r, cost = x_new, r_new, cost_new
            jac = None
            mu = max(mu / 3.0, 1e-12)
            if step_norm < tol_step or decrease < tol_decrease:
                converged = True
                break
        else:
            mu *= 2.5
            if mu > 1e8:
                converged = True
                break
    return x, cost, converged


def residuals(pose: Pose, joints2d: Joints2D, template: SkeletonTemplate,
              camera: Camera, config: LiftConfig | None = None,
              head_hint: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Residual vector for a pose: weighted reprojection, limit softplus,
    pose prior (and optional extras per config)."""
    cfg = config or LiftConfig()
    obj = _Objective(joints2d, template, camera, cfg, head_hint)
    return obj.residuals(obj.params.from_pose(pose))


def lift(joints2d: Joints2D, template: SkeletonTemplate, camera: Camera,
         config: LiftConfig | None = None, seed: int = 0,
         head_hint: tuple[int, int] = (0, 0),
         silhouette: np.ndarray | None = None) -> LiftResult:
    """Recover a 3D pose from 2D joints with confidences."""
    cfg = config or LiftConfig()
    n_confident = int(np.sum(joints2d.confidence > 0))
    if n_confident < 6:
        raise UnderconstrainedLiftError(
            f"only {n_confident} joints with confidence > 0 (need >= 6)")
    t0 = time.perf_counter()
    obj = _Objective(joints2d, template, camera, cfg, head_hint, silhouette)
    params = obj.params
    base = params.from_pose(rest_pose(template))

    # start 1: rest; starts 2, 3: rest with the root yawed either way (the two
    # depth interpretations); remaining: noisy perturbations, alternating yaw
    starts = [base]
    for yaw0 in (np.deg2rad(25.0), np.deg2rad(-25.0)):
        x = base.copy()
        x[4] = yaw0
        starts.append(x)
    for i in range(3, cfg.n_starts):
        rng = np.random.default_rng(derive_seed(seed, "lift_start", i))
        x = base.copy()
        x[6:] = x[6:] + rng.normal(0.0, cfg.start_sigma, size=params.n_joint_params)
        yaw = abs(rng.normal(0.0, cfg.start_sigma))
        x[3:6] = np.array([0.0, yaw if i % 2 else -yaw, 0.0])
        starts.append(params.clip(x))

    best = None
    trace: list = []
    evaluated = 0
    for x0 in starts:
        evaluated += 1
        x, cost, conv = _lm_minimize(obj.residuals, x0, params.clip,
                                     cfg.max_iterations, cfg.damping_init,
                                     cfg.tol_step, cfg.tol_decrease, trace,
                                     batch_fun=obj.residuals_batch)
        if best is None or cost < best[1]:
            best = (x, cost, conv)
        if best[1] < 1e-6:
            break

    x, cost, conv = best
    errors = obj.joint_errors(x)
    return LiftResult(params.to_pose(x), cost, errors, conv, evaluated,
                      wall_time_s=time.perf_counter() - t0,
                      diagnostics={"trace_len": len(trace)})
