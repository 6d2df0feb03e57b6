"""Part-aware sketch augmentation: per-part translation, per-node jitter,
occlusion-weighted stroke hiding, and random stroke/part hiding.

Hidden strokes are flagged rather than deleted so part labels and occlusion
metadata survive for supervision. The whole transform is a pure function of
(sketch, config, seed); operations run in the fixed order
translate -> jitter -> hide_occluded -> hide_random.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .render import Stroke, VectorSketch

SEVERITY_MULTIPLIERS = {"light": 0.9, "default": 1.0, "heavy": 1.1}


@dataclass(frozen=True)
class AugmentConfig:
    """Gaussian offsets in canvas pixels (defaults tuned for a 512 canvas)."""

    translate_mu: tuple[float, float] = (0.0, 0.0)
    translate_sigma: float = 6.0        # per body part
    jitter_mu: tuple[float, float] = (0.0, 0.0)
    jitter_sigma: float = 1.5           # per node
    p_hide_random: float = 0.08         # per visible stroke
    occlusion_hide_gain: float = 0.9    # hide prob = min(1, gain * o_s)
    severity: float = 1.0

    def __post_init__(self):
        if self.translate_sigma < 0 or self.jitter_sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.p_hide_random <= 1.0:
            raise ValueError("p_hide_random must be in [0, 1]")
        if self.occlusion_hide_gain < 0 or self.severity <= 0:
            raise ValueError("gain must be >= 0 and severity > 0")

    @classmethod
    def preset(cls, name: str) -> "AugmentConfig":
        return cls().with_severity(SEVERITY_MULTIPLIERS[name])

    def with_severity(self, m: float) -> "AugmentConfig":
        """Severity scales the spread and hide knobs, not the means."""
        return replace(self, translate_sigma=self.translate_sigma * m,
                       jitter_sigma=self.jitter_sigma * m,
                       p_hide_random=min(1.0, self.p_hide_random * m),
                       occlusion_hide_gain=self.occlusion_hide_gain * m,
                       severity=m)

    def to_dict(self) -> dict:
        return {
            "translate_mu": list(self.translate_mu),
            "translate_sigma": self.translate_sigma,
            "jitter_mu": list(self.jitter_mu),
            "jitter_sigma": self.jitter_sigma,
            "p_hide_random": self.p_hide_random,
            "occlusion_hide_gain": self.occlusion_hide_gain,
            "severity": self.severity,
        }


def _smooth_displacement(disp: np.ndarray) -> np.ndarray:
    """3-tap moving average with clamped ends."""
    if len(disp) < 3:
        return disp
    padded = np.concatenate([disp[:1], disp, disp[-1:]])
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def translate_part(sketch: VectorSketch, part: str, offset: np.ndarray) -> VectorSketch:
    """Shift every stroke of one part by a shared 2D offset. Absent part: no-op."""
    out = sketch.copy()
    for s in out.strokes:
        if s.part == part:
            s.points = s.points + offset
    return out


def jitter_stroke(stroke: Stroke, mu, sigma: float, rng: np.random.Generator) -> Stroke:
    """Independent Gaussian node offsets, smoothed to stay plausibly hand-drawn."""
    out = stroke.copy()
    closed = stroke.is_closed()
    disp = rng.normal(0.0, 1.0, size=out.points.shape) * sigma + np.asarray(mu)
    disp = _smooth_displacement(disp)
    out.points = out.points + disp
    if closed:
        out.points[-1] = out.points[0]
    return out


def hide_occluded(sketch: VectorSketch, gain: float, rng: np.random.Generator) -> VectorSketch:
    """Hide each stroke with probability min(1, gain * o_s)."""
    out = sketch.copy()
    for s in out.strokes:
        if rng.random() < min(1.0, gain * s.occlusion):
            s.hidden = True
    return out


def hide_random(sketch: VectorSketch, p: float, rng: np.random.Generator) -> VectorSketch:
    """Hide each visible stroke with probability p; with probability p/2 also
    hide one whole body part (artists forget entire parts, not just lines)."""
    out = sketch.copy()
    for s in out.strokes:
        if not s.hidden and rng.random() < p:
            s.hidden = True
    if rng.random() < p / 2.0:
        parts = sorted({s.part for s in out.strokes})
        if parts:
            drop = parts[int(rng.integers(len(parts)))]
            for s in out.strokes:
                if s.part == drop:
                    s.hidden = True
    return out


def augment_sketch(sketch: VectorSketch, config: AugmentConfig, seed: int) -> VectorSketch:
    rng = np.random.default_rng(seed)
    out = sketch.copy()
    # one shared offset per part present, drawn in sorted-part order
    for part in sorted({s.part for s in out.strokes}):
        offset = rng.normal(0.0, 1.0, size=2) * config.translate_sigma \
            + np.asarray(config.translate_mu)
        for s in out.strokes:
            if s.part == part:
                s.points = s.points + offset
    out.strokes = [jitter_stroke(s, config.jitter_mu, config.jitter_sigma, rng)
                   for s in out.strokes]
    out = hide_occluded(out, config.occlusion_hide_gain, rng)
    out = hide_random(out, config.p_hide_random, rng)
    return out
