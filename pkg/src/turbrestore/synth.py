"""Synthetic turbulence sequences with known ground truth.

Each frame is the clean scene (optionally with a pasted moving object) warped by
a smooth random displacement field, blurred and corrupted by Gaussian noise.
The field is white noise low-passed by a Gaussian of the correlation length,
normalised to zero mean and unit variance, and evolved in time as an AR(1)
process.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .registration import MotionField, warp_frame


@dataclass
class MovingObject:
    patch: np.ndarray
    start: tuple  # (x, y) of the patch's top-left corner at frame 0
    velocity: tuple = (4.0, 0.0)  # px / frame

    def position(self, t):
        return (self.start[0] + self.velocity[0] * t, self.start[1] + self.velocity[1] * t)


@dataclass
class TurbulenceSpec:
    """Generator parameters.

    ``amplitude`` is twice the per-component standard deviation of the
    displacement, so the RMS displacement length is ``amplitude / sqrt(2)``.
    ``temporal_correlation`` is the AR(1) time constant in frames.
    """

    amplitude: float = 3.0
    correlation_length: float = 20.0
    temporal_correlation: float = 1.0
    blur_sigma: float = 0.5
    noise_sigma: float = 0.01
    seed: int = 0
    moving_object: MovingObject | None = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.correlation_length <= 0 or self.temporal_correlation <= 0:
            raise ValueError("correlation lengths must be > 0")


@dataclass
class SynthSequence:
    frames: np.ndarray  # (n, H, W) observed
    fields: np.ndarray  # (n, 2, H, W) true (u, v)
    masks: np.ndarray  # (n, H, W) bool, object footprint (all False without object)
    scenes: np.ndarray  # (n, H, W) undistorted scene incl. object
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))  # (n, 2) x, y

    def __len__(self):
        return len(self.frames)


def _unit_field(rng, shape, corr):
    noise = rng.standard_normal((2,) + shape)
    out = np.stack([ndimage.gaussian_filter(n, corr, mode="wrap") for n in noise])
    # zero mean, so the RMS displacement is set by the amplitude alone
    out -= out.mean(axis=(1, 2), keepdims=True)
    out /= out.std(axis=(1, 2), keepdims=True)
    return out


def displacement_fields(shape, spec: TurbulenceSpec, n_frames, rng=None):
    """The (n, 2, H, W) sequence of true displacements."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    rho = float(np.exp(-1.0 / spec.temporal_correlation))
    scale = spec.amplitude / 2.0
    out = np.empty((n_frames, 2) + tuple(shape))
    state = _unit_field(rng, shape, spec.correlation_length)
    for t in range(n_frames):
        if t:
            state = rho * state + np.sqrt(1 - rho * rho) * _unit_field(
                rng, shape, spec.correlation_length)
        out[t] = scale * state
    return out


def paste(scene, patch, x, y):
    """Paste ``patch`` with its top-left at integer-rounded (x, y); returns (scene, mask)."""
    out = scene.copy()
    mask = np.zeros(scene.shape, dtype=bool)
    x, y = int(round(x)), int(round(y))
    ph, pw = patch.shape
    y0, y1 = max(y, 0), min(y + ph, scene.shape[0])
    x0, x1 = max(x, 0), min(x + pw, scene.shape[1])
    if y1 > y0 and x1 > x0:
        out[y0:y1, x0:x1] = patch[y0 - y:y1 - y, x0 - x:x1 - x]
        mask[y0:y1, x0:x1] = True
    return out, mask


def synth_sequence(truth, spec: TurbulenceSpec, n_frames: int) -> SynthSequence:
    truth = np.asarray(truth, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    fields = displacement_fields(truth.shape, spec, n_frames, rng)
    n = n_frames
    frames = np.empty((n,) + truth.shape)
    scenes = np.empty_like(frames)
    masks = np.zeros(frames.shape, dtype=bool)
    centers = np.full((n, 2), np.nan)
    obj = spec.moving_object
    for t in range(n):
        scene = truth
        if obj is not None:
            x, y = obj.position(t)
            scene, masks[t] = paste(truth, obj.patch, x, y)
            ph, pw = obj.patch.shape
            centers[t] = (round(x) + (pw - 1) / 2, round(y) + (ph - 1) / 2)
        scenes[t] = scene
        img = scene
        if spec.amplitude > 0:
            img = warp_frame(img, MotionField(fields[t, 0], fields[t, 1], None))
        if spec.blur_sigma > 0:
            img = ndimage.gaussian_filter(img, spec.blur_sigma, mode="reflect")
        if spec.noise_sigma > 0:
            img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
        frames[t] = img if spec.noise_sigma == 0 else np.clip(img, 0.0, 1.0)
    return SynthSequence(frames, fields, masks, scenes, centers)


def test_scene(shape=(256, 256), seed=0):
    """Procedural natural-looking scene in [0, 1]: 1/f texture plus a few edges."""
    rng = np.random.default_rng(seed)
    h, w = shape
    img = np.zeros(shape)
    for sigma, weight in ((16, 1.0), (6, 0.6), (2.5, 0.35), (1.0, 0.2)):
        img += weight * ndimage.gaussian_filter(rng.standard_normal(shape), sigma,
                                                mode="reflect") * sigma
    img = (img - img.min()) / (img.max() - img.min())
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(6):
        y0, x0 = rng.integers(0, h - h // 6), rng.integers(0, w - w // 6)
        rh, rw = rng.integers(h // 12, h // 4), rng.integers(w // 12, w // 4)
        box = (yy >= y0) & (yy < y0 + rh) & (xx >= x0) & (xx < x0 + rw)
        img = np.where(box, 0.5 * img + 0.5 * rng.uniform(0.1, 0.9), img)
    return 0.1 + 0.8 * img


def textured_patch(size=32, seed=1, low=0.05, high=0.35):
    rng = np.random.default_rng(seed)
    p = ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.5)
    p = (p - p.min()) / (p.max() - p.min())
    return low + (high - low) * p
