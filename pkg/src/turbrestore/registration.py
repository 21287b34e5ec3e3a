"""Dense non-rigid registration from DT-CWT subband phase differences.

Displacements follow one convention throughout the package: a motion
``(u, v)`` at pixel ``x`` says that content at ``x - (u, v)`` in the source
appears at ``x`` in the target, so ``warp_frame(src, motion)`` approximates
the target.  ``u`` is horizontal (columns), ``v`` vertical (rows).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import dtcwt
from .errors import InvalidInputError


@dataclass
class MotionField:
    u: np.ndarray
    v: np.ndarray
    confidence: np.ndarray
    levels_used: tuple = ()

    @property
    def magnitude(self):
        return np.hypot(self.u, self.v)

    @classmethod
    def zeros(cls, shape):
        z = np.zeros(shape)
        return cls(z, z.copy(), np.ones(shape))


@dataclass
class RegistrationOptions:
    levels: int = 4
    coarse_only: bool = False
    max_displacement: float = 10.0
    window: int = 5


@dataclass
class RegistrationResult:
    warped: np.ndarray
    motion: MotionField
    residual_error: float
    pyramid: dtcwt.Pyramid | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# interpolation helpers
# ---------------------------------------------------------------------------

def _reflect(idx, n):
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def _bilinear(stack, ys, xs):
    """Sample ``stack`` (..., H, W) at float positions with symmetric extension."""
    h, w = stack.shape[-2:]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.astype(np.intp)
    x0 = x0.astype(np.intp)
    ya, yb = _reflect(y0, h), _reflect(y0 + 1, h)
    xa, xb = _reflect(x0, w), _reflect(x0 + 1, w)
    top = stack[..., ya, xa] * (1 - fx) + stack[..., ya, xb] * fx
    bot = stack[..., yb, xa] * (1 - fx) + stack[..., yb, xb] * fx
    return top * (1 - fy) + bot * fy


def _resample_grid(img, shape, scale):
    """Resize a field by a dyadic ``scale`` (output/input) with block-centre alignment."""
    ys = (np.arange(shape[0]) + 0.5) / scale - 0.5
    xs = (np.arange(shape[1]) + 0.5) / scale - 0.5
    return _bilinear(img, ys[:, None], xs[None, :])


def warp_frame(frame, motion: MotionField):
    """Backward-warp ``frame``: ``out(x) = frame(x - motion(x))``, bilinear."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != motion.u.shape:
        raise InvalidInputError(
            f"frame {frame.shape} and motion {motion.u.shape} differ in size")
    h, w = frame.shape
    ys = np.arange(h)[:, None] - motion.v
    xs = np.arange(w)[None, :] - motion.u
    return _bilinear(frame, ys, xs)


def _shift_subband(band, u, v, level, freqs):
    """Coefficients of the source shifted by (u, v) full-res pixels.

    Each complex subband is demodulated by its centre frequency so that the
    remaining envelope can be interpolated, then remodulated.
    """
    scale = 1 << level
    h, w = band.shape[-2:]
    ky = np.arange(h)[:, None]
    kx = np.arange(w)[None, :]
    sy = ky - v / scale
    sx = kx - u / scale
    omega = freqs * scale
    out = np.empty_like(band)
    for k in range(band.shape[0]):
        ox, oy = omega[k]
        env = band[k] * np.exp(1j * (ox * kx + oy * ky))
        out[k] = _bilinear(env, sy, sx) * np.exp(-1j * (ox * sx + oy * sy))
    return out


def _fill_low_confidence(u, v, conf, thresh=0.05):
    weak = conf < thresh
    if not weak.any() or weak.all():
        return u, v
    wsum = ndimage.gaussian_filter(conf, 2.0, mode="nearest")
    safe = np.maximum(wsum, 1e-12)
    uf = ndimage.gaussian_filter(conf * u, 2.0, mode="nearest") / safe
    vf = ndimage.gaussian_filter(conf * v, 2.0, mode="nearest") / safe
    return np.where(weak, uf, u), np.where(weak, vf, v)


def _binomial(n):
    k = np.array([1.0])
    for _ in range(n - 1):
        k = np.convolve(k, [1.0, 1.0])
    return k / k.sum()


def _window_sum(stack, window):
    # separable binomial weights over a window x window neighbourhood
    k = _binomial(window)
    out = ndimage.convolve1d(stack, k, axis=-1, mode="reflect")
    return ndimage.convolve1d(out, k, axis=-2, mode="reflect")


def _solve_level(src_band, ref_band, u, v, level, window, max_step):
    freqs = dtcwt.center_frequencies(level)
    shifted = _shift_subband(src_band, u, v, level, freqs)
    cross = ref_band * np.conj(shifted)
    dphi = np.angle(cross)
    wgt = np.abs(cross)
    fx = freqs[:, 0, None, None]
    fy = freqs[:, 1, None, None]
    terms = np.stack([
        (wgt * fx * fx).sum(0), (wgt * fx * fy).sum(0), (wgt * fy * fy).sum(0),
        (wgt * fx * dphi).sum(0), (wgt * fy * dphi).sum(0),
    ])
    terms = _window_sum(terms, window)
    a11, a12, a22, b1, b2 = terms
    trace = a11 + a22
    ref_level = np.median(trace)
    lam = 1e-3 * ref_level + 1e-12
    a11 = a11 + lam
    a22 = a22 + lam
    det = a11 * a22 - a12 * a12
    du = (a22 * b1 - a12 * b2) / det
    dv = (a11 * b2 - a12 * b1) / det
    du = np.clip(du, -max_step, max_step)
    dv = np.clip(dv, -max_step, max_step)
    conf = trace / (trace + ref_level + 1e-12)
    return du, dv, conf


def _pool_to(img, shape):
    by, bx = img.shape[0] // shape[0], img.shape[1] // shape[1]
    return img.reshape(shape[0], by, shape[1], bx).mean(axis=(1, 3))


def estimate_motion(src: dtcwt.Pyramid, ref: dtcwt.Pyramid, coarse_only=False,
                    max_displacement=10.0, window=5, initial=None) -> MotionField:
    """Coarse-to-fine motion from ``src`` toward ``ref``.

    With ``coarse_only`` only the two coarsest levels are read.  ``initial``
    is an optional full-resolution ``(u, v)`` starting guess.
    """
    if src.levels != ref.levels or src.padded_size != ref.padded_size:
        raise InvalidInputError("pyramids differ in size or depth")
    top = src.levels
    used = tuple(range(top, max(top - 2, 0), -1)) if coarse_only \
        else tuple(range(top, 0, -1))

    shape = src.highpass[top - 1].shape[1:]
    u = np.zeros(shape)
    v = np.zeros(shape)
    if initial is not None:
        u0, v0 = (np.broadcast_to(np.asarray(c, dtype=np.float64), src.original_size)
                  for c in initial)
        u = _pool_to(dtcwt.pad_frame(u0, top), shape)
        v = _pool_to(dtcwt.pad_frame(v0, top), shape)
    conf = np.zeros(shape)
    for level in used:
        shape = src.highpass[level - 1].shape[1:]
        if u.shape != shape:
            u = _resample_grid(u, shape, 2.0)
            v = _resample_grid(v, shape, 2.0)
        freqs = dtcwt.center_frequencies(level)
        # stay within one phase wrap of the highest-frequency orientation
        max_step = 0.9 * np.pi / np.abs(freqs).max()
        du, dv, conf = _solve_level(src.highpass[level - 1], ref.highpass[level - 1],
                                    u, v, level, window, max_step)
        u = np.clip(u + du, -max_displacement, max_displacement)
        v = np.clip(v + dv, -max_displacement, max_displacement)
        u, v = _fill_low_confidence(u, v, conf)

    scale = float(1 << used[-1])
    full = src.padded_size
    u = _resample_grid(u, full, scale)
    v = _resample_grid(v, full, scale)
    conf = np.clip(_resample_grid(conf, full, scale), 0.0, 1.0)
    h, w = src.original_size
    return MotionField(u[:h, :w], v[:h, :w], conf[:h, :w], used)


def residual_error(warped, reference, mask=None) -> float:
    diff = np.abs(np.asarray(warped) - np.asarray(reference))
    if mask is None:
        return float(diff.mean())
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0.0
    return float(diff[mask].mean())


def register(frame, reference, opts: RegistrationOptions | None = None, bg_mask=None,
             frame_pyr=None, ref_pyr=None) -> RegistrationResult:
    """Non-rigidly register ``frame`` onto ``reference``.

    Precomputed pyramids may be passed to avoid transforming twice.  The
    residual is the mean absolute difference on ``bg_mask`` (everywhere if
    omitted).
    """
    opts = opts or RegistrationOptions()
    frame = np.asarray(frame, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if frame.shape != reference.shape:
        raise InvalidInputError(f"frame {frame.shape} vs reference {reference.shape}")
    if frame_pyr is None:
        frame_pyr = dtcwt.forward(frame, opts.levels)
    if ref_pyr is None:
        ref_pyr = dtcwt.forward(reference, opts.levels)
    motion = estimate_motion(frame_pyr, ref_pyr, opts.coarse_only,
                             opts.max_displacement, opts.window)
    warped = warp_frame(frame, motion)
    err = residual_error(warped, reference, bg_mask)
    return RegistrationResult(warped, motion, err, frame_pyr)
