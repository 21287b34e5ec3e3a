"""Recursive reference update and recursive DT-CWT coefficient fusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import dtcwt
from .errors import InvalidInputError

_SQUARE = np.ones((3, 3), dtype=bool)


@dataclass
class FusionState:
    """Recursion carriers R_{t-1}, a_{t-1}, d_{t-1} and the previous BG mask.

    With ``restart`` every location also counts the background frames seen
    since it was last foreground (``n_R`` per pixel, ``n_low``/``n_d`` per
    coefficient).  A location returning to background restarts its history
    from the current observation and then averages with weight
    ``max(alpha, 1/n)``, i.e. a running mean that settles into the
    exponential recursion after ``1/alpha`` frames.
    """

    R_prev: np.ndarray
    a_prev: np.ndarray  # (4, h, w) lowpass trees
    d_prev: list  # complex (6, h_l, w_l) per level
    alpha: float
    M_B_prev: np.ndarray
    original_size: tuple = ()
    restart: bool = False
    n_R: np.ndarray | None = None
    n_low: np.ndarray | None = None
    n_d: list | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if self.restart and self.n_R is None:
            self.n_R = np.ones(self.R_prev.shape, dtype=np.int32)
            self.n_low = np.ones(self.a_prev.shape[1:], dtype=np.int32)
            self.n_d = [np.ones(d.shape[1:], dtype=np.int32) for d in self.d_prev]

    @property
    def levels(self):
        return len(self.d_prev)

    def pyramid(self) -> dtcwt.Pyramid:
        return dtcwt.Pyramid(self.a_prev, list(self.d_prev), tuple(self.original_size))

    def nbytes(self):
        n = (self.R_prev.nbytes + self.a_prev.nbytes + self.M_B_prev.nbytes
             + sum(d.nbytes for d in self.d_prev))
        if self.restart:
            n += self.n_R.nbytes + self.n_low.nbytes + sum(c.nbytes for c in self.n_d)
        return n


def init_state(frame, levels, alpha, restart=False) -> FusionState:
    """Bootstrap from the first frame: R_1 = X_1, coefficients of X_1, all background."""
    frame = np.asarray(frame, dtype=np.float64)
    pyr = dtcwt.forward(frame, levels)
    return FusionState(frame.copy(), pyr.lowpass.copy(), [h.copy() for h in pyr.highpass],
                       alpha, np.ones(frame.shape, dtype=bool), frame.shape, restart)


def running_alpha(count, alpha):
    """Per-location weight ``max(alpha, 1/n)`` (1 where the history restarts)."""
    return np.maximum(alpha, 1.0 / np.maximum(count, 1))


def advance_counts(count, background):
    """Count background frames; foreground resets the count to zero."""
    return np.where(background, count + 1, 0).astype(count.dtype)


def composite_objects(objects, shape):
    """Per-pixel average of the object layers covering each pixel; returns (image, covered)."""
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    for obj in objects:
        m = np.asarray(obj.mask, dtype=bool)
        acc[m] += obj.O[m]
        cnt[m] += 1
    covered = cnt > 0
    acc[covered] /= cnt[covered]
    return acc, covered


def update_reference(R_prev, X_t, M_B, objects=(), alpha=1.0 / 51):
    """``R_t = M_B [(1 - a) R_prev + a X_t] + (1 - M_B) sum_k O_k``.

    Overlapping layers are averaged.  Foreground pixels that no layer covers
    have no object history and take ``X_t``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if not (np.all(alpha > 0.0) and np.all(alpha <= 1.0)):
        raise InvalidInputError("alpha must lie in (0, 1]")
    R_prev = np.asarray(R_prev, dtype=np.float64)
    X_t = np.asarray(X_t, dtype=np.float64)
    M_B = np.asarray(M_B, dtype=bool)
    if R_prev.shape != X_t.shape or M_B.shape != X_t.shape:
        raise InvalidInputError("reference, frame and mask differ in size")
    obj, covered = composite_objects(objects, X_t.shape)
    fg = np.where(covered, obj, X_t)
    return np.where(M_B, (1.0 - alpha) * R_prev + alpha * X_t, fg)


def fuse_lowpass(a_prev, v_t, v_R, m_L, alpha):
    m = np.asarray(m_L, dtype=np.float64)
    return m * ((1.0 - alpha) * a_prev + alpha * v_t) + (1.0 - m) * v_R


def _unit(z, fallback):
    mod = np.abs(z)
    ok = mod > 0
    return np.where(ok, z / np.where(ok, mod, 1.0), fallback)


def fuse_phase(d_prev, w_t, w_R, m_l, alpha):
    """Unit-modulus phase of the recursive complex blend (background) or of ``w_R``."""
    blend = (1.0 - alpha) * d_prev + alpha * w_t
    # exact cancellation keeps the previous phase, then falls back to 1
    prev = _unit(d_prev, 1.0 + 0j)
    m = np.asarray(m_l, dtype=bool)
    return np.where(m, _unit(blend, prev), _unit(w_R, 1.0 + 0j))


def fuse_magnitude(d_prev_mag, w_t_mag, m_l, alpha):
    """``max(beta m |d_prev|, |w_t|)`` with ``beta = 1 - alpha [|w_t| < med |w_t|]``.

    The median is taken over the whole subband passed in.
    """
    w_t_mag = np.asarray(w_t_mag, dtype=np.float64)
    med = np.median(w_t_mag)
    Q = w_t_mag < med
    beta = 1.0 - alpha * Q
    m = np.asarray(m_l, dtype=np.float64)
    return np.maximum(beta * m * d_prev_mag, w_t_mag)


def _grow_foreground(masks, margin):
    grow = lambda m: 1.0 - ndimage.binary_dilation(m == 0, _SQUARE, margin)
    return dtcwt.SubbandMask([grow(m) for m in masks.levels], grow(masks.lowpass))


def _check(state, pyr):
    if pyr.levels != state.levels or pyr.lowpass.shape != state.a_prev.shape:
        raise InvalidInputError("pyramid does not match the fusion state")
    for a, b in zip(pyr.highpass, state.d_prev):
        if a.shape != b.shape:
            raise InvalidInputError("pyramid does not match the fusion state")


def fuse_frame(state: FusionState, pyr_t: dtcwt.Pyramid, pyr_R: dtcwt.Pyramid, M_B_t,
               M_B_prev=None, fg_margin=0):
    """Fuse the registered frame into the running coefficients; returns (Y_t, state').

    ``state`` is updated in place (and returned).  ``fg_margin`` grows the
    foreground of every subband mask by that many coefficients, so that
    coefficients whose support straddles an object boundary are taken from
    the reference.
    """
    _check(state, pyr_t)
    _check(state, pyr_R)
    M_B_t = np.asarray(M_B_t, dtype=bool)
    M_B_prev = state.M_B_prev if M_B_prev is None else np.asarray(M_B_prev, dtype=bool)
    masks = dtcwt.resize_mask(M_B_t & M_B_prev, state.levels)
    if fg_margin > 0:
        masks = _grow_foreground(masks, fg_margin)

    a_prev = state.a_prev
    alpha_L = state.alpha
    if state.restart:
        state.n_low = advance_counts(state.n_low, masks.lowpass > 0)
        alpha_L = running_alpha(state.n_low, state.alpha)
        a_prev = np.where(state.n_low == 1, pyr_t.lowpass, a_prev)
    a_t = fuse_lowpass(a_prev, pyr_t.lowpass, pyr_R.lowpass, masks.lowpass, alpha_L)

    d_t = []
    for level in range(state.levels):
        d_prev = state.d_prev[level]
        w_t = pyr_t.highpass[level]
        w_R = pyr_R.highpass[level]
        m = masks.levels[level]
        alpha = state.alpha
        if state.restart:
            state.n_d[level] = advance_counts(state.n_d[level], m > 0)
            alpha = running_alpha(state.n_d[level], state.alpha)
            d_prev = np.where(state.n_d[level] == 1, w_t, d_prev)
        phase = fuse_phase(d_prev, w_t, w_R, m, alpha)
        mag = np.empty(w_t.shape)
        for k in range(w_t.shape[0]):
            mag[k] = fuse_magnitude(np.abs(d_prev[k]), np.abs(w_t[k]), m, alpha)
        d_t.append(mag * phase)

    Y = dtcwt.inverse(dtcwt.Pyramid(a_t, d_t, pyr_t.original_size))
    state.a_prev = a_t
    state.d_prev = d_t
    state.M_B_prev = M_B_t.copy()
    return Y, state
