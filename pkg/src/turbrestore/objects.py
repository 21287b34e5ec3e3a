"""Moving-object layers: affine motion between frames and the recursive layer update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import dtcwt, registration
from .errors import DegenerateWarpError, InvalidInputError

MIN_DET = 0.1


@dataclass
class AffineEstimate:
    """``p_t = A @ p_prev + T`` with points as (x, y)."""

    A: np.ndarray
    T: np.ndarray
    fallback: bool = False
    iterations: int = 0


@dataclass
class ObjectLayer:
    O: np.ndarray
    mask: np.ndarray
    track_id: int
    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    T: np.ndarray = field(default_factory=lambda: np.zeros(2))


def _centroid(mask):
    ys, xs = np.nonzero(mask)
    return np.array([xs.mean(), ys.mean()])


def _sample_zero(img, ys, xs):
    """Bilinear sampling treating everything outside ``img`` as zero."""
    h, w = img.shape
    padded = np.zeros((h + 2, w + 2), dtype=img.dtype)
    padded[1:-1, 1:-1] = img
    ys = np.clip(ys + 1, 0, h + 1)
    xs = np.clip(xs + 1, 0, w + 1)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w)
    fy = ys - y0
    fx = xs - x0
    top = padded[y0, x0] * (1 - fx) + padded[y0, x0 + 1] * fx
    bot = padded[y0 + 1, x0] * (1 - fx) + padded[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def warp_object(O_prev, A, T):
    """Backward affine warp: ``out(x) = O_prev(A^-1 (x - T))``, zero outside."""
    A = np.asarray(A, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64).reshape(2)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(T))):
        raise InvalidInputError("affine parameters must be finite")
    if np.linalg.det(A) <= MIN_DET:
        raise DegenerateWarpError(f"det(A) = {np.linalg.det(A):.3g} <= {MIN_DET}")
    O_prev = np.asarray(O_prev, dtype=np.float64)
    h, w = O_prev.shape
    Ainv = np.linalg.inv(A)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - T[0], yy - T[1]
    sx = Ainv[0, 0] * dx + Ainv[0, 1] * dy
    sy = Ainv[1, 0] * dx + Ainv[1, 1] * dy
    return _sample_zero(O_prev, sy, sx)


def update_object(O_prev, A, T, X_t, fg_mask, alpha_obj, prev_mask=None):
    """Recursive object layer: ``fg * ((1 - a) * warp(O_prev) + a * X_t)``.

    Pixels of the new mask that the warped previous support does not reach
    (coverage < 0.5) have no history and take ``X_t`` directly; partially
    covered pixels are renormalised by their coverage.
    """
    if not 0.0 < alpha_obj <= 1.0:
        raise InvalidInputError("alpha_obj must lie in (0, 1]")
    X_t = np.asarray(X_t, dtype=np.float64)
    fg = np.asarray(fg_mask, dtype=np.float64)
    if O_prev is None:
        return fg * X_t
    O_prev = np.asarray(O_prev, dtype=np.float64)
    if prev_mask is None:
        prev_mask = O_prev != 0
    if not np.any(prev_mask):
        return fg * X_t
    warped = warp_object(O_prev * prev_mask, A, T)
    cover = warp_object(np.asarray(prev_mask, dtype=np.float64), A, T)
    covered = cover >= 0.5
    hist = np.where(covered, warped / np.where(covered, cover, 1.0), X_t)
    return fg * ((1.0 - alpha_obj) * hist + alpha_obj * X_t)


# ---------------------------------------------------------------------------
# affine estimation
# ---------------------------------------------------------------------------

def _fit_affine(src_pts, dst_pts, weights):
    """Weighted least squares ``dst = A src + T``; returns (A, T, residuals)."""
    P = np.column_stack([src_pts, np.ones(len(src_pts))])
    w = np.sqrt(weights)[:, None]
    sol, *_ = np.linalg.lstsq(P * w, dst_pts * w, rcond=None)
    A, T = sol[:2].T, sol[2]
    res = np.linalg.norm(P @ sol - dst_pts, axis=1)
    return A, T, res


def _refine_intensity(prev, cur, mask_prev, A, T, max_iter=10, tol=1e-3, smooth=1.0):
    """Gauss-Newton on ``sum_{p in mask_prev} (cur(A p + T) - prev(p))^2``.

    Returns (A, T), or None if the system is singular or the result leaves
    the admissible set.
    """
    prev = ndimage.gaussian_filter(prev, smooth)
    cur = ndimage.gaussian_filter(cur, smooth)
    gy, gx = np.gradient(cur)
    ys, xs = np.nonzero(mask_prev)
    x, y = xs.astype(np.float64), ys.astype(np.float64)
    ref = prev[ys, xs]
    p = np.concatenate([(A - np.eye(2)).ravel(), T])
    for _ in range(max_iter):
        Ak = np.eye(2) + p[:4].reshape(2, 2)
        coords = np.vstack([Ak[1, 0] * x + Ak[1, 1] * y + p[5],
                            Ak[0, 0] * x + Ak[0, 1] * y + p[4]])
        val, ix, iy = (ndimage.map_coordinates(im, coords, order=1, mode="nearest")
                       for im in (cur, gx, gy))
        J = np.column_stack([ix * x, ix * y, iy * x, iy * y, ix, iy])
        H = J.T @ J
        if np.linalg.cond(H) > 1e12:
            return None
        dp = np.linalg.solve(H, J.T @ (ref - val))
        p += dp
        if not np.all(np.isfinite(p)):
            return None
        if np.abs(dp).max() < tol:
            break
    A = np.eye(2) + p[:4].reshape(2, 2)
    if np.linalg.det(A) <= MIN_DET:
        return None
    return A, p[4:].copy()


def _well_spread(pts, min_points):
    if len(pts) < min_points:
        return False
    cov = np.cov(pts.T)
    return np.linalg.eigvalsh(cov)[0] > 1.0


def estimate_affine(pyr_t: dtcwt.Pyramid, pyr_prev: dtcwt.Pyramid, mask_t, mask_prev,
                    max_iter=2, erode=3, min_points=12) -> AffineEstimate:
    """Affine motion of an object between two frames.

    The subband phase differences give a dense displacement field from the
    previous pyramid toward the current one, started at the centroid
    translation; an affine map is then fitted to it over the interior of the
    current mask, with one pass of outlier trimming.  A second pass restarts
    the phase estimate from the fitted map.  The phase field is smooth and
    slightly underestimates displacement differences across the object, so
    the fit is finished by Gauss-Newton on the reconstructed intensities.
    Masks too small or too thin for a 6-parameter fit fall back to the
    centroid translation (``fallback=True``).
    """
    mask_t = np.asarray(mask_t, dtype=bool)
    mask_prev = np.asarray(mask_prev, dtype=bool)
    if not mask_t.any() or not mask_prev.any():
        raise InvalidInputError("object masks must be non-empty")
    shift = _centroid(mask_t) - _centroid(mask_prev)
    fallback = AffineEstimate(np.eye(2), shift, fallback=True)

    core = ndimage.binary_erosion(mask_t, iterations=erode) if erode else mask_t
    if not core.any():
        core = mask_t
    ys, xs = np.nonzero(core)
    dst = np.column_stack([xs, ys]).astype(np.float64)
    if not _well_spread(dst, min_points):
        return fallback

    h, w = mask_t.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    init = (np.full((h, w), shift[0]), np.full((h, w), shift[1]))
    A, T = np.eye(2), shift
    for it in range(max_iter):
        motion = registration.estimate_motion(pyr_prev, pyr_t, initial=init)
        src = dst - np.column_stack([motion.u[ys, xs], motion.v[ys, xs]])
        wts = np.maximum(motion.confidence[ys, xs], 1e-6)
        A, T, res = _fit_affine(src, dst, wts)
        keep = res <= max(3.0 * np.median(res), 0.5)
        if keep.sum() >= min_points and not keep.all():
            A, T, _ = _fit_affine(src[keep], dst[keep], wts[keep])
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(T))):
            return fallback
        # restart from the fitted map: displacement x - A^-1 (x - T)
        if np.linalg.det(A) <= MIN_DET:
            return fallback
        Ainv = np.linalg.inv(A)
        sx = Ainv[0, 0] * (xx - T[0]) + Ainv[0, 1] * (yy - T[1])
        sy = Ainv[1, 0] * (xx - T[0]) + Ainv[1, 1] * (yy - T[1])
        init = (xx - sx, yy - sy)
    refined = _refine_intensity(dtcwt.inverse(pyr_prev), dtcwt.inverse(pyr_t), mask_prev, A, T)
    if refined is not None:
        A, T = refined
    return AffineEstimate(A, T, fallback=False, iterations=max_iter)
