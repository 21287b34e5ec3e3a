"""Per-pixel adaptive Gaussian mixture background model.

Observations are 2-vectors (intensity, registration motion magnitude); each
mode keeps independent per-channel variances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, ModelStateError

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class GmmParams:
    n_modes: int = 3
    rho: float = 0.02
    match_sigma: float = 2.5
    var_floor: float = (2.0 / 255.0) ** 2
    # turbulence alone moves pixels by ~2 px, so motion modes stay broad
    motion_var_floor: float = 4.0
    init_var: float = 0.05 ** 2
    init_motion_var: float = 4.0
    # BG if mixture score > median score * bg_ratio
    bg_ratio: float = 0.03
    min_area: int = 25


@dataclass
class GmmModel:
    weight: np.ndarray  # (K, H, W)
    mean: np.ndarray  # (K, 2, H, W)
    var: np.ndarray  # (K, 2, H, W)
    count: np.ndarray  # (K, H, W) matches seen, drives the warm-up rate
    params: GmmParams
    updates: int = 0

    @property
    def shape(self):
        return self.weight.shape[1:]

    def nbytes(self):
        return self.weight.nbytes + self.mean.nbytes + self.var.nbytes + self.count.nbytes


@dataclass
class FgObject:
    mask: np.ndarray
    centroid: tuple  # (x, y)
    area: int
    bbox: tuple  # (row0, col0, row1, col1), end-exclusive


def _observation(frame, motion_mag):
    frame = np.asarray(frame, dtype=np.float64)
    if motion_mag is None:
        motion_mag = np.zeros_like(frame)
    motion_mag = np.asarray(motion_mag, dtype=np.float64)
    if frame.shape != motion_mag.shape:
        raise InvalidInputError("frame and motion magnitude differ in size")
    return np.stack((frame, motion_mag))


def gmm_init(frame, motion_mag=None, params: GmmParams | None = None) -> GmmModel:
    """One mode per pixel at the observed value, weight 1."""
    params = params or GmmParams()
    obs = _observation(frame, motion_mag)
    k = params.n_modes
    shape = obs.shape[1:]
    weight = np.zeros((k,) + shape)
    weight[0] = 1.0
    mean = np.zeros((k, 2) + shape)
    mean[0] = obs
    var = np.empty((k, 2) + shape)
    var[:, 0] = params.init_var
    var[:, 1] = params.init_motion_var
    count = np.zeros((k,) + shape)
    count[0] = 1
    return GmmModel(weight, mean, var, count, params, updates=1)


def _matches(model, obs):
    p = model.params
    d2 = (obs[None] - model.mean) ** 2 / model.var  # (K, 2, H, W)
    within = np.all(d2 <= p.match_sigma ** 2, axis=1) & (model.weight > 0)
    return within, d2.sum(axis=1)


def gmm_update(model: GmmModel, frame, motion_mag=None, hold=None) -> GmmModel:
    """One recursive update; returns the (in-place updated) model.

    Pixels where ``hold`` is True keep their modes unchanged.
    """
    obs = _observation(frame, motion_mag)
    if obs.shape[1:] != model.shape:
        raise InvalidInputError("frame size does not match the model")
    if hold is not None:
        hold = np.asarray(hold, dtype=bool)
        if hold.shape != model.shape:
            raise InvalidInputError("hold mask does not match the model")
        if hold.any():
            saved = (model.weight.copy(), model.mean.copy(), model.var.copy(), model.count.copy())
    p = model.params
    within, dist = _matches(model, obs)
    # among matching modes take the heaviest
    score = np.where(within, model.weight, -1.0)
    best = np.argmax(score, axis=0)
    matched_any = within.any(axis=0)
    owner = np.zeros(within.shape, dtype=bool)
    np.put_along_axis(owner, best[None], matched_any[None], axis=0)

    model.weight *= 1.0 - p.rho
    model.weight += p.rho * owner

    model.count += owner
    rate = np.maximum(p.rho, 1.0 / np.maximum(model.count, 1.0))[:, None]
    sel = owner[:, None]
    delta = obs[None] - model.mean
    model.mean += np.where(sel, rate * delta, 0.0)
    new_var = model.var + rate * (delta ** 2 - model.var)
    model.var = np.where(sel, new_var, model.var)

    # no match: the lightest mode is replaced by the observation
    fresh = ~matched_any
    if fresh.any():
        lightest = np.argmin(model.weight, axis=0)
        repl = np.zeros(within.shape, dtype=bool)
        np.put_along_axis(repl, lightest[None], fresh[None], axis=0)
        model.weight = np.where(repl, 0.0, model.weight)
        model.weight += p.rho * repl
        model.mean = np.where(repl[:, None], obs[None], model.mean)
        model.var[:, 0] = np.where(repl, p.init_var, model.var[:, 0])
        model.var[:, 1] = np.where(repl, p.init_motion_var, model.var[:, 1])
        model.count = np.where(repl, 1.0, model.count)

    model.var[:, 0] = np.maximum(model.var[:, 0], p.var_floor)
    model.var[:, 1] = np.maximum(model.var[:, 1], p.motion_var_floor)
    model.weight /= model.weight.sum(axis=0, keepdims=True)
    if hold is not None and hold.any():
        w, mu, var, cnt = saved
        model.weight = np.where(hold, w, model.weight)
        model.mean = np.where(hold, mu, model.mean)
        model.var = np.where(hold, var, model.var)
        model.count = np.where(hold, cnt, model.count)
    model.updates += 1
    return model


def mixture_score(model: GmmModel, frame, motion_mag=None):
    """Per-pixel mixture density sum_k w_k N(obs; mu_k, sigma_k)."""
    if model.updates < 1:
        raise ModelStateError("GMM has not been initialised")
    obs = _observation(frame, motion_mag)
    if obs.shape[1:] != model.shape:
        raise InvalidInputError("frame size does not match the model")
    d2 = ((obs[None] - model.mean) ** 2 / model.var).sum(axis=1)
    norm = 2.0 * np.pi * np.sqrt(model.var[:, 0] * model.var[:, 1])
    return (model.weight * np.exp(-0.5 * d2) / norm).sum(axis=0)


def raw_bg_mask(model: GmmModel, frame, motion_mag=None):
    score = mixture_score(model, frame, motion_mag)
    return score > np.median(score) * model.params.bg_ratio


def clean_mask(bg, min_area=25):
    """3x3 open then close on the foreground, then absorb small FG blobs into BG."""
    fg = ~np.asarray(bg, dtype=bool)
    fg = ndimage.binary_opening(fg, structure=np.ones((3, 3), dtype=bool))
    fg = ndimage.binary_closing(fg, structure=np.ones((3, 3), dtype=bool),
                                border_value=0)
    if min_area > 1 and fg.any():
        labels, n = ndimage.label(fg, structure=_EIGHT)
        sizes = np.bincount(labels.ravel(), minlength=n + 1)
        small = sizes < min_area
        small[0] = False
        fg[small[labels]] = False
    return ~fg


def bg_mask(model: GmmModel, frame, motion_mag=None):
    """Binary background mask M^B (True = background)."""
    raw = raw_bg_mask(model, frame, motion_mag)
    return clean_mask(raw, model.params.min_area)


def extract_objects(fg, min_area: int = 25) -> list:
    """8-connected foreground components of at least ``min_area`` pixels."""
    fg = np.asarray(fg, dtype=bool)
    labels, n = ndimage.label(fg, structure=_EIGHT)
    objects = []
    if n == 0:
        return objects
    slices = ndimage.find_objects(labels)
    for i, sl in enumerate(slices, start=1):
        comp = labels[sl] == i
        area = int(comp.sum())
        if area < min_area:
            continue
        mask = np.zeros(fg.shape, dtype=bool)
        mask[sl] = comp
        ys, xs = np.nonzero(comp)
        centroid = (float(xs.mean() + sl[1].start), float(ys.mean() + sl[0].start))
        bbox = (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop)
        objects.append(FgObject(mask, centroid, area, bbox))
    return objects
