"""Per-frame orchestration: registration, background model, tracking, object
layers, recursive reference and recursive fusion.

Frames are luma images in [0, 1]; optional chroma planes ride along on the
luma motion field and the background/foreground weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import background, dtcwt, fusion, objects, registration, tracking
from .errors import ConfigError, DegenerateWarpError, InvalidInputError, StageError


@dataclass
class PipelineConfig:
    L: int = 4
    N_b: int = 50
    N_f: int = 5
    alpha: float | None = None  # defaults to 1 / (N_b + 1)
    alpha_obj: float | None = None  # defaults to 1 / (N_f + 1)
    coarse_only: bool = False
    warp_threshold: float = 0.08
    max_displacement: float = 10.0
    min_area: int = 25
    # per-location running-mean start of the background recursions (see
    # fusion.FusionState); False gives the plain exponential recursion
    restart: bool = True
    # extra foreground coefficients around objects in the fusion masks
    fg_margin: int = 1
    # the GMM is not updated under tracks moving at least this fast (px/frame);
    # 0 disables
    hold_speed: float = 1.0
    gmm: background.GmmParams = field(default_factory=background.GmmParams)
    tracker: tracking.TrackerParams | None = None

    def __post_init__(self):
        if self.L < 1 or self.N_b < 1 or self.N_f < 1:
            raise ConfigError("L, N_b and N_f must all be >= 1")
        if self.alpha is None:
            self.alpha = 1.0 / (self.N_b + 1)
        if self.alpha_obj is None:
            self.alpha_obj = 1.0 / (self.N_f + 1)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 < self.alpha_obj <= 1.0:
            raise ConfigError("alpha_obj must lie in (0, 1]")
        if self.warp_threshold <= 0 or self.max_displacement <= 0 or self.min_area < 1:
            raise ConfigError("thresholds must be positive")
        if self.tracker is None:
            self.tracker = tracking.TrackerParams(miss_limit=self.N_f)
        self.gmm.min_area = self.min_area

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls) if f.name not in ("gmm", "tracker")]


@dataclass
class _Layer:
    layer: objects.ObjectLayer
    position: np.ndarray  # filtered centroid at the last update


@dataclass
class PipelineState:
    config: PipelineConfig
    fusion: fusion.FusionState
    gmm: background.GmmModel
    tracker: tracking.Tracker
    layers: dict
    pyr_R: dtcwt.Pyramid
    pyr_prev: dtcwt.Pyramid  # raw X_{t-1}, for object affine estimation
    fg_prev: dict  # track id -> previous FG mask
    t: int = 1
    chroma_R: np.ndarray | None = None
    chroma_Y: np.ndarray | None = None
    last_motion: registration.MotionField | None = field(default=None, repr=False)
    affine_calls: int = 0

    def nbytes(self):
        n = self.fusion.nbytes() + self.gmm.nbytes() + self.pyr_R.nbytes() + self.pyr_prev.nbytes()
        n += sum(l.layer.O.nbytes + l.layer.mask.nbytes for l in self.layers.values())
        n += sum(m.nbytes for m in self.fg_prev.values())
        for c in (self.chroma_R, self.chroma_Y):
            n += 0 if c is None else c.nbytes
        return n


def _as_frame(frame):
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise InvalidInputError(f"expected a 2-D luma frame, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise InvalidInputError("frame contains non-finite values")
    return frame


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # tag and propagate
        raise StageError(name, exc) from exc


def init(first_frame, config: PipelineConfig | None = None, chroma=None) -> PipelineState:
    """Bootstrap from X_1: R_1 = X_1, Y_1 = X_1, fresh GMM, no tracks."""
    config = config or PipelineConfig()
    X = _as_frame(first_frame)
    if min(X.shape) < (1 << config.L):
        raise ConfigError(f"frame {X.shape} is too small for {config.L} levels")
    fstate = fusion.init_state(X, config.L, config.alpha, config.restart)
    pyr = dtcwt.forward(X, config.L)
    gmm = background.gmm_init(X, None, config.gmm)
    chroma_R = None if chroma is None else np.asarray(chroma, dtype=np.float64).copy()
    return PipelineState(config, fstate, gmm, tracking.Tracker(config.tracker), {}, pyr,
                         pyr, {}, t=1, chroma_R=chroma_R,
                         chroma_Y=None if chroma_R is None else chroma_R.copy())


def first_output(state: PipelineState):
    """Y_1 (and its chroma): the first frame itself."""
    return state.fusion.R_prev.copy(), None if state.chroma_Y is None else state.chroma_Y.copy()


def _object_residual(warped, reference, mask):
    return registration.residual_error(warped, reference, mask)


def _moving_footprint(state):
    """Predicted masks of layers whose tracks move at least ``hold_speed`` px/frame."""
    out = np.zeros(state.fusion.R_prev.shape, dtype=bool)
    speed = state.config.hold_speed
    if speed <= 0:
        return out
    velocity = {tr.id: tr.state[2:] for tr in state.tracker.tracks}
    for tid, entry in state.layers.items():
        v = velocity.get(tid)
        if v is None or np.hypot(*v) < speed:
            continue
        out |= objects.warp_object(entry.layer.mask.astype(np.float64), np.eye(2), v) > 0.5
    return out


def _update_layers(state, X_t, reg, pyr_t, detections):
    cfg = state.config
    seen = state.tracker.step(detections)
    live = {tr.id for tr in state.tracker.tracks}
    active = []
    new_fg = {}
    for tr in seen:
        det = tr.detection
        pos = tr.state[:2].copy()
        entry = state.layers.get(tr.id)
        if entry is None:
            layer = objects.ObjectLayer(det.mask * X_t, det.mask.copy(), tr.id)
            state.layers[tr.id] = _Layer(layer, pos)
        else:
            prev = entry.layer
            # Kalman displacement: the filtered per-frame velocity
            shift = tr.state[2:].copy()
            A, T = np.eye(2), shift
            resid = _object_residual(reg.warped, state.fusion.R_prev, det.mask)
            if resid > cfg.warp_threshold and tr.id in state.fg_prev:
                est = objects.estimate_affine(pyr_t, state.pyr_prev, det.mask,
                                              state.fg_prev[tr.id])
                if not est.fallback:
                    A, T = est.A, est.T
                state.affine_calls += 1
            try:
                O = objects.update_object(prev.O, A, T, X_t, det.mask, cfg.alpha_obj,
                                          prev.mask)
            except DegenerateWarpError:
                A, T = np.eye(2), shift
                O = objects.update_object(prev.O, A, T, X_t, det.mask, cfg.alpha_obj,
                                          prev.mask)
            state.layers[tr.id] = _Layer(objects.ObjectLayer(O, det.mask.copy(), tr.id, A, T),
                                         pos)
        new_fg[tr.id] = det.mask
        active.append(state.layers[tr.id].layer)
    for tid in list(state.layers):
        if tid not in live:
            del state.layers[tid]
    state.fg_prev = new_fg
    return active


def process_frame(state: PipelineState, frame, chroma=None):
    """Restore one frame; returns ``(Y_t, chroma_Y_t, state)``.  State is updated in place."""
    cfg = state.config
    X_t = _as_frame(frame)
    if X_t.shape != state.fusion.R_prev.shape:
        raise InvalidInputError(
            f"frame {X_t.shape} does not match the sequence size {state.fusion.R_prev.shape}")
    if (chroma is None) != (state.chroma_R is None):
        raise InvalidInputError("chroma must be given for every frame or for none")

    opts = registration.RegistrationOptions(cfg.L, cfg.coarse_only, cfg.max_displacement)
    # (1) one non-rigid registration per frame, against the previous reference
    reg = _stage("registration", registration.register, X_t, state.fusion.R_prev, opts,
                 None, None, state.pyr_R)
    pyr_t = reg.pyramid
    motion = reg.motion
    mag = motion.magnitude

    # (2) background model on (intensity, registration motion magnitude):
    # classify with the current model, then learn.  The registered frame is
    # not used here since registration onto R_{t-1} drags a moving object
    # back toward its previous position.
    def _bg():
        M_B = background.bg_mask(state.gmm, X_t, mag)
        background.gmm_update(state.gmm, X_t, mag, _moving_footprint(state) & ~M_B)
        return M_B, background.extract_objects(~M_B, cfg.min_area)
    M_B, detections = _stage("background", _bg)

    # (3)-(4) tracking and object layers
    layers = _stage("objects", _update_layers, state, X_t, reg, pyr_t, detections)

    # (5) recursive reference
    def _reference():
        fs = state.fusion
        alpha = cfg.alpha
        if fs.restart:
            fs.n_R = fusion.advance_counts(fs.n_R, M_B)
            alpha = fusion.running_alpha(fs.n_R, cfg.alpha)
        return fusion.update_reference(fs.R_prev, X_t, M_B, layers, alpha), alpha
    R_t, alpha = _stage("reference", _reference)

    # (6) recursive coefficient fusion
    # inside object masks the motion-compensated frame is the object layer
    # itself, not the non-rigid warp toward the old object position
    obj_px = np.zeros(X_t.shape, dtype=bool)
    for layer in layers:
        obj_px |= layer.mask
    XR = np.where(obj_px, R_t, reg.warped)

    def _fuse():
        pyr_w = dtcwt.forward(XR, cfg.L)
        pyr_R = dtcwt.forward(R_t, cfg.L)
        M_B_prev = state.fusion.M_B_prev
        Y, _ = fusion.fuse_frame(state.fusion, pyr_w, pyr_R, M_B, M_B_prev,
                                 fg_margin=cfg.fg_margin)
        return Y, pyr_R, M_B_prev
    Y, pyr_R, M_B_prev = _stage("fusion", _fuse)

    chroma_Y = None
    if chroma is not None:
        chroma_Y = _stage("chroma", _fuse_chroma, state, chroma, motion, M_B, M_B_prev,
                          alpha)

    state.fusion.R_prev = R_t
    state.pyr_R = pyr_R
    state.pyr_prev = pyr_t
    state.last_motion = motion
    state.t += 1
    return Y, chroma_Y, state


def _fuse_chroma(state, chroma, motion, M_B, M_B_prev, a):
    """Chroma follows the luma motion and the reference/lowpass blend weights."""
    chroma = np.asarray(chroma, dtype=np.float64)
    if chroma.shape != state.chroma_R.shape:
        raise InvalidInputError("chroma planes do not match the sequence size")
    warped = np.stack([registration.warp_frame(c, motion) for c in chroma])
    R_new = np.where(M_B, (1 - a) * state.chroma_R + a * chroma, chroma)
    m = M_B & M_B_prev
    Y = np.where(m, (1 - a) * state.chroma_Y + a * warped, R_new)
    state.chroma_R = R_new
    state.chroma_Y = Y
    return Y.copy()


def finalize(state: PipelineState) -> dict:
    """Summary of a finished run; the state holds no open resources."""
    return {
        "frames": state.t,
        "tracks": len(state.tracker.tracks),
        "tracks_spawned": state.tracker.spawned,
        "state_bytes": state.nbytes(),
    }


def restore_sequence(frames, config: PipelineConfig | None = None, chroma=None):
    """Run the pipeline over an iterable of frames; returns a list of outputs.

    With ``chroma`` (an iterable of (2, H, W) planes) each output is a
    ``(luma, chroma)`` pair.
    """
    frames = iter(frames)
    chroma = iter(chroma) if chroma is not None else None
    try:
        first = next(frames)
    except StopIteration:
        raise InvalidInputError("empty sequence") from None
    state = init(first, config, None if chroma is None else next(chroma))
    y, c = first_output(state)
    out = [y if chroma is None else (y, c)]
    for X in frames:
        y, c, state = process_frame(state, X, None if chroma is None else next(chroma))
        out.append(y if chroma is None else (y, c))
    return out
