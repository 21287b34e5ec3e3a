"""Timing harness: recursive pipeline vs a sliding-window baseline.

The baseline re-registers every frame of an N-frame window to the window
mean for each output frame and fuses the registered stack (mean lowpass,
maximum-magnitude highpass), which is the cost profile the recursive
design removes.
"""
from __future__ import annotations

import time
from collections import deque

import numpy as np

from . import dtcwt, pipeline, registration, synth

STANDARD_SIZES = ((224, 320), (576, 704), (720, 1280))


def synthetic_input(shape, n_frames, seed=0, spec=None):
    spec = spec or synth.TurbulenceSpec(seed=seed)
    truth = synth.test_scene(tuple(shape), seed=seed)
    return synth.synth_sequence(truth, spec, n_frames).frames


def fuse_stack(pyramids):
    """Mean lowpass and per-coefficient maximum-magnitude highpass."""
    low = np.mean([p.lowpass for p in pyramids], axis=0)
    high = []
    for level in range(pyramids[0].levels):
        stack = np.stack([p.highpass[level] for p in pyramids])
        pick = np.argmax(np.abs(stack), axis=0)
        high.append(np.take_along_axis(stack, pick[None], axis=0)[0])
    return dtcwt.inverse(dtcwt.Pyramid(low, high, pyramids[0].original_size))


def sliding_window_restore(frames, window=20, levels=4, coarse_only=False):
    """Yield one restored frame per input frame using the sliding-window baseline."""
    buf = deque(maxlen=window)
    opts = registration.RegistrationOptions(levels, coarse_only)
    for X in frames:
        buf.append(np.asarray(X, dtype=np.float64))
        ref = np.mean(buf, axis=0)
        ref_pyr = dtcwt.forward(ref, levels)
        pyrs = []
        for f in buf:
            reg = registration.register(f, ref, opts, ref_pyr=ref_pyr)
            pyrs.append(dtcwt.forward(reg.warped, levels))
        yield fuse_stack(pyrs)


def pipeline_frame_times(frames, config=None):
    """Wall time of every ``process_frame`` call (frame 2 onward)."""
    frames = iter(frames)
    state = pipeline.init(next(frames), config)
    times = []
    for X in frames:
        t0 = time.perf_counter()
        _, _, state = pipeline.process_frame(state, X)
        times.append(time.perf_counter() - t0)
    return times, state


def sliding_window_frame_times(frames, window=20, levels=4, warm=True):
    """Per-frame times once the window is full (the first ``window - 1`` are skipped)."""
    frames = list(frames)
    gen = sliding_window_restore(frames, window, levels)
    times = []
    for i in range(len(frames)):
        t0 = time.perf_counter()
        next(gen)
        if not warm or i >= window - 1:
            times.append(time.perf_counter() - t0)
    return times


def registration_time(shape, coarse_only, repeats=5, levels=4, seed=0):
    """Median wall time of one ``register`` call (including the frame transform)."""
    frames = synthetic_input(shape, 2, seed)
    ref_pyr = dtcwt.forward(frames[0], levels)
    opts = registration.RegistrationOptions(levels, coarse_only)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        registration.register(frames[1], frames[0], opts, ref_pyr=ref_pyr)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run(sizes=STANDARD_SIZES, frames=4, window=20, levels=4, seed=0):
    """Rows of (height, width, mode, sec_per_frame).

    Modes: recursive full registration, recursive coarse registration and the
    sliding-window baseline (timed on frames once its window is full).
    """
    rows = []
    for shape in sizes:
        seq = synthetic_input(shape, max(frames, 2) + window, seed)
        for coarse in (False, True):
            cfg = pipeline.PipelineConfig(L=levels, coarse_only=coarse)
            times, _ = pipeline_frame_times(seq[:frames + 1], cfg)
            mode = "recursive_coarse" if coarse else "recursive_full"
            rows.append((shape[0], shape[1], mode, float(np.median(times))))
        times = sliding_window_frame_times(seq[:window + frames - 1], window, levels)
        rows.append((shape[0], shape[1], f"sliding_window_{window}", float(np.median(times))))
    return rows
