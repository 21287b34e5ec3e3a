"""Quality scores for restored sequences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

PSNR_CAP = 100.0  # reported for identical images


def mse(a, b, mask=None) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"size mismatch {a.shape} vs {b.shape}")
    d = (a - b) ** 2
    if mask is not None:
        d = d[np.asarray(mask, dtype=bool)]
    return float(d.mean())


def psnr(a, b, mask=None, peak=1.0, cap=PSNR_CAP) -> float:
    """PSNR in dB; identical inputs give ``cap`` (pass ``cap=None`` for inf)."""
    e = mse(a, b, mask)
    if e == 0.0:
        return float("inf") if cap is None else cap
    val = 10.0 * np.log10(peak * peak / e)
    return val if cap is None else min(val, cap)


def temporal_stability(frames, bg_mask=None) -> float:
    """Mean absolute frame-to-frame change over background pixels (lower is steadier)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or len(frames) < 2:
        raise InvalidInputError("need a (T, H, W) stack of at least two frames")
    d = np.abs(np.diff(frames, axis=0))
    if bg_mask is None:
        return float(d.mean())
    m = np.asarray(bg_mask, dtype=bool)
    if m.shape != frames.shape[1:]:
        raise InvalidInputError("mask does not match the frame size")
    return float(d[:, m].mean())


@dataclass
class Report:
    per_frame: list  # (index, mse, psnr)
    mean_mse: float
    mean_psnr: float
    stability_a: float
    stability_b: float

    def rows(self):
        yield ("frame", "mse", "psnr")
        for row in self.per_frame:
            yield row
        yield ("mean", self.mean_mse, self.mean_psnr)


def compare(seq_a, seq_b, bg_mask=None) -> Report:
    """Per-frame MSE/PSNR of ``seq_a`` against ``seq_b`` plus both stability scores."""
    a = [np.asarray(f, dtype=np.float64) for f in seq_a]
    b = [np.asarray(f, dtype=np.float64) for f in seq_b]
    if len(a) != len(b):
        raise InvalidInputError(f"sequence lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise InvalidInputError("empty sequences")
    rows = [(i, mse(x, y), psnr(x, y)) for i, (x, y) in enumerate(zip(a, b))]
    stab_a = temporal_stability(a, bg_mask) if len(a) > 1 else 0.0
    stab_b = temporal_stability(b, bg_mask) if len(b) > 1 else 0.0
    return Report(rows, float(np.mean([r[1] for r in rows])),
                  float(np.mean([r[2] for r in rows])), stab_a, stab_b)
