"""2-D dual-tree complex wavelet transform.

Level 1 uses the near-symmetric (13,19)-tap biorthogonal pair, levels >= 2 the
14-tap quarter-shift filters.  Columns are filtered with symmetric extension
(end samples repeated).  Highpass subbands are stored orientation-first as
``(6, h, w)`` complex arrays in the order +15, +45, +75, -75, -45, -15 degrees.
The lowpass is stored as its four tree-pair polyphase components, ``(4, h, w)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError

ORIENTATIONS = (15, 45, 75, -75, -45, -15)

# near_sym_b: analysis lowpass (13 taps) and highpass (19 taps)
_H0O = np.array([
    -0.0017578125, 0.0, 0.022265625, -0.046875, -0.0482421875, 0.296875,
    0.55546875, 0.296875, -0.0482421875, -0.046875, 0.022265625, 0.0,
    -0.0017578125,
])
_H1O = np.array([
    -7.0626395089285714e-05, 0.0, 1.3419015066964285e-03,
    -1.8833705357142857e-03, -7.1568080357142857e-03, 2.3856026785714285e-02,
    5.5643136160714285e-02, -5.1688058035714285e-02, -2.9975760323660714e-01,
    5.5943080357142857e-01, -2.9975760323660714e-01, -5.1688058035714285e-02,
    5.5643136160714285e-02, 2.3856026785714285e-02, -7.1568080357142857e-03,
    -1.8833705357142857e-03, 1.3419015066964285e-03, 0.0,
    -7.0626395089285714e-05,
])


def _alternate(h, start):
    g = h.copy()
    g[start::2] *= -1
    return g


# synthesis filters of a biorthogonal pair: swap and modulate
_G0O = _alternate(_H1O, 0)
_G1O = _alternate(_H0O, 1)

# qshift_b: 14-tap quarter-shift lowpass (tree b); every other filter follows
_H0B = np.array([
    -0.00455689562847549, -0.00543947593727412, 0.01702522388155399,
    0.02382538479492030, -0.10671180468666540, 0.01186609203379700,
    0.56881042071212270, 0.75614564389252250, 0.27529538466888204,
    -0.11720388769911527, -0.03887280126882779, 0.03466034684485349,
    -0.00388321199915849, 0.00325314276365318,
])
_H0A = _H0B[::-1].copy()
_H1A = _alternate(_H0B, 1)
_H1B = _H1A[::-1].copy()
_G0A, _G0B = _H0B, _H0A
_G1A, _G1B = _H1B, _H1A


@dataclass
class Pyramid:
    """DT-CWT coefficients of one frame.

    ``padded_size`` is the size the frame was symmetrically extended to (a
    multiple of ``2**levels``); ``original_size`` is restored on inverse.
    """

    lowpass: np.ndarray
    highpass: list
    original_size: tuple

    @property
    def levels(self) -> int:
        return len(self.highpass)

    @property
    def padded_size(self) -> tuple:
        h, w = self.highpass[0].shape[1:]
        return (2 * h, 2 * w)

    def copy(self) -> "Pyramid":
        return Pyramid(self.lowpass.copy(), [h.copy() for h in self.highpass],
                       self.original_size)

    def nbytes(self) -> int:
        return self.lowpass.nbytes + sum(h.nbytes for h in self.highpass)


@dataclass
class SubbandMask:
    levels: list
    lowpass: np.ndarray


# ---------------------------------------------------------------------------
# column filters (axis 0)
# ---------------------------------------------------------------------------

def _reflect(idx, n):
    """Half-sample symmetric index mapping into ``[0, n)``."""
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def _conv_valid(x, h):
    # true convolution along axis 0, 'valid' part only
    m = len(h)
    n = x.shape[0] - m + 1
    out = h[m - 1] * x[0:n]
    for k in range(m - 1):
        out = out + h[k] * x[m - 1 - k:m - 1 - k + n]
    return out


def colfilter(x, h):
    """Undecimated symmetric-extension filtering of the columns of ``x``."""
    r = x.shape[0]
    m2 = len(h) // 2
    xe = x[_reflect(np.arange(-m2, r + m2), r)]
    return _conv_valid(xe, h)


def coldfilt(x, ha, hb):
    """Decimate-by-two column filtering with the quarter-shift pair (ha, hb)."""
    r = x.shape[0]
    if r % 4:
        raise InvalidInputError("number of rows must be a multiple of 4")
    m = len(ha)
    xe = _reflect(np.arange(-m, r + m), r)
    t = np.arange(5, r + 2 * m - 2, 4)
    hao, hae = ha[0::2], ha[1::2]
    hbo, hbe = hb[0::2], hb[1::2]
    y = np.empty((r // 2,) + x.shape[1:], dtype=x.dtype)
    if np.sum(ha * hb) > 0:
        s1, s2 = slice(0, None, 2), slice(1, None, 2)
    else:
        s1, s2 = slice(1, None, 2), slice(0, None, 2)
    y[s1] = _conv_valid(x[xe[t - 1]], hao) + _conv_valid(x[xe[t - 3]], hae)
    y[s2] = _conv_valid(x[xe[t]], hbo) + _conv_valid(x[xe[t - 2]], hbe)
    return y


def colifilt(x, ha, hb):
    """Interpolate-by-two column filtering, the synthesis dual of :func:`coldfilt`."""
    r = x.shape[0]
    m = len(ha)
    m2 = m // 2
    y = np.zeros((2 * r,) + x.shape[1:], dtype=x.dtype)
    xe = _reflect(np.arange(-m2, r + m2), r)
    hao, hae = ha[0::2], ha[1::2]
    hbo, hbe = hb[0::2], hb[1::2]
    pos = np.sum(ha * hb) > 0
    if m2 % 2 == 0:
        t = np.arange(3, r + m, 2)
        ta, tb = (t, t - 1) if pos else (t - 1, t)
        y[0::4] = _conv_valid(x[xe[tb - 2]], hae)
        y[1::4] = _conv_valid(x[xe[ta - 2]], hbe)
        y[2::4] = _conv_valid(x[xe[tb]], hao)
        y[3::4] = _conv_valid(x[xe[ta]], hbo)
    else:
        t = np.arange(2, r + m - 1, 2)
        ta, tb = (t, t - 1) if pos else (t - 1, t)
        y[0::4] = _conv_valid(x[xe[tb]], hao)
        y[1::4] = _conv_valid(x[xe[ta]], hbo)
        y[2::4] = _conv_valid(x[xe[tb]], hae)
        y[3::4] = _conv_valid(x[xe[ta]], hbe)
    return y


def _q2c(y):
    """Real quads -> pair of complex subbands, shape (2, h/2, w/2)."""
    s = np.sqrt(0.5)
    p = (y[0::2, 0::2] + 1j * y[0::2, 1::2]) * s
    q = (y[1::2, 1::2] - 1j * y[1::2, 0::2]) * s
    return np.stack((p - q, p + q))


def _c2q(w0, w1):
    s = np.sqrt(0.5)
    p = (w0 + w1) * s
    q = (w0 - w1) * s
    x = np.empty((2 * w0.shape[0], 2 * w0.shape[1]))
    x[0::2, 0::2] = p.real
    x[0::2, 1::2] = p.imag
    x[1::2, 0::2] = q.imag
    x[1::2, 1::2] = -q.real
    return x


# orientation index pairs produced by each quad
_HORIZ = (0, 5)
_VERT = (2, 3)
_DIAG = (1, 4)


def _split_lowpass(z):
    return np.stack((z[0::2, 0::2], z[0::2, 1::2], z[1::2, 0::2], z[1::2, 1::2]))


def _merge_lowpass(trees):
    _, h, w = trees.shape
    z = np.empty((2 * h, 2 * w))
    z[0::2, 0::2], z[0::2, 1::2], z[1::2, 0::2], z[1::2, 1::2] = trees
    return z


def padded_shape(shape, levels):
    q = 2 ** levels
    return tuple(-(-s // q) * q for s in shape)


def pad_frame(frame, levels):
    """Symmetrically extend ``frame`` at the bottom/right to a multiple of 2**levels."""
    h, w = frame.shape
    ph, pw = padded_shape(frame.shape, levels)
    if (ph, pw) == (h, w):
        return frame
    return np.pad(frame, ((0, ph - h), (0, pw - w)), mode="symmetric")


def forward(frame, levels: int) -> Pyramid:
    """Decompose ``frame`` into ``levels`` DT-CWT levels."""
    x = np.asarray(frame, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"expected a 2-D frame, got shape {x.shape}")
    if levels < 1:
        raise InvalidInputError("levels must be >= 1")
    if min(x.shape) < 2 ** levels:
        raise InvalidInputError(
            f"frame {x.shape[0]}x{x.shape[1]} too small for {levels} levels "
            f"(needs >= {2 ** levels} per axis)")
    original = x.shape
    x = pad_frame(x, levels)

    highpass = []
    lo = colfilter(x, _H0O).T
    hi = colfilter(x, _H1O).T
    lolo = colfilter(lo, _H0O).T
    band = np.empty((6, lolo.shape[0] // 2, lolo.shape[1] // 2), dtype=complex)
    band[list(_HORIZ)] = _q2c(colfilter(hi, _H0O).T)
    band[list(_VERT)] = _q2c(colfilter(lo, _H1O).T)
    band[list(_DIAG)] = _q2c(colfilter(hi, _H1O).T)
    highpass.append(band)

    for _ in range(1, levels):
        lo = coldfilt(lolo, _H0B, _H0A).T
        hi = coldfilt(lolo, _H1B, _H1A).T
        lolo = coldfilt(lo, _H0B, _H0A).T
        band = np.empty((6, lolo.shape[0] // 2, lolo.shape[1] // 2), dtype=complex)
        band[list(_HORIZ)] = _q2c(coldfilt(hi, _H0B, _H0A).T)
        band[list(_VERT)] = _q2c(coldfilt(lo, _H1B, _H1A).T)
        band[list(_DIAG)] = _q2c(coldfilt(hi, _H1B, _H1A).T)
        highpass.append(band)

    return Pyramid(_split_lowpass(lolo), highpass, original)


def validate(pyr: Pyramid) -> None:
    if pyr.levels < 1:
        raise InvalidInputError("pyramid has no levels")
    ph, pw = pyr.padded_size
    for l, band in enumerate(pyr.highpass, start=1):
        expect = (6, ph >> l, pw >> l)
        if band.shape != expect:
            raise InvalidInputError(
                f"level {l} highpass has shape {band.shape}, expected {expect}")
    lev = pyr.levels
    expect = (4, ph >> lev, pw >> lev)
    if pyr.lowpass.shape != expect:
        raise InvalidInputError(
            f"lowpass has shape {pyr.lowpass.shape}, expected {expect}")
    if padded_shape(pyr.original_size, lev) != (ph, pw):
        raise InvalidInputError("original_size inconsistent with subband sizes")


def inverse(pyr: Pyramid) -> np.ndarray:
    """Reconstruct the frame (cropped to ``original_size``)."""
    validate(pyr)
    z = _merge_lowpass(np.asarray(pyr.lowpass, dtype=np.float64))
    for lev in range(pyr.levels, 1, -1):
        band = pyr.highpass[lev - 1]
        lh = _c2q(band[_HORIZ[0]], band[_HORIZ[1]])
        hl = _c2q(band[_VERT[0]], band[_VERT[1]])
        hh = _c2q(band[_DIAG[0]], band[_DIAG[1]])
        y1 = colifilt(z, _G0B, _G0A) + colifilt(lh, _G1B, _G1A)
        y2 = colifilt(hl, _G0B, _G0A) + colifilt(hh, _G1B, _G1A)
        z = (colifilt(y1.T, _G0B, _G0A) + colifilt(y2.T, _G1B, _G1A)).T
    band = pyr.highpass[0]
    lh = _c2q(band[_HORIZ[0]], band[_HORIZ[1]])
    hl = _c2q(band[_VERT[0]], band[_VERT[1]])
    hh = _c2q(band[_DIAG[0]], band[_DIAG[1]])
    y1 = colfilter(z, _G0O) + colfilter(lh, _G1O)
    y2 = colfilter(hl, _G0O) + colfilter(hh, _G1O)
    z = (colfilter(y1.T, _G0O) + colfilter(y2.T, _G1O)).T
    h, w = pyr.original_size
    return z[:h, :w]


def zeros_like(pyr: Pyramid) -> Pyramid:
    return Pyramid(np.zeros_like(pyr.lowpass), [np.zeros_like(b) for b in pyr.highpass],
                   pyr.original_size)


@lru_cache(maxsize=None)
def _center_frequencies(level):
    # Mean phase advance per pixel of the complex wavelet g = s_re + j*s_im,
    # where s_re / s_im are the synthesis responses to a unit real / imaginary
    # coefficient.  With g ~ env * exp(j w.x), shifting the input by d rotates
    # the coefficient phase by +w.d.  The lag-1 product avoids wrap at +-pi.
    n = 16
    size = (n << level, n << level)
    pyr = forward(np.zeros(size), level)
    out = np.empty((6, 2))
    for k in range(6):
        resp = []
        for unit in (1.0, 1j):
            p = zeros_like(pyr)
            p.highpass[level - 1][k, n // 2, n // 2] = unit
            resp.append(inverse(p))
        g = resp[0] + 1j * resp[1]
        fx = np.angle(np.sum(g[:, 1:] * np.conj(g[:, :-1])))
        fy = np.angle(np.sum(g[1:, :] * np.conj(g[:-1, :])))
        out[k] = (fx, fy)
    out.setflags(write=False)
    return out


def subband_center_frequency(level: int, orientation: int) -> np.ndarray:
    """Phase change (radians) per pixel of shift, as ``(horizontal, vertical)``.

    ``orientation`` is given in degrees, one of :data:`ORIENTATIONS`.
    """
    if level < 1:
        raise InvalidInputError("level must be >= 1")
    k = ORIENTATIONS.index(orientation)
    return _center_frequencies(level)[k].copy()


def center_frequencies(level: int) -> np.ndarray:
    """All six orientations' frequencies for one level, shape (6, 2)."""
    return _center_frequencies(level)


def resize_mask(mask, levels: int) -> SubbandMask:
    """Majority-pool a frame-sized binary mask onto every subband grid."""
    m = pad_frame(np.asarray(mask, dtype=np.float64), levels)
    out = []
    for lev in range(1, levels + 1):
        b = 1 << lev
        h, w = m.shape[0] // b, m.shape[1] // b
        frac = m.reshape(h, b, w, b).mean(axis=(1, 3))
        out.append((frac > 0.5).astype(np.float64))
    return SubbandMask(out, out[-1].copy())
