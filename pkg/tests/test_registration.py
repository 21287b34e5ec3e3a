import numpy as np
import pytest

from turbrestore import dtcwt, objects, registration as R, synth
from turbrestore.errors import InvalidInputError

import oracles


@pytest.fixture(scope="module")
def big():
    return synth.test_scene((160, 160), seed=3)


def test_identity(scene128):
    m = R.register(scene128, scene128).motion
    assert max(np.abs(m.u).max(), np.abs(m.v).max()) < 0.05


def test_global_shift(big):
    a, b = big[16:144, 16:144], big[16:144, 14:142]  # b(x) = a(x - 2)
    m = R.register(a, b).motion
    assert 1.8 <= np.median(m.u) <= 2.2
    assert -0.2 <= np.median(m.v) <= 0.2


def test_sinusoidal_field(scene128):
    yy, xx = np.mgrid[0:128, 0:128]
    u = 3 * np.sin(2 * np.pi * yy / 64)
    v = 3 * np.cos(2 * np.pi * xx / 64)
    ref = R.warp_frame(scene128, R.MotionField(u, v, None))
    est = R.register(scene128, ref).motion
    epe = np.sqrt(np.mean((est.u - u) ** 2 + (est.v - v) ** 2))
    assert epe <= 0.4 * np.sqrt(np.mean(u ** 2 + v ** 2))


def test_smooth_random_field_endpoint_error(scene128):
    spec = synth.TurbulenceSpec(amplitude=3, correlation_length=20, seed=7)
    f = synth.displacement_fields(scene128.shape, spec, 1)[0]
    ref = R.warp_frame(scene128, R.MotionField(f[0], f[1], None))
    est = R.register(scene128, ref).motion
    before = np.sqrt(np.mean(f[0] ** 2 + f[1] ** 2))
    after = np.sqrt(np.mean((est.u - f[0]) ** 2 + (est.v - f[1]) ** 2))
    assert after <= 0.4 * before


class TestWarp:
    def test_zero_motion(self, scene128):
        out = R.warp_frame(scene128, R.MotionField.zeros(scene128.shape))
        np.testing.assert_array_equal(out, scene128)

    def test_integer_row_shift(self, rng):
        X = rng.random((6, 5))
        m = R.MotionField(np.zeros((6, 5)), np.ones((6, 5)), None)
        out = R.warp_frame(X, m)
        np.testing.assert_array_equal(out[1:], X[:-1])
        np.testing.assert_array_equal(out[0], X[0])

    def test_round_trip(self, scene128):
        yy, xx = np.mgrid[0:128, 0:128]
        u = 1.5 * np.sin(2 * np.pi * yy / 80)
        v = 1.5 * np.cos(2 * np.pi * xx / 80)
        there = R.warp_frame(scene128, R.MotionField(u, v, None))
        back = R.warp_frame(there, R.MotionField(-u, -v, None))
        assert np.abs(back - scene128)[8:-8, 8:-8].mean() < 0.02

    def test_size_mismatch(self):
        with pytest.raises(InvalidInputError):
            R.warp_frame(np.zeros((4, 4)), R.MotionField.zeros((4, 5)))


class TestResidual:
    def test_identical(self, scene128):
        assert R.register(scene128, scene128).residual_error < 0.01

    def test_turbulence_residual_halves(self, scene128):
        spec = synth.TurbulenceSpec(amplitude=2, correlation_length=20, seed=2)
        f = synth.displacement_fields(scene128.shape, spec, 1)[0]
        frame = R.warp_frame(scene128, R.MotionField(f[0], f[1], None))
        before = R.residual_error(frame, scene128)
        assert R.register(frame, scene128).residual_error < 0.5 * before

    def test_far_object_triggers_warping(self, scene128):
        patch = synth.textured_patch(24, seed=4, low=0.6, high=1.0)
        ref, _ = synth.paste(scene128, patch, 30, 50)
        frame, mask = synth.paste(scene128, patch, 50, 50)  # 20 px beyond reach
        reg = R.register(frame, ref, R.RegistrationOptions(max_displacement=10))
        assert R.residual_error(reg.warped, ref, mask) > 0.08

    def test_masked_residual(self):
        a, b = np.zeros((4, 4)), np.zeros((4, 4))
        b[0, 0] = 1
        mask = np.zeros((4, 4), dtype=bool)
        assert R.residual_error(a, b, mask) == 0.0
        mask[0, :2] = True
        assert R.residual_error(a, b, mask) == 0.5


class TestCoarseOnly:
    def test_levels_used(self, scene128):
        full = R.register(scene128, scene128, R.RegistrationOptions(4)).motion
        coarse = R.register(scene128, scene128, R.RegistrationOptions(4, True)).motion
        assert full.levels_used == (4, 3, 2, 1)
        assert coarse.levels_used == (4, 3)

    def test_fine_levels_are_not_read(self, big):
        a, b = big[16:144, 16:144], big[16:144, 14:142]
        pa, pb = dtcwt.forward(a, 4), dtcwt.forward(b, 4)
        ref = R.estimate_motion(pa, pb, coarse_only=True)
        for p in (pa, pb):
            p.highpass[0] = np.full_like(p.highpass[0], np.nan)
            p.highpass[1] = np.full_like(p.highpass[1], np.nan)
        m = R.estimate_motion(pa, pb, coarse_only=True)
        np.testing.assert_array_equal(m.u, ref.u)
        assert 1.6 <= np.median(m.u) <= 2.4

    def test_mismatched_pyramids(self, scene128):
        with pytest.raises(InvalidInputError):
            R.estimate_motion(dtcwt.forward(scene128, 3), dtcwt.forward(scene128, 4))
        with pytest.raises(InvalidInputError):
            R.register(scene128, scene128[:64])


# ---------------------------------------------------------------------------
# object affine motion
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def affine_scene():
    background = synth.test_scene((128, 128), seed=3) * 0.3
    patch = synth.textured_patch(40, seed=5, low=0.4, high=1.0)
    layer = np.zeros((128, 128))
    support = np.zeros((128, 128))
    layer[44:84, 44:84] = patch
    support[44:84, 44:84] = 1
    centre = np.array([63.5, 63.5])

    def make(A, shift):
        """Object mapped by ``p -> A (p - c) + c + shift`` over the background."""
        A = np.asarray(A, dtype=float)
        T = centre + np.asarray(shift, dtype=float) - A @ centre
        wl, wm = objects.warp_object(layer, A, T), objects.warp_object(support, A, T)
        frame = np.where(wm > 0.5, wl / np.maximum(wm, 1e-9), background)
        return frame, wm > 0.5, T
    return make


def _estimate(make, A, shift):
    f0, m0, _ = make(np.eye(2), (0, 0))
    f1, m1, T = make(A, shift)
    est = objects.estimate_affine(dtcwt.forward(f1, 4), dtcwt.forward(f0, 4), m1, m0)
    return est, T, (f0, f1, m0)


def test_affine_identity(affine_scene):
    est, _, _ = _estimate(affine_scene, np.eye(2), (0, 0))
    assert not est.fallback
    np.testing.assert_allclose(est.A, np.eye(2), atol=0.01)
    np.testing.assert_allclose(est.T, 0, atol=0.1)


def test_affine_translation(affine_scene):
    est, _, _ = _estimate(affine_scene, np.eye(2), (5, 3))
    np.testing.assert_allclose(est.A, np.eye(2), atol=0.02)
    np.testing.assert_allclose(est.T, (5, 3), atol=0.5)


def test_affine_scale_against_lucas_kanade(affine_scene):
    est, T, (f0, f1, m0) = _estimate(affine_scene, 1.1 * np.eye(2), (0, 0))
    np.testing.assert_allclose(est.A, 1.1 * np.eye(2), atol=0.03)
    A_lk, T_lk = oracles.lucas_kanade_affine(f0, f1, m0, A0=1.1 * np.eye(2), T0=T)
    np.testing.assert_allclose(est.A, A_lk, atol=0.01)
    np.testing.assert_allclose(est.T, T_lk, atol=0.5)


def test_affine_fallbacks():
    thin = np.zeros((64, 64), dtype=bool)
    thin[30, 10:50] = True
    shifted = np.roll(thin, 2, axis=1)
    pyr = dtcwt.forward(np.zeros((64, 64)), 3)
    est = objects.estimate_affine(pyr, pyr, shifted, thin)
    assert est.fallback
    np.testing.assert_allclose(est.T, (2, 0))
    with pytest.raises(InvalidInputError):
        objects.estimate_affine(pyr, pyr, np.zeros((64, 64), dtype=bool), thin)
