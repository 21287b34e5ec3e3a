import numpy as np
import pytest

from turbrestore import metrics, pipeline, synth
from turbrestore.errors import InvalidInputError


def test_clean_generator_reproduces_truth(scene128):
    spec = synth.TurbulenceSpec(amplitude=0, blur_sigma=0, noise_sigma=0)
    seq = synth.synth_sequence(scene128, spec, 4)
    for f in seq.frames:
        np.testing.assert_array_equal(f, scene128)
    assert not seq.masks.any()


def test_displacement_statistics():
    spec = synth.TurbulenceSpec(amplitude=3, correlation_length=20, seed=4)
    fields = synth.displacement_fields((128, 128), spec, 10)
    rms = np.sqrt((fields ** 2).sum(axis=1).mean(axis=(1, 2)))
    assert np.all((rms >= 1.5) & (rms <= 3.0))
    # the first field is normalised exactly; later ones are AR(1) mixtures
    assert rms[0] == pytest.approx(3 / np.sqrt(2), rel=1e-9)
    assert np.abs(fields.mean(axis=(2, 3))[0]).max() < 1e-12
    # spatially smooth: neighbouring pixels almost equal
    d = np.abs(np.diff(fields, axis=-1)).mean()
    assert d < 0.1


def test_temporal_correlation():
    spec = synth.TurbulenceSpec(temporal_correlation=4.0, seed=1)
    f = synth.displacement_fields((64, 64), spec, 200)
    a, b = f[:-1].ravel(), f[1:].ravel()
    assert np.corrcoef(a, b)[0, 1] == pytest.approx(np.exp(-1 / 4), abs=0.05)


def test_same_seed_is_bit_identical(scene128):
    spec = synth.TurbulenceSpec(seed=11)
    a = synth.synth_sequence(scene128, spec, 3)
    b = synth.synth_sequence(scene128, spec, 3)
    assert a.frames.tobytes() == b.frames.tobytes()
    c = synth.synth_sequence(scene128, synth.TurbulenceSpec(seed=12), 3)
    assert not np.array_equal(a.frames, c.frames)


def test_moving_object_ground_truth(scene128):
    patch = synth.textured_patch(32, seed=1)
    obj = synth.MovingObject(patch, (10.0, 40.0), (4.0, 0.0))
    seq = synth.synth_sequence(scene128, synth.TurbulenceSpec(moving_object=obj), 5)
    for t in range(5):
        assert seq.masks[t].sum() == 32 * 32
        ys, xs = np.nonzero(seq.masks[t])
        assert (xs.mean(), ys.mean()) == pytest.approx(tuple(seq.centers[t]))
        assert seq.centers[t][0] == pytest.approx(10 + 4 * t + 15.5)
        np.testing.assert_array_equal(seq.scenes[t][seq.masks[t]], patch.ravel())


def test_paste_clips_at_borders():
    out, mask = synth.paste(np.zeros((10, 10)), np.ones((4, 4)), -2, 8)
    assert mask.sum() == 2 * 2
    assert out.sum() == 4


def test_spec_validation():
    with pytest.raises(ValueError):
        synth.TurbulenceSpec(amplitude=-1)
    with pytest.raises(ValueError):
        synth.TurbulenceSpec(correlation_length=0)


def test_scene_and_patch_ranges():
    s = synth.test_scene((64, 96), seed=2)
    assert s.shape == (64, 96) and s.min() >= 0.1 - 1e-12 and s.max() <= 0.9 + 1e-12
    p = synth.textured_patch(16, low=0.2, high=0.4)
    assert p.min() == pytest.approx(0.2) and p.max() == pytest.approx(0.4)


class TestMetrics:
    def test_identical(self, scene128):
        assert metrics.mse(scene128, scene128) == 0
        assert metrics.psnr(scene128, scene128) == metrics.PSNR_CAP
        assert metrics.psnr(scene128, scene128, cap=None) == float("inf")

    def test_offset(self, scene128):
        assert metrics.mse(scene128 + 0.1, scene128) == pytest.approx(0.01)
        assert metrics.psnr(scene128 + 0.1, scene128) == pytest.approx(20.0)

    def test_masked(self):
        a, b = np.zeros((2, 2)), np.array([[0.0, 1.0], [0.0, 0.0]])
        assert metrics.mse(a, b, np.array([[True, False], [True, True]])) == 0
        with pytest.raises(InvalidInputError):
            metrics.mse(a, np.zeros((3, 2)))

    def test_compare_rows(self, rng):
        a = [rng.random((4, 4)) for _ in range(3)]
        r = metrics.compare(a, a)
        rows = list(r.rows())
        assert rows[0] == ("frame", "mse", "psnr")
        assert rows[-1] == ("mean", 0.0, metrics.PSNR_CAP)
        assert len(rows) == 5
        with pytest.raises(InvalidInputError):
            metrics.compare(a, a[:2])

    def test_stability(self):
        f = np.stack([np.zeros((3, 3)), np.ones((3, 3))])
        assert metrics.temporal_stability(f) == 1.0
        with pytest.raises(InvalidInputError):
            metrics.temporal_stability(f[:1])

    def test_restoration_is_steadier(self, scene128):
        spec = synth.TurbulenceSpec(seed=3)
        seq = synth.synth_sequence(scene128, spec, 15)
        out = pipeline.restore_sequence(seq.frames)
        assert (metrics.temporal_stability(out[5:])
                < metrics.temporal_stability(seq.frames[5:]))
