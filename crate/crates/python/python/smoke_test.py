"""Smoke test for the gaussian_sr extension module."""

import os
import tempfile

import numpy as np

import gaussian_sr as gsr


def texture(h, w, seed):
    rng = np.random.default_rng(seed)
    yy = np.minimum(np.arange(h), h - np.arange(h))[:, None]
    xx = np.minimum(np.arange(w), w - np.arange(w))[None, :]
    blob = np.exp(-(yy**2 + xx**2) / 6.0)
    g = np.real(np.fft.ifft2(np.fft.fft2(blob) * np.fft.fft2(rng.standard_normal((h, w)))))
    g *= 20.0 / g.std()
    return np.stack([g + 120.0, 0.8 * g + 128.0, 0.6 * g + 110.0], axis=-1)


def main():
    hr = texture(64, 96, 1)
    ref = texture(64, 96, 2)
    lr = gsr.degrade(hr, 4)
    assert lr.shape == (16, 24, 3), lr.shape

    model = gsr.SRModel(ref, 4)
    assert model.hr_shape == (64, 96) and model.lr_shape == (16, 24) and model.channels == 3

    parts = model.sample_components(lr, 7)
    assert np.allclose(parts["kriging"] + parts["innovation"], parts["sr"], atol=1e-9)
    back = gsr.degrade(parts["sr"], 4)
    err = np.abs(back - lr).max()
    assert err <= 1e-6 * np.abs(lr).max(), err

    a, b = model.samples(lr, [3, 3])
    assert np.array_equal(a, b)
    assert np.array_equal(model.sample(lr, 3), a)
    assert not np.array_equal(model.sample(lr, 4), a)

    p, s = gsr.periodic_smooth(hr[:, :, 0])
    assert np.allclose(p + s, hr[:, :, 0], atol=1e-9)

    assert gsr.psnr(hr, hr) == float("inf")
    assert abs(gsr.ssim(hr, hr) - 1.0) < 1e-12

    try:
        gsr.SRModel(np.full((64, 96, 3), 90.0), 4)
    except gsr.DegenerateModelError:
        pass
    else:
        raise AssertionError("flat reference accepted")
    try:
        gsr.degrade(hr, 5)
    except gsr.GaussianSrError:
        pass
    else:
        raise AssertionError("indivisible size accepted")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "sr.png")
        gsr.save_image(parts["sr"], path, 16)
        loaded = gsr.load_image(path)
        assert loaded.shape == (64, 96, 3)
        assert np.abs(loaded - np.clip(parts["sr"], 0, 255)).max() < 0.01
        model.save_kernels(os.path.join(d, "kernels.bin"))
        try:
            gsr.load_image(os.path.join(d, "missing.png"))
        except OSError:
            pass
        else:
            raise AssertionError("missing file accepted")

    rows = gsr.oracle_check(8, 2, 1)
    assert rows and all(ok for _, ok, _, _ in rows), rows

    print(f"gaussian_sr {gsr.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
