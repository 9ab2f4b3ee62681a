import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reflguide import synth
from reflguide.errors import InvalidParameterError
from reflguide.specularfree import (delta_transform, max_chromaticity, specular_free,
                                    specular_free_full, specular_free_gray)

colored = arrays(np.float64, (5, 4, 3), elements=st.floats(0.0, 2.0))
lams = st.floats(0.34, 1.0)


def test_max_chromaticity_examples():
    assert max_chromaticity((0.2, 0.2, 0.2)) == pytest.approx(1 / 3)
    assert max_chromaticity((1, 0, 0)) == 1.0
    assert max_chromaticity((0.6, 0.3, 0.1)) == pytest.approx(0.6)
    assert max_chromaticity((0, 0, 0)) == pytest.approx(1 / 3)


def test_specular_free_examples():
    px = lambda v: np.array(v, dtype=float).reshape(1, 1, 3)
    np.testing.assert_allclose(specular_free(px([0.5, 0.5, 0.5]), 0.5), 0.0, atol=1e-15)
    res = specular_free_full(px([0.6, 0.3, 0.1]), 0.5)
    assert res.offset[0, 0] == pytest.approx(-0.2)
    np.testing.assert_allclose(res.image[0, 0], [0.8, 0.5, 0.3])
    assert max_chromaticity(res.image[0, 0]) == pytest.approx(0.5)
    assert specular_free_gray(px([0.6, 0.3, 0.1]), 0.5)[0, 0, 0] == pytest.approx(1.6 / 3)


@pytest.mark.parametrize("lam", [1 / 3, 0.2, 1.01])
def test_bad_lambda(lam):
    with pytest.raises(InvalidParameterError):
        specular_free(np.ones((1, 1, 3)), lam)


@given(colored, lams)
def test_output_max_chroma_is_target(img, lam):
    res = specular_free_full(img, lam)
    ok = (res.image.sum(-1) > 1e-6) & ~res.clamped.any(-1)
    mc = max_chromaticity(res.image)
    assert np.all(np.abs(mc[ok] - lam) < 1e-5 * max(1.0, 1.0))
    assert np.all(res.image >= 0)


@given(colored, lams, st.floats(0.0, 3.0))
def test_white_offset_cancels(img, lam, s):
    a = specular_free_full(img, lam)
    b = specular_free_full(img + s, lam)
    ok = ~(a.clamped.any(-1) | b.clamped.any(-1))
    np.testing.assert_allclose(b.image[ok], a.image[ok], atol=1e-9)


@given(colored, lams)
def test_hue_preserved(img, lam):
    out = specular_free(img, lam)
    top2 = np.sort(img, -1)
    chromatic = (top2[..., 2] - top2[..., 1] > 1e-9) & (out.sum(-1) > 1e-6)
    np.testing.assert_array_equal(out.argmax(-1)[chromatic], img.argmax(-1)[chromatic])


def test_idempotent_on_target_manifold(rng):
    img = specular_free(rng.random((6, 6, 3)) + 0.1, 0.6)
    ok = ~specular_free_full(img, 0.6).clamped.any(-1) & (img.sum(-1) > 1e-6)
    np.testing.assert_allclose(delta_transform(img, 0.6)[ok], img[ok], atol=1e-12)


def test_achromatic_collapse_and_clamp_fraction():
    res = specular_free_full(np.full((3, 3, 3), 0.4), 0.5)
    assert not np.any(res.image)
    assert res.clamp_fraction == 1.0
    assert not np.any(specular_free_gray(np.full((3, 3, 3), 0.4)))


def test_gray_unchanged_by_white_lobes():
    sc = synth.gen_specular_scene(seed=2, h=64, w=64)
    a = specular_free_gray(sc.image)
    b = specular_free_gray(sc.diffuse_gt)
    ok = ~(specular_free_full(sc.image).clamped.any(-1)
           | specular_free_full(sc.diffuse_gt).clamped.any(-1))
    assert np.abs(a - b)[ok].max() < 1e-6
