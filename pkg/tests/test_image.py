import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from graphfuse.errors import DecodeError, FormatError, ShapeError, SizeError
from graphfuse.image import (crop_count, crop_offsets, crop_pairs, load_image, patchify,
                             rgb_to_ycbcr, save_image, sobel_gradient, sobel_gradient_backward,
                             to_gray, unpatchify, unpatchify_adjoint, ycbcr_to_rgb)

from oracles import central_diff, patch_blocks, sobel_loops

# full-range BT.601 forward matrix and offsets, inverted independently
BT601 = np.array([[0.299, 0.587, 0.114],
                  [-0.168736, -0.331264, 0.5],
                  [0.5, -0.418688, -0.081312]])
OFFSET = np.array([0.0, 0.5, 0.5])


def test_load_gray_bytes(tmp_path):
    path = tmp_path / "g.png"
    PILImage.fromarray(np.array([[0, 255], [128, 64]], dtype=np.uint8), mode="L").save(path)
    img = load_image(path)
    np.testing.assert_allclose(img.ravel(), [0, 1, 128 / 255, 64 / 255])
    assert img.shape == (2, 2)
    assert round(img[1, 0], 5) == 0.50196 and round(img[1, 1], 5) == 0.25098


def test_load_rgb_white(tmp_path):
    path = tmp_path / "w.png"
    PILImage.fromarray(np.full((1, 1, 3), 255, np.uint8), mode="RGB").save(path)
    img = load_image(path)
    assert img.shape == (1, 1, 3) and np.all(img == 1.0)


def test_load_sixteen_bit(tmp_path):
    path = tmp_path / "s.png"
    PILImage.fromarray(np.array([[0, 65535]], dtype=np.uint16)).save(path)
    np.testing.assert_allclose(load_image(path), [[0.0, 1.0]])


def test_truncated_file_is_decode_error(tmp_path):
    path = tmp_path / "t.png"
    save_image(np.random.default_rng(0).random((32, 32)), path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(DecodeError):
        load_image(path)


def test_unsupported_mode(tmp_path):
    path = tmp_path / "c.tif"
    PILImage.new("CMYK", (2, 2)).save(path)
    with pytest.raises(FormatError):
        load_image(path)


def test_save_load_round_trip(tmp_path, rng):
    img = np.rint(rng.random((5, 7)) * 255) / 255
    save_image(img, tmp_path / "a.png")
    np.testing.assert_array_equal(load_image(tmp_path / "a.png"), img)


@pytest.mark.parametrize("v", [0.0, 0.3, 1.0])
def test_neutral_chroma(v):
    ycc = rgb_to_ycbcr(np.full((2, 2, 3), v))
    np.testing.assert_allclose(ycc.y, v, atol=1e-12)
    np.testing.assert_allclose(ycc.cb, 0.5, atol=1e-12)
    np.testing.assert_allclose(ycc.cr, 0.5, atol=1e-12)


def test_ycbcr_matches_matrix_oracle(rng):
    img = rng.random((4, 5, 3))
    ycc = rgb_to_ycbcr(img)
    expected = img @ BT601.T + OFFSET
    np.testing.assert_allclose(np.stack(ycc, axis=-1), expected, atol=1e-5)


def test_ycbcr_inverse_matches_matrix_inverse(rng):
    ycc = np.stack([rng.random((3, 3)), rng.random((3, 3)), rng.random((3, 3))], axis=-1)
    expected = (ycc - OFFSET) @ np.linalg.inv(BT601).T
    got = ycbcr_to_rgb(tuple(np.moveaxis(ycc, -1, 0)), clip=False)
    np.testing.assert_allclose(got, expected, atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_colour_round_trip(seed):
    img = np.random.default_rng(seed).random((6, 4, 3))
    np.testing.assert_allclose(ycbcr_to_rgb(rgb_to_ycbcr(img), clip=False), img, atol=1e-6)


def test_ycbcr_neutral_to_gray():
    rgb = ycbcr_to_rgb((np.full((1, 1), 0.5), np.full((1, 1), 0.5), np.full((1, 1), 0.5)))
    np.testing.assert_allclose(rgb, 0.5, atol=1e-12)


def test_ycbcr_clamps_out_of_gamut():
    rgb = ycbcr_to_rgb((np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1))))
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0


def test_to_gray_passthrough_and_luma(rng):
    g = rng.random((3, 3))
    assert to_gray(g) is not None and np.array_equal(to_gray(g), g)
    rgb = rng.random((3, 3, 3))
    np.testing.assert_allclose(to_gray(rgb), rgb @ BT601[0], atol=1e-12)


@pytest.mark.parametrize("h,w,expected", [(64, 64, 1), (104, 64, 3), (64, 104, 3), (124, 124, 16)])
def test_crop_counts(h, w, expected):
    img = np.zeros((h, w))
    assert len(crop_pairs(img, img, 64, 20)) == expected


@settings(max_examples=100, deadline=None)
@given(st.integers(64, 400), st.integers(64, 400))
def test_crop_count_formula(h, w):
    offs = crop_offsets(h, w, 64, 20)
    assert len(offs) == ((h - 64) // 20 + 1) * ((w - 64) // 20 + 1)
    assert len(offs) == crop_count(h, 64, 20) * crop_count(w, 64, 20)
    assert all(y + 64 <= h and x + 64 <= w for y, x in offs)


def test_crop_pairs_aligned_and_errors(rng):
    ir, vis = rng.random((70, 90)), rng.random((70, 90))
    for (a, b), (y, x) in zip(crop_pairs(ir, vis, 64, 20), crop_offsets(70, 90, 64, 20)):
        assert np.array_equal(a, ir[y:y + 64, x:x + 64])
        assert np.array_equal(b, vis[y:y + 64, x:x + 64])
    with pytest.raises(SizeError):
        crop_pairs(np.zeros((32, 32)), np.zeros((32, 32)), 64, 20)
    with pytest.raises(ShapeError):
        crop_pairs(np.zeros((64, 64)), np.zeros((64, 65)), 64, 20)


def test_patchify_single_patch():
    img = np.arange(16.0).reshape(4, 4)
    vf = patchify(img, 4)
    assert vf.shape == (1, 16) and np.array_equal(vf[0], img.ravel())


@pytest.mark.parametrize("shape,patch", [((4, 4), 2), ((5, 4), 2), ((7, 9), 3), ((6, 6), 1)])
def test_patchify_matches_block_oracle(shape, patch, rng):
    img = rng.random(shape)
    np.testing.assert_array_equal(patchify(img, patch), patch_blocks(img, patch))


def test_patchify_padding_counts():
    assert patchify(np.zeros((4, 4)), 2).shape == (4, 4)
    assert patchify(np.zeros((5, 4)), 2).shape == (6, 4)
    img = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(patchify(img, 2)[0], [0, 1, 4, 5])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 4), st.integers(0, 1000))
def test_unpatchify_inverts_patchify(h, w, patch, seed):
    img = np.random.default_rng(seed).random((h, w))
    np.testing.assert_array_equal(unpatchify(patchify(img, patch), h, w, patch), img)


def test_unpatchify_zero_and_shape_error():
    assert np.all(unpatchify(np.zeros((4, 9)), 6, 6, 3) == 0)
    with pytest.raises(ShapeError):
        unpatchify(np.zeros((3, 9)), 6, 6, 3)


def test_unpatchify_adjoint_inner_product(rng):
    vf = rng.random((9, 4))
    dimg = rng.random((5, 6))
    lhs = np.sum(unpatchify(vf, 5, 6, 2) * dimg)
    rhs = np.sum(vf * unpatchify_adjoint(dimg, 2))
    assert abs(lhs - rhs) < 1e-12


def test_sobel_constant_is_zero():
    assert np.all(sobel_gradient(np.full((5, 6), 0.7)) == 0)


def test_sobel_vertical_step():
    step = 0.6
    img = np.zeros((5, 6))
    img[:, 3:] = step
    g = sobel_gradient(img)
    np.testing.assert_allclose(g[:, 2], 4 * step)
    np.testing.assert_allclose(g[:, 3], 4 * step)
    assert np.all(g[:, [0, 1, 4, 5]] == 0)


def test_sobel_single_pixel_pattern():
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    g = sobel_gradient(img)
    patch = g[2:5, 2:5]
    np.testing.assert_array_equal(patch, patch.T)
    np.testing.assert_array_equal(patch, patch[::-1, ::-1])
    np.testing.assert_array_equal(g, sobel_loops(img))
    assert g.sum() == patch.sum()


def test_sobel_matches_loop_oracle(rng):
    img = rng.random((6, 9))
    np.testing.assert_allclose(sobel_gradient(img), sobel_loops(img), atol=1e-12)


def test_sobel_backward_finite_difference(rng):
    img = rng.random((5, 5))
    w = rng.random((5, 5))
    grad = sobel_gradient_backward(img, w)
    for idx in np.ndindex(img.shape):
        fd = central_diff(lambda: float(np.sum(w * sobel_gradient(img))), img, idx, h=1e-7)
        assert abs(fd - grad[idx]) < 1e-5
