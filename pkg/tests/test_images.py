import numpy as np
import pytest

from erx.dstv import vtv_norm
from erx.images import (
    COLOR_DCT,
    ImagePlane,
    color_transform,
    diff_ops,
    fwht,
    gradient_op,
    measurement_op,
    patch_expand,
    permute_gradients,
    psnr,
    synthetic_image,
)
from erx.linalg import InvalidInputError, adjoint_check, to_dense


# --- differences --------------------------------------------------------------------


def test_gradient_of_constant_is_zero():
    img = ImagePlane(np.full((4, 5, 3), 0.3))
    assert np.allclose(gradient_op(5, 4)(img.to_vector()), 0)


def test_diff_ops_periodic_values():
    # 3 x 2 single-channel image, column-major vector
    img = np.array([[1.0, 4.0], [2.0, 6.0], [4.0, 9.0]])
    dv, dh = diff_ops(2, 3)
    x = img.reshape(-1, order="F")
    v = dv(x).reshape(3, 2, order="F")
    h = dh(x).reshape(3, 2, order="F")
    assert np.array_equal(v, np.roll(img, -1, axis=0) - img)
    assert np.array_equal(h, np.roll(img, -1, axis=1) - img)


def test_difference_adjoints():
    dv, dh = diff_ops(5, 4)
    assert adjoint_check(dv) and adjoint_check(dh)
    assert adjoint_check(gradient_op(5, 4))
    # adjoint is the negative backward difference
    x = np.arange(20.0)
    g = x.reshape(5, 4)
    assert np.array_equal(dv.adjoint(x), -(g - np.roll(g, 1, axis=1)).reshape(-1))


def test_gradient_norm_bound():
    dense = to_dense(gradient_op(8, 8, 1))
    assert np.linalg.norm(dense, 2) <= 2 * np.sqrt(2) + 1e-12


def test_gradient_layout():
    # channel by channel: [Dv x1; Dh x1; Dv x2; ...]
    n = 6
    dv, dh = diff_ops(3, 2)
    x = np.random.default_rng(0).standard_normal(3 * n)
    g = gradient_op(3, 2)(x)
    for c in range(3):
        xc = x[c * n : (c + 1) * n]
        assert np.allclose(g[2 * c * n : (2 * c + 1) * n], dv(xc))
        assert np.allclose(g[(2 * c + 1) * n : (2 * c + 2) * n], dh(xc))


def test_small_images_rejected():
    with pytest.raises(InvalidInputError):
        diff_ops(1, 4)


# --- color transform -----------------------------------------------------------------


def test_color_gray_pixel():
    c = 0.4
    out = color_transform(1)(np.full(3, c))
    assert np.allclose(out, [c * np.sqrt(3), 0, 0])


def test_color_orthonormal(rng):
    assert np.allclose(COLOR_DCT.T @ COLOR_DCT, np.eye(3), atol=1e-12)
    op = color_transform(7)
    d = to_dense(op)
    assert np.allclose(d.T @ d, np.eye(21), atol=1e-12)
    x = rng.random(21)
    assert np.allclose(op.adjoint(op(x)), x, atol=1e-12)


# --- permutations -------------------------------------------------------------------


def test_p4_basis_vector():
    n = 4
    p4 = permute_gradients("P4", n)
    # entry (Dh x_2) at pixel 1 sits at position 3 * n + 1 in the gradient vector
    e = np.zeros(6 * n)
    e[3 * n + 1] = 1.0
    assert np.argmax(p4(e)) == 6 * 1 + 3


def test_p1_basis_vector():
    n = 4
    p1 = permute_gradients("P1", n)
    e = np.zeros(6 * n)
    e[1 * n + 2] = 1.0  # Dh of luma at pixel 2
    assert np.argmax(p1(e)) == 2 * 2 + 1
    e = np.zeros(6 * n)
    e[4 * n + 3] = 1.0  # Dv of the second chroma channel at pixel 3
    assert np.argmax(p1(e)) == 2 * n + 4 * 3 + 2


@pytest.mark.parametrize("variant", ["P1", "P4"])
def test_permutations_orthogonal(variant):
    d = to_dense(permute_gradients(variant, 5))
    assert np.array_equal(d @ d.T, np.eye(30))
    assert adjoint_check(permute_gradients(variant, 5))


def test_permutation_unknown():
    with pytest.raises(InvalidInputError):
        permute_gradients("P2", 4)


def test_vtv_two_by_two_hand_sum(rng):
    px = rng.random((2, 2, 3))
    total = 0.0
    for i in range(2):
        for j in range(2):
            sq = 0.0
            for c in range(3):
                sq += (px[(i + 1) % 2, j, c] - px[i, j, c]) ** 2 + (px[i, (j + 1) % 2, c] - px[i, j, c]) ** 2
            total += np.sqrt(sq)
    assert vtv_norm(ImagePlane(px)) == pytest.approx(total, rel=1e-12)


# --- patch expansion ----------------------------------------------------------------


def test_patch_w1_identity(rng):
    e = patch_expand(1, 4, 3)
    x = rng.standard_normal(e.in_dim)
    assert e.out_dim == e.in_dim
    assert np.array_equal(e(x), x)


@pytest.mark.parametrize("w", [3, 5])
def test_patch_counts_and_adjoint(w):
    e = patch_expand(w, 5, 4)
    assert e.out_dim == w * w * e.in_dim
    assert np.array_equal(e.adjoint(np.ones(e.out_dim)), np.full(e.in_dim, w * w))
    assert adjoint_check(e)


def test_patch_block_contents():
    # 3x3 patch around pixel 0 of the luma dv gradients of a 4 x 4 image
    width = height = 4
    n = 16
    p = np.arange(6.0 * n)
    e = patch_expand(3, width, height)
    block = e(p)[: 9 * 2].reshape(2, 9)  # column-major 9 x 2 matrix [dv patch, dh patch]
    luma_dv = p[: 2 * n].reshape(n, 2)[:, 0].reshape(width, height).T  # (row, col) grid
    expected = [luma_dv[a % 4, b % 4] for b in (-1, 0, 1) for a in (-1, 0, 1)]
    assert np.array_equal(block[0], expected)


def test_patch_even_rejected():
    with pytest.raises(InvalidInputError):
        patch_expand(2, 4, 4)


# --- measurements ----------------------------------------------------------------------


def test_fwht_matches_hadamard(rng):
    from scipy.linalg import hadamard

    a = rng.standard_normal((3, 16))
    assert np.allclose(fwht(a), a @ hadamard(16) / 4.0)


def test_measurement_full_identity_selection():
    phi = measurement_op(48, 48, seed=None)
    d = to_dense(phi)
    assert np.allclose(d @ d.T, np.eye(48), atol=1e-12)


def test_measurement_adjoint_and_energy(rng):
    phi = measurement_op(20, 96, seed=5)
    assert adjoint_check(phi)
    for _ in range(100):
        x = rng.standard_normal(96)
        assert np.linalg.norm(phi(x)) <= np.linalg.norm(x) * (1 + 1e-12)


def test_measurement_errors():
    with pytest.raises(InvalidInputError):
        measurement_op(5, 60)
    with pytest.raises(InvalidInputError):
        measurement_op(0, 48)
    with pytest.raises(InvalidInputError):
        measurement_op(10, 50)


def test_measurement_seeded():
    a = to_dense(measurement_op(10, 48, seed=3))
    b = to_dense(measurement_op(10, 48, seed=3))
    c = to_dense(measurement_op(10, 48, seed=4))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# --- psnr and images -----------------------------------------------------------------------


def test_psnr_examples():
    a = np.zeros((2, 2, 3))
    assert psnr(a, a) == 999.0
    assert psnr(a, np.ones_like(a)) == pytest.approx(0.0)
    b = np.full_like(a, np.sqrt(1e-3))
    assert psnr(a, b) == pytest.approx(30.0)
    with pytest.raises(InvalidInputError):
        psnr(a, np.zeros((2, 3, 3)))


def test_image_plane_vector_round_trip(rng):
    img = ImagePlane(rng.random((3, 4, 3)))
    x = img.to_vector()
    assert x[1] == img.pixels[1, 0, 0] and x[12] == img.pixels[0, 0, 1]
    assert np.array_equal(ImagePlane.from_vector(x, 3, 4).pixels, img.pixels)
    with pytest.raises(InvalidInputError):
        ImagePlane(np.zeros((2, 2, 2)))


def test_synthetic_image():
    a = synthetic_image(0, 16)
    assert a.pixels.shape == (16, 16, 3)
    assert a.pixels.min() >= 0 and a.pixels.max() <= 1
    assert np.array_equal(a.pixels, synthetic_image(0, 16).pixels)
    assert not np.array_equal(a.pixels, synthetic_image(1, 16).pixels)
    c = synthetic_image(0, 16, "constant")
    assert len(np.unique(c.pixels[..., 0])) < 12
    with pytest.raises(InvalidInputError):
        synthetic_image(0, 16, "noise")
