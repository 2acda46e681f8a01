import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from erx.frpca import (
    RpcaConfig,
    asnn,
    build_dft_split,
    frpca_solve,
    gen_shifted_target,
    gen_sparse_noise,
    matrix_psnr,
    rpca_cell,
)
from erx.linalg import InvalidInputError, adjoint_check, vec


def fft_amplitudes(x_mat: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.fft(x_mat, axis=0)) / np.sqrt(x_mat.shape[0])


# --- DFT split --------------------------------------------------------------------------


def test_impulse_flat_spectrum():
    t = build_dft_split(4, 1)
    e1 = np.array([[1.0], [0.0], [0.0], [0.0]])
    assert np.allclose(t.amplitudes(e1)[:, 0], [0.5, 0.5, 0.5, 0.5], atol=1e-15)


def test_constant_column_dc_only():
    t = build_dft_split(6, 1)
    amp = t.amplitudes(np.full((6, 1), 2.0))[:, 0]
    assert amp[0] == pytest.approx(2.0 * np.sqrt(6)) and np.allclose(amp[1:], 0, atol=1e-12)


def test_pairs_match_fft(rng):
    x = rng.standard_normal((7, 3))
    t = build_dft_split(7, 3)
    pairs = t.op(vec(x)).reshape(3, 7, 2)
    f = np.fft.fft(x, axis=0) / np.sqrt(7)
    assert np.allclose(pairs[..., 0], f.real.T, atol=1e-12)
    assert np.allclose(pairs[..., 1], f.imag.T, atol=1e-12)
    assert np.allclose(t.amplitudes(x), fft_amplitudes(x), atol=1e-10)


@given(arrays(np.float64, (9, 2), elements=st.floats(-5, 5)), st.integers(0, 8))
def test_shift_keeps_amplitudes(x, k):
    t = build_dft_split(9, 2)
    assert np.allclose(t.amplitudes(np.roll(x, k, axis=0)), t.amplitudes(x), atol=1e-12)


@pytest.mark.parametrize("m, n, d", [(8, 3, 1), (5, 2, 1), (16, 2, 2)])
def test_transform_orthogonal_and_adjoint(rng, m, n, d):
    t = build_dft_split(m, n, d)
    x = rng.standard_normal(m * n)
    assert np.linalg.norm(t.op(x)) == pytest.approx(np.linalg.norm(x), rel=1e-10)
    assert adjoint_check(t.op)


def test_two_dimensional_matches_fft2(rng):
    img = rng.standard_normal((4, 4))
    t = build_dft_split(16, 1, dims_d=2)
    amp = t.amplitudes(img.reshape(-1, 1, order="F"))[:, 0]
    ref = np.abs(np.fft.fft2(img)).reshape(-1, order="F") / 4.0
    assert np.allclose(amp, ref, atol=1e-12)


def test_build_errors():
    with pytest.raises(InvalidInputError):
        build_dft_split(0, 2)
    with pytest.raises(InvalidInputError):
        build_dft_split(8, 2, dims_d=2)
    with pytest.raises(InvalidInputError):
        build_dft_split(4, 2, dims_d=3)


# --- ASNN -----------------------------------------------------------------------------


def test_asnn_shifted_impulses():
    x = np.zeros((4, 2))
    x[0, 0] = 1.0
    x[1, 1] = 1.0
    assert asnn(x) == pytest.approx(np.sqrt(2), abs=1e-12)
    assert np.linalg.svd(x, compute_uv=False).sum() == pytest.approx(2.0)


def test_asnn_zero_and_single_column(rng):
    assert asnn(np.zeros((5, 3))) == 0.0
    x = rng.standard_normal((6, 1))
    assert asnn(x) == pytest.approx(np.linalg.norm(fft_amplitudes(x)), rel=1e-12)
    with pytest.raises(InvalidInputError):
        asnn(np.zeros(4))
    with pytest.raises(InvalidInputError):
        asnn(np.zeros((4, 2)), build_dft_split(4, 3))


def test_asnn_shift_invariance(rng):
    x = rng.standard_normal(12)
    values = [asnn(np.column_stack([x, np.roll(x, k)])) for k in range(12)]
    assert np.ptp(values) <= 1e-10


# --- generators -----------------------------------------------------------------------


def test_target_shift_zero():
    t = gen_shifted_target(0)
    assert t.shape == (43, 20)
    col = np.zeros(43)
    col[:5] = 1
    assert all(np.array_equal(t[:, j], col) for j in range(20))


def test_target_shift_two():
    t = gen_shifted_target(2)
    # column n (1-based) has support rows 2n-1 .. 2n+3 (1-based)
    for n in range(1, 21):
        rows = np.nonzero(t[:, n - 1])[0] + 1
        assert rows.tolist() == list(range(2 * n - 1, 2 * n + 4))
    assert np.all(t.sum(axis=0) == 5)


def test_target_out_of_bounds():
    with pytest.raises(InvalidInputError):
        gen_shifted_target(3)
    with pytest.raises(InvalidInputError):
        gen_shifted_target(-1)


def test_noise_extremes():
    t = gen_shifted_target(1)
    assert not gen_sparse_noise(t, 0.0).any()
    assert np.array_equal(gen_sparse_noise(t, 1.0), 1.0 - t)
    with pytest.raises(InvalidInputError):
        gen_sparse_noise(t, 1.5)


def test_noise_density_and_seed():
    t = np.zeros((100, 100))
    p = 0.05
    s = gen_sparse_noise(t, p, seed=11)
    sigma = np.sqrt(p * (1 - p) / t.size)
    assert abs(s.mean() - p) <= 3 * sigma
    assert np.array_equal(s, gen_sparse_noise(t, p, seed=11))
    assert not np.array_equal(s, gen_sparse_noise(t, p, seed=12))


def test_matrix_psnr():
    a = np.zeros((3, 3))
    assert matrix_psnr(a, np.ones((3, 3))) == pytest.approx(0.0)


# --- solver ---------------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["signal_domain", "frequency_domain"])
def test_rank_one_zero_budget(rng, mode):
    x = np.outer(rng.random(8), rng.random(4))
    l_mat, s_mat, trace = frpca_solve(x, RpcaConfig(mode, 0.0, eps_stop=1e-9, max_iter=200_000))
    assert trace.converged
    assert np.max(np.abs(l_mat - x)) <= 1e-5 and np.max(np.abs(s_mat)) <= 1e-5


@pytest.mark.parametrize("mode", ["signal_domain", "frequency_domain"])
def test_decomposition_identity(mode):
    target = gen_shifted_target(1, 16, 6)
    noise = gen_sparse_noise(target, 0.1, seed=2)
    x = target + noise
    l_mat, s_mat, trace = frpca_solve(x, RpcaConfig(mode, float(noise.sum()), eps_stop=1e-8, max_iter=200_000))
    assert trace.converged
    assert np.max(np.abs(l_mat + s_mat - x)) <= 1e-6
    assert np.abs(s_mat).sum() <= noise.sum() + 1e-6


def test_config_validation():
    with pytest.raises(InvalidInputError):
        RpcaConfig(mode="time")
    with pytest.raises(InvalidInputError):
        RpcaConfig(l1_eps=-1.0)
    with pytest.raises(InvalidInputError):
        frpca_solve(np.zeros(4), RpcaConfig())


def test_rpca_cell_shares_noise_between_modes():
    a = rpca_cell(1, 0.05, "signal_domain", max_iter=5)
    b = rpca_cell(1, 0.05, "frequency_domain", max_iter=5)
    assert np.array_equal(a[5], b[5])
    c = rpca_cell(1, 0.05, "signal_domain", max_iter=5)
    assert a[0] == c[0]
