"""Amplitude spectrum nuclear norm (ASNN) and frequency-domain robust PCA.

RPCA splits an observation ``X = L + S`` into a low-rank ``L`` and a sparse
``S`` by minimizing ``||L||_*`` subject to ``||S||_1 <= eps``. The frequency
domain variant replaces ``||L||_*`` by the nuclear norm of the entrywise DFT
amplitudes of the columns of ``L``. Amplitudes do not change under circular
shifts, so columns that are shifted copies of each other still give a
low-rank amplitude matrix.

The amplitudes are written as per-bin l2 norms of (real, imaginary) pairs,
so the ASNN is a layered norm: l2 over pairs, then the nuclear norm. Its
relaxation is a convex surrogate only (the nuclear norm is not monotone on
nonnegative matrices).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layered import LayeredNorm, LayerFn, relax
from .linalg import InvalidInputError, LinearOperator, block_operator, identity, operator_norm, svd_batch, vec
from .pds import SolveTrace, default_steps, pds_solve
from .prox import GroupStructure, l1_ball_fn, singleton_fn

__all__ = [
    "DftSplitOperator",
    "MODES",
    "RpcaConfig",
    "asnn",
    "build_dft_split",
    "frpca_solve",
    "gen_shifted_target",
    "gen_sparse_noise",
    "matrix_psnr",
    "rpca_cell",
]

MODES = ("signal_domain", "frequency_domain")
NORM_PAD = 1.01


@dataclass(frozen=True)
class DftSplitOperator:
    """``T_hat = I kron T``: every column mapped to interleaved (real, imag) DFT pairs.

    ``op`` maps ``R^{m n}`` (column-major ``m x n`` matrix) to ``R^{2 m n}``
    ordered column by column, then frequency bin, then (real, imag).
    """

    op: LinearOperator
    m: int
    n: int
    dims_d: int

    def amplitudes(self, x_mat: np.ndarray) -> np.ndarray:
        """Entrywise DFT magnitudes as an ``m x n`` matrix."""
        pairs = self.op(vec(x_mat)).reshape(self.n, self.m, 2)
        return np.sqrt((pairs * pairs).sum(-1)).T


def _dft_parts(size: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(size)
    ang = 2.0 * np.pi * np.outer(k, k) / size
    return np.cos(ang) / np.sqrt(size), np.sin(ang) / np.sqrt(size)


def build_dft_split(m: int, n: int, dims_d: int = 1) -> DftSplitOperator:
    """Real/imaginary split of the normalized DFT applied to each column.

    For ``dims_d == 1`` each column has ``m`` samples and
    ``T = [Wc; -Ws]`` (interleaved). For ``dims_d == 2`` each column is a
    column-major ``s x s`` image with ``m = s^2`` and the 2-D DFT gives
    ``T_r = Wc kron Wc - Ws kron Ws`` and ``T_i = -(Wc kron Ws + Ws kron Wc)``.
    """
    if m < 1 or n < 1:
        raise InvalidInputError("m and n must be positive")
    if dims_d == 1:
        wc, ws = _dft_parts(m)
        tr, ti = wc, -ws
    elif dims_d == 2:
        side = int(round(np.sqrt(m)))
        if side * side != m:
            raise InvalidInputError("2-D transform needs m to be a perfect square")
        wc, ws = _dft_parts(side)
        tr = np.kron(wc, wc) - np.kron(ws, ws)
        ti = -(np.kron(wc, ws) + np.kron(ws, wc))
    else:
        raise InvalidInputError("dims_d must be 1 or 2")
    # rows interleaved as (real_0, imag_0, real_1, imag_1, ...)
    t = np.empty((2 * m, m))
    t[0::2] = tr
    t[1::2] = ti

    def forward(x):
        return (t @ x.reshape(n, m).T).T.reshape(-1)

    def adjoint(y):
        return (t.T @ y.reshape(n, 2 * m).T).T.reshape(-1)

    return DftSplitOperator(LinearOperator(forward, adjoint, m * n, 2 * m * n, "T"), m, n, dims_d)


def asnn(x_mat: np.ndarray, t: DftSplitOperator | None = None) -> float:
    """Nuclear norm of the entrywise DFT amplitude matrix of the columns."""
    x_mat = np.asarray(x_mat, dtype=np.float64)
    if x_mat.ndim != 2:
        raise InvalidInputError("expected a matrix")
    if t is None:
        t = build_dft_split(*x_mat.shape)
    if (t.m, t.n) != x_mat.shape:
        raise InvalidInputError("matrix shape does not match the transform")
    return float(svd_batch(t.amplitudes(x_mat)).singular_values.sum())


@dataclass(frozen=True)
class RpcaConfig:
    mode: str = "frequency_domain"
    l1_eps: float = 0.0
    eps_stop: float = 1e-5
    max_iter: int = 50_000
    gamma1: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")
        if self.l1_eps < 0:
            raise InvalidInputError("l1_eps must be nonnegative")


def _select(total: int, start: int, size: int) -> LinearOperator:
    def forward(x):
        return x[start : start + size].copy()

    def adjoint(y):
        out = np.zeros(total)
        out[start : start + size] = y
        return out

    return LinearOperator(forward, adjoint, total, size, "select")


def frpca_solve(
    x_mat: np.ndarray, cfg: RpcaConfig, t: DftSplitOperator | None = None
) -> tuple[np.ndarray, np.ndarray, SolveTrace]:
    """Decompose ``X = L + S`` with ``||S||_1 <= cfg.l1_eps``.

    ``signal_domain`` minimizes ``||L||_*``; ``frequency_domain`` minimizes
    the relaxed ASNN of ``L``. The primal vector is ``[l; s]`` (plus the
    amplitude variable ``z`` in the frequency domain), ``G = 0`` and ``H``
    holds the outer nuclear prox, the l1-ball projection on ``s`` and the
    singleton projection of ``l + s`` onto ``x``.

    Returns
    -------
    L, S : ndarray
    trace : SolveTrace
    """
    x_mat = np.asarray(x_mat, dtype=np.float64)
    if x_mat.ndim != 2:
        raise InvalidInputError("expected a matrix")
    m, n = x_mat.shape
    mn = m * n
    sel_l = _select(2 * mn, 0, mn)
    sel_s = _select(2 * mn, mn, mn)
    sum_ls = block_operator([[identity(mn), identity(mn)]])
    g_terms = [(l1_ball_fn(cfg.l1_eps, mn), sel_s), (singleton_fn(vec(x_mat)), sum_ls)]
    nuclear = LayerFn("nuclear", GroupStructure.from_sizes([mn]), shape=(m, n))
    if cfg.mode == "signal_domain":
        ln = LayeredNorm((nuclear,), mn)
        a_op = sel_l
    else:
        if t is None:
            t = build_dft_split(m, n)
        pairs = LayerFn("l2", GroupStructure.uniform(mn, 2))
        ln = LayeredNorm((pairs, nuclear), 2 * mn)
        a_op = t.op @ sel_l
    prob = relax(ln, a_op, g_terms)
    f_norm = NORM_PAD * operator_norm(prob.f_op)
    p, trace = pds_solve(prob, default_steps(f_norm, cfg.gamma1), cfg.eps_stop, cfg.max_iter, f_norm=f_norm)
    l_mat = p[:mn].reshape((m, n), order="F")
    s_mat = p[mn : 2 * mn].reshape((m, n), order="F")
    return l_mat, s_mat, trace


def gen_shifted_target(shift: int, m: int = 43, n: int = 20) -> np.ndarray:
    """Binary ``m x n`` matrix whose column ``j`` (0-based) is one on rows ``shift*j .. shift*j + 4``."""
    if shift < 0 or m < 1 or n < 1:
        raise InvalidInputError("shift must be nonnegative and sizes positive")
    if shift * (n - 1) + 5 > m:
        raise InvalidInputError(f"shift {shift} pushes the support past row {m}")
    out = np.zeros((m, n))
    for j in range(n):
        out[shift * j : shift * j + 5, j] = 1.0
    return out


def gen_sparse_noise(target: np.ndarray, p: float, seed: int | None = 0) -> np.ndarray:
    """Bernoulli(``p``) ones placed only where ``target`` is zero."""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    hits = rng.random(target.shape) < p
    return np.where((target == 0) & hits, 1.0, 0.0)


def matrix_psnr(a: np.ndarray, b: np.ndarray) -> float:
    from .images import psnr

    return psnr(np.asarray(a)[:, :, None], np.asarray(b)[:, :, None])


def rpca_cell(shift: int, p: float, mode: str, seed: int = 0, eps_stop: float = 1e-5, max_iter: int = 50_000):
    """One synthetic experiment: returns ``(psnr_dB, L, S, trace, target, noise)``.

    The noise realization depends only on ``(shift, p, seed)``, so both modes
    see the same observation.
    """
    target = gen_shifted_target(shift)
    cell_seed = np.random.SeedSequence([seed, shift, int(round(p * 1e6))])
    noise = gen_sparse_noise(target, p, np.random.default_rng(cell_seed))
    cfg = RpcaConfig(mode, float(noise.sum()), eps_stop, max_iter, seed=seed)
    l_mat, s_mat, trace = frpca_solve(target + noise, cfg)
    return matrix_psnr(l_mat, target), l_mat, s_mat, trace, target, noise
