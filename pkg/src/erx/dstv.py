"""Color image recovery with VTV, DVTV and DSTV regularization.

All four regularizers are layered norms of a linear transform of the image:

* ``VTV``: l2 over per-pixel RGB gradient 6-tuples, then l1 (relaxed);
* ``VTVwoERx``: the same norm handled directly as a group l2,1 prox;
* ``DVTV``: weighted group l2,1 of luma pairs and chroma 4-tuples in the
  DCT color space (directly proximable);
* ``DSTV``: nuclear norms of ``W x W`` patch gradient matrices, combined by
  the same weighted outer norm as DVTV (relaxed).

Recovery solves ``min R(x)`` subject to ``x in [0,1]^{3N}`` and
``||Phi x - y||_2 <= eps_fid``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .images import ImagePlane, color_transform, gradient_op, measurement_op, patch_expand, permute_gradients
from .layered import LayeredNorm, LayerFn, eval_layered, relax
from .linalg import InvalidInputError, LinearOperator, identity, operator_norm
from .pds import SolveTrace, SplitProblem, StepSizes, default_steps, pds_solve
from .prox import GroupStructure, box_fn, l2_ball_fn

__all__ = [
    "REGULARIZERS",
    "RecoveryConfig",
    "RecoveryResult",
    "build_problem",
    "build_regularizer",
    "dstv_norm",
    "dvtv_norm",
    "recover",
    "recover_full",
    "regularizer_value",
    "simulate_measurements",
    "vtv_norm",
    "vtv_pair_equivalence",
]

REGULARIZERS = ("VTV", "VTVwoERx", "DVTV", "DSTV")
# power iteration approaches the norm from below; pad before bounding steps
NORM_PAD = 1.01
REFERENCE_MAX_ITER = 200_000


@dataclass(frozen=True)
class RecoveryConfig:
    regularizer: str = "DSTV"
    w: float = 0.5
    patch: int = 3
    eps_fid: float = 0.0
    eps_stop: float = 1e-7
    max_iter: int = 50_000
    gamma1: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise InvalidInputError(f"unknown regularizer {self.regularizer!r}")
        if self.w < 0 or self.eps_fid < 0:
            raise InvalidInputError("w and eps_fid must be nonnegative")
        if self.patch < 1 or self.patch % 2 == 0:
            raise InvalidInputError("patch side must be a positive odd number")


@dataclass
class RecoveryResult:
    image: ImagePlane
    trace: SolveTrace
    p: np.ndarray
    problem: SplitProblem


def _luma_chroma_groups(n: int, w: float) -> GroupStructure:
    return GroupStructure.from_sizes([1] * n + [2] * n, [w] * n + [1.0] * n)


def build_regularizer(reg: str, height: int, width: int, w: float = 0.5, patch: int = 3):
    """Return ``(LayeredNorm, A)`` with ``R(x) = ln(A x)`` for a ``height x width`` color image."""
    n = height * width
    d = gradient_op(width, height, 3)
    if reg in ("VTV", "VTVwoERx"):
        a = permute_gradients("P4", n) @ d
        pix = GroupStructure.uniform(n, 6)
        if reg == "VTV":
            layers = (LayerFn("l2", pix), LayerFn("l1"))
        else:
            layers = (LayerFn("l2", pix),)
        return LayeredNorm(layers, 6 * n), a
    a = permute_gradients("P1", n) @ d @ color_transform(n)
    if reg == "DVTV":
        gs = GroupStructure.from_sizes([2] * n + [4] * n, [w] * n + [1.0] * n)
        return LayeredNorm((LayerFn("l2", gs),), 6 * n), a
    if reg == "DSTV":
        k = patch * patch
        a = patch_expand(patch, width, height) @ a
        inner = LayerFn("nuclear", GroupStructure.uniform(3 * n, 2 * k), shape=(k, 2))
        outer = LayerFn("l2", _luma_chroma_groups(n, w))
        return LayeredNorm((inner, outer), 6 * k * n), a
    raise InvalidInputError(f"unknown regularizer {reg!r}")


def regularizer_value(img: ImagePlane, reg: str, w: float = 0.5, patch: int = 3) -> float:
    ln, a = build_regularizer(reg, img.height, img.width, w, patch)
    return eval_layered(ln, a(img.to_vector()))


def dstv_norm(img: ImagePlane, w: float = 0.5, patch: int = 3) -> float:
    """``sum_n w ||X_{y,n}||_* + sum_n sqrt(||X_{1,n}||_*^2 + ||X_{2,n}||_*^2)``."""
    if img.channels != 3:
        raise InvalidInputError("DSTV needs a 3-channel image")
    return regularizer_value(img, "DSTV", w, patch)


def dvtv_norm(img: ImagePlane, w: float = 0.5) -> float:
    return regularizer_value(img, "DVTV", w)


def vtv_norm(img: ImagePlane) -> float:
    return regularizer_value(img, "VTV")


def simulate_measurements(
    img: ImagePlane, sampling: float = 0.2, sigma: float = 0.1, seed: int = 0
) -> tuple[np.ndarray, LinearOperator, float]:
    """Compressed measurements ``y = Phi x + sigma * n`` of a color image.

    ``Phi`` keeps ``round(sampling * 3N)`` rows of a sign-randomized
    Walsh-Hadamard transform drawn with ``seed``; the Gaussian noise uses an
    independent stream derived from the same seed.

    Returns
    -------
    y : ndarray
    phi : LinearOperator
    eps_fid : float
        The oracle fidelity radius ``||Phi x - y||_2``.
    """
    if img.channels != 3:
        raise InvalidInputError("measurements need a 3-channel image")
    if not 0.0 < sampling <= 1.0:
        raise InvalidInputError("sampling must lie in (0, 1]")
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    x = img.to_vector()
    n3 = x.size
    phi = measurement_op(max(1, int(round(sampling * n3))), n3, seed=seed)
    noise = sigma * np.random.default_rng([seed, 1]).standard_normal(phi.out_dim)
    return phi(x) + noise, phi, float(np.linalg.norm(noise))


def build_problem(y: np.ndarray, phi: LinearOperator, cfg: RecoveryConfig, height: int, width: int) -> SplitProblem:
    if phi.out_dim != len(y):
        raise InvalidInputError("measurement length does not match the operator")
    if phi.in_dim != 3 * height * width:
        raise InvalidInputError("operator domain does not match the image size")
    ln, a = build_regularizer(cfg.regularizer, height, width, cfg.w, cfg.patch)
    return relax(ln, a, [(l2_ball_fn(y, cfg.eps_fid), phi)], x_prox=box_fn(0.0, 1.0))


def _steps(prob: SplitProblem, gamma1: float) -> tuple[StepSizes, float]:
    f_norm = NORM_PAD * operator_norm(prob.f_op)
    return default_steps(f_norm, gamma1), f_norm


def recover_full(
    y: np.ndarray,
    phi: LinearOperator,
    cfg: RecoveryConfig,
    height: int,
    width: int,
    callback: Callable[[int, np.ndarray], None] | None = None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    objective_every: int = 0,
) -> RecoveryResult:
    """Solve the recovery problem and keep the full primal vector and problem.

    With ``objective_every > 0`` the trace logs the regularizer value of the
    current image every that many iterations.
    """
    prob = build_problem(np.asarray(y, dtype=np.float64), phi, cfg, height, width)
    steps, f_norm = _steps(prob, cfg.gamma1)
    n3 = 3 * height * width
    ln, a = build_regularizer(cfg.regularizer, height, width, cfg.w, cfg.patch)
    p, trace = pds_solve(
        prob,
        steps,
        cfg.eps_stop,
        cfg.max_iter,
        init,
        f_norm=f_norm,
        callback=callback,
        objective_every=objective_every,
        objective_fn=lambda q: eval_layered(ln, a(q[:n3])),
    )
    img = ImagePlane.from_vector(np.clip(p[:n3], 0.0, 1.0), height, width, 3)
    return RecoveryResult(img, trace, p, prob)


def recover(y, phi, cfg: RecoveryConfig, height: int, width: int) -> tuple[ImagePlane, SolveTrace]:
    """Recover an image from ``y = Phi x + noise``; returns the image and the solver trace."""
    res = recover_full(y, phi, cfg, height, width)
    return res.image, res.trace


def vtv_pair_equivalence(
    y: np.ndarray,
    phi: LinearOperator,
    cfg: RecoveryConfig,
    height: int,
    width: int,
    reference_eps_stop: float | None = None,
    reference_max_iter: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance curves of VTV solved with and without relaxation.

    VTV without relaxation is first solved to ``reference_eps_stop`` (default
    ``cfg.eps_stop / 100``) to get its minimizer ``x_ref``; that solve is
    capped at ``reference_max_iter`` (default: the larger of
    ``cfg.max_iter`` and 200 000), not at ``cfg.max_iter``. Both solvers are
    then run with ``cfg.eps_stop`` and every iterate is logged as
    ``||x_n - x_ref||_2 / (3N)``.

    Returns
    -------
    curve_with, curve_without : ndarray
        Per-iteration distances for the relaxed and the direct solver.
    x_ref : ndarray
        Reference minimizer.
    """
    n3 = 3 * height * width
    ref_cfg = _replace(
        cfg,
        regularizer="VTVwoERx",
        eps_stop=reference_eps_stop or cfg.eps_stop / 100,
        max_iter=reference_max_iter or max(cfg.max_iter, REFERENCE_MAX_ITER),
    )
    x_ref = recover_full(y, phi, ref_cfg, height, width).p[:n3]
    curves = []
    for reg in ("VTV", "VTVwoERx"):
        dist: list[float] = []
        recover_full(
            y, phi, _replace(cfg, regularizer=reg), height, width,
            callback=lambda n, p: dist.append(float(np.linalg.norm(p[:n3] - x_ref)) / n3),
        )
        curves.append(np.array(dist))
    return curves[0], curves[1], x_ref


def _replace(cfg: RecoveryConfig, **kw) -> RecoveryConfig:
    from dataclasses import replace

    return replace(cfg, **kw)
