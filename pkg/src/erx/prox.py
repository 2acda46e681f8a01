"""Proximity operators and projections onto simple convex sets.

Every operator is out-of-place. ``gamma`` always denotes the prox index, i.e.
``prox(x, gamma) = argmin_y gamma * f(y) + 0.5 * ||x - y||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import InvalidInputError, mat, svd_batch, vec

__all__ = [
    "GroupStructure",
    "InvalidRangeError",
    "ProxFn",
    "StructureError",
    "box_fn",
    "group_l21_fn",
    "l1_ball_fn",
    "l1_fn",
    "l2_ball_fn",
    "l2_fn",
    "linf_fn",
    "nonpos_fn",
    "nuclear_fn",
    "project_box",
    "project_halfspace_nonpos",
    "project_l1_ball",
    "project_l2_ball",
    "project_singleton",
    "prox_conjugate",
    "prox_group_l21",
    "prox_l1",
    "prox_l2",
    "prox_linf",
    "prox_nuclear",
    "prox_spectral",
    "scaled",
    "singleton_fn",
    "soft_threshold",
    "spectral_fn",
    "weighted_l1_fn",
    "zero_fn",
]

# Relative slack used when an indicator is evaluated on a point that was just
# projected: rounding may put it a few ulps outside the set.
FEAS_TOL = 1e-12


class StructureError(ValueError):
    """Group structure does not match the vector it is applied to."""


class InvalidRangeError(ValueError):
    """Box bounds with ``lo > hi``."""


@dataclass(frozen=True)
class GroupStructure:
    """Contiguous, non-overlapping groups covering a vector exactly."""

    offsets: np.ndarray
    sizes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if offsets.shape != sizes.shape or sizes.shape != weights.shape or offsets.ndim != 1:
            raise StructureError("offsets, sizes and weights must be 1-D arrays of equal length")
        if len(sizes) == 0 or np.any(sizes < 1):
            raise StructureError("groups must be non-empty")
        if offsets[0] != 0 or np.any(offsets[1:] != np.cumsum(sizes)[:-1]):
            raise StructureError("groups must be contiguous and start at 0")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise StructureError("group weights must be finite and nonnegative")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], weights: Sequence[float] | None = None) -> "GroupStructure":
        sizes = np.asarray(sizes, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        if weights is None:
            weights = np.ones(len(sizes))
        return cls(offsets, sizes, np.asarray(weights, dtype=np.float64))

    @classmethod
    def uniform(cls, n_groups: int, size: int, weight: float = 1.0) -> "GroupStructure":
        return cls.from_sizes([size] * n_groups, [weight] * n_groups)

    @property
    def dim(self) -> int:
        return int(self.sizes.sum())

    @property
    def n_groups(self) -> int:
        return len(self.sizes)

    @property
    def uniform_size(self) -> int | None:
        s = self.sizes
        return int(s[0]) if np.all(s == s[0]) else None

    def check(self, x: np.ndarray) -> None:
        if x.shape != (self.dim,):
            raise StructureError(f"group structure covers {self.dim} entries, vector has shape {x.shape}")

    def group_sum(self, v: np.ndarray) -> np.ndarray:
        """Sum of ``v`` over each group."""
        return np.add.reduceat(v, self.offsets)

    def group_norms(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(self.group_sum(x * x))

    def expand(self, per_group: np.ndarray) -> np.ndarray:
        """Repeat one value per group over the group's entries."""
        return np.repeat(per_group, self.sizes)


@dataclass(frozen=True)
class ProxFn:
    """A proper lsc convex function together with its proximity operator."""

    name: str
    prox: Callable[[np.ndarray, float], np.ndarray]
    value: Callable[[np.ndarray], float]
    dim: int | None = None
    is_indicator: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def eval(self, x: np.ndarray, gamma: float) -> np.ndarray:
        return self.prox(np.asarray(x, dtype=np.float64), gamma)

    def __call__(self, x: np.ndarray) -> float:
        return self.value(np.asarray(x, dtype=np.float64))


def _check_gamma(gamma) -> None:
    if not np.all(np.asarray(gamma) > 0):
        raise InvalidInputError(f"prox index must be positive, got {gamma}")


# ---------------------------------------------------------------------------
# Norm proxes
# ---------------------------------------------------------------------------


def soft_threshold(x: np.ndarray, t) -> np.ndarray:
    """Entrywise ``sign(x) * max(|x| - t, 0)``; ``t`` may be an array."""
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def prox_l1(x: np.ndarray, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    return soft_threshold(np.asarray(x, dtype=np.float64), gamma)


def prox_l2(x: np.ndarray, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    nrm = np.linalg.norm(x)
    if nrm <= gamma:
        return np.zeros_like(x)
    return (1.0 - gamma / nrm) * x


def prox_group_l21(x: np.ndarray, gs: GroupStructure, gamma: float) -> np.ndarray:
    """Group shrinkage for ``sum_g w_g ||x_g||_2`` (threshold ``gamma * w_g``)."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    gs.check(x)
    thr = gamma * gs.weights
    norms = gs.group_norms(x)
    shrink = np.zeros_like(norms)
    keep = norms > thr
    shrink[keep] = 1.0 - thr[keep] / norms[keep]
    return x * gs.expand(shrink)


def project_l1_ball(x: np.ndarray, eps: float) -> np.ndarray:
    """Euclidean projection onto ``{y : ||y||_1 <= eps}`` (sort + cumulative sum)."""
    x = np.asarray(x, dtype=np.float64)
    if eps < 0:
        raise InvalidInputError("l1-ball radius must be nonnegative")
    a = np.abs(x)
    if a.sum() <= eps:
        return x.copy()
    if eps == 0:
        return np.zeros_like(x)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(u) + 1)
    rho = np.nonzero(u * k > css - eps)[0][-1]
    theta = (css[rho] - eps) / (rho + 1.0)
    return soft_threshold(x, theta)


def prox_linf(x: np.ndarray, gamma: float) -> np.ndarray:
    """Moreau decomposition: ``x - gamma * P_{B1(0,1)}(x / gamma)``."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    return x - gamma * project_l1_ball(x / gamma, 1.0)


def _as_stack(m: np.ndarray) -> tuple[np.ndarray, bool]:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 2:
        return m[None], True
    return m, False


def prox_nuclear(m: np.ndarray, gamma: float) -> np.ndarray:
    """Singular value soft-thresholding; accepts a matrix or a stack ``(B, r, c)``."""
    _check_gamma(gamma)
    stack, single = _as_stack(m)
    svd = svd_batch(stack)
    s = np.maximum(svd.singular_values - gamma, 0.0)
    out = (svd.u * s[..., None, :]) @ svd.vt
    return out[0] if single else out


def prox_spectral(m: np.ndarray, gamma: float) -> np.ndarray:
    """Prox of the operator norm via the nuclear-ball projection of the spectrum."""
    _check_gamma(gamma)
    stack, single = _as_stack(m)
    svd = svd_batch(stack)
    s = np.stack([sv - gamma * project_l1_ball(sv / gamma, 1.0) for sv in svd.singular_values])
    out = (svd.u * s[..., None, :]) @ svd.vt
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------


def project_l2_ball(x: np.ndarray, center: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if x.shape != center.shape:
        raise InvalidInputError("l2-ball center and point differ in shape")
    d = x - center
    nrm = np.linalg.norm(d)
    if nrm <= eps:
        return x.copy()
    return center + (eps / nrm) * d


def project_box(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise InvalidRangeError(f"empty box [{lo}, {hi}]")
    return np.clip(np.asarray(x, dtype=np.float64), lo, hi)


def project_halfspace_nonpos(x: np.ndarray) -> np.ndarray:
    return np.minimum(np.asarray(x, dtype=np.float64), 0.0)


def project_singleton(x: np.ndarray, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if np.shape(x) != target.shape:
        raise InvalidInputError("singleton target and point differ in shape")
    return target.copy()


def prox_conjugate(f: ProxFn, x: np.ndarray, gamma: float) -> np.ndarray:
    """``prox_{gamma f*}(x) = x - gamma * prox_{f / gamma}(x / gamma)``."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    return x - gamma * f.eval(x / gamma, 1.0 / gamma)


# ---------------------------------------------------------------------------
# ProxFn factories
# ---------------------------------------------------------------------------


def _indicator(ok: bool) -> float:
    return 0.0 if ok else np.inf


def zero_fn(dim: int | None = None) -> ProxFn:
    return ProxFn("zero", lambda x, g: np.array(x, dtype=np.float64), lambda x: 0.0, dim)


def l1_fn(dim: int | None = None) -> ProxFn:
    return ProxFn("l1", prox_l1, lambda x: float(np.abs(x).sum()), dim)


def weighted_l1_fn(weights: np.ndarray) -> ProxFn:
    w = np.asarray(weights, dtype=np.float64)

    def prox(x, gamma):
        _check_gamma(gamma)
        return soft_threshold(x, gamma * w)

    return ProxFn("weighted_l1", prox, lambda x: float(np.abs(x) @ w), len(w))


def l2_fn(dim: int | None = None) -> ProxFn:
    return ProxFn("l2", prox_l2, lambda x: float(np.linalg.norm(x)), dim)


def linf_fn(dim: int | None = None) -> ProxFn:
    return ProxFn("linf", prox_linf, lambda x: float(np.abs(x).max()) if np.size(x) else 0.0, dim)


def group_l21_fn(gs: GroupStructure) -> ProxFn:
    return ProxFn(
        "group_l21",
        lambda x, g: prox_group_l21(x, gs, g),
        lambda x: float(gs.weights @ gs.group_norms(x)),
        gs.dim,
        params={"groups": gs},
    )


def nuclear_fn(rows: int, cols: int, n_blocks: int = 1) -> ProxFn:
    """Sum of nuclear norms of ``n_blocks`` consecutive column-major ``rows x cols`` blocks."""

    def to_stack(x):
        return np.asarray(x, dtype=np.float64).reshape(n_blocks, cols, rows).swapaxes(1, 2)

    def from_stack(m):
        return m.swapaxes(1, 2).reshape(-1)

    def prox(x, gamma):
        return from_stack(prox_nuclear(to_stack(x), gamma))

    def value(x):
        return float(svd_batch(to_stack(x)).singular_values.sum())

    return ProxFn("nuclear", prox, value, rows * cols * n_blocks, params={"shape": (rows, cols)})


def spectral_fn(rows: int, cols: int) -> ProxFn:
    def prox(x, gamma):
        return vec(prox_spectral(mat(x, rows, cols), gamma))

    def value(x):
        return float(svd_batch(mat(x, rows, cols)).singular_values[0])

    return ProxFn("spectral", prox, value, rows * cols, params={"shape": (rows, cols)})


def scaled(f: ProxFn, a: float) -> ProxFn:
    """``a * f`` for ``a > 0``."""
    if a <= 0:
        raise InvalidInputError("scale must be positive")
    return ProxFn(f"{a}*{f.name}", lambda x, g: f.prox(x, a * g), lambda x: a * f.value(x), f.dim, f.is_indicator)


def l2_ball_fn(center: np.ndarray, eps: float) -> ProxFn:
    center = np.asarray(center, dtype=np.float64)
    return ProxFn(
        "l2_ball",
        lambda x, g: project_l2_ball(x, center, eps),
        lambda x: _indicator(np.linalg.norm(x - center) <= eps * (1 + FEAS_TOL) + FEAS_TOL),
        len(center),
        is_indicator=True,
        params={"center": center, "eps": eps},
    )


def l1_ball_fn(eps: float, dim: int | None = None) -> ProxFn:
    return ProxFn(
        "l1_ball",
        lambda x, g: project_l1_ball(x, eps),
        lambda x: _indicator(np.abs(x).sum() <= eps * (1 + FEAS_TOL) + FEAS_TOL),
        dim,
        is_indicator=True,
        params={"eps": eps},
    )


def box_fn(lo: float, hi: float, dim: int | None = None) -> ProxFn:
    if lo > hi:
        raise InvalidRangeError(f"empty box [{lo}, {hi}]")
    return ProxFn(
        "box",
        lambda x, g: project_box(x, lo, hi),
        lambda x: _indicator(bool(np.all(x >= lo) and np.all(x <= hi))),
        dim,
        is_indicator=True,
        params={"lo": lo, "hi": hi},
    )


def nonpos_fn(dim: int | None = None) -> ProxFn:
    return ProxFn(
        "nonpos", lambda x, g: project_halfspace_nonpos(x), lambda x: _indicator(bool(np.all(x <= 0))), dim, True
    )


def singleton_fn(target: np.ndarray) -> ProxFn:
    target = np.asarray(target, dtype=np.float64)
    return ProxFn(
        "singleton",
        lambda x, g: project_singleton(x, target),
        lambda x: _indicator(bool(np.allclose(x, target, rtol=0, atol=1e-12))),
        len(target),
        is_indicator=True,
        params={"target": target},
    )
