"""Independent reference computations used to validate the fast operators.

Nothing here is on a solver hot path. Every oracle avoids calling the
operator it checks: prox operators are compared against a numeric argmin,
epigraph projections against a bisection on the KKT multiplier, and the
Moreau identity against closed-form dual-ball projections written out
separately.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.optimize

__all__ = [
    "bisect_decreasing",
    "epi_oracle",
    "lambda_star_bisection",
    "norm_value",
    "project_l1_ball_bisection",
    "prox_objective",
    "prox_oracle_violation",
]


def bisect_decreasing(g: Callable[[float], float], lo: float, hi: float, iters: int = 200) -> float:
    """Root of a non-increasing function with ``g(lo) >= 0 >= g(hi)``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda_star_bisection(x: np.ndarray, xi: float, iters: int = 200) -> float:
    """Root of ``phi(lam) = sum(max(|x| - lam, 0)) - xi - lam`` on ``[0, ||x||_1 + |xi|]``."""
    a = np.abs(np.asarray(x, dtype=np.float64))

    def phi(lam):
        return float(np.maximum(a - lam, 0.0).sum() - xi - lam)

    return bisect_decreasing(phi, 0.0, float(a.sum() + abs(xi)), iters)


def project_l1_ball_bisection(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """l1-ball projection by bisection on the soft threshold (no sorting)."""
    v = np.asarray(v, dtype=np.float64)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    theta = bisect_decreasing(lambda t: float(np.maximum(a - t, 0.0).sum() - radius), 0.0, float(a.max()))
    return np.sign(v) * np.maximum(a - theta, 0.0)


# ---------------------------------------------------------------------------
# Norm values and proxes via dual-ball projections
# ---------------------------------------------------------------------------


def _sv(m: np.ndarray) -> np.ndarray:
    return np.linalg.svd(m, compute_uv=False)


def norm_value(kind: str, x: np.ndarray, shape=None) -> float:
    """Norm of ``x``; ``kind`` in l1, l2, linf, nuclear, frobenius, spectral."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "l1":
        return float(np.abs(x).sum())
    if kind in ("l2", "frobenius"):
        return float(np.sqrt((x * x).sum()))
    if kind == "linf":
        return float(np.abs(x).max()) if x.size else 0.0
    m = x.reshape(shape) if x.ndim == 1 else x
    s = _sv(m)
    return float(s.sum() if kind == "nuclear" else s.max())


def dual_ball_projection(kind: str, v: np.ndarray) -> np.ndarray:
    """Projection onto the unit ball of the dual norm."""
    v = np.asarray(v, dtype=np.float64)
    if kind == "l1":
        return np.clip(v, -1.0, 1.0)
    if kind in ("l2", "frobenius"):
        n = np.sqrt((v * v).sum())
        return v if n <= 1 else v / n
    if kind == "linf":
        return project_l1_ball_bisection(v, 1.0)
    u, s, vt = np.linalg.svd(v, full_matrices=False)
    if kind == "nuclear":
        s = np.minimum(s, 1.0)
    else:
        s = project_l1_ball_bisection(s, 1.0)
    return (u * s) @ vt


def prox_via_dual(kind: str, x: np.ndarray, gamma: float) -> np.ndarray:
    """``prox_{gamma ||.||}(x) = x - gamma * P_{dual ball}(x / gamma)``."""
    x = np.asarray(x, dtype=np.float64)
    return x - gamma * dual_ball_projection(kind, x / gamma)


# ---------------------------------------------------------------------------
# Prox oracle
# ---------------------------------------------------------------------------


def prox_objective(value: Callable[[np.ndarray], float], x: np.ndarray, gamma: float, y: np.ndarray) -> float:
    d = x - y
    return float(value(y)) + 0.5 * float(d @ d) / gamma


def prox_oracle_violation(
    value: Callable[[np.ndarray], float],
    prox_point: np.ndarray,
    x: np.ndarray,
    gamma: float,
    rng: np.random.Generator,
    n_competitors: int = 500,
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None,
    refine: bool = True,
    batched: bool = False,
) -> float:
    """How much the claimed prox point loses against numeric competitors.

    Competitors are ``n_competitors`` random points: feasible samples from
    ``sampler`` when the function is an indicator, otherwise Gaussian points
    around ``x`` and around the claimed answer at several scales. The best
    competitor is then refined locally (Nelder-Mead for functions, shrinking
    random steps kept only when feasible for indicators).

    Returns
    -------
    float
        ``J(prox_point) - min J(competitor)`` where
        ``J(y) = f(y) + ||x - y||^2 / (2 gamma)``. Values ``<= 0`` mean the
        claimed point is at least as good as every competitor.

    With ``batched=True`` the value function must map a ``(k, d)`` array of
    points to ``k`` values, which makes scoring the competitors one call.
    """
    x = np.asarray(x, dtype=np.float64)
    d = len(x)

    def obj(y):
        return prox_objective(value, x, gamma, y)

    j_claim = obj(prox_point)
    if sampler is not None:
        cands = sampler(rng, n_competitors)
    else:
        scales = np.repeat([1.0, 0.1, 1e-3, 1e-5], int(np.ceil(n_competitors / 4)))[:n_competitors, None]
        centers = np.where(rng.random((n_competitors, 1)) < 0.5, x, prox_point)
        cands = centers + scales * (1 + np.abs(x).max()) * rng.standard_normal((n_competitors, d))
    if batched:
        diff = x - cands
        vals = np.asarray(value(cands), dtype=np.float64) + 0.5 * (diff * diff).sum(1) / gamma
    else:
        vals = np.array([obj(c) for c in cands])
    best = int(np.argmin(vals))
    j_best = float(vals[best])
    if refine and np.isfinite(j_best):
        start = cands[best]
        if sampler is None:
            res = scipy.optimize.minimize(
                obj, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxfev": 800}
            )
            j_best = min(j_best, float(res.fun))
        else:
            y, jy, step = start, j_best, 0.1 * (1 + np.abs(x).max())
            for _ in range(400):
                cand = y + step * rng.standard_normal(d)
                jc = obj(cand)
                if jc < jy:
                    y, jy = cand, jc
                else:
                    step *= 0.97
            j_best = min(j_best, jy)
    return j_claim - j_best


# ---------------------------------------------------------------------------
# Epigraph oracle
# ---------------------------------------------------------------------------


def epi_oracle(kind: str, x0: np.ndarray, xi0: float, tau: float = 1.0, shape=None) -> tuple[np.ndarray, float]:
    """Projection of ``(x0, xi0)`` onto ``{tau * ||x|| <= xi}`` via its KKT multiplier.

    The projection is ``(prox_{lam tau ||.||}(x0), xi0 + lam)`` for the
    ``lam >= 0`` solving ``tau * ||prox_{lam tau ||.||}(x0)|| = xi0 + lam``.
    The left side is non-increasing in ``lam``, so bisection finds it. Matrix
    kinds take ``x0`` as a matrix (or a vector plus ``shape``).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if shape is not None and x0.ndim == 1:
        x0 = x0.reshape(shape)

    def f(v):
        return tau * norm_value(kind, v)

    if f(x0) <= xi0:
        return x0.copy(), float(xi0)

    def prox(lam):
        return x0 if lam == 0 else prox_via_dual(kind, x0, lam * tau)

    def g(lam):
        return f(prox(lam)) - xi0 - lam

    hi = max(1.0, abs(xi0))
    while g(hi) > 0:
        hi *= 2.0
    lam = bisect_decreasing(g, 0.0, hi)
    return prox(lam), float(xi0 + lam)
