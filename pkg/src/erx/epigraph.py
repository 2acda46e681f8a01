"""Projections onto epigraphs of norms, scalar and block-wise.

The epigraph of ``f`` is ``{(x, xi) : f(x) <= xi}``. Every projection returns an
:class:`EpiPoint`. Block-wise projections work on a vector split by a
:class:`~erx.prox.GroupStructure` with one ``xi`` entry per group; internally
groups of equal size are stacked into a 2-D array and handled in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import InvalidInputError, svd_batch
from .prox import GroupStructure, StructureError

__all__ = [
    "BlockEpigraph",
    "EpiPoint",
    "PreconditionError",
    "epi_l1_lambda_star",
    "epi_project_blockwise",
    "epi_project_l1",
    "epi_project_l2",
    "epi_project_linf",
    "epi_project_schatten",
    "phi_l1",
]


class PreconditionError(ValueError):
    """Raised when an operation is called outside its domain."""


class EpiPoint(NamedTuple):
    x: np.ndarray
    xi: np.ndarray | float


# ---------------------------------------------------------------------------
# Row kernels: X has shape (B, k), xi has shape (B,)
# ---------------------------------------------------------------------------


def _epi_l2_rows(x: np.ndarray, xi: np.ndarray, tau) -> tuple[np.ndarray, np.ndarray]:
    tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), xi.shape)
    nrm = np.sqrt(np.einsum("ij,ij->i", x, x))
    inside = tau * nrm <= xi
    polar = nrm <= -tau * xi
    active = ~(inside | polar)
    scale = np.where(inside, 1.0, 0.0)
    xi_out = np.where(inside, xi, 0.0)
    if np.any(active):
        na, ta = nrm[active], tau[active]
        alpha = (1.0 + ta * xi[active] / na) / (1.0 + ta * ta)
        scale[active] = alpha
        xi_out[active] = alpha * ta * na
    return x * scale[:, None], xi_out


def _l1_lambda_rows(a_desc: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Closed-form threshold for rows of descending magnitudes (active rows only)."""
    k = a_desc.shape[1]
    s = np.cumsum(a_desc, axis=1)
    s_hat0 = s - np.arange(2, k + 2) * a_desc
    n0 = np.count_nonzero(s_hat0 <= xi[:, None], axis=1)
    lam = -xi.copy()
    pos = n0 > 0
    rows = np.nonzero(pos)[0]
    lam[pos] = (s[rows, n0[pos] - 1] - xi[pos]) / (n0[pos] + 1.0)
    return lam


def _epi_l1_rows(x: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.abs(x)
    active = a.sum(axis=1) > xi
    x_out = x.copy()
    xi_out = xi.astype(np.float64, copy=True)
    if np.any(active):
        a_desc = -np.sort(-a[active], axis=1)
        lam = _l1_lambda_rows(a_desc, xi[active])
        xa = x[active]
        x_out[active] = np.sign(xa) * np.maximum(np.abs(xa) - lam[:, None], 0.0)
        xi_out[active] = xi[active] + lam
    return x_out, xi_out


def _epi_linf_rows(x: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.abs(x)
    active = a.max(axis=1) > xi
    x_out = x.copy()
    xi_out = xi.astype(np.float64, copy=True)
    if np.any(active):
        v = np.sort(a[active], axis=1, kind="stable")
        b, n = v.shape
        # suffix sums for nbar = 1..n+1 (the last one is empty)
        suf = np.concatenate([np.cumsum(v[:, ::-1], axis=1)[:, ::-1], np.zeros((b, 1))], axis=1)
        t = (xi[active, None] + suf) / (n + 1.0 - np.arange(n + 1))
        lower = np.concatenate([np.full((b, 1), -np.inf), v], axis=1)
        upper = np.concatenate([v, np.full((b, 1), np.inf)], axis=1)
        with np.errstate(invalid="ignore"):
            viol = np.maximum(lower - t, 0.0) + np.maximum(t - upper, 0.0)
        viol = np.where(np.isnan(viol), 0.0, viol)
        # first index satisfying the bracket (ties in viol resolved to the first)
        nbar = np.argmin(viol, axis=1)
        xi_star = np.maximum(t[np.arange(b), nbar], 0.0)
        xa = x[active]
        x_out[active] = np.sign(xa) * np.minimum(np.abs(xa), xi_star[:, None])
        xi_out[active] = xi_star
    return x_out, xi_out


_KERNELS = {"l1": _epi_l1_rows, "linf": _epi_linf_rows}


def _epi_lp_rows(x, xi, p):
    if p == 2:
        return _epi_l2_rows(x, xi, 1.0)
    if p == 1:
        return _epi_l1_rows(x, xi)
    if p == np.inf:
        return _epi_linf_rows(x, xi)
    raise InvalidInputError(f"unsupported Schatten order {p}; use 1, 2 or inf")


def _epi_schatten_stack(m: np.ndarray, xi: np.ndarray, p) -> tuple[np.ndarray, np.ndarray]:
    svd = svd_batch(m)
    s, xi_out = _epi_lp_rows(svd.singular_values, xi, p)
    return (svd.u * s[..., None, :]) @ svd.vt, xi_out


# ---------------------------------------------------------------------------
# Scalar-xi projections
# ---------------------------------------------------------------------------


def _vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("expected a 1-D vector")
    return x


def epi_project_l2(x: np.ndarray, xi: float, tau: float = 1.0) -> EpiPoint:
    """Project onto ``{(x, xi) : tau * ||x||_2 <= xi}``.

    Three cases: the point is kept when feasible, sent to the origin when it
    lies in the polar cone (``||x|| <= -tau * xi``), and otherwise scaled as
    ``alpha * (x, tau * ||x||)`` with
    ``alpha = (1 + tau * xi / ||x||) / (1 + tau**2)``.
    """
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    x = _vector(x)
    xo, xio = _epi_l2_rows(x[None], np.array([float(xi)]), tau)
    return EpiPoint(xo[0], float(xio[0]))


def phi_l1(lam: float, x: np.ndarray, xi: float) -> float:
    """``||T_lam(x)||_1 - xi - lam``: non-increasing in ``lam``, root gives the threshold."""
    return float(np.maximum(np.abs(x) - lam, 0.0).sum() - xi - lam)


def epi_l1_lambda_star(x: np.ndarray, xi: float) -> float:
    """Threshold ``lambda*`` of the l1-epigraph projection in closed form.

    With magnitudes sorted in decreasing order ``u_1 >= ... >= u_N``, partial
    sums ``S_k`` and ``S0_k = S_k - (k + 1) u_k``:

    * ``lambda* = -xi`` when ``xi < -u_1``;
    * otherwise ``lambda* = (S_N0 - xi) / (N0 + 1)`` where ``N0`` is the last
      index with ``S0_N0 <= xi``.

    Raises
    ------
    PreconditionError
        If ``||x||_1 <= xi`` (the point is already feasible).
    """
    x = _vector(x)
    if np.abs(x).sum() <= xi:
        raise PreconditionError("||x||_1 <= xi: point is feasible, no threshold needed")
    u = -np.sort(-np.abs(x))
    return float(_l1_lambda_rows(u[None], np.array([float(xi)]))[0])


def epi_project_l1(x: np.ndarray, xi: float) -> EpiPoint:
    """Project onto the l1 epigraph: ``(T_lam(x), xi + lam)`` when active."""
    x = _vector(x)
    xo, xio = _epi_l1_rows(x[None], np.array([float(xi)]))
    return EpiPoint(xo[0], float(xio[0]))


def epi_project_linf(x: np.ndarray, xi: float) -> EpiPoint:
    """Project onto the l-infinity epigraph by sorting magnitudes ascending.

    The new level is ``max((xi + sum_{n >= nbar} v_n) / (N - nbar + 2), 0)``
    for the unique ``nbar`` whose value falls in ``(v_{nbar-1}, v_nbar]``;
    entries are clipped to that level.
    """
    x = _vector(x)
    xo, xio = _epi_linf_rows(x[None], np.array([float(xi)]))
    return EpiPoint(xo[0], float(xio[0]))


def epi_project_schatten(m: np.ndarray, xi: float, p=1) -> EpiPoint:
    """Project a matrix onto the epigraph of its Schatten-``p`` norm, ``p`` in {1, 2, inf}."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError("expected a matrix")
    mo, xio = _epi_schatten_stack(m[None], np.array([float(xi)]), p)
    return EpiPoint(mo[0], float(xio[0]))


# ---------------------------------------------------------------------------
# Block-wise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockEpigraph:
    """Per-group epigraph constraint.

    Parameters
    ----------
    gs : GroupStructure
        Splits the vector part. Group weights are ignored; use ``tau``.
    kind : {"l2", "l1", "linf", "schatten"}
    tau : float or array, optional
        Scale of the l2 norm (per group or shared). Only valid for ``"l2"``.
    p : {1, 2, inf}, optional
        Schatten order, required for ``"schatten"``.
    shape : (rows, cols), optional
        Matrix shape of every group for ``"schatten"`` (column-major blocks).
    """

    gs: GroupStructure
    kind: str
    tau: object = 1.0
    p: object = None
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("l2", "l1", "linf", "schatten"):
            raise InvalidInputError(f"unknown epigraph kind {self.kind!r}")
        tau = np.asarray(self.tau, dtype=np.float64)
        if np.any(tau <= 0):
            raise InvalidInputError("tau must be positive")
        if self.kind != "l2" and np.any(tau != 1.0):
            raise InvalidInputError("tau is only supported for the l2 epigraph")
        if tau.ndim and tau.shape != (self.gs.n_groups,):
            raise StructureError("per-group tau needs one entry per group")
        if self.kind == "schatten":
            if self.shape is None or self.p not in (1, 2, np.inf):
                raise InvalidInputError("schatten epigraph needs shape and p in {1, 2, inf}")
            r, c = self.shape
            if np.any(self.gs.sizes != r * c):
                raise StructureError("every group must hold one rows x cols block")

    @property
    def dim(self) -> int:
        """Length of the concatenated ``[x; xi]`` slice."""
        return self.gs.dim + self.gs.n_groups

    def value(self, x: np.ndarray) -> np.ndarray:
        """Per-group norm values, i.e. the tightest feasible ``xi``."""
        gs = self.gs
        if self.kind == "l2":
            return np.asarray(self.tau) * gs.group_norms(x)
        if self.kind == "l1":
            return gs.group_sum(np.abs(x))
        if self.kind == "linf":
            return np.maximum.reduceat(np.abs(x), gs.offsets)
        r, c = self.shape
        s = svd_batch(x.reshape(-1, c, r).swapaxes(1, 2)).singular_values
        if self.p == 1:
            return s.sum(axis=1)
        if self.p == 2:
            return np.sqrt((s * s).sum(axis=1))
        return s[:, 0]

    def _rows(self, xr, xir, idx):
        if self.kind == "l2":
            tau = np.asarray(self.tau, dtype=np.float64)
            return _epi_l2_rows(xr, xir, tau[idx] if tau.ndim else tau)
        if self.kind == "schatten":
            r, c = self.shape
            m = xr.reshape(-1, c, r).swapaxes(1, 2)
            mo, xio = _epi_schatten_stack(m, xir, self.p)
            return mo.swapaxes(1, 2).reshape(xr.shape), xio
        return _KERNELS[self.kind](xr, xir)

    def project(self, x: np.ndarray, xi: np.ndarray) -> EpiPoint:
        gs = self.gs
        x = np.asarray(x, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        gs.check(x)
        if xi.shape != (gs.n_groups,):
            raise StructureError(f"need one xi per group ({gs.n_groups}), got shape {xi.shape}")
        k = gs.uniform_size
        if k is not None:
            xo, xio = self._rows(x.reshape(-1, k), xi, slice(None))
            return EpiPoint(xo.reshape(-1), xio)
        x_out = np.empty_like(x)
        xi_out = np.empty_like(xi)
        for size in np.unique(gs.sizes):
            idx = np.nonzero(gs.sizes == size)[0]
            cols = gs.offsets[idx, None] + np.arange(size)
            xo, xio = self._rows(x[cols], xi[idx], idx)
            x_out[cols] = xo
            xi_out[idx] = xio
        return EpiPoint(x_out, xi_out)

    def project_stacked(self, v: np.ndarray) -> np.ndarray:
        """Project a concatenated ``[x; xi]`` vector and return it concatenated."""
        n = self.gs.dim
        out = self.project(v[:n], v[n:])
        return np.concatenate([out.x, out.xi])


def epi_project_blockwise(x: np.ndarray, xi: np.ndarray, be: BlockEpigraph) -> EpiPoint:
    """Apply the per-group epigraph projection independently to every group."""
    return be.project(x, xi)
