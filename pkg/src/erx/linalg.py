"""Dense linear algebra primitives shared by every solver component.

Vectors are plain 1-D ``float64`` arrays. Matrices are 2-D arrays; whenever a
matrix has to be flattened, it is vectorized column by column
(``x[M*n + m] == X[m, n]``), which is what :func:`vec` and :func:`mat` do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "InvalidInputError",
    "LinearOperator",
    "SvdResult",
    "adjoint_check",
    "as_vector",
    "block_operator",
    "identity",
    "matrix_operator",
    "operator_norm",
    "stack",
    "svd_thin",
    "svd_batch",
    "to_dense",
    "vec",
    "mat",
    "zeros",
]


class InvalidInputError(ValueError):
    """Raised when numeric input is malformed (non-finite, wrong shape)."""


def as_vector(x) -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("vector contains non-finite entries")
    return arr


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(m, dtype=np.float64).reshape(-1, order="F")


def mat(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(x, dtype=np.float64).reshape((rows, cols), order="F")


# ---------------------------------------------------------------------------
# SVD
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m == u @ diag(singular_values) @ vt``.

    Singular values are sorted in descending order. Columns of ``u`` paired
    with a zero singular value are zero.
    """

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values[..., None, :]) @ self.vt


def _jacobi_tall(a: np.ndarray, max_sweeps: int = 60):
    # One-sided Jacobi on a batch of tall matrices (..., r, c), r >= c.
    # Works on the transposed copy so each column is a contiguous row.
    at = np.array(np.swapaxes(a, -1, -2), order="C", copy=True)
    c = at.shape[-2]
    vt = np.broadcast_to(np.eye(c), at.shape[:-2] + (c, c)).copy()
    if c == 1:
        return at, vt
    pairs = [(i, j) for i in range(c - 1) for j in range(i + 1, c)]
    eps = np.finfo(np.float64).eps
    for _ in range(max_sweeps):
        rotated = False
        for i, j in pairs:
            ai = at[..., i, :]
            aj = at[..., j, :]
            alpha = (ai * ai).sum(-1)
            beta = (aj * aj).sum(-1)
            gamma = (ai * aj).sum(-1)
            active = np.abs(gamma) > eps * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            # zeta may overflow for tiny gamma; t then correctly rounds to 0
            with np.errstate(over="ignore", divide="ignore"):
                zeta = (beta - alpha) / (2.0 * g)
                t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            cs = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)[..., None]
            sn = np.where(active, t, 0.0)[..., None] * cs
            new_i = cs * ai - sn * aj
            at[..., j, :] = sn * ai + cs * aj
            at[..., i, :] = new_i
            vi = vt[..., i, :].copy()
            vj = vt[..., j, :]
            vt[..., i, :] = cs * vi - sn * vj
            vt[..., j, :] = sn * vi + cs * vj
        if not rotated:
            break
    return at, vt


# Jacobi sweeps cost O(c^2) vectorized passes; beyond this many columns the
# LAPACK driver is used in "auto" mode.
JACOBI_MAX_COLS = 4


def svd_batch(m: np.ndarray, method: str = "auto") -> SvdResult:
    """Thin SVD of a stack of matrices with shape ``(..., rows, cols)``.

    ``method="jacobi"`` uses one-sided Jacobi rotations applied to the columns
    (to the rows when the matrices are wide). ``method="lapack"`` defers to
    :func:`numpy.linalg.svd`. ``"auto"`` picks Jacobi for small patch-sized
    matrices (``min(rows, cols) <= JACOBI_MAX_COLS``) and LAPACK otherwise.
    All methods are deterministic for a given input.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim < 2 or m.shape[-1] < 1 or m.shape[-2] < 1:
        raise InvalidInputError("svd needs matrices with rows, cols >= 1")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix contains non-finite entries")
    if method == "auto":
        method = "jacobi" if min(m.shape[-2:]) <= JACOBI_MAX_COLS else "lapack"
    if method == "lapack":
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        return SvdResult(u=u, singular_values=s, vt=vt)
    if method != "jacobi":
        raise ValueError(f"unknown svd method {method!r}")
    wide = m.shape[-2] < m.shape[-1]
    a = np.swapaxes(m, -1, -2) if wide else m
    # at: rotated columns as rows; vt: rows are the right singular vectors
    at, vt = _jacobi_tall(a)
    s = np.sqrt((at * at).sum(-1))
    order = np.argsort(-s, axis=-1, kind="stable")
    s = np.take_along_axis(s, order, axis=-1)
    at = np.take_along_axis(at, order[..., :, None], axis=-2)
    # vt rows hold V's columns after transposition
    v = np.take_along_axis(np.swapaxes(vt, -1, -2), order[..., None, :], axis=-1)
    safe = np.where(s > 0, s, 1.0)
    u = np.where(s[..., None, :] > 0, np.swapaxes(at, -1, -2) / safe[..., None, :], 0.0)
    if wide:
        # m^T = u s v^T  =>  m = v s u^T
        return SvdResult(u=v, singular_values=s, vt=np.swapaxes(u, -1, -2))
    return SvdResult(u=u, singular_values=s, vt=np.swapaxes(v, -1, -2))


def svd_thin(m: np.ndarray) -> SvdResult:
    """Thin SVD of a single matrix by one-sided Jacobi."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"expected a 2-D matrix, got shape {m.shape}")
    return svd_batch(m, method="jacobi")


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearOperator:
    """A forward/adjoint pair acting on flat vectors."""

    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    in_dim: int
    out_dim: int
    name: str = "op"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(self.adjoint, self.forward, self.out_dim, self.in_dim, f"{self.name}^T")

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        if not isinstance(other, LinearOperator):
            return NotImplemented
        if other.out_dim != self.in_dim:
            raise InvalidInputError(
                f"cannot compose {self.name} ({self.in_dim} in) with {other.name} ({other.out_dim} out)"
            )
        return LinearOperator(
            lambda x: self.forward(other.forward(x)),
            lambda y: other.adjoint(self.adjoint(y)),
            other.in_dim,
            self.out_dim,
            f"{self.name}*{other.name}",
        )

    def __mul__(self, scalar: float) -> "LinearOperator":
        a = float(scalar)
        return LinearOperator(
            lambda x: a * self.forward(x), lambda y: a * self.adjoint(y), self.in_dim, self.out_dim, f"{a}*{self.name}"
        )

    __rmul__ = __mul__

    def __neg__(self) -> "LinearOperator":
        return self * -1.0


def identity(n: int) -> LinearOperator:
    return LinearOperator(lambda x: x.copy(), lambda y: y.copy(), n, n, "I")


def zeros(out_dim: int, in_dim: int) -> LinearOperator:
    return LinearOperator(lambda x: np.zeros(out_dim), lambda y: np.zeros(in_dim), in_dim, out_dim, "O")


def matrix_operator(m: np.ndarray, name: str = "M") -> LinearOperator:
    m = np.asarray(m, dtype=np.float64)
    return LinearOperator(lambda x: m @ x, lambda y: m.T @ y, m.shape[1], m.shape[0], name)


def stack(ops: Sequence[LinearOperator]) -> LinearOperator:
    """Vertical concatenation ``[A1; A2; ...]`` of operators sharing a domain."""
    return block_operator([[op] for op in ops])


def block_operator(rows: Sequence[Sequence[LinearOperator | None]]) -> LinearOperator:
    """Block matrix of operators; ``None`` entries are zero blocks.

    Each block row must contain at least one operator and each block column as
    well, so that all block dimensions are determined.
    """
    n_rows = len(rows)
    n_cols = len(rows[0])
    if any(len(r) != n_cols for r in rows):
        raise InvalidInputError("ragged block operator")
    row_dims = [None] * n_rows
    col_dims = [None] * n_cols
    for i, r in enumerate(rows):
        for j, op in enumerate(r):
            if op is None:
                continue
            for dims, k, d in ((row_dims, i, op.out_dim), (col_dims, j, op.in_dim)):
                if dims[k] is None:
                    dims[k] = d
                elif dims[k] != d:
                    raise InvalidInputError(f"block ({i},{j}) dimension mismatch")
    if any(d is None for d in row_dims + col_dims):
        raise InvalidInputError("every block row and column needs at least one operator")
    row_off = np.concatenate([[0], np.cumsum(row_dims)]).astype(int)
    col_off = np.concatenate([[0], np.cumsum(col_dims)]).astype(int)
    entries = [(i, j, op) for i, r in enumerate(rows) for j, op in enumerate(r) if op is not None]

    def forward(x):
        out = np.zeros(row_off[-1])
        for i, j, op in entries:
            out[row_off[i] : row_off[i + 1]] += op.forward(x[col_off[j] : col_off[j + 1]])
        return out

    def adjoint(y):
        out = np.zeros(col_off[-1])
        for i, j, op in entries:
            out[col_off[j] : col_off[j + 1]] += op.adjoint(y[row_off[i] : row_off[i + 1]])
        return out

    return LinearOperator(forward, adjoint, int(col_off[-1]), int(row_off[-1]), "F")


def to_dense(op: LinearOperator) -> np.ndarray:
    """Materialize an operator column by column (small dimensions only)."""
    cols = []
    e = np.zeros(op.in_dim)
    for k in range(op.in_dim):
        e[k] = 1.0
        cols.append(op.forward(e))
        e[k] = 0.0
    return np.stack(cols, axis=1) if cols else np.zeros((op.out_dim, 0))


def operator_norm(op: LinearOperator, iters: int = 100, tol: float = 1e-6, seed: int = 0) -> float:
    """Largest singular value of ``op`` estimated by power iteration on ``op^T op``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_dim)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = op.forward(x)
        new_est = float(np.linalg.norm(y))
        w = op.adjoint(y)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        x = w / nw
        if abs(new_est - est) <= tol * max(new_est, 1.0):
            est = new_est
            break
        est = new_est
    return max(est, float(np.linalg.norm(op.forward(x))))


def adjoint_check(op: LinearOperator, trials: int = 5, seed: int = 0, rtol: float = 1e-8) -> bool:
    """Check ``<op x, y> == <x, op^T y>`` on random vectors."""
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        x = rng.standard_normal(op.in_dim)
        y = rng.standard_normal(op.out_dim)
        ax = op.forward(x)
        aty = op.adjoint(y)
        if ax.shape != (op.out_dim,) or aty.shape != (op.in_dim,):
            return False
        lhs = float(ax @ y)
        rhs = float(x @ aty)
        scale = max(np.linalg.norm(ax) * np.linalg.norm(y), np.linalg.norm(x) * np.linalg.norm(aty), 1e-300)
        if abs(lhs - rhs) > rtol * scale:
            return False
    return True
