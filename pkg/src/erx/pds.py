"""Primal-dual splitting for ``min_x G(x) + H(F x)``.

Iteration::

    x+ = prox_{g1 G}(x - g1 F^T z)
    z+ = prox_{g2 H*}(z + g2 F(2 x+ - x))

The dual prox is evaluated block by block through the Moreau identity
``prox_{g2 h*}(t) = t - g2 prox_{h / g2}(t / g2)``. Convergence requires
``g1 * g2 * ||F||^2 <= 1``.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .epigraph import BlockEpigraph
from .linalg import LinearOperator, operator_norm
from .prox import ProxFn, zero_fn

__all__ = [
    "ConfigurationError",
    "DivergenceError",
    "HBlock",
    "SolveTrace",
    "SplitProblem",
    "StepSizes",
    "default_steps",
    "pds_solve",
]

GAMMA1_DEFAULT = 0.01
NORM_FLOOR = 1e-8
TRACE_HEADER = ("iter", "residual", "objective", "elapsed_ms")


class ConfigurationError(ValueError):
    """Problem or step sizes are inconsistent."""


class DivergenceError(RuntimeError):
    """Non-finite iterate; carries the trace up to the failure."""

    def __init__(self, message: str, trace: "SolveTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class HBlock:
    """One separable term of ``H`` acting on a contiguous slice of ``F x``.

    ``prox(v, gamma)`` must return ``prox_{gamma h}(v)``.
    """

    name: str
    dim: int
    prox: Callable[[np.ndarray, float], np.ndarray]
    value: Callable[[np.ndarray], float] | None = None
    is_indicator: bool = False

    @classmethod
    def from_prox(cls, fn: ProxFn, dim: int, name: str | None = None) -> "HBlock":
        if fn.dim is not None and fn.dim != dim:
            raise ConfigurationError(f"{fn.name}: function acts on {fn.dim} entries, slice has {dim}")
        return cls(name or fn.name, dim, fn.prox, fn.value, fn.is_indicator)

    @classmethod
    def from_epigraph(cls, be: BlockEpigraph, name: str | None = None) -> "HBlock":
        n = be.gs.dim

        def value(v):
            viol = be.value(v[:n]) - v[n:]
            return 0.0 if np.all(viol <= 1e-9 * (1 + np.abs(v[n:]))) else np.inf

        return cls(name or f"epi_{be.kind}", be.dim, lambda v, g: be.project_stacked(v), value, True)


@dataclass(frozen=True)
class SplitProblem:
    """``G(p) + sum_b h_b((F p)_b)`` with ``H`` split into consecutive blocks."""

    f_op: LinearOperator
    h_blocks: tuple[HBlock, ...]
    g: ProxFn = field(default_factory=zero_fn)
    labels: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "h_blocks", tuple(self.h_blocks))
        total = sum(b.dim for b in self.h_blocks)
        if total != self.f_op.out_dim:
            raise ConfigurationError(f"H blocks cover {total} entries but F has {self.f_op.out_dim} outputs")

    @property
    def primal_dim(self) -> int:
        return self.f_op.in_dim

    @property
    def dual_dim(self) -> int:
        return self.f_op.out_dim

    @property
    def slices(self) -> list[slice]:
        out, start = [], 0
        for b in self.h_blocks:
            out.append(slice(start, start + b.dim))
            start += b.dim
        return out

    def objective(self, p: np.ndarray) -> float:
        """``G(p) + H(F p)``; indicators contribute 0 or inf."""
        total = float(self.g.value(p))
        q = self.f_op(p)
        for b, sl in zip(self.h_blocks, self.slices):
            if b.value is not None:
                total += float(b.value(q[sl]))
        return total

    def dual_prox(self, t: np.ndarray, gamma2: float) -> np.ndarray:
        out = np.empty_like(t)
        inv = 1.0 / gamma2
        for b, sl in zip(self.h_blocks, self.slices):
            tb = t[sl]
            out[sl] = tb - gamma2 * b.prox(tb * inv, inv)
        return out


@dataclass(frozen=True)
class StepSizes:
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ConfigurationError("step sizes must be positive")

    def satisfies(self, f_norm: float) -> bool:
        return self.gamma1 * self.gamma2 * f_norm**2 <= 1.0 + 1e-12


def default_steps(f_norm: float, gamma1: float = GAMMA1_DEFAULT) -> StepSizes:
    """``gamma2 = 1 / (12 gamma1)``, lowered to ``1 / (gamma1 ||F||^2)`` if that bound is violated."""
    f = max(float(f_norm), NORM_FLOOR)
    gamma2 = 1.0 / (12.0 * gamma1)
    if gamma1 * gamma2 * f * f > 1.0:
        gamma2 = 1.0 / (gamma1 * f * f)
    return StepSizes(gamma1, gamma2)


@dataclass
class SolveTrace:
    """Per-iteration log of a solve."""

    residual: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    elapsed_ms: list[float] = field(default_factory=list)
    converged: bool = False
    steps: StepSizes | None = None
    final_dual: np.ndarray | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.residual)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iter"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for i, (r, o, t) in enumerate(zip(self.residual, self.objective, self.elapsed_ms), start=1):
            w.writerow([i, repr(r), repr(o), f"{t:.3f}"])
        return buf.getvalue()


def pds_solve(
    prob: SplitProblem,
    steps: StepSizes | None = None,
    eps_stop: float = 1e-7,
    max_iter: int = 50_000,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    f_norm: float | None = None,
    objective_every: int = 0,
    objective_fn: Callable[[np.ndarray], float] | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolveTrace]:
    """Run primal-dual splitting until ``||p_n - p_{n-1}|| <= eps_stop``.

    Parameters
    ----------
    prob : SplitProblem
    steps : StepSizes, optional
        Defaults to :func:`default_steps` for the estimated ``||F||``.
    eps_stop : float
        Stopping threshold on the primal fixed-point residual.
    max_iter : int
    init : (x0, z0), optional
        Primal and dual starting points; zeros by default.
    f_norm : float, optional
        Known operator norm of ``F``; estimated by power iteration otherwise.
    objective_every : int
        Evaluate the objective every this many iterations (0 disables); other
        rows log NaN.
    objective_fn : callable, optional
        Replaces :meth:`SplitProblem.objective` for logging.
    callback : callable, optional
        Called as ``callback(n, p)`` after every iteration.

    Returns
    -------
    p : ndarray
        Final primal iterate.
    trace : SolveTrace

    Raises
    ------
    ConfigurationError
        If ``gamma1 * gamma2 * ||F||^2 > 1``.
    DivergenceError
        If an iterate becomes non-finite.
    """
    if eps_stop <= 0:
        raise ConfigurationError("eps_stop must be positive")
    f_op = prob.f_op
    if f_norm is None:
        f_norm = operator_norm(f_op)
    if steps is None:
        steps = default_steps(f_norm)
    if not steps.satisfies(f_norm):
        raise ConfigurationError(
            f"step sizes violate gamma1*gamma2*||F||^2 <= 1 ({steps.gamma1 * steps.gamma2 * f_norm**2:.4g})"
        )
    g1, g2 = steps.gamma1, steps.gamma2
    if init is None:
        x = np.zeros(prob.primal_dim)
        z = np.zeros(prob.dual_dim)
    else:
        x = np.array(init[0], dtype=np.float64)
        z = np.array(init[1], dtype=np.float64)
        if x.shape != (prob.primal_dim,) or z.shape != (prob.dual_dim,):
            raise ConfigurationError("initial point has wrong dimensions")
    obj = objective_fn or prob.objective
    trace = SolveTrace(steps=steps)
    t0 = time.perf_counter()
    for n in range(1, max_iter + 1):
        x_new = prob.g.prox(x - g1 * f_op.adjoint(z), g1)
        z = prob.dual_prox(z + g2 * f_op.forward(2.0 * x_new - x), g2)
        res = float(np.linalg.norm(x_new - x))
        x = x_new
        trace.residual.append(res)
        trace.objective.append(float(obj(x)) if objective_every and n % objective_every == 0 else float("nan"))
        trace.elapsed_ms.append((time.perf_counter() - t0) * 1e3)
        if not np.isfinite(res):
            trace.final_dual = z
            raise DivergenceError(f"non-finite iterate at iteration {n}", trace)
        if callback is not None:
            callback(n, x)
        # the first step starts from an uninformed dual, so never stop there
        if res <= eps_stop and n > 1:
            trace.converged = True
            break
    trace.final_dual = z
    return x, trace
