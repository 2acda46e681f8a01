"""Layered mixed norms and their epigraphical relaxation.

A :class:`LayeredNorm` is a list of layers ordered from the innermost to the
outermost. Every inner layer maps its input, split into groups, to the vector
of per-group norm values; the outermost layer maps its input to a scalar
``sum_g w_g * norm(v_g)`` (a single group gives a plain norm).

:func:`relax` replaces each inner equality ``z_{k+1} = f_k(z_k)`` by the
epigraph constraint ``f_k(z_k) <= z_{k+1}``, which leaves only the outermost
norm to be handled by a proximity operator. The primal vector of the relaxed
problem is laid out as::

    p = [x; z_2; ...; z_K; eta blocks of modified l-infinity layers]
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .epigraph import BlockEpigraph
from .linalg import LinearOperator, block_operator, identity, svd_batch
from .pds import HBlock, SplitProblem
from .prox import (
    GroupStructure,
    ProxFn,
    box_fn,
    group_l21_fn,
    nonpos_fn,
    prox_linf,
    prox_nuclear,
    prox_spectral,
    weighted_l1_fn,
    zero_fn,
)

__all__ = [
    "Classification",
    "KINDS",
    "LayerFn",
    "LayeredNorm",
    "UnsupportedConfigurationError",
    "Validation",
    "eval_layered",
    "parse_norm",
    "relax",
    "relax_modified_linf_2layer",
    "validate_assumptions",
]

LINF_EPS_DEFAULT = 1e-3
KINDS = ("l1", "l2", "linf", "linf_eps", "nuclear", "frobenius", "spectral")
MATRIX_KINDS = ("nuclear", "frobenius", "spectral")
# strictly increasing on the nonnegative orthant
STRICT_KINDS = ("l1", "l2", "linf_eps", "frobenius")


class UnsupportedConfigurationError(ValueError):
    """The layered norm cannot be relaxed into a proximable split."""


class Classification(enum.Enum):
    SOLUTION_PRESERVING = "SolutionPreserving"
    CONVEX_RELAXATION_ONLY = "ConvexRelaxationOnly"
    INVALID = "Invalid"


@dataclass(frozen=True)
class Validation:
    status: Classification
    reasons: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.status is not Classification.INVALID


@dataclass(frozen=True)
class LayerFn:
    """One layer of a layered norm.

    Parameters
    ----------
    kind : str
        One of ``l1, l2, linf, linf_eps, nuclear, frobenius, spectral``.
    groups : GroupStructure, optional
        Split of the layer input; ``None`` means one group over everything
        (its dimension is then fixed by the previous layer).
    shape : (rows, cols), optional
        Matrix shape of every group for matrix kinds; groups are column-major.
    eps : float
        Weight of the l2 term of ``linf_eps`` (``||v||_inf + eps ||v||_2``).
    """

    kind: str
    groups: GroupStructure | None = None
    shape: tuple[int, int] | None = None
    eps: float = LINF_EPS_DEFAULT

    def resolved_groups(self, dim: int) -> GroupStructure:
        return self.groups if self.groups is not None else GroupStructure.from_sizes([dim])

    def describe(self) -> str:
        extra = f"{self.shape[0]}x{self.shape[1]}" if self.shape else ""
        return self.kind + extra


@dataclass(frozen=True)
class LayeredNorm:
    layers: tuple[LayerFn, ...]
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def depth(self) -> int:
        return len(self.layers)

    def dims(self) -> list[int]:
        """Input dimension of every layer (no validation)."""
        dims = [self.input_dim]
        for layer in self.layers[:-1]:
            dims.append(layer.resolved_groups(dims[-1]).n_groups)
        return dims


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _matrix_stack(v: np.ndarray, shape) -> np.ndarray:
    r, c = shape
    return v.reshape(-1, c, r).swapaxes(1, 2)


def _group_values(layer: LayerFn, v: np.ndarray) -> np.ndarray:
    """Unweighted per-group norm values."""
    gs = layer.resolved_groups(len(v))
    gs.check(v)
    kind = layer.kind
    if kind in ("l2", "frobenius"):
        return gs.group_norms(v)
    if kind == "l1":
        return gs.group_sum(np.abs(v))
    if kind == "linf":
        return np.maximum.reduceat(np.abs(v), gs.offsets)
    if kind == "linf_eps":
        return np.maximum.reduceat(np.abs(v), gs.offsets) + layer.eps * gs.group_norms(v)
    s = svd_batch(_matrix_stack(v, layer.shape)).singular_values
    return s.sum(axis=1) if kind == "nuclear" else s[:, 0]


def _layer_output(layer: LayerFn, v: np.ndarray) -> np.ndarray:
    gs = layer.resolved_groups(len(v))
    return gs.weights * _group_values(layer, v)


def eval_layered(ln: LayeredNorm, x: np.ndarray) -> float:
    """Evaluate the composition directly, innermost layer first."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (ln.input_dim,):
        raise ValueError(f"layered norm expects {ln.input_dim} entries, got {v.shape}")
    for layer in ln.layers:
        v = _layer_output(layer, v)
    return float(v.sum())


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def _structure_problems(ln: LayeredNorm) -> list[str]:
    problems = []
    if ln.depth < 1:
        return ["a layered norm needs at least one layer"]
    dim = ln.input_dim
    for k, layer in enumerate(ln.layers, start=1):
        if layer.kind not in KINDS:
            problems.append(f"layer {k}: unknown kind {layer.kind!r}")
            break
        gs = layer.resolved_groups(dim)
        if gs.dim != dim:
            problems.append(f"layer {k}: groups cover {gs.dim} entries but the input has {dim}")
            break
        if layer.kind in MATRIX_KINDS:
            if layer.shape is None:
                problems.append(f"layer {k}: {layer.kind} needs a matrix shape")
            elif np.any(gs.sizes != layer.shape[0] * layer.shape[1]):
                problems.append(f"layer {k}: group sizes do not match shape {layer.shape}")
        if layer.kind == "linf_eps" and not layer.eps > 0:
            problems.append(f"layer {k}: linf_eps needs eps > 0")
        dim = gs.n_groups
    return problems


def validate_assumptions(ln: LayeredNorm) -> Validation:
    """Classify a layered norm.

    Inner layers produce nonnegative vectors, so every layer from the second
    onward only sees the nonnegative orthant. If all of those layers are
    strictly increasing there (l1, l2, linf_eps, Frobenius, with positive
    weights) the relaxation keeps the minimizers. l-infinity and the operator
    norm are only non-decreasing, and the nuclear norm is not even monotone,
    so any of them beyond the first layer makes the relaxation a convex
    surrogate only.
    """
    problems = _structure_problems(ln)
    if problems:
        return Validation(Classification.INVALID, tuple(problems))
    reasons = []
    dims = ln.dims()
    for k, layer in enumerate(ln.layers[1:], start=2):
        gs = layer.resolved_groups(dims[k - 1])
        if layer.kind not in STRICT_KINDS:
            reasons.append(f"layer {k}: {layer.kind} is not strictly increasing on the nonnegative orthant")
        elif np.any(gs.weights == 0):
            reasons.append(f"layer {k}: zero group weight breaks strict increase")
    if reasons:
        return Validation(Classification.CONVEX_RELAXATION_ONLY, tuple(reasons))
    return Validation(Classification.SOLUTION_PRESERVING)


# ---------------------------------------------------------------------------
# Relaxation
# ---------------------------------------------------------------------------


def _blockwise_prox(gs: GroupStructure, kernel, name: str, value) -> ProxFn:
    """Prox of ``sum_g w_g h(v_g)`` from a kernel ``kernel(v_g, gamma)``."""

    def prox(v, gamma):
        out = np.array(v, dtype=np.float64)
        for off, size, w in zip(gs.offsets, gs.sizes, gs.weights):
            if w > 0:
                out[off : off + size] = kernel(out[off : off + size], gamma * w)
        return out

    return ProxFn(name, prox, value, gs.dim)


def _outer_fns(layer: LayerFn, dim: int) -> list[ProxFn]:
    """Proximable terms whose sum is the outermost layer."""
    gs = layer.resolved_groups(dim)
    kind = layer.kind

    def value_of(lay):
        return lambda v: float(_layer_output(lay, v).sum())

    if kind == "l1":
        return [weighted_l1_fn(gs.expand(gs.weights))]
    if kind in ("l2", "frobenius"):
        return [group_l21_fn(gs)]
    if kind == "linf":
        return [_blockwise_prox(gs, prox_linf, "linf", value_of(layer))]
    if kind == "linf_eps":
        scaled_gs = GroupStructure(gs.offsets, gs.sizes, layer.eps * gs.weights)
        linf = LayerFn("linf", gs)
        return [_blockwise_prox(gs, prox_linf, "linf", value_of(linf)), group_l21_fn(scaled_gs)]
    r, c = layer.shape

    def mat_kernel(fn):
        return lambda v, g: fn(v.reshape(c, r).T, g).T.reshape(-1)

    if kind == "nuclear" and np.all(gs.weights == 1.0):
        def prox(v, gamma):
            return prox_nuclear(_matrix_stack(v, layer.shape), gamma).swapaxes(1, 2).reshape(-1)

        return [ProxFn("nuclear", prox, value_of(layer), gs.dim)]
    fn = prox_nuclear if kind == "nuclear" else prox_spectral
    return [_blockwise_prox(gs, mat_kernel(fn), kind, value_of(layer))]


def _epigraph_for(layer: LayerFn, gs: GroupStructure, k: int) -> BlockEpigraph:
    unit = GroupStructure(gs.offsets, gs.sizes, np.ones(gs.n_groups))
    if layer.kind in ("l2", "frobenius"):
        if np.any(gs.weights <= 0):
            raise UnsupportedConfigurationError(f"layer {k}: l2 group weights must be positive")
        return BlockEpigraph(unit, "l2", tau=gs.weights)
    if np.any(gs.weights != 1.0):
        raise UnsupportedConfigurationError(f"layer {k}: group weights are only supported for l2 inner layers")
    if layer.kind in ("l1", "linf"):
        return BlockEpigraph(unit, layer.kind)
    p = {"nuclear": 1, "spectral": np.inf}[layer.kind]
    return BlockEpigraph(unit, "schatten", p=p, shape=layer.shape)


@dataclass
class _Rows:
    """Incrementally assembled block rows of ``F`` and the matching H blocks."""

    n_cols: int
    rows: list = field(default_factory=list)
    blocks: list = field(default_factory=list)

    def add(self, entries: Sequence[dict], block: HBlock | None):
        # entries: one dict {col: op} per block row; block spans all of them
        for e in entries:
            row = [None] * self.n_cols
            for j, op in e.items():
                row[j] = op
            self.rows.append(row)
        if block is not None:
            self.blocks.append(block)


def relax(
    ln: LayeredNorm,
    a_op: LinearOperator,
    g_terms: Sequence[tuple[ProxFn, LinearOperator]] = (),
    x_prox: ProxFn | None = None,
) -> SplitProblem:
    """Build the epigraphically relaxed split problem.

    Minimizes ``ln(A x) + sum_m g_m(B_m x) + x_prox(x)`` over ``x``. ``H``
    consists of the outermost-norm prox, one block per ``g_m``, and one
    block-wise epigraph projection per inner layer (three blocks for a
    modified l-infinity layer, which is split into an l-infinity and an l2
    epigraph plus a half-space). ``x_prox`` becomes ``G`` and acts on ``x``
    only.

    The returned problem's ``labels`` hold the primal layout under
    ``"primal"`` (name -> slice) and the norm under ``"norm"``.
    """
    v = validate_assumptions(ln)
    if not v:
        raise UnsupportedConfigurationError("; ".join(v.reasons))
    if a_op.out_dim != ln.input_dim:
        raise UnsupportedConfigurationError(f"A has {a_op.out_dim} outputs, the norm expects {ln.input_dim}")
    n = a_op.in_dim
    dims = ln.dims()
    K = ln.depth

    # primal segments
    seg_names = ["x"] + [f"z{k}" for k in range(2, K + 1)]
    seg_dims = [n] + dims[1:]
    eta_cols = {}
    for k, layer in enumerate(ln.layers[:-1], start=1):
        if layer.kind == "linf_eps":
            m = dims[k]
            eta_cols[k] = (len(seg_names), len(seg_names) + 1)
            seg_names += [f"eta1_{k}", f"eta2_{k}"]
            seg_dims += [m, m]
    rows = _Rows(len(seg_names))

    def input_of(k):
        # column index and operator giving the input of layer k
        return (0, a_op) if k == 1 else (k - 1, identity(dims[k - 1]))

    # outermost norm
    col, op = input_of(K)
    for fn in _outer_fns(ln.layers[-1], dims[K - 1]):
        rows.add([{col: op}], HBlock.from_prox(fn, dims[K - 1]))
    # extra terms g_m(B_m x)
    for fn, b_op in g_terms:
        if b_op.in_dim != n:
            raise UnsupportedConfigurationError(f"{fn.name}: operator domain {b_op.in_dim} != {n}")
        rows.add([{0: b_op}], HBlock.from_prox(fn, b_op.out_dim))
    # epigraph constraints f_k(z_k) <= z_{k+1}
    for k, layer in enumerate(ln.layers[:-1], start=1):
        col, op = input_of(k)
        gs = layer.resolved_groups(dims[k - 1])
        out_col, m = k, dims[k]
        eye = identity(m)
        if layer.kind == "linf_eps":
            if np.any(gs.weights != 1.0):
                raise UnsupportedConfigurationError(f"layer {k}: weights are not supported for linf_eps")
            unit = GroupStructure(gs.offsets, gs.sizes, np.ones(gs.n_groups))
            c1, c2 = eta_cols[k]
            rows.add([{col: op}, {c1: eye}], HBlock.from_epigraph(BlockEpigraph(unit, "linf")))
            rows.add([{col: op}, {c2: eye}], HBlock.from_epigraph(BlockEpigraph(unit, "l2", tau=layer.eps)))
            rows.add([{c1: eye, c2: eye, out_col: -eye}], HBlock.from_prox(nonpos_fn(m), m))
        else:
            be = _epigraph_for(layer, gs, k)
            rows.add([{col: op}, {out_col: eye}], HBlock.from_epigraph(be))

    f_op = block_operator(rows.rows)
    offsets = np.concatenate([[0], np.cumsum(seg_dims)]).astype(int)
    layout = {name: slice(int(offsets[i]), int(offsets[i + 1])) for i, name in enumerate(seg_names)}
    g = _primal_g(x_prox, n, int(offsets[-1]))
    return SplitProblem(f_op, tuple(rows.blocks), g, labels={"primal": layout, "norm": ln})


def _primal_g(x_prox: ProxFn | None, n: int, total: int) -> ProxFn:
    if x_prox is None:
        return zero_fn(total)

    def prox(p, gamma):
        out = np.array(p, dtype=np.float64)
        out[:n] = x_prox.prox(out[:n], gamma)
        return out

    return ProxFn(f"{x_prox.name}(x)", prox, lambda p: x_prox.value(p[:n]), total, x_prox.is_indicator)


def relax_modified_linf_2layer(
    a_op: LinearOperator,
    eps: float,
    g: ProxFn,
    gs: GroupStructure | None = None,
) -> SplitProblem:
    """Relaxed problem for ``||f1(A x)||_{inf,eps} + g(x)``.

    ``f1`` maps every group of ``A x`` to its modified l-infinity norm
    ``||v||_inf + eps ||v||_2``. The primal vector is ``[x; z; eta1; eta2]``
    and ``g`` enters ``H`` through an identity block.
    """
    if not eps > 0:
        raise UnsupportedConfigurationError("eps must be positive")
    inner = LayerFn("linf_eps", gs, eps=eps)
    ln = LayeredNorm((inner, LayerFn("linf_eps", eps=eps)), a_op.out_dim)
    return relax(ln, a_op, [(g, identity(a_op.in_dim))])


def box_constraint(lo: float = 0.0, hi: float = 1.0) -> ProxFn:
    """Convenience ``G`` for image problems."""
    return box_fn(lo, hi)


_LAYER_RE = re.compile(
    r"^(?P<kind>[a-z][a-z0-9_]*)(?:\((?P<eps>[^)]*)\))?(?:\[(?P<size>\d+)\])?(?:@(?P<rows>\d+)x(?P<cols>\d+))?$"
)


def parse_norm(text: str, input_dim: int) -> LayeredNorm:
    """Build a layered norm from a compact description.

    Layers are written innermost first and joined by ``>``. Each layer is
    ``kind[(eps)][[size]][@RxC]``: ``[size]`` splits the layer input into
    equal groups (omitted: one group), ``@RxC`` gives the matrix shape of
    each group for matrix kinds (and implies ``[R*C]`` when no size is given)
    and ``(eps)`` sets the l2 weight of ``linf_eps``. For example,
    ``l2[6]>l1`` is the VTV norm and ``l2[2]>nuclear@43x20`` the ASNN.

    Raises
    ------
    ValueError
        On text that does not follow the grammar. Dimension problems are not
        raised here; :func:`validate_assumptions` reports them as Invalid.
    """
    parts = [t.strip() for t in text.strip().split(">")]
    if not parts or any(not t for t in parts):
        raise ValueError(f"empty layer in {text!r}")
    layers = []
    dim = int(input_dim)
    for t in parts:
        m = _LAYER_RE.match(t)
        if m is None:
            raise ValueError(f"cannot parse layer {t!r}")
        kind = m["kind"]
        if kind not in KINDS:
            raise ValueError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
        shape = (int(m["rows"]), int(m["cols"])) if m["rows"] else None
        if shape is not None and kind not in MATRIX_KINDS:
            raise ValueError(f"{kind} does not take a matrix shape")
        size = int(m["size"]) if m["size"] else (shape[0] * shape[1] if shape else None)
        if size is not None and size < 1:
            raise ValueError("group size must be positive")
        eps = LINF_EPS_DEFAULT
        if m["eps"] is not None:
            if kind != "linf_eps":
                raise ValueError("only linf_eps takes an eps argument")
            try:
                eps = float(m["eps"])
            except ValueError:
                raise ValueError(f"bad eps {m['eps']!r}") from None
        groups = None
        if size is not None:
            if dim % size:
                # keep the mismatch visible to validate_assumptions
                groups = GroupStructure.from_sizes([size] * max(1, dim // size))
            else:
                groups = GroupStructure.uniform(dim // size, size)
        layers.append(LayerFn(kind, groups, shape, eps))
        dim = groups.n_groups if groups is not None else 1
    return LayeredNorm(tuple(layers), int(input_dim))
