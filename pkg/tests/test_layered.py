import numpy as np
import pytest

from erx.dstv import build_regularizer
from erx.images import ImagePlane
from erx.layered import (
    Classification,
    LayerFn,
    LayeredNorm,
    UnsupportedConfigurationError,
    eval_layered,
    parse_norm,
    relax,
    relax_modified_linf_2layer,
    validate_assumptions,
)
from erx.linalg import adjoint_check, identity, matrix_operator, operator_norm
from erx.pds import StepSizes, pds_solve
from erx.prox import GroupStructure, ProxFn, singleton_fn

SP = Classification.SOLUTION_PRESERVING
CRO = Classification.CONVEX_RELAXATION_ONLY
INVALID = Classification.INVALID


def half_sq(b: np.ndarray) -> ProxFn:
    return ProxFn(
        "half_sq", lambda v, g: (v + g * b) / (1.0 + g), lambda v: 0.5 * float(np.sum((v - b) ** 2)), len(b)
    )


def cvx_solve(problem) -> None:
    import cvxpy as cp

    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)


def solve(prob, eps_stop=1e-11, max_iter=400_000):
    f_norm = 1.01 * operator_norm(prob.f_op)
    g = 1.0 / f_norm
    p, trace = pds_solve(prob, StepSizes(g, g), eps_stop, max_iter, f_norm=f_norm)
    assert trace.converged
    return p


# --- classification -----------------------------------------------------------------


@pytest.mark.parametrize(
    "outer, expected",
    [("l1", SP), ("l2", SP), ("linf_eps", SP), ("frobenius@2x2", SP), ("linf", CRO), ("spectral@2x2", CRO), ("nuclear@2x2", CRO)],
)
def test_classification_table(outer, expected):
    ln = parse_norm(f"l2[2]>{outer}", 8)
    assert validate_assumptions(ln).status is expected


def test_classification_examples():
    n = 16
    vtv, _ = build_regularizer("VTV", 4, 4)
    dstv, _ = build_regularizer("DSTV", 4, 4)
    assert validate_assumptions(vtv).status is SP
    assert validate_assumptions(dstv).status is SP
    asnn = parse_norm("l2[2]>nuclear@43x20", 2 * 43 * 20)
    v = validate_assumptions(asnn)
    assert v.status is CRO and "nuclear" in v.reasons[0]
    assert validate_assumptions(LayeredNorm((LayerFn("l1"),), n)).status is SP


def test_classification_zero_weight_and_invalid():
    gs = GroupStructure.from_sizes([2, 2], [1.0, 0.0])
    ln = LayeredNorm((LayerFn("l2", GroupStructure.uniform(2, 2)), LayerFn("l2", GroupStructure.from_sizes([1, 1], [1.0, 0.0]))), 4)
    assert validate_assumptions(ln).status is CRO
    assert validate_assumptions(LayeredNorm((LayerFn("l2", gs),), 5)).status is INVALID
    assert validate_assumptions(LayeredNorm((LayerFn("lp"),), 3)).status is INVALID
    assert validate_assumptions(LayeredNorm((LayerFn("nuclear"),), 4)).status is INVALID
    assert validate_assumptions(LayeredNorm((), 4)).status is INVALID
    assert not validate_assumptions(parse_norm("l2[5]>l1", 12))


def test_classification_is_pure():
    ln = parse_norm("l2[3]>linf", 9)
    assert validate_assumptions(ln) == validate_assumptions(ln)


# --- parse_norm ----------------------------------------------------------------------


def test_parse_norm_structure():
    ln = parse_norm("l2[6]>l1", 24)
    assert ln.depth == 2 and ln.dims() == [24, 4]
    ln = parse_norm("linf_eps(0.5)[2]>l2", 6)
    assert ln.layers[0].eps == 0.5
    ln = parse_norm("nuclear@3x2>l1", 12)
    assert ln.layers[0].shape == (3, 2) and ln.dims() == [12, 2]


@pytest.mark.parametrize("text", ["", "l2>", "l3", "l2(0.1)", "l2@2x2", "l2[0]", "linf_eps(abc)", "L2"])
def test_parse_norm_errors(text):
    with pytest.raises(ValueError):
        parse_norm(text, 4)


# --- eval_layered ------------------------------------------------------------------------


def test_eval_layered_examples():
    ln = parse_norm("l2[2]>l1", 4)
    assert eval_layered(ln, np.array([3.0, 4.0, 0.0, 0.0])) == pytest.approx(5.0)
    vtv, a = build_regularizer("VTV", 3, 3)
    const = ImagePlane(np.full((3, 3, 3), 0.4))
    assert eval_layered(vtv, a(const.to_vector())) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        eval_layered(ln, np.ones(3))


def test_eval_layered_matrix_and_linf_eps(rng):
    x = rng.standard_normal(12)
    ln = parse_norm("nuclear@3x2>l2", 12)
    mats = [x[:6].reshape(3, 2, order="F"), x[6:].reshape(3, 2, order="F")]
    nuc = [np.linalg.svd(m, compute_uv=False).sum() for m in mats]
    assert eval_layered(ln, x) == pytest.approx(np.hypot(*nuc))
    ln = parse_norm("linf_eps(0.25)[4]>l1", 12)
    ref = sum(np.abs(g).max() + 0.25 * np.linalg.norm(g) for g in x.reshape(3, 4))
    assert eval_layered(ln, x) == pytest.approx(ref)


# --- relax structure ---------------------------------------------------------------------


def test_relax_single_layer_has_no_epigraph(rng):
    ln = parse_norm("l1", 5)
    prob = relax(ln, matrix_operator(rng.standard_normal((5, 3))))
    assert len(prob.h_blocks) == 1 and not prob.h_blocks[0].is_indicator
    assert prob.primal_dim == 3


def test_relax_vtv_shape():
    h = w = 4
    n = h * w
    ln, a = build_regularizer("VTV", h, w)
    prob = relax(ln, a)
    assert prob.primal_dim == 3 * n + n
    epi = [b for b in prob.h_blocks if b.name.startswith("epi")]
    assert len(epi) == 1 and epi[0].dim == 6 * n + n
    assert prob.labels["primal"]["z2"] == slice(3 * n, 4 * n)
    assert adjoint_check(prob.f_op)


def test_relax_three_layers_adjoint(rng):
    ln = parse_norm("l2[2]>l2[2]>l1", 8)
    prob = relax(ln, matrix_operator(rng.standard_normal((8, 5))))
    assert sum(b.is_indicator for b in prob.h_blocks) == 2
    assert prob.primal_dim == 5 + 4 + 2
    assert adjoint_check(prob.f_op)


def test_relax_errors(rng):
    with pytest.raises(UnsupportedConfigurationError):
        relax(parse_norm("l2[5]>l1", 12), identity(12))
    with pytest.raises(UnsupportedConfigurationError):
        relax(parse_norm("l2[2]>l1", 8), identity(6))
    with pytest.raises(UnsupportedConfigurationError):
        relax(parse_norm("l1", 4), identity(4), [(singleton_fn(np.zeros(3)), identity(3))])
    with pytest.raises(UnsupportedConfigurationError):
        relax_modified_linf_2layer(identity(4), 0.0, singleton_fn(np.zeros(4)))


# --- relaxed solves ---------------------------------------------------------------------


def test_relaxation_exactness_and_minimizer(rng):
    # l2 inner, l1 outer: auxiliaries must equal the group norms at the solution
    a = rng.standard_normal((6, 4))
    b = 2.0 * rng.standard_normal(4)
    ln = parse_norm("l2[2]>l1", 6)
    p = solve(relax(ln, matrix_operator(a), x_prox=half_sq(b)))
    x, z = p[:4], p[4:7]
    norms = np.linalg.norm((a @ x).reshape(3, 2), axis=1)
    assert np.max(np.abs(norms - z)) <= 1e-5

    cp = pytest.importorskip("cvxpy")
    y = cp.Variable(4)
    ay = a @ y
    reg = sum(cp.norm(ay[2 * g : 2 * g + 2]) for g in range(3))
    cvx_solve(cp.Problem(cp.Minimize(reg + 0.5 * cp.sum_squares(y - b))))
    assert np.max(np.abs(x - y.value)) <= 1e-5


def test_three_layer_vs_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    b = 1.5 * rng.standard_normal(8)
    ln = parse_norm("l2[2]>l2[2]>l1", 8)
    p = solve(relax(ln, identity(8), x_prox=half_sq(b)))
    y = cp.Variable(8)
    inner = [cp.norm(y[2 * g : 2 * g + 2]) for g in range(4)]
    reg = cp.norm(cp.hstack(inner[:2])) + cp.norm(cp.hstack(inner[2:]))
    cvx_solve(cp.Problem(cp.Minimize(reg + 0.5 * cp.sum_squares(y - b))))
    assert np.max(np.abs(p[:8] - y.value)) <= 1e-5
    assert eval_layered(ln, p[:8]) == pytest.approx(reg.value, abs=1e-5)


def test_modified_linf_singleton():
    t = np.array([0.5, -1.0, 2.0, 0.0])
    prob = relax_modified_linf_2layer(identity(4), 1e-3, singleton_fn(t), GroupStructure.uniform(2, 2))
    p = solve(prob, eps_stop=1e-10)
    assert np.allclose(p[:4], t, atol=1e-6)


def _linf_eps_cvx(a, b, eps, cp):
    y = cp.Variable(4)
    ay = a @ y
    z = cp.hstack([cp.norm(ay[2 * g : 2 * g + 2], "inf") + eps * cp.norm(ay[2 * g : 2 * g + 2]) for g in range(2)])
    obj = cp.norm(z, "inf") + eps * cp.norm(z) + 0.5 * cp.sum_squares(y - b)
    prob = cp.Problem(cp.Minimize(obj))
    cvx_solve(prob)
    return y.value, prob.value


def test_modified_linf_vs_oracle(rng):
    cp = pytest.importorskip("cvxpy")
    a = rng.standard_normal((4, 4))
    b = 2.0 * rng.standard_normal(4)
    gs = GroupStructure.uniform(2, 2)
    p = solve(relax_modified_linf_2layer(matrix_operator(a), 0.1, half_sq(b), gs))
    ref, _ = _linf_eps_cvx(a, b, 0.1, cp)
    assert np.max(np.abs(p[:4] - ref)) <= 1e-4


def test_modified_linf_objective_monotone_in_eps(rng):
    a = rng.standard_normal((4, 4))
    b = 2.0 * rng.standard_normal(4)
    gs = GroupStructure.uniform(2, 2)
    values = []
    for eps in (0.01, 0.1, 1.0, 10.0):
        p = solve(relax_modified_linf_2layer(matrix_operator(a), eps, half_sq(b), gs))
        ln = LayeredNorm((LayerFn("linf_eps", gs, eps=eps), LayerFn("linf_eps", eps=eps)), 4)
        values.append(eval_layered(ln, a @ p[:4]) + 0.5 * np.sum((p[:4] - b) ** 2))
    assert all(u <= v + 1e-8 for u, v in zip(values, values[1:]))


def test_modified_linf_approaches_scaled_l2(rng):
    # ||z||_inf + eps ||z||_2 with z_g = ||v_g||_inf + eps ||v_g||_2 behaves like eps^2 l2-of-l2 for large eps
    x = rng.standard_normal(4)
    gs = GroupStructure.uniform(2, 2)
    ln2 = parse_norm("l2[2]>l2", 4)
    ratios = []
    for eps in (1.0, 10.0, 100.0, 1000.0):
        ln = LayeredNorm((LayerFn("linf_eps", gs, eps=eps), LayerFn("linf_eps", eps=eps)), 4)
        ratios.append(eval_layered(ln, x) / (eps * eps * eval_layered(ln2, x)))
    gaps = np.abs(np.array(ratios) - 1.0)
    assert np.all(np.diff(gaps) < 0) and gaps[-1] < 5e-3
