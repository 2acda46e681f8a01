"""Oracle and property suites run by ``erx check`` and the test suite.

Each suite returns a :class:`CheckResult`. Operators are looked up through
their modules at call time, so a patched module attribute is what gets
checked.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dstv as _dstv
from . import epigraph as _epi
from . import frpca as _frpca
from . import images as _img
from . import layered as _layered
from . import linalg as _linalg
from . import oracles as _or
from . import prox as _prox

__all__ = ["CheckResult", "SUITES", "run_all", "run_suite"]

PROX_TOL = 1e-8
EPI_FEAS_TOL = 1e-12
EPI_AGREE_TOL = 1e-6
LAMBDA_TOL = 1e-10
MOREAU_TOL = 1e-12
ADJOINT_RTOL = 1e-10


@dataclass
class CheckResult:
    suite: str
    passed: bool
    cases: int
    max_violation: float
    tolerance: float
    seconds: float = 0.0
    failures: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.suite}: {self.cases} cases, max violation {self.max_violation:.3g} "
            f"(tol {self.tolerance:g}), {self.seconds:.2f}s"
        )


class _Tally:
    def __init__(self, suite: str, tol: float):
        self.suite, self.tol = suite, tol
        self.cases, self.worst = 0, 0.0
        self.failures: list[str] = []
        self.t0 = time.perf_counter()

    def add(self, label: str, violation: float, tol: float | None = None) -> None:
        tol = self.tol if tol is None else tol
        self.cases += 1
        v = float(violation) if np.isfinite(violation) else np.inf
        self.worst = max(self.worst, v)
        if not v <= tol and len(self.failures) < 10:
            self.failures.append(f"{label}: {v:.3g}")
        elif not v <= tol:
            self.failures.append("")

    def result(self) -> CheckResult:
        fails = [f for f in self.failures if f]
        return CheckResult(
            self.suite, not self.failures, self.cases, self.worst, self.tol, time.perf_counter() - self.t0, fails
        )


# ---------------------------------------------------------------------------
# Prox catalog: (ProxFn, independent value, feasible sampler, dual prox)
# ---------------------------------------------------------------------------


def _ball_sampler(center, radius):
    d = len(center)

    def sample(rng, k):
        u = rng.standard_normal((k, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return center + radius * u * rng.random((k, 1)) ** (1.0 / d)

    return sample


def _l1_ball_sampler(d, radius):
    def sample(rng, k):
        # uniform on the simplex face scaled by a random fraction, random signs
        e = rng.exponential(size=(k, d))
        e /= e.sum(1, keepdims=True)
        return radius * rng.random((k, 1)) * e * rng.choice([-1.0, 1.0], size=(k, d))

    return sample


def _indicator_value(ok: Callable[[np.ndarray], np.ndarray]):
    """Indicator from a row-wise feasibility test; works on one point or a batch."""
    return lambda y: np.where(ok(np.asarray(y)), 0.0, np.inf)


def _prox_catalog(rng: np.random.Generator, d: int):
    """Yield ``(name, ProxFn, value, sampler, dual_prox)``.

    ``value`` evaluates the function independently of the library, row-wise
    on a batch of points.
    ``dual_prox(v, t)`` is ``prox_{t f*}(v)`` written from the conjugate
    directly, for the Moreau check.
    """
    P = _prox
    tol = 1e-12
    yield "l1", P.l1_fn(), lambda y: np.abs(y).sum(-1), None, lambda v, t: np.clip(v, -1, 1)
    w = rng.uniform(0.1, 2.0, d)
    yield (
        "weighted_l1",
        P.weighted_l1_fn(w),
        lambda y: np.abs(y) @ w,
        None,
        lambda v, t: np.clip(v, -w, w),
    )
    yield "l2", P.l2_fn(), lambda y: np.linalg.norm(y, axis=-1), None, lambda v, t: _or.dual_ball_projection("l2", v)
    yield "linf", P.linf_fn(), lambda y: np.abs(y).max(-1), None, lambda v, t: _or.project_l1_ball_bisection(v)
    dg = max(d, 2)
    cut = int(rng.integers(1, dg))
    gw = rng.uniform(0.1, 2.0, 2)

    def gval(y):
        return gw[0] * np.linalg.norm(y[..., :cut], axis=-1) + gw[1] * np.linalg.norm(y[..., cut:], axis=-1)

    def gdual(v, t):
        a, b = v[:cut], v[cut:]
        na, nb = max(np.linalg.norm(a), 1e-300), max(np.linalg.norm(b), 1e-300)
        return np.concatenate([a * min(1.0, gw[0] / na), b * min(1.0, gw[1] / nb)])

    yield "group_l21", P.group_l21_fn(P.GroupStructure.from_sizes([cut, dg - cut], gw)), gval, None, gdual

    # 2 x 2 matrices in column-major order
    def _sv(y):
        return np.linalg.svd(np.swapaxes(y.reshape(y.shape[:-1] + (2, 2)), -1, -2), compute_uv=False)

    def nval(y):
        return _sv(y).sum(-1)

    def sval(y):
        return _sv(y).max(-1)

    def mdual(kind):
        return lambda v, t: _linalg.vec(_or.dual_ball_projection(kind, _linalg.mat(v, 2, 2)))

    yield "nuclear", P.nuclear_fn(2, 2), nval, None, mdual("nuclear")
    yield "spectral", P.spectral_fn(2, 2), sval, None, mdual("spectral")
    yield "zero", P.zero_fn(), lambda y: np.zeros(np.shape(y)[:-1]), None, lambda v, t: np.zeros_like(v)

    c = rng.standard_normal(d)
    eps = float(rng.uniform(0.1, 2.0))
    yield (
        "l2_ball",
        P.l2_ball_fn(c, eps),
        _indicator_value(lambda y: np.linalg.norm(y - c, axis=-1) <= eps + tol),
        _ball_sampler(c, eps),
        # sigma(u) = <c, u> + eps ||u||
        lambda v, t: _or.prox_via_dual("l2", v - t * c, t * eps),
    )
    r = float(rng.uniform(0.1, 2.0))
    yield (
        "l1_ball",
        P.l1_ball_fn(r),
        _indicator_value(lambda y: np.abs(y).sum(-1) <= r + tol),
        _l1_ball_sampler(d, r),
        lambda v, t: _or.prox_via_dual("linf", v, t * r),
    )
    lo = float(rng.uniform(-1.5, 0.5))
    hi = lo + float(rng.uniform(0.0, 2.0))
    yield (
        "box",
        P.box_fn(lo, hi),
        _indicator_value(lambda y: np.all((y >= lo - tol) & (y <= hi + tol), axis=-1)),
        lambda g, k: g.uniform(lo, hi, (k, d)),
        lambda v, t: np.where(v > t * hi, v - t * hi, np.where(v < t * lo, v - t * lo, 0.0)),
    )
    yield (
        "nonpos",
        P.nonpos_fn(),
        _indicator_value(lambda y: np.all(y <= tol, axis=-1)),
        lambda g, k: -np.abs(g.standard_normal((k, d))) * g.exponential(size=(k, 1)),
        lambda v, t: np.maximum(v, 0.0),
    )
    tgt = rng.standard_normal(d)
    yield (
        "singleton",
        P.singleton_fn(tgt),
        _indicator_value(lambda y: np.all(np.abs(y - tgt) <= tol, axis=-1)),
        lambda g, k: np.repeat(tgt[None], k, 0),
        lambda v, t: v - t * tgt,
    )


def check_prox(seed: int = 0, trials: int = 100, competitors: int = 500) -> CheckResult:
    """Every prox/projection against a numeric argmin over random competitors."""
    rng = np.random.default_rng(seed)
    tally = _Tally("prox", PROX_TOL)
    for i in range(trials):
        d = 4 if i % 2 == 0 else int(rng.integers(1, 5))
        for name, f, value, sampler, _ in _prox_catalog(rng, d):
            x = rng.standard_normal(f.dim or d) * rng.choice([0.3, 1.0, 3.0])
            gamma = float(rng.uniform(0.05, 3.0))
            try:
                p = np.asarray(f.eval(x, gamma), dtype=np.float64)
                v = _or.prox_oracle_violation(value, p, x, gamma, rng, competitors, sampler, batched=True)
            except Exception as exc:  # a crash is a failure, not an abort
                tally.add(f"{name} raised {exc!r}", np.inf)
                continue
            tally.add(f"{name} d={d}", v)
    return tally.result()


def check_moreau(seed: int = 0, trials: int = 1000) -> CheckResult:
    """``x = prox_{g f}(x) + g prox_{f*/g}(x/g)`` with the conjugate prox written independently."""
    rng = np.random.default_rng(seed)
    tally = _Tally("moreau", MOREAU_TOL)
    per = max(1, trials // 13)
    done = 0
    while done < trials:
        d = int(rng.integers(1, 5)) if done % 2 else 4
        for name, f, _, _, dual in _prox_catalog(rng, d):
            for _ in range(per if done < trials else 0):
                x = rng.standard_normal(f.dim or d) * rng.choice([0.3, 1.0, 3.0])
                g = float(rng.uniform(0.05, 3.0))
                try:
                    p = f.eval(x, g)
                    # library identity and independent conjugate must both hold
                    via_lib = _prox.prox_conjugate(f, x / g, 1.0 / g)
                    res_lib = np.abs(x - p - g * via_lib).max()
                    res_ind = np.abs(x - p - g * dual(x / g, 1.0 / g)).max()
                except Exception as exc:
                    tally.add(f"{name} raised {exc!r}", np.inf)
                    continue
                scale = max(1.0, float(np.abs(x).max()))
                tally.add(f"{name} d={d}", max(res_lib, res_ind) / scale)
            done += per
    return tally.result()


def check_epi(seed: int = 0, instances: int = 200) -> CheckResult:
    """Epigraph projections: feasibility and agreement with the KKT bisection oracle."""
    rng = np.random.default_rng(seed)
    tally = _Tally("epi", EPI_AGREE_TOL)
    E = _epi

    def draw_xi(fx):
        return float(rng.choice([-1.5, -0.3, 0.4, 0.9, 1.2])) * fx + 0.1 * rng.standard_normal()

    for i in range(instances):
        n = int(rng.integers(1, 7))
        x = rng.standard_normal(n) * rng.choice([0.5, 2.0])
        tau = float(rng.uniform(0.2, 3.0))
        for kind, call in (
            ("l2", lambda x, xi: E.epi_project_l2(x, xi, tau)),
            ("l1", E.epi_project_l1),
            ("linf", E.epi_project_linf),
        ):
            t = tau if kind == "l2" else 1.0
            xi = draw_xi(t * _or.norm_value(kind, x))
            try:
                got = call(x, xi)
                ref_x, ref_xi = _or.epi_oracle(kind, x, xi, t)
            except Exception as exc:
                tally.add(f"{kind} raised {exc!r}", np.inf)
                continue
            feas = t * _or.norm_value(kind, got.x) - got.xi
            tally.add(f"{kind} feasibility n={n}", feas, EPI_FEAS_TOL)
            tally.add(f"{kind} n={n}", max(np.abs(got.x - ref_x).max(), abs(got.xi - ref_xi)))
        rows = int(rng.integers(1, 4))
        cols = int(rng.integers(1, max(2, 7 // rows)))
        cols = min(cols, 6 // rows)
        m = rng.standard_normal((rows, cols)) * rng.choice([0.5, 2.0])
        for p, kind in ((1, "nuclear"), (2, "frobenius"), (np.inf, "spectral")):
            xi = draw_xi(_or.norm_value(kind, m))
            try:
                got = E.epi_project_schatten(m, xi, p)
                ref_x, ref_xi = _or.epi_oracle(kind, m, xi)
            except Exception as exc:
                tally.add(f"schatten-{p} raised {exc!r}", np.inf)
                continue
            tally.add(f"schatten-{p} feasibility", _or.norm_value(kind, got.x) - got.xi, EPI_FEAS_TOL)
            tally.add(f"schatten-{p} {rows}x{cols}", max(np.abs(got.x - ref_x).max(), abs(got.xi - ref_xi)))
    return tally.result()


def check_lambda(seed: int = 0, instances: int = 1000) -> CheckResult:
    """Closed-form l1 epigraph multiplier against bisection on its defining root."""
    rng = np.random.default_rng(seed)
    tally = _Tally("lambda", LAMBDA_TOL)
    for _ in range(instances):
        n = int(rng.integers(1, 17))
        x = rng.standard_normal(n) * rng.choice([0.1, 1.0, 10.0])
        if rng.random() < 0.2:
            x = np.round(x)  # exercise ties and zeros
        l1 = float(np.abs(x).sum())
        if l1 == 0:
            x[0] = 1.0
            l1 = 1.0
        xi = float(rng.uniform(-2.0, 0.999) * l1)
        try:
            got = _epi.epi_l1_lambda_star(x, xi)
        except Exception as exc:
            tally.add(f"raised {exc!r}", np.inf)
            continue
        ref = _or.lambda_star_bisection(x, xi)
        tally.add(f"n={n}", abs(got - ref) / max(1.0, abs(ref)))
    return tally.result()


def _adjoint_gap(op: _linalg.LinearOperator, rng: np.random.Generator, trials: int = 3) -> float:
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_dim)
        y = rng.standard_normal(op.out_dim)
        lhs = float(op(x) @ y)
        rhs = float(x @ op.T(y))
        worst = max(worst, abs(lhs - rhs) / max(1.0, np.linalg.norm(op(x)) * np.linalg.norm(y)))
    return worst


def _operators(rng: np.random.Generator):
    I = _img
    h, w = 5, 4
    n = h * w
    yield "D", I.gradient_op(w, h, 3)
    yield "C", I.color_transform(n)
    yield "P1", I.permute_gradients("P1", n)
    yield "P4", I.permute_gradients("P4", n)
    yield "E3", I.patch_expand(3, w, h)
    yield "E1", I.patch_expand(1, w, h)
    yield "Phi", I.measurement_op(12, 48, seed=3)
    yield "Phi[first rows]", I.measurement_op(12, 48, seed=None)
    yield "T1", _frpca.build_dft_split(7, 3).op
    yield "T2", _frpca.build_dft_split(9, 2, dims_d=2).op
    for reg in _dstv.REGULARIZERS:
        ln, a = _dstv.build_regularizer(reg, 4, 4, 0.5, 3)
        prob = _layered.relax(ln, a, [(_prox.l2_ball_fn(np.zeros(12), 1.0), I.measurement_op(12, 48, seed=1))])
        yield f"F[{reg}]", prob.f_op
    A = _linalg.matrix_operator(rng.standard_normal((6, 5)))
    ln = _layered.LayeredNorm(
        (
            _layered.LayerFn("l2", _prox.GroupStructure.uniform(3, 2)),
            _layered.LayerFn("l2", _prox.GroupStructure.from_sizes([2, 1])),
            _layered.LayerFn("l1"),
        ),
        6,
    )
    yield "F[l2-l2-l1]", _layered.relax(ln, A).f_op
    yield "F[linf_eps]", _layered.relax_modified_linf_2layer(A, 0.1, _prox.zero_fn()).f_op


def check_adjoint(seed: int = 0) -> CheckResult:
    """``<A x, y> = <x, A^T y>`` for every operator the solvers build."""
    rng = np.random.default_rng(seed)
    tally = _Tally("adjoint", ADJOINT_RTOL)
    for name, op in _operators(rng):
        try:
            tally.add(name, _adjoint_gap(op, rng))
        except Exception as exc:
            tally.add(f"{name} raised {exc!r}", np.inf)
    return tally.result()


def check_counterexample(seed: int = 0) -> CheckResult:
    """Monotonicity facts behind the layer classification.

    * ``A = [[1, 1], [1, 0.9]] <= B = ones`` yet ``||A||_* > ||B||_*``.
    * ``diag(1, 0) <= I`` with a strict increase, yet equal operator norms.
    * Two-layer norms are classified by their outer kind accordingly.
    """
    tally = _Tally("counterexample", 0.0)
    svd = _linalg.svd_batch
    a = np.array([[1.0, 1.0], [1.0, 0.9]])
    b = np.ones((2, 2))
    na, nb = svd(a).singular_values.sum(), svd(b).singular_values.sum()
    tally.add("nuclear ||A||_* > ||B||_*", 0.0 if (np.all(a <= b) and na > nb) else 1.0)
    a = np.diag([1.0, 0.0])
    b = np.eye(2)
    sa, sb = svd(a).singular_values.max(), svd(b).singular_values.max()
    strict = bool(np.all(a <= b) and np.any(a < b))
    tally.add("spectral equal despite strict increase", 0.0 if (strict and abs(sa - sb) <= 1e-15) else 1.0)
    # Frobenius must increase strictly on the same pair
    tally.add("frobenius strict", 0.0 if np.linalg.norm(b) > np.linalg.norm(a) else 1.0)

    L = _layered
    gs = _prox.GroupStructure.uniform(2, 4)
    expected = {
        "l1": L.Classification.SOLUTION_PRESERVING,
        "l2": L.Classification.SOLUTION_PRESERVING,
        "linf_eps": L.Classification.SOLUTION_PRESERVING,
        "frobenius": L.Classification.SOLUTION_PRESERVING,
        "linf": L.Classification.CONVEX_RELAXATION_ONLY,
        "spectral": L.Classification.CONVEX_RELAXATION_ONLY,
        "nuclear": L.Classification.CONVEX_RELAXATION_ONLY,
    }
    for kind, want in expected.items():
        shape = (2, 1) if kind in L.MATRIX_KINDS else None
        outer = L.LayerFn(kind, shape=shape)
        ln = L.LayeredNorm((L.LayerFn("l2", gs), outer), 8)
        got = L.validate_assumptions(ln).status
        tally.add(f"classify outer {kind}: {got.value}", 0.0 if got == want else 1.0)
    return tally.result()


SUITES: dict[str, Callable[..., CheckResult]] = {
    "prox": check_prox,
    "epi": check_epi,
    "lambda": check_lambda,
    "adjoint": check_adjoint,
    "moreau": check_moreau,
    "counterexample": check_counterexample,
}


def run_suite(name: str, seed: int = 0) -> CheckResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](seed=seed)


def run_all(seed: int = 0, names=None) -> list[CheckResult]:
    return [run_suite(n, seed) for n in (names or SUITES)]
