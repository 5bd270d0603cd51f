import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_bank
from mkfn.exceptions import (
    DegenerateResponseError,
    DegenerateResponseWarning,
    DomainError,
    InvalidResponseError,
    ShapeError,
    StepSizeError,
    UnsupportedExponentError,
)
from mkfn.fn_solver import solve_alpha
from mkfn.kernelspace import KernelBank, combine_weighted
from mkfn.lp_mkl import (
    P_GRID,
    MklConfig,
    beta_update,
    delta_convergence_bound,
    fit_fixed_point,
    fit_gradient_ascent,
    kernel_responses,
    lp_norm,
    mkl_gradient,
    mkl_objective,
)

responses = arrays(np.float64, st.integers(1, 8), elements=st.floats(0, 1e6, allow_nan=False))
exponents = st.sampled_from([32 / 31, 16 / 15, 8 / 7, 4 / 3, 1.5, 2.0, 3.0, 4.0, 8.0, 1e6])


def test_config_validation():
    with pytest.raises(DomainError):
        MklConfig(p=0.5)
    with pytest.raises(DomainError):
        MklConfig(delta=0)
    with pytest.raises(DomainError):
        MklConfig(tol=-1)
    with pytest.raises(DomainError):
        MklConfig(max_iter=0)
    assert MklConfig().tol_for(100) == pytest.approx(1e-7)


def test_kernel_responses_examples():
    bank = KernelBank(np.stack([np.eye(2), np.eye(2)]))
    assert np.array_equal(kernel_responses(bank, np.zeros(2)), [0.0, 0.0])
    assert np.array_equal(kernel_responses(bank, np.ones(2)), [2.0, 2.0])
    K1 = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert kernel_responses(K1, np.ones(2))[0] == pytest.approx(3.0)
    with pytest.raises(ShapeError):
        kernel_responses(bank, np.ones(3))


def test_beta_update_examples():
    b = beta_update([1.0, 4.0], 2.0)
    assert np.allclose(b, [0.24253562503633297, 0.97014250014533189], rtol=1e-14)
    assert np.array_equal(beta_update([3.0, 7.0, 7.0], 1.0), [0.0, 1.0, 0.0])
    b = beta_update([0.3, 2.0, 5.0, 1.0], 1e6)
    assert np.max(np.abs(b - 4 ** (-1e-6))) <= 1e-3
    assert np.max(np.abs(b - 1.0)) <= 1e-3


def test_beta_update_errors_and_fallback():
    with pytest.raises(InvalidResponseError):
        beta_update([1.0, -0.5], 2.0)
    with pytest.warns(DegenerateResponseWarning):
        b = beta_update([0.0, 0.0, 0.0, 0.0], 2.0)
    assert np.allclose(b, 0.5)
    # round-off negatives are tolerated
    assert beta_update([1.0, -1e-15], 2.0)[1] == 0.0


def test_beta_update_extreme_exponent_no_overflow():
    b = beta_update([1e-300, 1e300, 1.0], 1 + 1e-9)
    assert np.all(np.isfinite(b)) and b[1] == pytest.approx(1.0)


@given(responses.filter(lambda u: u.max() > 0), exponents)
def test_beta_unit_norm_and_holder(u, p):
    b = beta_update(u, p)
    assert np.all(b >= 0)
    assert lp_norm(b, p) == pytest.approx(1.0, abs=1e-10)
    q = p / (p - 1)
    assert b @ u == pytest.approx(lp_norm(u, q), rel=1e-10)


@given(responses.filter(lambda u: u.max() > 1e-100), exponents, st.floats(1e-6, 1e6))
def test_beta_scale_invariance(u, p, c):
    assert np.allclose(beta_update(c * u, p), beta_update(u, p), atol=1e-12)


@given(st.integers(0, 10_000), st.integers(2, 6), exponents)
def test_beta_beats_feasible_alternatives(seed, J, p):
    rng = np.random.default_rng(seed)
    u = rng.exponential(size=J)
    best = beta_update(u, p) @ u
    alt = rng.exponential(size=(200, J))
    alt /= np.array([lp_norm(a, p) for a in alt])[:, None]
    assert np.all(alt @ u <= best + 1e-10 * best)


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_limit_consistency_near_one(seed, J):
    u = np.random.default_rng(seed).permutation(np.arange(1, J + 1, dtype=float))
    near = beta_update(u, 1 + 1e-9)
    assert np.max(np.abs(near - beta_update(u, 1.0))) <= 1e-6


def test_objective_examples(rng):
    bank = random_bank(rng, 6, 3)
    assert mkl_objective(bank, np.zeros(6), 2.0, 1.0) == 0.0
    a = rng.standard_normal(6)
    u = kernel_responses(bank, a)
    expect = -0.5 * a @ a + 2 * a.sum() - np.linalg.norm(u)
    assert mkl_objective(bank, a, 2.0, 0.5) == pytest.approx(expect, rel=1e-14)
    expect1 = -0.5 * a @ a + 2 * a.sum() - u.max()
    assert mkl_objective(bank, a, 1.0, 0.5) == pytest.approx(expect1, rel=1e-14)


def test_gradient_examples():
    eps, delta = 1e-3, 0.7
    g = mkl_gradient(np.eye(4)[None], np.full(4, eps), 2.0, delta)
    assert np.allclose(g, 2 * (1 - (delta + 1) * eps), rtol=1e-12)
    with pytest.raises(UnsupportedExponentError):
        mkl_gradient(np.eye(2)[None], np.ones(2), 1.0, 1.0)
    with pytest.raises(DegenerateResponseError):
        mkl_gradient(np.eye(2)[None], np.zeros(2), 2.0, 1.0)


@given(st.integers(0, 10_000), st.integers(2, 20), st.integers(1, 4), st.sampled_from([4 / 3, 2.0, 4.0, 8.0]))
def test_gradient_matches_finite_differences(seed, n, J, p):
    rng = np.random.default_rng(seed)
    bank = random_bank(rng, n, J)
    delta = rng.uniform(0.01, 1.0) * n
    a = rng.uniform(0.0, 1.0, n) / n
    g = mkl_gradient(bank, a, p, delta)
    h = 1e-5
    fd = np.array([(mkl_objective(bank, a + h * e, p, delta) - mkl_objective(bank, a - h * e, p, delta)) / (2 * h)
                   for e in np.eye(n)])
    assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


def test_single_kernel_reduces_to_fn(rng):
    bank = random_bank(rng, 15, 1)
    for p in (1.0, 4 / 3, 2.0, 1e6):
        m = fit_fixed_point(bank, MklConfig(p=p, delta=0.3))
        assert np.allclose(m.beta, [1.0])
        assert np.allclose(m.alpha, solve_alpha(bank[0], 0.3), atol=1e-12)


def test_identical_kernels_uniform(rng):
    K = random_bank(rng, 12, 1)[0]
    J = 4
    m = fit_fixed_point(KernelBank(np.stack([K] * J)), MklConfig(p=2.0, delta=0.5))
    assert np.allclose(m.beta, 1 / math.sqrt(J), atol=1e-12)
    assert np.allclose(m.alpha, solve_alpha(math.sqrt(J) * K, 0.5), atol=1e-10)


@pytest.mark.parametrize("p", P_GRID)
def test_fixed_point_invariants(p):
    rng = np.random.default_rng(int(1000 * p) % 997)
    bank = random_bank(rng, 30, 5)
    delta = 1e-2 * 30
    m = fit_fixed_point(bank, MklConfig(p=p, delta=delta))
    assert np.all(m.beta >= 0)
    if p > 1:
        assert m.converged
        assert lp_norm(m.beta, p) == pytest.approx(1.0, abs=1e-10)
    else:
        assert sorted(m.beta) == [0.0] * 4 + [1.0]
    A = delta * np.eye(30) + combine_weighted(bank, m.beta)
    assert np.max(np.abs(A @ m.alpha - 1)) <= 1e-8
    assert np.max(np.abs(solve_alpha(combine_weighted(bank, m.beta), delta) - m.alpha)) <= 1e-8
    if p > 1:
        assert np.max(np.abs(mkl_gradient(bank, m.alpha, p, delta))) <= 1e-6


def test_fixed_point_respects_max_iter(rng):
    bank = random_bank(rng, 20, 3)
    m = fit_fixed_point(bank, MklConfig(p=2.0, delta=0.02, max_iter=1, tol=1e-300))
    assert not m.converged and m.iterations_used == 1


def test_plain_alternation_converges_for_large_delta(rng):
    # contraction regime: the unaccelerated iteration settles monotonically
    bank = random_bank(rng, 20, 4)
    m = fit_fixed_point(bank, MklConfig(p=2.0, delta=20.0), acceleration=None)
    assert m.converged
    h = np.array(m.history)
    assert np.all(np.diff(h[1:]) <= 0)


def test_p_one_cycle_detection():
    # kernel 0 prefers kernel 1 and vice versa: the one-hot map oscillates
    rng = np.random.default_rng(7)
    bank = random_bank(rng, 40, 6)
    for delta in (4e-3, 4e-2):
        m = fit_fixed_point(bank, MklConfig(p=1.0, delta=delta))
        assert m.iterations_used <= bank.J + 2
        assert sorted(m.beta)[-1] == 1.0
        if not m.converged:
            assert m.meta["cycle"] >= 2


def test_callback_sees_every_iteration(rng):
    bank = random_bank(rng, 10, 2)
    seen = []
    m = fit_fixed_point(bank, MklConfig(p=2.0, delta=0.1), callback=lambda it, a, b, c: seen.append(it))
    assert seen == list(range(1, m.iterations_used + 1))


@pytest.mark.parametrize("p", [4 / 3, 2.0, 4.0])
def test_gradient_ascent_agrees(p):
    rng = np.random.default_rng(int(p * 10))
    bank = random_bank(rng, 25, 3)
    cfg = MklConfig(p=p, delta=0.25)
    fp = fit_fixed_point(bank, cfg)
    ga = fit_gradient_ascent(bank, cfg)
    assert ga.converged
    assert np.max(np.abs(fp.alpha - ga.alpha)) <= 1e-6
    assert abs(fp.objective - ga.objective) <= 1e-8
    assert np.max(np.abs(fp.beta - ga.beta)) <= 1e-6


def test_gradient_ascent_monotone_and_single_kernel(rng):
    bank = random_bank(rng, 12, 1)
    m = fit_gradient_ascent(bank, MklConfig(p=2.0, delta=0.2))
    assert np.allclose(m.alpha, solve_alpha(bank[0], 0.2), atol=1e-8)
    objs = []
    fit_gradient_ascent(random_bank(rng, 12, 3), MklConfig(p=2.0, delta=0.2),
                        callback=lambda it, a, o, g: objs.append(o))
    assert len(objs) > 1
    assert np.all(np.diff(objs) >= -1e-14 * max(1.0, abs(objs[-1])))
    with pytest.raises(UnsupportedExponentError):
        fit_gradient_ascent(bank, MklConfig(p=1.0))


def test_gradient_ascent_divergence_raises(rng):
    bank = random_bank(rng, 10, 2)
    with pytest.raises(StepSizeError):
        fit_gradient_ascent(bank, MklConfig(p=2.0, delta=0.1), step=10.0, line_search=False)


def test_delta_bound():
    assert delta_convergence_bound(4, 1.0) == 4.0
    assert delta_convergence_bound(100, 0.5) == pytest.approx(40.0)
    assert delta_convergence_bound(200, 1.0) / delta_convergence_bound(100, 1.0) == pytest.approx(math.sqrt(2))
    with pytest.raises(DomainError):
        delta_convergence_bound(4, 0.0)


def test_model_is_immutable(rng):
    m = fit_fixed_point(random_bank(rng, 8, 2), MklConfig())
    with pytest.raises(ValueError):
        m.alpha[0] = 1.0
