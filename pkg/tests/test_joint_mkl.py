import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_bank
from mkfn.exceptions import NumericalError, ShapeError
from mkfn.fn_solver import fit_fn
from mkfn.joint_mkl import TaskBankSet, apply_shared_beta, fit_joint, joint_responses
from mkfn.kernelspace import KernelBank, combine_weighted, gram_rbf, rbf_width_heuristic
from mkfn.lp_mkl import MklConfig, fit_fixed_point, kernel_responses, lp_norm


def test_taskset_validation(rng):
    a, b = random_bank(rng, 5, 2), random_bank(rng, 7, 3)
    with pytest.raises(ShapeError):
        TaskBankSet((a, b))
    with pytest.raises(ShapeError):
        TaskBankSet((a, KernelBank(b.matrices[:2], names=("x", "y"))))
    ts = TaskBankSet((a, random_bank(rng, 7, 2)), ("left", "right"))
    assert ts.C == 2 and ts.J == 2 and ts.names == ("left", "right")


def test_joint_responses_examples(rng):
    bank = random_bank(rng, 6, 3)
    a = rng.standard_normal(6)
    assert np.array_equal(joint_responses([bank], [a]), kernel_responses(bank, a))
    assert np.array_equal(joint_responses([bank, bank], [np.zeros(6)] * 2), np.zeros(3))
    assert np.allclose(joint_responses([bank, bank], [a, a]), 2 * kernel_responses(bank, a))
    with pytest.raises(ShapeError):
        joint_responses([bank], [a, a])


@pytest.mark.parametrize("p", [1.0, 8 / 7, 2.0, 4.0])
def test_single_task_reduction(p, rng):
    bank = random_bank(rng, 20, 4)
    cfg = MklConfig(p=p, delta=0.2)
    j = fit_joint([bank], cfg)
    s = fit_fixed_point(bank, cfg)
    assert np.max(np.abs(j.alphas[0] - s.alpha)) <= 1e-12
    assert np.max(np.abs(j.beta - s.beta)) <= 1e-12
    assert j.iterations_used == s.iterations_used


def test_duplicated_tasks(rng):
    bank = random_bank(rng, 18, 3)
    cfg = MklConfig(p=2.0, delta=0.2)
    j = fit_joint([bank, bank], cfg)
    s = fit_fixed_point(bank, cfg)
    assert np.array_equal(j.alphas[0], j.alphas[1])
    assert np.max(np.abs(j.beta - s.beta)) <= 1e-8


@given(st.integers(0, 10_000), st.sampled_from([4 / 3, 2.0, 4.0]))
def test_joint_invariants(seed, p):
    rng = np.random.default_rng(seed)
    banks = [random_bank(rng, int(rng.integers(6, 15)), 3) for _ in range(3)]
    cfg = MklConfig(p=p, delta=0.5)
    m = fit_joint(banks, cfg)
    assert m.converged
    assert lp_norm(m.beta, p) == pytest.approx(1.0, abs=1e-10)
    for bank, a in zip(banks, m.alphas):
        A = cfg.delta * np.eye(bank.n) + combine_weighted(bank, m.beta)
        assert np.max(np.abs(A @ a - 1)) <= 1e-8
    # Hoelder optimality against the summed responses
    v = joint_responses(banks, m.alphas)
    alt = rng.exponential(size=(100, 3))
    alt /= np.array([lp_norm(b, p) for b in alt])[:, None]
    assert np.all(alt @ v <= m.beta @ v + 1e-10 * (m.beta @ v))
    rev = fit_joint(banks[::-1], cfg)
    assert np.max(np.abs(rev.beta - m.beta)) <= 1e-12


def test_informative_kernels_get_largest_weights():
    rng = np.random.default_rng(4)
    n = 40

    def task(signal):
        mats = []
        for j in range(4):
            if j == signal:
                # tight cluster structure: a strongly low-rank kernel
                X = np.repeat(rng.standard_normal((3, 2)) * 5, n // 3 + 1, axis=0)[:n]
                X = X + 0.05 * rng.standard_normal(X.shape)
            else:
                X = rng.standard_normal((n, 5))
            mats.append(gram_rbf(X, rbf_width_heuristic(X, 0.5)))
        return KernelBank(np.stack(mats))

    m = fit_joint([task(0), task(1)], MklConfig(p=2.0, delta=1e-2 * n))
    assert set(np.argsort(m.beta)[-2:]) == {0, 1}


def test_apply_shared_beta(rng):
    banks = [random_bank(rng, 12, 3), random_bank(rng, 9, 3)]
    m = fit_joint(banks, MklConfig(p=2.0, delta=0.3))
    for c, bank in enumerate(banks):
        single = apply_shared_beta(bank, m.beta, 0.3)
        assert np.max(np.abs(single.alpha - m.alphas[c])) <= 1e-12
    onehot = apply_shared_beta(banks[0], [0.0, 1.0, 0.0], 0.3)
    assert np.allclose(onehot.alpha, fit_fn(banks[0][1], 0.3).alpha, atol=1e-14)
    with pytest.raises(ShapeError):
        apply_shared_beta(banks[0], [1.0, 0.0], 0.3)


def test_task_failure_names_task(rng):
    good = random_bank(rng, 5, 2)
    bad = KernelBank(np.stack([-5 * np.eye(5)] * 2))
    with pytest.raises(NumericalError, match="task 1"):
        fit_joint([good, bad], MklConfig(p=2.0, delta=0.1))


def test_task_model_view(rng):
    banks = [random_bank(rng, 8, 2), random_bank(rng, 6, 2)]
    m = fit_joint(banks, MklConfig(p=2.0, delta=0.4))
    tm = m.task_model(1, banks[1])
    assert tm.n == 6 and np.isfinite(tm.objective)
