from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narxfloat.errors import BudgetError, DegenerateOutputError, SpecificationError
from narxfloat.ortho import (
    Criterion,
    criterion_J,
    estimate_coefficients,
    improves,
    least_significant_subset,
    least_significant_term,
    most_significant_subset,
    most_significant_term,
    orthogonalize,
)


def lstsq_loss(X, y, subset):
    """Oracle: RSS / y'y of the least-squares fit on ``subset``."""
    if not subset:
        return 1.0
    A = X[:, list(subset)]
    theta, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ theta
    return float(r @ r / (y @ y))


def random_problem(rng, rows=80, cols=10, informative=3, noise=0.1):
    X = rng.normal(size=(rows, cols))
    support = rng.choice(cols, informative, replace=False)
    y = X[:, support] @ rng.uniform(0.5, 2.0, informative) + noise * rng.normal(size=rows)
    return X, y


def test_mgs_matches_lstsq(rng):
    X, y = random_problem(rng, 200, 12)
    dec = orthogonalize(X, y)
    assert abs((1 - dec.J) - lstsq_loss(X, y, range(12))) < 1e-12
    W = dec.w
    G = W.T @ W
    norms = np.sqrt(np.diag(G))
    off = G - np.diag(np.diag(G))
    assert np.all(np.abs(off) <= 1e-8 * np.outer(norms, norms))
    assert np.all((dec.err >= 0) & (dec.err <= 1))
    assert dec.err.sum() <= 1 + 1e-10


def test_err_order_dependence_but_sum_invariance(rng):
    X, y = random_problem(rng, 100, 6)
    a = orthogonalize(X, y)
    perm = [5, 2, 0, 4, 1, 3]
    b = orthogonalize(X[:, perm], y, order=perm)
    assert not np.allclose(a.err[perm], b.err)
    assert abs(a.J - b.J) < 1e-13
    assert b.order == tuple(perm)


def test_single_column_err():
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([1.0, 1.0, 2.0])
    dec = orthogonalize(x, y)
    g = x @ y / (x @ x)
    assert abs(dec.g[0] - g) < 1e-15
    assert abs(dec.err[0] - g**2 * (x @ x) / (y @ y)) < 1e-15


def test_degenerate_column(rng):
    X, y = random_problem(rng, 60, 4)
    X = np.column_stack([X, X[:, 0] + 2 * X[:, 1]])
    dec = orthogonalize(X, y)
    assert dec.degenerate.tolist() == [False, False, False, False, True]
    assert dec.err[-1] == 0.0
    J, flag = criterion_J([4], X, y, with_flag=True)
    assert not flag and J > 0
    zero = np.zeros((60, 1))
    J, flag = criterion_J([0], zero, y, with_flag=True)
    assert flag and J == 0.0


def test_zero_output():
    with pytest.raises(DegenerateOutputError):
        orthogonalize(np.eye(3), np.zeros(3))
    with pytest.raises(DegenerateOutputError):
        Criterion(np.eye(3), np.zeros(3))
    with pytest.raises(SpecificationError):
        criterion_J([], np.eye(3), np.ones(3))


def test_criterion_routes_agree(rng):
    X, y = random_problem(rng, 150, 15, informative=5)
    crit = Criterion(X, y)
    for _ in range(30):
        k = int(rng.integers(1, 10))
        subset = sorted(rng.choice(15, k, replace=False).tolist())
        oracle = lstsq_loss(X, y, subset)
        assert abs(crit.loss(subset) - oracle) < 1e-12
        assert abs(criterion_J(subset, X, y) - (1 - oracle)) < 1e-12
        assert abs(crit.decompose(subset).J - (1 - oracle)) < 1e-12


def test_add_gains_and_removals(rng):
    X, y = random_problem(rng, 120, 12, informative=4)
    crit = Criterion(X, y)
    subset = [1, 4, 7, 9]
    gains = crit.add_gains(subset)
    assert np.all(np.isneginf(gains[subset]))
    for i in set(range(12)) - set(subset):
        assert abs(crit.loss(subset + [i]) - (crit.loss(subset) - gains[i])) < 1e-12
    removal = crit.removal_losses(subset)
    for pos in range(len(subset)):
        rest = subset[:pos] + subset[pos + 1:]
        assert abs(removal[pos] - lstsq_loss(X, y, rest)) < 1e-12
    np.testing.assert_allclose(crit.removal_values(subset), 1 - removal)


def test_removals_with_degenerate_member(rng):
    X, y = random_problem(rng, 50, 5)
    X = np.column_stack([X, X[:, 1]])
    crit = Criterion(X, y)
    subset = [0, 1, 5]
    removal = crit.removal_losses(subset)
    for pos in range(3):
        rest = subset[:pos] + subset[pos + 1:]
        assert abs(removal[pos] - lstsq_loss(X, y, rest)) < 1e-12


def test_near_exact_fit_resolution(rng):
    # residual energy ~1e-20 of y'y must still be resolved
    X = rng.normal(size=(300, 6))
    y = X[:, :3] @ np.array([1.0, -2.0, 0.5]) + 1e-10 * X[:, 3]
    crit = Criterion(X, y)
    coarse = crit.loss([0, 1, 2])
    exact = crit.loss([0, 1, 2, 3])
    assert coarse > 0 and exact < 1e-3 * coarse
    assert abs(coarse / lstsq_loss(X, y, [0, 1, 2]) - 1) < 1e-6
    assert most_significant_term(crit, [0, 1, 2]) == 3
    assert improves(exact, coarse) and not improves(coarse, coarse)


def test_ties_go_to_lowest_index(rng):
    x = rng.normal(size=50)
    X = np.column_stack([rng.normal(size=50), x, x, x])
    y = x.copy()
    crit = Criterion(X, y)
    assert most_significant_term(crit, []) == 1
    assert least_significant_term(crit, [1, 2]) == 1


def brute_ms(X, y, subset, n):
    best = None
    for i in range(n):
        if i in subset:
            continue
        v = lstsq_loss(X, y, list(subset) + [i])
        if best is None or v < best[0] - 1e-12:
            best = (v, i)
    return best[1]


def brute_ls(X, y, subset):
    best = None
    for i in subset:
        v = lstsq_loss(X, y, [s for s in subset if s != i])
        if best is None or v < best[0] - 1e-12:
            best = (v, i)
    return best[1]


@pytest.mark.parametrize("seed", range(25))
def test_definitions_1_2_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 13))
    X, y = random_problem(rng, int(rng.integers(30, 120)), n, informative=min(3, n), noise=0.3)
    crit = Criterion(X, y)
    k = int(rng.integers(0, n - 1))
    subset = sorted(rng.choice(n, k, replace=False).tolist())
    assert most_significant_term(crit, subset) == brute_ms(X, y, subset, n)
    if k >= 2:
        assert least_significant_term(crit, subset) == brute_ls(X, y, subset)


@pytest.mark.parametrize("seed", range(15))
def test_definitions_3_4(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(6, 13))
    X, y = random_problem(rng, 90, n, informative=4, noise=0.5)
    crit = Criterion(X, y)
    subset = sorted(rng.choice(n, 3, replace=False).tolist())
    for o in (1, 2, 3):
        seq = most_significant_subset(crit, o, subset)
        exh = most_significant_subset(crit, o, subset, mode="exhaustive")
        assert len(seq) == o and not set(seq) & set(subset)
        assert crit.loss(subset + list(exh)) <= crit.loss(subset + list(seq)) + 1e-14
    full = sorted(set(subset) | set(rng.choice(n, 3, replace=False).tolist()))
    for o in range(1, len(full)):
        seq = least_significant_subset(crit, o, full)
        exh = least_significant_subset(crit, o, full, mode="exhaustive")
        assert set(seq) <= set(full) and len(seq) == o
        rest = lambda rem: [f for f in full if f not in rem]  # noqa: E731
        assert crit.loss(rest(exh)) <= crit.loss(rest(seq)) + 1e-14
    # depth one reduces to the single-term definitions
    assert most_significant_subset(crit, 1, subset) == (most_significant_term(crit, subset),)
    assert least_significant_subset(crit, 1, full) == (least_significant_term(crit, full),)


def test_subset_primitive_errors(rng):
    X, y = random_problem(rng, 40, 30)
    crit = Criterion(X, y)
    with pytest.raises(BudgetError):
        most_significant_subset(crit, 8, [0], mode="exhaustive", budget=1000)
    with pytest.raises(SpecificationError):
        most_significant_subset(crit, 0, [0])
    with pytest.raises(SpecificationError):
        least_significant_subset(crit, 2, [0, 1])
    with pytest.raises(SpecificationError):
        most_significant_subset(crit, 1, [0], mode="greedy")
    with pytest.raises(SpecificationError):
        least_significant_term(crit, [3])


def test_estimate_coefficients_scaling(rng):
    # one column eleven orders of magnitude below the other must not be cut
    x1 = rng.normal(size=400)
    x2 = 1e-11 * rng.normal(size=400)
    X = np.column_stack([x1, x2])
    y = 0.5 * x1 - 3.0 * x2
    fit = estimate_coefficients([0, 1], X, y, ["a", "b"])
    # b is only resolvable to about eps * |y| / |x2| ~ 1e-5 relative
    np.testing.assert_allclose(fit.theta, [0.5, -3.0], rtol=1e-4)
    assert not fit.rank_deficient
    assert fit.to_dict()["terms"] == ["a", "b"]


def test_estimate_coefficients_deficient(rng):
    x = rng.normal(size=50)
    fit = estimate_coefficients([0, 1], np.column_stack([x, 2 * x]), x)
    assert fit.rank_deficient
    with pytest.raises(SpecificationError):
        estimate_coefficients([], np.eye(3), np.ones(3))


@given(st.integers(5, 300), st.integers(1, 30), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_energy_identity_property(rows, cols, seed):
    rng = np.random.default_rng(seed)
    cols = min(cols, rows)
    X = rng.normal(size=(rows, cols)) * rng.uniform(0.01, 100, cols)
    y = rng.normal(size=rows)
    dec = orthogonalize(X, y)
    rss = lstsq_loss(X, y, range(cols))
    assert abs((1 - dec.err.sum()) - rss) < 1e-9 * max(1.0, rss)
