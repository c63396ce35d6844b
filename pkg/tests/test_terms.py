import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narxfloat.data import Dataset
from narxfloat.errors import InsufficientDataError, SpecificationError
from narxfloat.terms import (
    CandidateSet,
    ModelSpec,
    TermSpec,
    build_regressors,
    count_terms,
    enumerate_terms,
)


def closed_form_count(n_u, n_y, n_l):
    # monomials of degree <= n_l in n_u + n_y variables
    return math.comb(n_u + n_y + n_l, n_l)


@pytest.mark.parametrize("spec, expected", [((4, 4, 3), 165), ((5, 5, 3), 286), ((4, 4, 1), 9),
                                            ((1, 1, 1), 3)])
def test_term_counts(spec, expected):
    ms = ModelSpec(*spec)
    assert count_terms(ms) == expected
    assert enumerate_terms(ms).n == expected


def test_tiny_candidate_set():
    cands = enumerate_terms(ModelSpec(1, 1, 1))
    assert cands.names() == ["1", "y(k-1)", "u(k-1)"]
    assert cands[0].is_constant


@given(st.integers(0, 5), st.integers(0, 5), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_enumerate_matches_count(n_u, n_y, n_l):
    if n_u + n_y == 0:
        return
    ms = ModelSpec(n_u, n_y, n_l)
    cands = enumerate_terms(ms)
    assert cands.n == count_terms(ms) == closed_form_count(n_u, n_y, n_l)
    assert len(set(cands.terms)) == cands.n
    for t in cands.terms:
        assert t.degree <= n_l
        assert t.max_lag("y") <= n_y and t.max_lag("u") <= n_u


@pytest.mark.parametrize("bad", [(-1, 2, 2), (2, 2, 0), (0, 0, 2), (1.5, 2, 2), (True, 1, 1)])
def test_invalid_spec(bad):
    with pytest.raises(SpecificationError):
        ModelSpec(*bad)


def test_canonical_order_of_factors():
    factors = [("u", 2, 1), ("y", 1, 1), ("u", 2, 1)]
    for perm in itertools.permutations(factors):
        assert TermSpec.of(perm) == TermSpec.of(factors)
    assert str(TermSpec.of(factors)) == "y(k-1)*u(k-2)^2"


@pytest.mark.parametrize("text", ["1", "y(k-1)", "u(k-3)^3", "y(k-2)*u(k-1)^2", "y(k-1)^2*y(k-2)"])
def test_parse_roundtrip(text):
    assert str(TermSpec.parse(text)) == text


@pytest.mark.parametrize("text", ["x(k-1)", "y(k-0)", "y(k+1)", "y(k-1)^0", ""])
def test_parse_rejects(text):
    with pytest.raises(SpecificationError):
        TermSpec.parse(text)


def test_constant_aliases():
    for alias in ("c", "const", "constant"):
        assert TermSpec.parse(alias).is_constant


def test_candidate_index_unknown_term():
    cands = enumerate_terms(ModelSpec(2, 2, 2))
    with pytest.raises(SpecificationError):
        cands.index("y(k-3)")
    with pytest.raises(SpecificationError):
        CandidateSet(cands.spec, cands.terms + (cands.terms[1],))


def test_regressor_hand_example():
    # u=[1,2,3,4], y=[1,1,2,3]; y(k-1)*u(k-2) at 1-based k=3 is y(2)*u(1) = 1
    data = Dataset([1.0, 2, 3, 4], [1.0, 1, 2, 3], split_index=3)
    cands = enumerate_terms(ModelSpec(2, 2, 2))
    R = build_regressors(cands, data)
    col = R.matrix[:, cands.index("y(k-1)*u(k-2)")]
    assert R.time_index.tolist() == [2, 3]
    assert col[0] == 1.0
    assert col[1] == 2.0 * 2.0  # y(3)*u(2) in 1-based terms
    assert np.all(R.matrix[:, 0] == 1.0)


def test_regressor_rows_and_split(rng):
    data = Dataset(rng.uniform(size=1000), rng.normal(size=1000), split_index=700)
    cands = enumerate_terms(ModelSpec(4, 4, 3))
    R = build_regressors(cands, data)
    assert R.matrix.shape == (996, 165)
    assert R.estimation()[0].shape[0] == 696
    assert R.validation()[0].shape[0] == 300
    again = build_regressors(cands, data)
    assert np.array_equal(R.matrix, again.matrix)


def test_regressor_insufficient_data():
    data = Dataset([1.0, 2.0, 3.0], [0.0, 1.0, 2.0], split_index=2)
    with pytest.raises(InsufficientDataError):
        build_regressors(enumerate_terms(ModelSpec(3, 3, 2)), data)
