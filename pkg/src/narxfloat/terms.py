"""Candidate term space of polynomial NARX models.

A candidate term is a monomial in lagged outputs ``y(k-i)`` and lagged
inputs ``u(k-j)``.  The full candidate set for ``[n_u, n_y, n_l]`` holds every
monomial of total degree ``0..n_l``; the constant term comes first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, SpecificationError

if TYPE_CHECKING:
    from .data import Dataset

OUTPUT = "y"
INPUT = "u"
# outputs sort before inputs
_SIGNAL_RANK = {OUTPUT: 0, INPUT: 1}


@dataclass(frozen=True)
class ModelSpec:
    """Lag and degree limits ``[n_u, n_y, n_l]`` of the model set."""

    n_u: int
    n_y: int
    n_l: int

    def __post_init__(self):
        for name in ("n_u", "n_y", "n_l"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise SpecificationError(f"{name} must be an integer, got {value!r}")
        if self.n_u < 0 or self.n_y < 0:
            raise SpecificationError("lags must be non-negative")
        if self.n_l < 1:
            raise SpecificationError("polynomial degree n_l must be >= 1")
        if self.n_u + self.n_y < 1:
            raise SpecificationError("at least one lagged signal is required")

    @property
    def max_lag(self) -> int:
        return max(self.n_u, self.n_y)

    def as_list(self) -> list[int]:
        return [self.n_u, self.n_y, self.n_l]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "ModelSpec":
        n_u, n_y, n_l = (int(v) for v in values)
        return cls(n_u, n_y, n_l)


@dataclass(frozen=True, order=False)
class TermSpec:
    """One monomial, stored as canonical ``(signal, lag, exponent)`` factors.

    The empty factor tuple is the constant term.  Use :meth:`of` to build a
    term from factors given in any order (repeated factors are merged).
    """

    factors: tuple[tuple[str, int, int], ...] = ()

    @classmethod
    def of(cls, factors: Iterable[tuple[str, int, int]]) -> "TermSpec":
        merged: dict[tuple[str, int], int] = {}
        for signal, lag, exponent in factors:
            if signal not in _SIGNAL_RANK:
                raise SpecificationError(f"unknown signal {signal!r}")
            if int(lag) < 1 or int(exponent) < 1:
                raise SpecificationError("lags and exponents must be positive")
            key = (signal, int(lag))
            merged[key] = merged.get(key, 0) + int(exponent)
        ordered = sorted(merged.items(), key=lambda kv: (_SIGNAL_RANK[kv[0][0]], kv[0][1]))
        return cls(tuple((s, lag, e) for (s, lag), e in ordered))

    @classmethod
    def constant(cls) -> "TermSpec":
        return cls(())

    @property
    def degree(self) -> int:
        return sum(e for _, _, e in self.factors)

    @property
    def is_constant(self) -> bool:
        return not self.factors

    def max_lag(self, signal: str | None = None) -> int:
        lags = [lag for s, lag, _ in self.factors if signal is None or s == signal]
        return max(lags, default=0)

    def signals(self) -> set[str]:
        return {s for s, _, _ in self.factors}

    def __str__(self) -> str:
        if not self.factors:
            return "1"
        parts = []
        for signal, lag, exponent in self.factors:
            part = f"{signal}(k-{lag})"
            if exponent > 1:
                part += f"^{exponent}"
            parts.append(part)
        return "*".join(parts)

    _FACTOR_RE = re.compile(r"^([yu])\(k-(\d+)\)(?:\^(\d+))?$")

    @classmethod
    def parse(cls, text: str) -> "TermSpec":
        """Parse the canonical string form, e.g. ``"y(k-1)*u(k-2)^2"``."""
        text = text.replace(" ", "")
        if text in ("1", "c", "const", "constant"):
            return cls.constant()
        factors = []
        for chunk in text.split("*"):
            match = cls._FACTOR_RE.match(chunk)
            if match is None:
                raise SpecificationError(f"cannot parse term factor {chunk!r} in {text!r}")
            signal, lag, exponent = match.groups()
            factors.append((signal, int(lag), int(exponent or 1)))
        return cls.of(factors)

    def evaluate(self, y: np.ndarray, u: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Term values at 0-based time indices ``rows`` (all lags must be valid)."""
        out = np.ones(len(rows))
        for signal, lag, exponent in self.factors:
            source = y if signal == OUTPUT else u
            values = source[rows - lag]
            out *= values if exponent == 1 else values**exponent
        return out


@dataclass(frozen=True)
class CandidateSet:
    """Ordered, duplicate-free list of candidate terms for a model spec."""

    spec: ModelSpec
    terms: tuple[TermSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})
        if len(self._index) != len(self.terms):
            raise SpecificationError("candidate set contains duplicate terms")

    @property
    def n(self) -> int:
        return len(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __getitem__(self, i: int) -> TermSpec:
        return self.terms[i]

    def index(self, term: TermSpec | str) -> int:
        if isinstance(term, str):
            term = TermSpec.parse(term)
        try:
            return self._index[term]
        except KeyError:
            raise SpecificationError(f"term {term} is not in the candidate set") from None

    def indices(self, terms: Iterable[TermSpec | str]) -> list[int]:
        return [self.index(t) for t in terms]

    def names(self, indices: Iterable[int] | None = None) -> list[str]:
        if indices is None:
            indices = range(self.n)
        return [str(self.terms[i]) for i in indices]


def count_terms(spec: ModelSpec) -> int:
    """Number of candidate terms, by the degree-wise recurrence.

    ``n_0 = 1`` and ``n_i = n_{i-1} (n_y + n_u + i - 1) / i``; the division
    is always exact.
    """
    n_signals = spec.n_u + spec.n_y
    n_i = 1
    total = 1
    for i in range(1, spec.n_l + 1):
        n_i = n_i * (n_signals + i - 1) // i
        total += n_i
    return total


def enumerate_terms(spec: ModelSpec) -> CandidateSet:
    """All monomials of degree ``0..n_l`` in canonical degree-then-lex order."""
    variables = [(OUTPUT, lag) for lag in range(1, spec.n_y + 1)]
    variables += [(INPUT, lag) for lag in range(1, spec.n_u + 1)]
    terms = [TermSpec.constant()]
    for degree in range(1, spec.n_l + 1):
        for combo in combinations_with_replacement(variables, degree):
            terms.append(TermSpec.of((s, lag, 1) for s, lag in combo))
    return CandidateSet(spec, tuple(terms))


@dataclass(frozen=True)
class RegressorMatrix:
    """Design matrix with one column per candidate term.

    Rows are the 0-based time indices ``max_lag .. N-1``; ``target`` holds the
    measured output on the same rows.  ``split_index`` (a time index) divides
    estimation rows from validation rows.
    """

    candidates: CandidateSet
    matrix: np.ndarray
    target: np.ndarray
    time_index: np.ndarray
    split_index: int

    @property
    def estimation_mask(self) -> np.ndarray:
        return self.time_index < self.split_index

    @property
    def validation_mask(self) -> np.ndarray:
        return ~self.estimation_mask

    def estimation(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.estimation_mask
        return self.matrix[mask], self.target[mask]

    def validation(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.validation_mask
        return self.matrix[mask], self.target[mask]


def build_regressors(candidates: CandidateSet, data: "Dataset") -> RegressorMatrix:
    """Evaluate every candidate term on the rows with a full lag history."""
    u = np.asarray(data.u, dtype=float)
    y = np.asarray(data.y, dtype=float)
    max_lag = candidates.spec.max_lag
    if len(y) <= max_lag:
        raise InsufficientDataError(
            f"{len(y)} samples cannot support a maximum lag of {max_lag}"
        )
    rows = np.arange(max_lag, len(y))
    matrix = np.empty((len(rows), candidates.n))
    for j, term in enumerate(candidates.terms):
        matrix[:, j] = term.evaluate(y, u, rows)
    return RegressorMatrix(candidates, matrix, y[rows].copy(), rows, int(data.split_index))
