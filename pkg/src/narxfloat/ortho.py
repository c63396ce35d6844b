"""Orthogonal decomposition, ERR, the subset criterion J and term significance.

Two routes compute the same quantities:

* :func:`orthogonalize` / :func:`criterion_J` run an explicit modified
  Gram-Schmidt pass in the given column order and return per-term ERR.
* :class:`Criterion` evaluates J for many subsets of one regressor matrix.  It
  works on unit-norm columns with LAPACK QR and memoizes J by index set, which
  is valid because the ERR sum over a fixed subset does not depend on the
  orthogonalization order.

The significance primitives (most/least significant term and subset) take a
:class:`Criterion`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import BudgetError, DegenerateOutputError, SpecificationError

logger = logging.getLogger(__name__)

TOL_RANK = 1e-12
# relative change in residual energy at or below this is a tie / non-improvement
TOL_BETTER = 1e-9
# absolute floor, roughly the rounding level of a unit-norm residual energy
TOL_FLOOR = 1e-30
EXHAUSTIVE_BUDGET = 100_000


@dataclass
class OrthoDecomposition:
    """Result of orthogonalizing columns against each other and projecting y.

    ``w`` keeps the orthogonalized columns in orthogonalization order; a
    degenerate column is left as computed but gets ``g = err = 0`` and is not
    used to deflate later columns.
    """

    w: np.ndarray
    g: np.ndarray
    err: np.ndarray
    order: tuple[int, ...]
    degenerate: np.ndarray

    @property
    def J(self) -> float:
        return float(self.err.sum())

    @property
    def all_degenerate(self) -> bool:
        return bool(self.degenerate.all())


def orthogonalize(columns, y, order: Sequence[int] | None = None, tol_rank: float = TOL_RANK):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Parameters
    ----------
    columns : array of shape (N, k)
        Regressor columns.
    y : array of shape (N,)
        Output vector.
    order : sequence of int, optional
        Labels reported in ``OrthoDecomposition.order`` (default ``0..k-1``).
    tol_rank : float
        A column whose orthogonalized squared norm falls below
        ``tol_rank`` times its original squared norm is degenerate.
    """
    X = np.asarray(columns, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[1] == 0:
        raise SpecificationError("at least one column is required")
    if X.shape[0] != y.shape[0]:
        raise SpecificationError("columns and y differ in row count")
    yy = float(y @ y)
    if yy == 0.0:
        raise DegenerateOutputError("output vector has zero norm")
    k = X.shape[1]
    W = np.zeros_like(X)
    g = np.zeros(k)
    err = np.zeros(k)
    degenerate = np.zeros(k, dtype=bool)
    kept: list[int] = []
    for i in range(k):
        x = X[:, i]
        w = x.copy()
        for _ in range(2):
            for m in kept:
                wm = W[:, m]
                w -= (wm @ w) / (wm @ wm) * wm
        W[:, i] = w
        ww = float(w @ w)
        if ww <= tol_rank * float(x @ x) or ww == 0.0:
            degenerate[i] = True
            continue
        kept.append(i)
        g[i] = float(w @ y) / ww
        err[i] = g[i] ** 2 * ww / yy
    labels = tuple(range(k)) if order is None else tuple(int(o) for o in order)
    return OrthoDecomposition(W, g, err, labels, degenerate)


def criterion_J(subset: Sequence[int], matrix, y, with_flag: bool = False):
    """Sum of ERR over ``subset`` (columns of ``matrix``) in its stored order.

    A subset whose columns are all degenerate yields ``J = 0``; pass
    ``with_flag=True`` to also get that degeneracy flag.
    """
    subset = list(subset)
    if not subset:
        raise SpecificationError("criterion needs a non-empty subset")
    matrix = np.asarray(matrix, dtype=float)
    dec = orthogonalize(matrix[:, subset], y, order=subset)
    if dec.all_degenerate:
        logger.debug("subset %s is fully degenerate", subset)
    if with_flag:
        return dec.J, dec.all_degenerate
    return dec.J


@dataclass(frozen=True)
class TermSubset:
    """Sorted candidate indices plus their cached criterion value."""

    indices: tuple[int, ...]
    criterion: float = float("nan")

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, item) -> bool:
        return item in self.indices


class Criterion:
    """Memoized ERR-sum criterion over subsets of one regressor matrix.

    Columns and the output are scaled to unit norm once; ERR is scale
    invariant so this changes nothing but conditioning.  Internally the
    criterion is carried as the normalized residual energy
    ``loss = RSS / y'y = 1 - J``, computed from explicit residual vectors.
    Near-exact fits (noise-free data) leave ``1 - J`` far below the
    resolution of ``J`` itself, so all search comparisons go through
    :meth:`loss` and :func:`improves`.
    """

    def __init__(self, matrix, y, tol_rank: float = TOL_RANK):
        X = np.asarray(matrix, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise SpecificationError("matrix must be 2-D with one row per output sample")
        yy = float(y @ y)
        if yy == 0.0:
            raise DegenerateOutputError("output vector has zero norm")
        norms = np.sqrt(np.einsum("ij,ij->j", X, X))
        self._null = norms == 0.0
        self.Z = np.asfortranarray(X / np.where(self._null, 1.0, norms))
        self.yn = y / np.sqrt(yy)
        self.n = X.shape[1]
        self.tol_rank = tol_rank
        self._cache: dict[frozenset, float] = {}
        self.evaluations = 0

    # -- core linear algebra -------------------------------------------------

    def _basis(self, idx: Sequence[int]):
        """Orthonormal basis of the non-degenerate columns in ``idx`` (in order).

        Returns ``(Q, R, kept)`` where ``kept`` are positions into ``idx``.
        """
        cols = self.Z[:, list(idx)]
        Q, R = np.linalg.qr(cols)
        diag2 = np.diag(R) ** 2
        good = diag2 > self.tol_rank
        if good.all():
            return Q, R, np.arange(len(idx))
        kept = np.flatnonzero(good)
        if kept.size == 0:
            return np.zeros((self.Z.shape[0], 0)), np.zeros((0, 0)), kept
        Q, R = np.linalg.qr(cols[:, kept])
        return Q, R, kept

    def _residual(self, Q: np.ndarray) -> np.ndarray:
        r = self.yn.copy()
        if Q.shape[1]:
            for _ in range(2):
                r -= Q @ (Q.T @ r)
        return r

    def loss(self, subset: Iterable[int]) -> float:
        """Normalized residual energy ``RSS / y'y`` of ``subset``."""
        key = frozenset(int(i) for i in subset)
        value = self._cache.get(key)
        if value is None:
            self.evaluations += 1
            if not key:
                value = 1.0
            else:
                Q, _, _ = self._basis(sorted(key))
                r = self._residual(Q)
                value = float(r @ r)
            self._cache[key] = value
        return value

    def J(self, subset: Iterable[int]) -> float:
        return 1.0 - self.loss(subset)

    def decompose(self, subset: Sequence[int]) -> OrthoDecomposition:
        """Per-term ERR in the stored order of ``subset`` (MGS route)."""
        return orthogonalize(self.Z[:, list(subset)], self.yn, order=subset,
                             tol_rank=self.tol_rank)

    def add_gains(self, subset: Sequence[int]) -> np.ndarray:
        """ERR of every candidate orthogonalized after ``subset``.

        ``loss(subset + [i]) = loss(subset) - gains[i]``.  Members of
        ``subset`` get ``-inf``; candidates degenerate with respect to
        ``subset`` get 0.
        """
        subset = sorted(int(i) for i in subset)
        if subset:
            Q, _, _ = self._basis(subset)
        else:
            Q = np.zeros((self.Z.shape[0], 0))
        r = self._residual(Q)
        P = self.Z - Q @ (Q.T @ self.Z) if Q.shape[1] else self.Z
        pp = np.einsum("ij,ij->j", P, P)
        pp[self._null] = 0.0
        gains = np.zeros(self.n)
        ok = pp > self.tol_rank
        gains[ok] = (r @ P[:, ok]) ** 2 / pp[ok]
        gains[subset] = -np.inf
        return gains

    def removal_losses(self, subset: Sequence[int]) -> np.ndarray:
        """``loss(subset \\ x_i)`` for each position ``i`` of ``subset``."""
        subset = [int(i) for i in subset]
        k = len(subset)
        if k == 1:
            return np.ones(1)
        Q, R, kept = self._basis(subset)
        if len(kept) == k:
            theta = solve_triangular(R, Q.T @ self.yn)
            Rinv = solve_triangular(R, np.eye(k))
            d = np.einsum("ij,ij->i", Rinv, Rinv)
            return self.loss(subset) + theta**2 / d
        return np.array([self.loss(subset[:pos] + subset[pos + 1:]) for pos in range(k)])

    def removal_values(self, subset: Sequence[int]) -> np.ndarray:
        """``J(subset \\ x_i)`` for each position ``i`` of ``subset``."""
        return 1.0 - self.removal_losses(subset)


def improves(new_loss: float, old_loss: float) -> bool:
    """True when ``new_loss`` is better than ``old_loss`` beyond the tie tolerance."""
    return new_loss < old_loss - TOL_BETTER * old_loss - TOL_FLOOR


def _argmin_lowest(values: np.ndarray, labels: Sequence[int]) -> int:
    """Label of the minimum, preferring the lowest label among ties."""
    best = float(np.min(values))
    cut = best + TOL_BETTER * abs(best) + TOL_FLOOR
    return min(lab for v, lab in zip(values, labels) if v <= cut)


def most_significant_term(crit: Criterion, subset: Sequence[int], pool: Iterable[int] | None = None) -> int:
    """Unselected term whose addition maximizes J; ties go to the lowest index."""
    gains = crit.add_gains(subset)
    if pool is not None:
        allowed = np.zeros(crit.n, dtype=bool)
        allowed[list(pool)] = True
        gains = np.where(allowed, gains, -np.inf)
    labels = np.flatnonzero(np.isfinite(gains))
    if labels.size == 0:
        raise SpecificationError("no candidate terms remain")
    # ties judged on the resulting loss, so the tolerance scales with the fit
    return _argmin_lowest(crit.loss(subset) - gains[labels], labels.tolist())


def least_significant_term(crit: Criterion, subset: Sequence[int]) -> int:
    """Selected term whose removal leaves the largest J; ties go to the lowest index."""
    subset = list(subset)
    if len(subset) < 2:
        raise SpecificationError("least significant term needs at least two terms")
    return _argmin_lowest(crit.removal_losses(subset), subset)


def _exhaustive(crit, subsets, to_subset):
    best_val, best = np.inf, None
    for combo in subsets:
        val = crit.loss(to_subset(combo))
        if best is None or improves(val, best_val):
            best_val, best = val, combo
    return tuple(sorted(best))


def most_significant_subset(
    crit: Criterion,
    o: int,
    subset: Sequence[int],
    mode: str = "sequential",
    pool: Iterable[int] | None = None,
    budget: int = EXHAUSTIVE_BUDGET,
) -> tuple[int, ...]:
    """``o`` unselected terms whose joint addition maximizes J.

    ``mode="exhaustive"`` scores every size-``o`` combination (refused when
    there are more than ``budget``); ``mode="sequential"`` grows the block by
    a floating forward search that may only drop terms it added itself.
    """
    base = sorted(int(i) for i in subset)
    available = sorted(set(range(crit.n) if pool is None else pool) - set(base))
    if o < 1 or o > len(available):
        raise SpecificationError(f"cannot add {o} terms from {len(available)} available")
    if mode == "exhaustive":
        if comb(len(available), o) > budget:
            raise BudgetError(f"C({len(available)}, {o}) subsets exceed the budget of {budget}")
        return _exhaustive(crit, combinations(available, o), lambda c: base + list(c))
    if mode != "sequential":
        raise SpecificationError(f"unknown mode {mode!r}")
    return tuple(sorted(_float_forward(crit, base, available, o)))


def least_significant_subset(
    crit: Criterion,
    o: int,
    subset: Sequence[int],
    mode: str = "sequential",
    budget: int = EXHAUSTIVE_BUDGET,
) -> tuple[int, ...]:
    """``o`` selected terms whose joint removal leaves the largest J."""
    current = sorted(int(i) for i in subset)
    if o < 1 or o > len(current) - 1:
        raise SpecificationError(f"cannot remove {o} of {len(current)} terms")
    if mode == "exhaustive":
        if comb(len(current), o) > budget:
            raise BudgetError(f"C({len(current)}, {o}) subsets exceed the budget of {budget}")
        members = set(current)
        return _exhaustive(crit, combinations(current, o),
                           lambda c: sorted(members.difference(c)))
    if mode != "sequential":
        raise SpecificationError(f"unknown mode {mode!r}")
    return tuple(sorted(_float_backward(crit, current, o)))


def _float_forward(crit: Criterion, base: list[int], available: list[int], o: int) -> list[int]:
    """Add ``o`` terms to ``base`` with conditional removal of earlier additions."""
    added: list[int] = []
    best: dict[int, tuple[list[int], float]] = {}
    for _ in range(10_000):
        if len(added) >= o:
            break
        pool = set(available).difference(added)
        x_ms = most_significant_term(crit, base + added, pool)
        cand = added + [x_ms]
        size = len(cand)
        value = crit.loss(base + cand)
        if size not in best or improves(value, best[size][1]):
            added = cand
            best[size] = (list(added), value)
        else:
            added = list(best[size][0])
        first = True
        while len(added) > 1:
            x_ls = _least_within(crit, base, added)
            reduced = [a for a in added if a != x_ls]
            value = crit.loss(base + reduced)
            if (first and x_ls == x_ms) or not improves(value, best[len(reduced)][1]):
                break
            added = reduced
            best[len(added)] = (list(added), value)
            first = False
    return added


def _least_within(crit: Criterion, base: list[int], movable: list[int]) -> int:
    """Least significant of ``movable`` terms given the fixed ``base``."""
    values = np.array([crit.loss(base + [m for m in movable if m != x]) for x in movable])
    return _argmin_lowest(values, movable)


def _float_backward(crit: Criterion, current: list[int], o: int) -> list[int]:
    """Remove ``o`` terms with conditional re-inclusion of earlier removals."""
    removed: list[int] = []
    best: dict[int, tuple[list[int], float]] = {}
    members = list(current)
    for _ in range(10_000):
        if len(removed) >= o:
            break
        remaining = [m for m in members if m not in removed]
        x_ls = least_significant_term(crit, remaining)
        cand = removed + [x_ls]
        size = len(cand)
        value = crit.loss([m for m in members if m not in cand])
        if size not in best or improves(value, best[size][1]):
            removed = cand
            best[size] = (list(removed), value)
        else:
            removed = list(best[size][0])
        first = True
        while len(removed) > 1:
            remaining = [m for m in members if m not in removed]
            x_back = most_significant_term(crit, remaining, removed)
            restored = [r for r in removed if r != x_back]
            value = crit.loss([m for m in members if m not in restored])
            if (first and x_back == x_ls) or not improves(value, best[len(restored)][1]):
                break
            removed = restored
            best[len(removed)] = (list(removed), value)
            first = False
    return removed


@dataclass
class FittedModel:
    """Least-squares coefficients for a term subset (estimation rows)."""

    subset: TermSubset
    theta: np.ndarray
    rss: float
    rank_deficient: bool = False
    names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "indices": list(self.subset.indices),
            "terms": list(self.names),
            "theta": [float(t) for t in self.theta],
            "J": float(self.subset.criterion),
            "rss": float(self.rss),
            "rank_deficient": self.rank_deficient,
        }


def estimate_coefficients(subset: Sequence[int], matrix, y, names: Sequence[str] | None = None) -> FittedModel:
    """Ordinary least squares on the subset's columns, in candidate-index order.

    A rank-deficient subset gets the minimum-norm solution and
    ``rank_deficient=True``.
    """
    indices = tuple(sorted(int(i) for i in subset))
    if not indices:
        raise SpecificationError("cannot fit an empty subset")
    X = np.asarray(matrix, dtype=float)[:, indices]
    y = np.asarray(y, dtype=float)
    # column scaling keeps tiny-valued terms (e.g. cubes of small outputs) from
    # being cut by the singular-value cutoff
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    norms[norms == 0.0] = 1.0
    theta, _, rank, _ = np.linalg.lstsq(X / norms, y, rcond=None)
    theta = theta / norms
    deficient = bool(rank < len(indices))
    if deficient:
        logger.warning("subset %s is rank deficient; using minimum-norm solution", indices)
    resid = y - X @ theta
    rss = float(resid @ resid)
    yy = float(y @ y)
    J = 1.0 - rss / yy if yy > 0 else float("nan")
    labels = list(names) if names is not None else []
    return FittedModel(TermSubset(indices, J), theta, rss, deficient, labels)
