"""Structure search strategies built on the ERR criterion.

* :func:`ofr_err` - greedy orthogonal forward regression (no removals).
* :func:`osf_search` - orthogonal sequential floating search: forward
  inclusion followed by conditional backtracking.
* :func:`oif_search` - OSF plus a term-swapping phase.
* :func:`o2s_search` - orthogonal oscillating search with down/up swings of
  adaptive depth.

Every search returns a :class:`SearchResult` whose trace records one
:class:`TraceStep` per action, in the layout of a step-by-step search table.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import SpecificationError
from .ortho import (
    EXHAUSTIVE_BUDGET,
    Criterion,
    TermSubset,
    improves,
    least_significant_subset,
    least_significant_term,
    most_significant_subset,
    most_significant_term,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10_000
ALGORITHMS = ("ofr", "osf", "oif", "o2s")


@dataclass
class TraceStep:
    step: int
    phase: str
    xi_step: int
    subset: tuple[int, ...]
    J: float
    accepted: bool = True
    f1: int | None = None
    f2: int | None = None
    depth: int | None = None
    note: str = ""


@dataclass
class SearchTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def record(self, phase: str, subset: Sequence[int], J: float, **kw) -> TraceStep:
        entry = TraceStep(len(self.steps) + 1, phase, len(subset), tuple(sorted(subset)), float(J), **kw)
        self.steps.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def phases(self) -> list[str]:
        return [s.phase for s in self.steps]

    def to_records(self, names: Sequence[str] | None = None) -> list[dict]:
        records = []
        for s in self.steps:
            rec = asdict(s)
            rec["subset"] = [names[i] for i in s.subset] if names is not None else list(s.subset)
            rec["flags"] = {"f1": rec.pop("f1"), "f2": rec.pop("f2")}
            records.append(rec)
        return records

    def write_jsonl(self, path: str | Path, names: Sequence[str] | None = None) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for rec in self.to_records(names):
                fh.write(json.dumps(rec) + "\n")
        return path

    def write_csv(self, path: str | Path, names: Sequence[str] | None = None) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "phase", "xi_step", "J", "accepted", "f1", "f2", "depth", "subset"])
            for s in self.steps:
                subset = " + ".join(names[i] for i in s.subset) if names is not None else " ".join(map(str, s.subset))
                writer.writerow([s.step, s.phase, s.xi_step, f"{s.J:.10g}", int(s.accepted),
                                 "" if s.f1 is None else s.f1, "" if s.f2 is None else s.f2,
                                 "" if s.depth is None else s.depth, subset])
        return path


@dataclass
class SearchConfig:
    """Options shared by all searches.

    ``max_depth`` overrides the O2S depth cap derived from
    ``max_depth_fraction``.
    """

    xi: int
    max_depth_fraction: float = 0.25
    max_depth: int | None = None
    subset_mode: str = "sequential"
    max_steps: int = DEFAULT_MAX_STEPS
    exhaustive_budget: int = EXHAUSTIVE_BUDGET

    def validate(self, n: int) -> None:
        if not 2 <= self.xi < n:
            raise SpecificationError(f"xi must satisfy 2 <= xi < {n}, got {self.xi}")
        if not 0 < self.max_depth_fraction <= 1:
            raise SpecificationError("max_depth_fraction must lie in (0, 1]")
        if self.subset_mode not in ("sequential", "exhaustive"):
            raise SpecificationError(f"unknown subset mode {self.subset_mode!r}")


@dataclass
class SearchResult:
    algorithm: str
    subset: TermSubset
    trace: SearchTrace
    budget_exceeded: bool = False
    zero_gain_additions: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def indices(self) -> tuple[int, ...]:
        return self.subset.indices

    @property
    def J(self) -> float:
        return self.subset.criterion


def default_max_depth(xi: int, n: int, fraction: float = 0.25) -> int:
    """``ceil(fraction * min(xi, n - xi))``, at least 1."""
    return max(1, math.ceil(fraction * min(xi, n - xi)))


def _finish(algorithm, crit, X, trace, **kw) -> SearchResult:
    X = tuple(sorted(X))
    return SearchResult(algorithm, TermSubset(X, crit.J(X)), trace, **kw)


def ofr_err(crit: Criterion, xi: int) -> SearchResult:
    """Greedy forward selection of ``xi`` terms by maximal ERR."""
    if not 1 <= xi < crit.n:
        raise SpecificationError(f"xi must satisfy 1 <= xi < {crit.n}")
    trace = SearchTrace()
    X: list[int] = []
    for _ in range(xi):
        X.append(most_significant_term(crit, X))
        trace.record("forward", X, crit.J(X))
    return _finish("ofr", crit, X, trace)


def osf_search(crit: Criterion, xi: int, max_steps: int = DEFAULT_MAX_STEPS) -> SearchResult:
    """Orthogonal sequential floating search for ``xi`` terms."""
    return _floating_search(crit, xi, swap=False, max_steps=max_steps)


def oif_search(crit: Criterion, xi: int, max_steps: int = DEFAULT_MAX_STEPS) -> SearchResult:
    """Orthogonal improved floating search: OSF with term swapping."""
    return _floating_search(crit, xi, swap=True, max_steps=max_steps)


def _floating_search(crit: Criterion, xi: int, swap: bool, max_steps: int) -> SearchResult:
    algorithm = "oif" if swap else "osf"
    if not 2 <= xi < crit.n:
        raise SpecificationError(f"xi must satisfy 2 <= xi < {crit.n}, got {xi}")
    trace = SearchTrace()
    notes: list[str] = []
    best_L = {k: 1.0 for k in range(1, xi + 1)}  # best loss (1 - J) per size
    best_X: dict[int, list[int] | None] = {k: None for k in range(1, xi + 1)}
    X: list[int] = []
    k = 0
    zero_gain = 0
    budget_exceeded = False
    seen: set = set()

    def store(subset, value):
        best_X[len(subset)] = list(subset)
        best_L[len(subset)] = value

    while k < xi:
        if len(trace) >= max_steps:
            budget_exceeded = True
            logger.warning("%s hit the step budget of %d", algorithm, max_steps)
            break
        # forward inclusion
        x_ms = most_significant_term(crit, X)
        X_hat = sorted(X + [x_ms])
        L_hat = crit.loss(X_hat)
        if improves(L_hat, best_L[k + 1]):
            X = X_hat
            store(X, L_hat)
            trace.record("forward", X, 1.0 - L_hat)
        elif best_X[k + 1] is None:
            # nothing stored for this size yet: keep the zero-gain addition
            X = X_hat
            store(X, L_hat)
            zero_gain += 1
            trace.record("forward", X, 1.0 - L_hat, note="zero_gain")
        else:
            X = list(best_X[k + 1])
            trace.record("forward", X, 1.0 - best_L[k + 1], accepted=False, note="restored")
        k += 1

        state = (tuple(X), tuple(best_L.values()))
        if state in seen:
            notes.append(f"cycle guard at step {len(trace)}")
            continue
        seen.add(state)

        protected = x_ms
        f1 = 1
        while True:
            # backtracking
            while k > 2 and len(trace) < max_steps:
                x_ls = least_significant_term(crit, X)
                reduced = [x for x in X if x != x_ls]
                L_red = crit.loss(reduced)
                if (f1 == 1 and x_ls == protected) or not improves(L_red, best_L[k - 1]):
                    break
                X = reduced
                k -= 1
                store(X, L_red)
                trace.record("backtrack", X, 1.0 - L_red, f1=f1)
                f1 = 0
            if not swap or len(trace) >= max_steps:
                break
            # term swapping
            swap_X, swap_L, swap_in = None, math.inf, None
            for x_out in X:
                base = [x for x in X if x != x_out]
                x_in = most_significant_term(crit, base)
                cand = sorted(base + [x_in])
                value = crit.loss(cand)
                if swap_X is None or improves(value, swap_L):
                    swap_X, swap_L, swap_in = cand, value, x_in
            if swap_X is None or not improves(swap_L, best_L[k]):
                break
            X = swap_X
            store(X, swap_L)
            trace.record("swap", X, 1.0 - swap_L)
            if k <= 2:
                break
            protected, f1 = swap_in, 1

    result = _finish(algorithm, crit, X, trace, budget_exceeded=budget_exceeded,
                     zero_gain_additions=zero_gain, notes=notes)
    if zero_gain:
        result.notes.append(f"{zero_gain} zero-gain forward additions")
    return result


def o2s_search(
    crit: Criterion,
    xi: int,
    max_depth: int | None = None,
    subset_mode: str = "sequential",
    max_steps: int = DEFAULT_MAX_STEPS,
    initial: Sequence[int] | None = None,
    budget: int = EXHAUSTIVE_BUDGET,
) -> SearchResult:
    """Orthogonal oscillating search for ``xi`` terms.

    Starts from ``xi`` greedy forward additions (or ``initial``) and swings
    down (drop ``o`` weakest, add ``o`` strongest) and up (add, then drop)
    while ``o <= max_depth``.  Any improving swing resets ``o`` to 1; two
    consecutive failures increase it.
    """
    n = crit.n
    if not 2 <= xi < n:
        raise SpecificationError(f"xi must satisfy 2 <= xi < {n}, got {xi}")
    if max_depth is None:
        max_depth = default_max_depth(xi, n)
    if max_depth < 1:
        raise SpecificationError("max_depth must be >= 1")
    trace = SearchTrace()
    if initial is None:
        X: list[int] = []
        for _ in range(xi):
            X.append(most_significant_term(crit, X))
    else:
        X = sorted(set(int(i) for i in initial))
        if len(X) != xi:
            raise SpecificationError("initial subset must hold exactly xi distinct terms")
    X = sorted(X)
    L_X = crit.loss(X)
    trace.record("init", X, 1.0 - L_X, f1=0, f2=0)

    def ms(o, subset):
        return most_significant_subset(crit, o, subset, subset_mode, budget=budget)

    def ls(o, subset):
        return least_significant_subset(crit, o, subset, subset_mode, budget=budget)

    o, f1, f2 = 1, 0, 0
    budget_exceeded = False
    while o <= max_depth:
        if len(trace) >= max_steps:
            budget_exceeded = True
            break
        # down swing
        if o <= xi - 1:
            depth = o
            low = sorted(set(X) - set(ls(depth, X)))
            trace.record("down_swing", low, crit.J(low), accepted=False, f1=f1, f2=f2, depth=depth,
                         note="intermediate")
            cand = sorted(low + list(ms(depth, low)))
            L_c = crit.loss(cand)
            if improves(L_c, L_X):
                X, L_X, f1, o = cand, L_c, 0, 1
            else:
                f1 = 1
            trace.record("down_swing", cand, 1.0 - L_c, accepted=f1 == 0, f1=f1, f2=f2, depth=depth)
        else:
            f1 = 1
        if f1 and f2:
            o += 1
            if o > max_depth:
                break
        # up swing
        if o <= n - xi:
            depth = o
            high = sorted(X + list(ms(depth, X)))
            trace.record("up_swing", high, crit.J(high), accepted=False, f1=f1, f2=f2, depth=depth,
                         note="intermediate")
            cand = sorted(set(high) - set(ls(depth, high)))
            L_c = crit.loss(cand)
            if improves(L_c, L_X):
                X, L_X, f2, o = cand, L_c, 0, 1
            else:
                f2 = 1
            trace.record("up_swing", cand, 1.0 - L_c, accepted=f2 == 0, f1=f1, f2=f2, depth=depth)
        else:
            f2 = 1
        if f1 and f2:
            o += 1
    return _finish("o2s", crit, X, trace, budget_exceeded=budget_exceeded)


def run_search(algorithm: str, crit: Criterion, xi: int, **options) -> SearchResult:
    """Dispatch by name: ``ofr``, ``osf``, ``oif`` or ``o2s``."""
    algorithm = algorithm.lower()
    if algorithm == "ofr":
        return ofr_err(crit, xi)
    if algorithm == "osf":
        return osf_search(crit, xi, max_steps=options.get("max_steps", DEFAULT_MAX_STEPS))
    if algorithm == "oif":
        return oif_search(crit, xi, max_steps=options.get("max_steps", DEFAULT_MAX_STEPS))
    if algorithm == "o2s":
        return o2s_search(crit, xi, **options)
    raise SpecificationError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
