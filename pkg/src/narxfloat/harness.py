"""Experiment orchestration: outcome labels, term frequency and run bundles.

A run directory holds

    dataset.csv / dataset.json   the data actually identified
    trace.jsonl                  every search step of every cardinality
    sweep.csv / sweep.json       per-cardinality J, E and criteria
    outcome.json                 chosen model and, with known truth, its label
    metadata.json                config, seeds, versions and fixed defaults

or, when a stage fails, whatever was written so far plus ``error.json``.
"""

from __future__ import annotations

import json
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from .data import BUILTIN_SYSTEMS, builtin_system, load_dataset, make_dataset, save_dataset
from .errors import (
    BudgetError,
    DegenerateOutputError,
    InstabilityError,
    InsufficientDataError,
    NarxFloatError,
    SpecificationError,
)
from .order import CRITERIA, CriterionSpec, SweepReport, sweep
from .ortho import EXHAUSTIVE_BUDGET, TOL_BETTER, TOL_FLOOR, TOL_RANK, TermSubset
from .search import ALGORITHMS, DEFAULT_MAX_STEPS
from .terms import CandidateSet, ModelSpec, TermSpec, enumerate_terms

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4

EXACT = "ExactFitting"
OVER = "OverFitting"
UNDER1 = "UnderFitting1"
UNDER2 = "UnderFitting2"
LABELS = (EXACT, OVER, UNDER1, UNDER2)


# --------------------------------------------------------------------------
# outcome taxonomy


@dataclass(frozen=True)
class Outcome:
    label: str
    spurious: frozenset
    missing: frozenset

    def to_dict(self) -> dict:
        return {"label": self.label, "spurious": sorted(map(str, self.spurious)),
                "missing": sorted(map(str, self.missing))}


def _as_terms(items, candidates: CandidateSet | None) -> frozenset:
    if isinstance(items, TermSubset):
        items = items.indices
    out = set()
    for item in items:
        if isinstance(item, TermSpec):
            out.add(item)
        elif isinstance(item, str):
            out.add(TermSpec.parse(item))
        elif candidates is not None:
            out.add(candidates[int(item)])
        else:
            out.add(int(item))
    return frozenset(out)


def classify_outcome(found, truth, candidates: CandidateSet | None = None) -> Outcome:
    """Compare an identified subset with the true one.

    Both arguments may be a :class:`TermSubset`, a sequence of candidate
    indices, or a sequence of terms (:class:`TermSpec` or text).  Indices are
    mapped through ``candidates`` when given, so mixed inputs compare by
    canonical term equality.
    """
    truth_set = _as_terms(truth, candidates)
    if not truth_set:
        raise SpecificationError("true subset must be non-empty")
    found_set = _as_terms(found, candidates)
    spurious = found_set - truth_set
    missing = truth_set - found_set
    if not spurious and not missing:
        label = EXACT
    elif not missing:
        label = OVER
    elif not spurious:
        label = UNDER1
    else:
        label = UNDER2
    return Outcome(label, frozenset(spurious), frozenset(missing))


# --------------------------------------------------------------------------
# term selection frequency


@dataclass
class FrequencyTable:
    """``tau[i, j] = 1`` when ``terms[i]`` is in the subset of cardinality ``xis[j]``."""

    terms: list[str]
    xis: list[int]
    tau: np.ndarray

    def row(self, term: str | TermSpec) -> np.ndarray:
        key = str(TermSpec.parse(term) if isinstance(term, str) else term)
        return self.tau[self.terms.index(key)]

    def stable_from(self, term: str | TermSpec, xi_star: int) -> bool:
        """True when ``term`` is selected at every cardinality ``>= xi_star``."""
        row = self.row(term)
        cols = [j for j, xi in enumerate(self.xis) if xi >= xi_star]
        return bool(cols) and bool(row[cols].all())

    def to_records(self) -> list[dict]:
        return [{"term": t, **{str(xi): int(v) for xi, v in zip(self.xis, r)}}
                for t, r in zip(self.terms, self.tau)]

    def format(self) -> str:
        width = max(len(t) for t in self.terms) if self.terms else 4
        head = " " * width + " " + " ".join(f"{xi:>3d}" for xi in self.xis)
        lines = [head]
        for t, r in zip(self.terms, self.tau):
            lines.append(f"{t:<{width}} " + " ".join(f"{int(v):>3d}" for v in r))
        return "\n".join(lines)


def _report_members(report) -> tuple[dict[int, set[TermSpec]], list[str] | None]:
    if isinstance(report, SweepReport):
        cands = report.candidates
        members = {xi: {cands[i] for i in idx} for xi, idx in report.subsets().items()}
        return members, cands.names()
    if isinstance(report, dict):
        members = {int(e["xi"]): {TermSpec.parse(t) for t in e["terms"]}
                   for e in report.get("entries", []) if e.get("terms") is not None}
        return members, None
    raise SpecificationError("expected a SweepReport or its JSON dictionary")


def term_frequency(report, terms_of_interest: Iterable[str | TermSpec] | None = None) -> FrequencyTable:
    """Selection frequency of terms over the subsets of a sweep.

    ``report`` is a :class:`SweepReport` or the dictionary written to
    ``sweep.json``.  Without ``terms_of_interest`` every term selected at
    least once is tabulated.
    """
    members, names = _report_members(report)
    xis = sorted(members)
    if not xis:
        raise SpecificationError("report holds no identified subsets")
    if xis != list(range(xis[0], xis[-1] + 1)):
        raise SpecificationError(f"report does not cover a contiguous interval: {xis}")
    if terms_of_interest is None:
        picked = set().union(*members.values())
        terms = sorted(picked, key=lambda t: names.index(str(t)) if names else str(t))
    else:
        terms = []
        for t in terms_of_interest:
            try:
                spec = t if isinstance(t, TermSpec) else TermSpec.parse(t)
            except SpecificationError as exc:
                raise SpecificationError(f"unknown term {t!r}: {exc}") from exc
            if names is not None and str(spec) not in names:
                raise SpecificationError(f"unknown term {str(spec)!r}: not a candidate")
            terms.append(spec)
    tau = np.array([[int(t in members[xi]) for xi in xis] for t in terms], dtype=np.int8)
    return FrequencyTable([str(t) for t in terms], xis, tau.reshape(len(terms), len(xis)))


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    Exactly one of ``system`` (a built-in benchmark) and ``dataset`` (a CSV
    path) must be set.  ``xi`` fixes a single cardinality; otherwise the
    interval ``[xi_min, xi_max]`` is swept.
    """

    system: str | None = None
    dataset: str | None = None
    model_spec: list[int] | None = None
    algorithm: str = "oif"
    xi: int | None = None
    xi_min: int = 2
    xi_max: int = 20
    criterion: str = "BIC"
    rho: float = 2.0
    prediction_mode: str = "one_step"
    seeds: list[int] = field(default_factory=lambda: [0])
    n: int = 1000
    split_index: int = 700
    noise_free: bool = False
    max_depth: int | None = None
    subset_mode: str = "sequential"
    max_steps: int = DEFAULT_MAX_STEPS
    exhaustive_budget: int = EXHAUSTIVE_BUDGET
    output_dir: str = "runs"
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecificationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def interval(self) -> tuple[int, int]:
        return (self.xi, self.xi) if self.xi is not None else (self.xi_min, self.xi_max)

    def validate(self) -> None:
        if (self.system is None) == (self.dataset is None):
            raise SpecificationError("set exactly one of 'system' and 'dataset'")
        if self.system is not None and self.system.upper() not in {s.upper() for s in BUILTIN_SYSTEMS}:
            raise SpecificationError(f"unknown system {self.system!r}; choose from {BUILTIN_SYSTEMS}")
        if self.model_spec is not None:
            ModelSpec.from_list(self.model_spec)
        if self.algorithm.lower() not in ALGORITHMS:
            raise SpecificationError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        self.algorithm = self.algorithm.lower()
        lo, hi = self.interval
        if lo < 2:
            raise SpecificationError(f"cardinality must be at least 2, got {lo}")
        if lo > hi:
            raise SpecificationError(f"xi_min={lo} exceeds xi_max={hi}")
        CriterionSpec(self.criterion, self.rho, self.prediction_mode)
        if not self.seeds:
            raise SpecificationError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]
        if not 0 < self.split_index < self.n:
            raise SpecificationError(f"split_index must lie in (0, n={self.n})")
        if self.max_depth is not None and self.max_depth < 1:
            raise SpecificationError("max_depth must be >= 1")
        if self.subset_mode not in ("sequential", "exhaustive"):
            raise SpecificationError(f"unknown subset mode {self.subset_mode!r}")
        if self.max_steps < 1 or self.exhaustive_budget < 1 or self.workers < 1:
            raise SpecificationError("max_steps, exhaustive_budget and workers must be positive")

    def search_options(self) -> dict:
        opts: dict = {"max_steps": self.max_steps}
        if self.algorithm == "o2s":
            opts.update(max_depth=self.max_depth, subset_mode=self.subset_mode,
                        budget=self.exhaustive_budget)
        elif self.algorithm == "ofr":
            opts = {}
        return opts

    def run_name(self, seed: int) -> str:
        source = self.system or Path(self.dataset).stem
        return f"{source}_{self.algorithm}_seed{seed}"


# --------------------------------------------------------------------------
# running


_EXPECTED = (NarxFloatError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError)


@dataclass
class RunResult:
    seed: int
    directory: Path
    status: int
    report: SweepReport | None = None
    outcome: Outcome | None = None
    error: dict | None = None


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, BudgetError):
        return EXIT_BUDGET
    if isinstance(exc, (InstabilityError, DegenerateOutputError, ArithmeticError,
                        np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (SpecificationError, InsufficientDataError, OSError, ValueError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def design_defaults() -> dict:
    """Fixed choices recorded with every run."""
    return {
        "prng": "numpy PCG64, SeedSequence(seed).spawn(2) -> [input, noise]",
        "initial_conditions": "zero",
        "valid_rows": "time index >= max(n_u, n_y); no zero padding",
        "criterion_rows": "J on estimation rows; E on validation rows",
        "tol_rank": TOL_RANK,
        "tol_better_relative": TOL_BETTER,
        "tol_floor": TOL_FLOOR,
        "tie_break": "lowest candidate index",
        "o2s_max_depth": "ceil(0.25 * min(xi, n - xi)) unless max_depth is set",
        "definition_3_4_mode": "sequential unless subset_mode=exhaustive",
        "duffing": "RK4 fixed step, zero-order-hold input",
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(map(str, obj))
    raise TypeError(f"cannot serialize {type(obj)}")


def _versions() -> dict:
    from . import __version__
    return {"narxfloat": __version__, "python": sys.version.split()[0],
            "numpy": np.__version__, "scipy": scipy.__version__,
            "platform": platform.platform()}


def _load_data(config: ExperimentConfig, seed: int):
    """Return ``(dataset, candidates, truth)``; ``truth`` is None when unknown."""
    if config.system is not None:
        system = builtin_system(config.system)
        spec = ModelSpec.from_list(config.model_spec) if config.model_spec else system.model_spec
        data = make_dataset(system, seed, config.n, config.split_index, config.noise_free)
        return data, enumerate_terms(spec), system.true_terms
    data = load_dataset(config.dataset, config.split_index)
    truth = None
    true_model = data.meta.get("true_model")
    if true_model:
        truth = tuple(TermSpec.parse(t) for t in true_model["terms"])
    spec = config.model_spec or data.meta.get("model_spec")
    if spec is None:
        raise SpecificationError("a dataset run needs model_spec [n_u, n_y, n_l]")
    return data, enumerate_terms(ModelSpec.from_list(spec)), truth


def run_single(config: ExperimentConfig, seed: int) -> RunResult:
    """Run one seed of ``config`` into its own directory."""
    out = Path(config.output_dir) / config.run_name(seed)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config": config.to_dict(), "seed": seed, "versions": _versions(),
            "defaults": design_defaults()}
    stage = "data"
    try:
        data, candidates, truth = _load_data(config, seed)
        save_dataset(data, out / "dataset.csv")
        meta["n_candidates"] = candidates.n
        stage = "sweep"
        lo, hi = config.interval
        spec = CriterionSpec(config.criterion, config.rho, config.prediction_mode)
        report = sweep(config.algorithm, candidates, data, lo, hi, spec,
                       search_options=config.search_options())
        names = candidates.names()
        stage = "write"
        with (out / "trace.jsonl").open("w") as fh:
            for xi, entry in sorted(report.entries.items()):
                if entry.search is None:
                    continue
                for rec in entry.search.trace.to_records(names):
                    rec["xi"] = xi
                    fh.write(json.dumps(rec, default=_json_default) + "\n")
        report.write_csv(out / "sweep.csv")
        report.write_json(out / "sweep.json")
        chosen = report.chosen
        outcome = None
        result = {"chosen_xi": report.chosen_xi, "boundary_flag": report.boundary_flag,
                  "gaps": report.gaps}
        if chosen is not None:
            result["model"] = chosen.model.to_dict()
            result["E"] = chosen.E
            if truth:
                outcome = classify_outcome(chosen.indices, truth, candidates)
                result["outcome"] = outcome.to_dict()
        _write_json(out / "outcome.json", result)
        budget_hit = [xi for xi, e in report.entries.items()
                      if (e.search is not None and e.search.budget_exceeded)
                      or (e.error or "").startswith("BudgetError")]
        meta["budget_exceeded_at"] = budget_hit
        _write_json(out / "metadata.json", meta)
        if chosen is None:
            if budget_hit:
                raise BudgetError(f"search budget exceeded at every cardinality: {budget_hit}")
            raise InstabilityError("no cardinality produced a usable model")
        status = EXIT_BUDGET if budget_hit else EXIT_OK
        return RunResult(seed, out, status, report, outcome)
    except Exception as exc:  # every failure leaves an error record
        status = exit_code_for(exc)
        error = {"stage": stage, "type": type(exc).__name__, "message": str(exc),
                 "exit_code": status}
        if isinstance(exc, InstabilityError) and exc.index is not None:
            error["index"] = exc.index
        logger.error("run %s failed in %s: %s", out.name, stage, exc)
        _write_json(out / "error.json", error)
        if not (out / "metadata.json").exists():
            _write_json(out / "metadata.json", meta)
        if not isinstance(exc, _EXPECTED):
            raise
        return RunResult(seed, out, status, error=error)


def run_experiment(config: ExperimentConfig | dict) -> list[RunResult]:
    """Validate ``config`` and run every seed; nothing is written on a bad config."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    else:
        config.validate()
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_single, [config] * len(config.seeds), config.seeds))
        # reports do not survive pickling with their search context; that is fine
        return results
    return [run_single(config, seed) for seed in config.seeds]


def overall_status(results: Sequence[RunResult]) -> int:
    codes = [r.status for r in results if r.status]
    return max(codes) if codes else EXIT_OK


def summarize(results: Sequence[RunResult]) -> dict:
    counts = {label: 0 for label in LABELS}
    for r in results:
        if r.outcome is not None:
            counts[r.outcome.label] += 1
    chosen = [r.report.chosen_xi for r in results if r.report is not None]
    return {"runs": len(results), "failed": sum(1 for r in results if r.status),
            "outcomes": counts, "chosen_xi": chosen,
            "median_xi": float(np.median(chosen)) if chosen else math.nan}


__all__ = [
    "CRITERIA", "EXACT", "EXIT_BUDGET", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_OK", "ExperimentConfig",
    "FrequencyTable", "LABELS", "OVER", "Outcome", "RunResult", "UNDER1", "UNDER2",
    "classify_outcome", "design_defaults", "exit_code_for", "overall_status", "run_experiment",
    "run_single", "summarize", "term_frequency",
]
