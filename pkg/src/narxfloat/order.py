"""Model-order selection over a cardinality interval.

For each cardinality in ``[xi_min, xi_max]`` a structure search picks a
subset, least squares fits it on the estimation rows, and the validation MSE
``E`` feeds four information criteria:

    AIC  = N_v ln E + rho * xi
    BIC  = N_v ln E + ln(N_v) * xi
    FPE  = N_v ln E + N_v ln((N_v + xi) / (N_v - xi))
    LILC = N_v ln E + 2 xi ln ln N_v

The reported model order is the arg-min of the chosen criterion.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import InstabilityError, NarxFloatError, SpecificationError
from .ortho import Criterion, FittedModel, estimate_coefficients
from .search import SearchResult, run_search
from .terms import OUTPUT, CandidateSet, RegressorMatrix, build_regressors

logger = logging.getLogger(__name__)

CRITERIA = ("AIC", "BIC", "FPE", "LILC")
# E below this fraction of mean(y_v^2) is treated as rounding noise
E_FLOOR_FACTOR = (1e3 * np.finfo(float).eps) ** 2


@dataclass(frozen=True)
class CriterionSpec:
    kind: str = "BIC"
    rho: float = 2.0
    prediction_mode: str = "one_step"

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        if self.kind not in CRITERIA:
            raise SpecificationError(f"unknown criterion {self.kind!r}")
        if not self.rho > 0:
            raise SpecificationError("rho must be positive")
        if self.prediction_mode not in ("one_step", "free_run"):
            raise SpecificationError(f"unknown prediction mode {self.prediction_mode!r}")


def info_criterion(E: float, xi: int, n_v: int, spec: CriterionSpec | str = "BIC") -> float:
    """Evaluate one information criterion; ``E == 0`` gives ``-inf``."""
    if isinstance(spec, str):
        spec = CriterionSpec(spec)
    if E < 0:
        raise SpecificationError("prediction error must be non-negative")
    if spec.kind == "FPE" and xi >= n_v:
        raise SpecificationError("FPE needs xi < N_v")
    if E == 0:
        logger.warning("zero prediction error; criterion is -inf")
        fit = -math.inf
    else:
        fit = n_v * math.log(E)
    if spec.kind == "AIC":
        penalty = spec.rho * xi
    elif spec.kind == "BIC":
        penalty = math.log(n_v) * xi
    elif spec.kind == "FPE":
        penalty = n_v * math.log((n_v + xi) / (n_v - xi))
    else:
        penalty = 2 * xi * math.log(math.log(n_v))
    return fit + penalty


def all_criteria(E: float, xi: int, n_v: int, rho: float = 2.0) -> dict[str, float]:
    return {kind: info_criterion(E, xi, n_v, CriterionSpec(kind, rho)) for kind in CRITERIA}


def predict(
    model: FittedModel,
    candidates: CandidateSet,
    data: Dataset,
    mode: str = "one_step",
    start: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Model output from time index ``start`` (default: the split) to the end.

    Returns ``(time_index, y_hat)``.  In free-run mode lagged outputs at or
    after ``start`` are the model's own predictions.
    """
    L = candidates.spec.max_lag
    start = max(data.split_index if start is None else start, L)
    rows = np.arange(start, data.n)
    terms = [candidates[i] for i in model.subset.indices]
    theta = np.asarray(model.theta, dtype=float)
    if mode == "one_step":
        cols = np.column_stack([t.evaluate(data.y, data.u, rows) for t in terms])
        return rows, cols @ theta
    if mode != "free_run":
        raise SpecificationError(f"unknown prediction mode {mode!r}")
    y_sim = np.array(data.y, dtype=float)
    for t in rows:
        acc = 0.0
        for c, term in zip(theta, terms):
            v = 1.0
            for signal, lag, exponent in term.factors:
                v *= (y_sim[t - lag] if signal == OUTPUT else data.u[t - lag]) ** exponent
            acc += c * v
        if not math.isfinite(acc) or abs(acc) > 1e12:
            done = rows[rows < t]
            partial = float(np.mean((data.y[done] - y_sim[done]) ** 2)) if done.size else math.inf
            raise InstabilityError(f"free-run prediction diverged at sample {t}", index=int(t),
                                   partial=partial)
        y_sim[t] = acc
    return rows, y_sim[rows]


def prediction_error(model: FittedModel, candidates: CandidateSet, data: Dataset,
                     mode: str = "one_step") -> float:
    """Mean squared validation error of one-step or free-run predictions."""
    if data.n_validation <= 0:
        raise SpecificationError("dataset has no validation samples")
    rows, y_hat = predict(model, candidates, data, mode)
    if rows.size == 0:
        raise SpecificationError("no validation rows with a full lag history")
    resid = data.y[rows] - y_hat
    return float(resid @ resid / rows.size)


@dataclass
class SweepEntry:
    xi: int
    model: FittedModel | None
    J: float
    E: float
    criteria: dict[str, float]
    search: SearchResult | None = None
    error: str | None = None

    @property
    def indices(self) -> tuple[int, ...]:
        return self.model.subset.indices if self.model is not None else ()


@dataclass
class SweepReport:
    """Family of identified subsets over a cardinality interval."""

    algorithm: str
    xi_min: int
    xi_max: int
    criterion: CriterionSpec
    n_v: int
    entries: dict[int, SweepEntry]
    candidates: CandidateSet
    chosen_xi: int | None = None
    boundary_flag: bool = False
    reused: int = 0
    search_options: dict = field(default_factory=dict)
    _context: dict = field(default_factory=dict, repr=False)

    @property
    def chosen(self) -> SweepEntry | None:
        return None if self.chosen_xi is None else self.entries[self.chosen_xi]

    @property
    def gaps(self) -> list[int]:
        return [xi for xi, e in sorted(self.entries.items()) if e.error is not None]

    def subsets(self) -> dict[int, tuple[int, ...]]:
        return {xi: e.indices for xi, e in sorted(self.entries.items()) if e.error is None}

    def table(self) -> list[dict]:
        rows = []
        for xi, e in sorted(self.entries.items()):
            row = {"xi": xi, "J": e.J, "E": e.E}
            row.update({k: e.criteria.get(k, math.nan) for k in CRITERIA})
            row["boundary_flag"] = int(self.boundary_flag and xi == self.chosen_xi)
            rows.append(row)
        return rows

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["xi", "J", "E", *CRITERIA, "boundary_flag"])
            for row in self.table():
                writer.writerow([row["xi"]] + [repr(float(row[k])) for k in ("J", "E", *CRITERIA)]
                                + [row["boundary_flag"]])
        return path

    def to_dict(self) -> dict:
        names = self.candidates.names()
        entries = []
        for xi, e in sorted(self.entries.items()):
            item = {"xi": xi, "J": e.J, "E": e.E, "criteria": e.criteria, "error": e.error}
            if e.model is not None:
                item["model"] = e.model.to_dict()
                item["terms"] = [names[i] for i in e.indices]
            entries.append(item)
        return {
            "algorithm": self.algorithm,
            "interval": [self.xi_min, self.xi_max],
            "criterion": {"kind": self.criterion.kind, "rho": self.criterion.rho,
                          "prediction_mode": self.criterion.prediction_mode},
            "n_v": self.n_v,
            "E_floor": self._context.get("E_floor"),
            "model_spec": self.candidates.spec.as_list(),
            "chosen_xi": self.chosen_xi,
            "boundary_flag": self.boundary_flag,
            "gaps": self.gaps,
            "search_options": self.search_options,
            "entries": entries,
        }

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))
        return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def _evaluate_xi(xi: int, algorithm: str, ctx: dict, spec: CriterionSpec, n_v: int,
                 search_options: dict) -> SweepEntry:
    crit: Criterion = ctx["criterion"]
    Xe, ye = ctx["estimation"]
    candidates: CandidateSet = ctx["candidates"]
    data: Dataset = ctx["data"]
    try:
        result = run_search(algorithm, crit, xi, **search_options)
        model = estimate_coefficients(result.indices, Xe, ye, candidates.names(result.indices))
        try:
            E = prediction_error(model, candidates, data, spec.prediction_mode)
        except InstabilityError as exc:
            logger.warning("xi=%d: %s", xi, exc)
            E = math.inf
        # rounding-level errors (numerically exact fits) are clamped so the
        # penalty, not floating-point noise, ranks such cardinalities
        E_used = max(E, ctx.get("E_floor", 0.0))
        criteria = all_criteria(E_used, xi, n_v, spec.rho) if math.isfinite(E) else {
            k: math.inf for k in CRITERIA}
        return SweepEntry(xi, model, result.J, E, criteria, result)
    except NarxFloatError as exc:
        logger.error("search failed at xi=%d: %s", xi, exc)
        return SweepEntry(xi, None, math.nan, math.nan, {}, None,
                          error=f"{type(exc).__name__}: {exc}")


def _select(report: SweepReport) -> None:
    best_xi, best_val = None, math.inf
    for xi, e in sorted(report.entries.items()):
        if e.error is not None:
            continue
        value = e.criteria.get(report.criterion.kind, math.inf)
        if best_xi is None or value < best_val:
            best_xi, best_val = xi, value
    report.chosen_xi = best_xi
    report.boundary_flag = best_xi is not None and best_xi == report.xi_max


def sweep(
    algorithm: str,
    candidates: CandidateSet,
    data: Dataset,
    xi_min: int = 2,
    xi_max: int = 20,
    crit: CriterionSpec | None = None,
    regressors: RegressorMatrix | None = None,
    search_options: dict | None = None,
) -> SweepReport:
    """Run ``algorithm`` once per cardinality and pick the criterion minimum."""
    crit = crit or CriterionSpec()
    search_options = dict(search_options or {})
    if not 2 <= xi_min <= xi_max < candidates.n:
        raise SpecificationError(
            f"need 2 <= xi_min <= xi_max < n={candidates.n}, got [{xi_min}, {xi_max}]")
    if regressors is None:
        regressors = build_regressors(candidates, data)
    Xe, ye = regressors.estimation()
    ctx = {
        "criterion": Criterion(Xe, ye),
        "estimation": (Xe, ye),
        "candidates": candidates,
        "data": data,
    }
    n_v = int(regressors.validation_mask.sum())
    yv = regressors.validation()[1]
    ctx["E_floor"] = E_FLOOR_FACTOR * float(yv @ yv) / max(n_v, 1)
    if xi_max >= n_v:
        raise SpecificationError("xi_max must be below the number of validation rows")
    report = SweepReport(algorithm, xi_min, xi_max, crit, n_v, {}, candidates,
                         search_options=search_options, _context=ctx)
    for xi in range(xi_min, xi_max + 1):
        report.entries[xi] = _evaluate_xi(xi, algorithm, ctx, crit, n_v, search_options)
    _select(report)
    if report.boundary_flag:
        logger.info("criterion minimum at the interval boundary xi=%d", xi_max)
    return report


def extend_interval(report: SweepReport, new_xi_max: int) -> SweepReport:
    """Extend a sweep to ``new_xi_max``, reusing every cardinality already run."""
    if new_xi_max <= report.xi_max:
        raise SpecificationError("new xi_max must exceed the current one")
    ctx = report._context
    if not ctx:
        raise SpecificationError("report carries no search context; rerun the sweep")
    if new_xi_max >= min(report.n_v, report.candidates.n):
        raise SpecificationError("new xi_max too large for the data")
    entries = dict(report.entries)
    for xi in range(report.xi_max + 1, new_xi_max + 1):
        entries[xi] = _evaluate_xi(xi, report.algorithm, ctx, report.criterion, report.n_v,
                                   report.search_options)
    extended = SweepReport(report.algorithm, report.xi_min, new_xi_max, report.criterion,
                           report.n_v, entries, report.candidates,
                           reused=len(report.entries), search_options=report.search_options,
                           _context=ctx)
    _select(extended)
    return extended


def selection_from_interval(report: SweepReport, lo: int, hi: int) -> int | None:
    """Arg-min of the report's criterion restricted to ``[lo, hi]``."""
    values = {xi: e.criteria.get(report.criterion.kind, math.inf)
              for xi, e in report.entries.items() if lo <= xi <= hi and e.error is None}
    return min(values, key=lambda xi: (values[xi], xi)) if values else None


def criterion_series(report: SweepReport, kind: str = "BIC") -> tuple[list[int], list[float]]:
    xs = sorted(xi for xi, e in report.entries.items() if e.error is None)
    return xs, [report.entries[xi].criteria[kind] for xi in xs]


__all__: Sequence[str] = (
    "CRITERIA", "CriterionSpec", "SweepEntry", "SweepReport", "all_criteria", "criterion_series",
    "extend_interval", "info_criterion", "predict", "prediction_error", "sweep",
)
