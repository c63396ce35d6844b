"""Orthogonal floating search for polynomial NARX structure selection."""

__version__ = "0.1.0"

from .data import (
    BUILTIN_SYSTEMS,
    Dataset,
    builtin_system,
    generate_signal,
    load_dataset,
    make_dataset,
    save_dataset,
    simulate_duffing,
    simulate_narx,
)
from .errors import (
    BudgetError,
    DegenerateOutputError,
    InstabilityError,
    InsufficientDataError,
    NarxFloatError,
    SpecificationError,
)
from .harness import (
    ExperimentConfig,
    FrequencyTable,
    Outcome,
    classify_outcome,
    run_experiment,
    term_frequency,
)
from .order import CriterionSpec, SweepReport, extend_interval, info_criterion, sweep
from .ortho import (
    Criterion,
    TermSubset,
    criterion_J,
    estimate_coefficients,
    least_significant_subset,
    least_significant_term,
    most_significant_subset,
    most_significant_term,
    orthogonalize,
)
from .search import ALGORITHMS, SearchResult, o2s_search, ofr_err, oif_search, osf_search, run_search
from .terms import (
    CandidateSet,
    ModelSpec,
    RegressorMatrix,
    TermSpec,
    build_regressors,
    count_terms,
    enumerate_terms,
)
