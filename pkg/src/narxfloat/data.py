"""Benchmark data generation: excitations, NARX recursion, Duffing oscillator.

Random streams come from numpy's PCG64 generator.  A dataset seed is expanded
with :class:`numpy.random.SeedSequence` into two independent child streams, one
for the excitation and one for the noise, so changing the noise level never
changes the input realization.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.signal import lfilter

from .errors import InstabilityError, InsufficientDataError, SpecificationError
from .terms import INPUT, OUTPUT, ModelSpec, TermSpec

logger = logging.getLogger(__name__)

OVERFLOW_GUARD = 1e12


# --------------------------------------------------------------------------
# signal specs


@dataclass(frozen=True)
class WhiteUniform:
    a: float
    b: float
    kind: str = field(default="white_uniform", init=False)


@dataclass(frozen=True)
class WhiteGaussian:
    mean: float
    variance: float
    kind: str = field(default="white_gaussian", init=False)


@dataclass(frozen=True)
class Filtered:
    """``inner`` passed through ``numerator(z^-1) / denominator(z^-1)``."""

    inner: "SignalSpec"
    numerator: tuple[float, ...]
    denominator: tuple[float, ...]
    kind: str = field(default="filtered", init=False)

    def __post_init__(self):
        if not self.denominator or self.denominator[0] == 0:
            raise SpecificationError("filter denominator needs a nonzero leading coefficient")


SignalSpec = Union[WhiteUniform, WhiteGaussian, Filtered]


def signal_to_dict(spec: SignalSpec | None) -> dict | None:
    if spec is None:
        return None
    if isinstance(spec, Filtered):
        return {
            "kind": spec.kind,
            "inner": signal_to_dict(spec.inner),
            "numerator": list(spec.numerator),
            "denominator": list(spec.denominator),
        }
    return asdict(spec)


def signal_from_dict(d: dict | None) -> SignalSpec | None:
    if d is None:
        return None
    kind = d["kind"]
    if kind == "white_uniform":
        return WhiteUniform(float(d["a"]), float(d["b"]))
    if kind == "white_gaussian":
        return WhiteGaussian(float(d["mean"]), float(d["variance"]))
    if kind == "filtered":
        return Filtered(
            signal_from_dict(d["inner"]), tuple(d["numerator"]), tuple(d["denominator"])
        )
    raise SpecificationError(f"unknown signal kind {kind!r}")


def _filter_is_stable(denominator: Sequence[float]) -> bool:
    if len(denominator) < 2:
        return True
    poles = np.roots(denominator)
    return bool(np.all(np.abs(poles) < 1.0))


def generate_signal(spec: SignalSpec, n: int, seed) -> np.ndarray:
    """Draw ``n`` samples of ``spec``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.  Filtered
    signals run a direct-form IIR filter from zero initial state.
    """
    if n <= 0:
        raise SpecificationError("signal length must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(spec, WhiteUniform):
        return rng.uniform(spec.a, spec.b, size=n)
    if isinstance(spec, WhiteGaussian):
        return rng.normal(spec.mean, math.sqrt(spec.variance), size=n)
    if isinstance(spec, Filtered):
        if not _filter_is_stable(spec.denominator):
            logger.warning("filter %s is unstable", spec.denominator)
        inner = generate_signal(spec.inner, n, rng)
        return lfilter(spec.numerator, spec.denominator, inner)
    raise SpecificationError(f"unsupported signal spec {spec!r}")


# --------------------------------------------------------------------------
# true models


@dataclass(frozen=True)
class TrueModel:
    """Ground-truth polynomial NARX system.

    ``noise_mode`` is ``"equation"`` when e(k) enters the recursion (the usual
    NARX form) or ``"output"`` when the recursion is noise free and the
    measured output is ``w(k)`` plus noise filtered by ``1/noise_filter``.
    """

    name: str
    terms: tuple[TermSpec, ...]
    coefficients: tuple[float, ...]
    noise: SignalSpec | None = None
    noise_mode: str = "equation"
    noise_filter: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if len(self.terms) != len(self.coefficients):
            raise SpecificationError("terms and coefficients differ in length")
        if self.noise_mode not in ("equation", "output"):
            raise SpecificationError(f"unknown noise mode {self.noise_mode!r}")

    @property
    def cardinality(self) -> int:
        return len(self.terms)

    @property
    def max_lag(self) -> int:
        return max((t.max_lag() for t in self.terms), default=0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "terms": [str(t) for t in self.terms],
            "coefficients": list(self.coefficients),
            "noise": signal_to_dict(self.noise),
            "noise_mode": self.noise_mode,
            "noise_filter": list(self.noise_filter),
        }


def _term_value(term: TermSpec, y: np.ndarray, u: np.ndarray, k: int) -> float:
    value = 1.0
    for signal, lag, exponent in term.factors:
        j = k - lag
        if j < 0:
            return 0.0
        value *= (y[j] if signal == OUTPUT else u[j]) ** exponent
    return value


def simulate_narx(model: TrueModel, u, noise) -> np.ndarray:
    """Run the NARX recursion of ``model`` from zero initial conditions."""
    u = np.asarray(u, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if u.shape != noise.shape:
        raise SpecificationError("input and noise must have the same length")
    n = len(u)
    coefficients = np.asarray(model.coefficients, dtype=float)
    equation_noise = noise if model.noise_mode == "equation" else np.zeros(n)
    y = np.zeros(n)
    for k in range(n):
        acc = equation_noise[k]
        for c, term in zip(coefficients, model.terms):
            acc += c * _term_value(term, y, u, k)
        if not math.isfinite(acc) or abs(acc) > OVERFLOW_GUARD:
            raise InstabilityError(f"{model.name} diverged at sample {k}", index=k)
        y[k] = acc
    if model.noise_mode == "output":
        y = y + lfilter([1.0], model.noise_filter, noise)
    return y


# --------------------------------------------------------------------------
# Duffing oscillator


@dataclass(frozen=True)
class DuffingSpec:
    omega_n: float = 45 * math.pi
    zeta: float = 0.01
    epsilon: float = 3.0
    fs: float = 500.0
    substeps: int = 40
    name: str = "duffing"

    def to_dict(self) -> dict:
        return asdict(self) | {"integrator": "rk4-fixed-step", "input_hold": "zoh"}


def simulate_duffing(
    omega_n: float,
    zeta: float,
    epsilon: float,
    u,
    fs: float,
    n: int | None = None,
    substeps: int = 40,
) -> np.ndarray:
    """Sampled response of ``y'' + 2 zeta w y' + w^2 y + w^2 eps y^3 = u``.

    Classical RK4 with ``substeps`` fixed steps per sample; ``u`` is held
    constant over each sample interval.  ``y[k]`` is the displacement at
    ``t = k / fs`` starting from rest, so ``y[0] == 0``.
    """
    if fs <= 0:
        raise SpecificationError("sample rate must be positive")
    if substeps < 20:
        raise SpecificationError("at least 20 substeps per sample are required")
    u = np.asarray(u, dtype=float)
    n = len(u) if n is None else int(n)
    if n > len(u):
        raise InsufficientDataError("input shorter than requested output length")
    h = 1.0 / (fs * substeps)
    w2 = omega_n * omega_n
    c = 2.0 * zeta * omega_n

    def accel(pos, vel, force):
        return force - c * vel - w2 * pos - w2 * epsilon * pos**3

    y = np.zeros(n)
    pos = vel = 0.0
    for k in range(n - 1):
        force = u[k]
        for _ in range(substeps):
            k1p, k1v = vel, accel(pos, vel, force)
            k2p, k2v = vel + 0.5 * h * k1v, accel(pos + 0.5 * h * k1p, vel + 0.5 * h * k1v, force)
            k3p, k3v = vel + 0.5 * h * k2v, accel(pos + 0.5 * h * k2p, vel + 0.5 * h * k2v, force)
            k4p, k4v = vel + h * k3v, accel(pos + h * k3p, vel + h * k3v, force)
            pos += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            vel += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (math.isfinite(pos) and math.isfinite(vel)):
            raise InstabilityError(f"Duffing integration diverged at sample {k + 1}", index=k + 1)
        y[k + 1] = pos
    return y


# --------------------------------------------------------------------------
# built-in benchmark systems


def _t(text: str) -> TermSpec:
    return TermSpec.parse(text)


def _model(name, pairs, noise, **kw) -> TrueModel:
    terms = tuple(_t(t) for t, _ in pairs)
    coefficients = tuple(float(c) for _, c in pairs)
    return TrueModel(name, terms, coefficients, noise, **kw)


_S7_TERMS = [
    ("u(k-1)", 0.8833), ("u(k-2)", 0.0393), ("u(k-3)", 0.8546), ("u(k-1)^2", 0.8528),
    ("u(k-1)*u(k-2)", 0.7582), ("u(k-1)*u(k-3)", 0.1750), ("u(k-2)^2", 0.0864),
    ("u(k-2)*u(k-3)", 0.4916), ("u(k-3)^2", 0.0711), ("y(k-1)", -0.0375),
    ("y(k-2)", -0.0598), ("y(k-3)", -0.0370), ("y(k-4)", -0.0468), ("y(k-1)^2", -0.0476),
    ("y(k-1)*y(k-2)", -0.0781), ("y(k-1)*y(k-3)", -0.0189), ("y(k-1)*y(k-4)", -0.0626),
    ("y(k-2)^2", -0.0221), ("y(k-2)*y(k-3)", -0.0617), ("y(k-2)*y(k-4)", -0.0378),
    ("y(k-3)^2", -0.0041), ("y(k-3)*y(k-4)", -0.0543), ("y(k-4)^2", -0.0603),
]


@dataclass(frozen=True)
class BenchmarkSystem:
    """A named benchmark: true model (or Duffing spec), excitation, noise, model set."""

    name: str
    model: TrueModel | DuffingSpec
    excitation: SignalSpec
    noise: SignalSpec | None
    model_spec: ModelSpec

    @property
    def true_terms(self) -> tuple[TermSpec, ...] | None:
        return self.model.terms if isinstance(self.model, TrueModel) else None


def builtin_system(name: str) -> BenchmarkSystem:
    """Look up one of ``S1`` .. ``S8`` or ``duffing``."""
    key = name.strip().upper()
    spec443 = ModelSpec(4, 4, 3)
    spec553 = ModelSpec(5, 5, 3)
    wun01 = WhiteUniform(0.0, 1.0)
    wun11 = WhiteUniform(-1.0, 1.0)
    if key == "S1":
        noise = WhiteGaussian(0.0, 0.05)
        model = _model("S1", [("1", 0.5), ("y(k-1)", 0.5), ("u(k-2)", 0.8),
                              ("u(k-1)^2", 1.0), ("y(k-2)^2", -0.05)], noise)
        return BenchmarkSystem("S1", model, wun01, noise, spec443)
    if key == "S2":
        noise = WhiteGaussian(0.0, 0.002)
        model = _model("S2", [("y(k-1)", 0.5), ("u(k-1)", 0.3), ("y(k-1)*u(k-1)", 0.3),
                              ("u(k-1)^2", 0.5)], noise)
        return BenchmarkSystem("S2", model, wun01, noise, spec443)
    if key == "S3":
        noise = WhiteGaussian(0.0, 0.33**2)
        model = _model("S3", [("y(k-1)", 0.8), ("u(k-1)", 0.4), ("u(k-1)^2", 0.4),
                              ("u(k-1)^3", 0.4)], noise)
        return BenchmarkSystem("S3", model, WhiteGaussian(0.0, 1.0), noise, spec443)
    if key == "S4":
        noise = WhiteGaussian(0.0, 0.002)
        model = _model("S4", [("y(k-1)", 0.1586), ("u(k-1)", 0.6777), ("y(k-2)^2", 0.3037),
                              ("y(k-2)*u(k-1)^2", -0.2566), ("u(k-3)^3", -0.0339)], noise)
        return BenchmarkSystem("S4", model, wun01, noise, spec443)
    if key == "S5":
        noise = WhiteGaussian(0.0, 0.004)
        model = _model("S5", [("y(k-1)*u(k-1)", 0.7), ("y(k-2)", -0.5), ("u(k-2)^2", 0.6),
                              ("y(k-2)*u(k-2)^2", -0.7)], noise)
        return BenchmarkSystem("S5", model, wun11, noise, spec443)
    if key == "S6":
        noise = WhiteGaussian(0.0, 0.004)
        model = _model("S6", [("y(k-1)^3", 0.2), ("y(k-1)*u(k-1)", 0.7), ("u(k-2)^2", 0.6),
                              ("y(k-2)*u(k-2)^2", -0.7), ("y(k-2)", -0.5)], noise)
        return BenchmarkSystem("S6", model, wun11, noise, spec443)
    if key == "S7":
        noise = WhiteGaussian(0.0, 0.01**2)
        return BenchmarkSystem("S7", _model("S7", _S7_TERMS, noise), wun01, noise, spec553)
    if key == "S8":
        noise = WhiteGaussian(0.0, 0.02)
        model = _model("S8", [("u(k-1)", 1.0), ("u(k-2)", 0.5), ("u(k-1)*u(k-2)", 0.25),
                              ("u(k-1)^3", -0.3)], noise,
                       noise_mode="output", noise_filter=(1.0, -0.8))
        excitation = Filtered(WhiteGaussian(0.0, 1.0), (0.3,), (1.0, -1.6, 0.64))
        return BenchmarkSystem("S8", model, excitation, noise, spec443)
    if key == "DUFFING":
        return BenchmarkSystem("duffing", DuffingSpec(), wun01, None, spec553)
    raise SpecificationError(f"unknown system {name!r}")


BUILTIN_SYSTEMS = ("S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "duffing")


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Paired input/output record with an estimation/validation split.

    Samples ``[0, split_index)`` are for estimation, the rest for validation.
    """

    u: np.ndarray
    y: np.ndarray
    split_index: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.u.shape != self.y.shape or self.u.ndim != 1:
            raise SpecificationError("u and y must be 1-D and of equal length")
        if not 0 < self.split_index < len(self.y):
            raise SpecificationError(
                f"split index {self.split_index} outside (0, {len(self.y)})"
            )

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n_validation(self) -> int:
        return self.n - self.split_index


def make_dataset(
    system: str | BenchmarkSystem,
    seed: int,
    n: int = 1000,
    split_index: int = 700,
    noise_free: bool = False,
) -> Dataset:
    """Generate one realization of a benchmark system."""
    if isinstance(system, str):
        system = builtin_system(system)
    input_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    u = generate_signal(system.excitation, n, np.random.default_rng(input_ss))
    meta = {"system": system.name, "seed": seed, "model_spec": system.model_spec.as_list(),
            "excitation": signal_to_dict(system.excitation), "noise_free": noise_free,
            "prng": "PCG64 via SeedSequence(seed).spawn(2): [input, noise]"}
    if isinstance(system.model, DuffingSpec):
        d = system.model
        y = simulate_duffing(d.omega_n, d.zeta, d.epsilon, u, d.fs, n, substeps=d.substeps)
        meta["duffing"] = d.to_dict()
    else:
        if noise_free or system.noise is None:
            e = np.zeros(n)
        else:
            e = generate_signal(system.noise, n, np.random.default_rng(noise_ss))
        y = simulate_narx(system.model, u, e)
        meta["true_model"] = system.model.to_dict()
    return Dataset(u, y, split_index, seed, meta)


def save_dataset(data: Dataset, path: str | Path) -> tuple[Path, Path]:
    """Write ``k,u,y`` CSV (1-based k) and a JSON metadata sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "u", "y"])
        for k, (u, y) in enumerate(zip(data.u, data.y), start=1):
            writer.writerow([k, repr(float(u)), repr(float(y))])
    meta_path = path.with_suffix(".json")
    record = dict(data.meta)
    record.update({"seed": data.seed, "split_index": data.split_index, "n": data.n})
    meta_path.write_text(json.dumps(record, indent=2))
    return path, meta_path


def load_dataset(path: str | Path, split_index: int | None = None) -> Dataset:
    """Read a dataset CSV; the sidecar JSON, if present, supplies the split."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames][:3] != ["k", "u", "y"]:
            raise SpecificationError(f"{path}: expected header k,u,y")
        rows = [(float(r["u"]), float(r["y"])) for r in reader]
    meta: dict = {}
    meta_path = path.with_suffix(".json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    if split_index is None:
        split_index = meta.get("split_index", int(round(0.7 * len(rows))))
    u, y = (np.array(col) for col in zip(*rows))
    return Dataset(u, y, int(split_index), meta.get("seed"), meta)
