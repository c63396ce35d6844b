"""Command-line entry point: ``narxfloat <subcommand> ...``.

Subcommands: simulate, identify, sweep, classify, freq, report.  Run options
can also come from a JSON config file (``--config``); a flag given on the
command line always wins over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import BUILTIN_SYSTEMS, builtin_system, make_dataset, save_dataset
from .errors import NarxFloatError, SpecificationError
from .harness import (
    EXIT_CONFIG,
    EXIT_OK,
    ExperimentConfig,
    classify_outcome,
    exit_code_for,
    overall_status,
    run_experiment,
    summarize,
    term_frequency,
)
from .order import CRITERIA
from .search import ALGORITHMS

logger = logging.getLogger("narxfloat")

# flag dest -> ExperimentConfig key
_RUN_KEYS = {
    "system": "system", "data": "dataset", "model_spec": "model_spec", "algo": "algorithm",
    "xi": "xi", "xi_min": "xi_min", "xi_max": "xi_max", "criterion": "criterion", "rho": "rho",
    "prediction_mode": "prediction_mode", "seeds": "seeds", "n": "n", "split": "split_index",
    "noise_free": "noise_free", "max_depth": "max_depth", "subset_mode": "subset_mode",
    "max_steps": "max_steps", "budget": "exhaustive_budget", "out": "output_dir",
    "workers": "workers",
}


def _split_terms(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(t.strip() for t in v.split(",") if t.strip())
    return out


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--system", help=f"built-in system: {', '.join(BUILTIN_SYSTEMS)}")
    src.add_argument("--data", help="dataset CSV with header k,u,y")
    p.add_argument("--model-spec", dest="model_spec", type=int, nargs=3,
                   metavar=("NU", "NY", "NL"), help="lags and degree of the candidate set")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--seed", dest="seeds", type=int, action="append",
                   help="data seed (repeatable)")
    p.add_argument("--xi", type=int, help="fixed cardinality (no sweep)")
    p.add_argument("--xi-min", dest="xi_min", type=int)
    p.add_argument("--xi-max", dest="xi_max", type=int)
    p.add_argument("--criterion", type=str.upper, choices=CRITERIA)
    p.add_argument("--rho", type=float)
    p.add_argument("--prediction-mode", dest="prediction_mode", choices=("one_step", "free_run"))
    p.add_argument("--n", type=int, help="samples to generate")
    p.add_argument("--split", type=int, help="first validation sample")
    p.add_argument("--noise-free", dest="noise_free", action="store_true", default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, help="O2S depth cap")
    p.add_argument("--subset-mode", dest="subset_mode", choices=("sequential", "exhaustive"))
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--budget", type=int, help="exhaustive subset budget")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel seeds")


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecificationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise SpecificationError("config file must hold a JSON object")
    return cfg


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge config file and flags into a validated :class:`ExperimentConfig`."""
    merged = _read_config(args.config)
    for dest, key in _RUN_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[key] = value
    if "system" in merged and "dataset" in merged:
        # a flag for one source replaces the other source from the file
        if args.system is not None:
            merged.pop("dataset")
        elif args.data is not None:
            merged.pop("system")
    return ExperimentConfig.from_dict(merged)


def _cmd_run(args, mode: str) -> int:
    config = build_config(args)
    results = run_experiment(config)
    for r in results:
        if r.error is not None:
            print(f"seed {r.seed}: FAILED ({r.error['type']}: {r.error['message']}) -> {r.directory}")
            continue
        rep = r.report
        if mode == "sweep":
            print(f"seed {r.seed}: {config.algorithm} sweep [{rep.xi_min}, {rep.xi_max}] -> {r.directory}")
            print(f"{'xi':>4} {'J':>12} {'E':>12} " + " ".join(f"{k:>10}" for k in CRITERIA))
            for row in rep.table():
                mark = " *" if row["xi"] == rep.chosen_xi else ""
                print(f"{row['xi']:>4d} {row['J']:>12.8f} {row['E']:>12.4e} "
                      + " ".join(f"{row[k]:>10.2f}" for k in CRITERIA) + mark)
            if rep.boundary_flag:
                print(f"note: {config.criterion} minimum sits on the interval boundary xi={rep.xi_max}")
        else:
            chosen = rep.chosen
            print(f"seed {r.seed}: xi={rep.chosen_xi} J={chosen.J:.8f} E={chosen.E:.4e} -> {r.directory}")
            for name, theta in zip(chosen.model.names, chosen.model.theta):
                print(f"    {theta:+.6g}  {name}")
            if r.outcome is not None:
                extra = ""
                if r.outcome.spurious:
                    extra += " spurious=" + ",".join(sorted(map(str, r.outcome.spurious)))
                if r.outcome.missing:
                    extra += " missing=" + ",".join(sorted(map(str, r.outcome.missing)))
                print(f"    outcome: {r.outcome.label}{extra}")
    if len(results) > 1:
        print(json.dumps(summarize(results)))
    return overall_status(results)


def _cmd_simulate(args) -> int:
    cfg = _read_config(args.config)
    system = args.system or cfg.get("system")
    if system is None:
        raise SpecificationError("simulate needs --system")
    seed = args.seed if args.seed is not None else cfg.get("seeds", [0])[0]
    n = args.n if args.n is not None else cfg.get("n", 1000)
    split = args.split if args.split is not None else cfg.get("split_index", 700)
    noise_free = args.noise_free or cfg.get("noise_free", False)
    data = make_dataset(system, seed, n, split, noise_free)
    out = args.out or f"{builtin_system(system).name}_seed{seed}.csv"
    csv_path, meta_path = save_dataset(data, out)
    print(f"wrote {csv_path} and {meta_path} ({data.n} samples, split {data.split_index})")
    return EXIT_OK


def _cmd_classify(args) -> int:
    found = _split_terms(args.found)
    if args.truth:
        truth = _split_terms(args.truth)
    elif args.system:
        terms = builtin_system(args.system).true_terms
        if terms is None:
            raise SpecificationError(f"{args.system} has no ground-truth term list")
        truth = [str(t) for t in terms]
    else:
        raise SpecificationError("classify needs --truth or --system")
    outcome = classify_outcome(found, truth)
    print(json.dumps(outcome.to_dict()))
    return EXIT_OK


def _load_sweep(path: str) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "sweep.json"
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecificationError(f"cannot read sweep {p}: {exc}") from exc


def _cmd_freq(args) -> int:
    report = _load_sweep(args.sweep)
    terms = _split_terms(args.terms) or None
    if terms is None and args.system:
        true_terms = builtin_system(args.system).true_terms
        terms = [str(t) for t in true_terms] if true_terms else None
    table = term_frequency(report, terms)
    print(table.format())
    if args.xi_star is not None:
        for t in table.terms:
            print(f"{t}: {'stable' if table.stable_from(t, args.xi_star) else 'unstable'} "
                  f"from xi={args.xi_star}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = []
    for d in args.runs:
        d = Path(d)
        row = {"run": d.name}
        if (d / "error.json").exists():
            err = json.loads((d / "error.json").read_text())
            row.update(status="error", error=f"{err['type']}: {err['message']}")
        elif (d / "outcome.json").exists():
            out = json.loads((d / "outcome.json").read_text())
            row.update(status="ok", xi=out.get("chosen_xi"), E=out.get("E"),
                       label=out.get("outcome", {}).get("label"),
                       terms=out.get("model", {}).get("terms"))
        else:
            row.update(status="incomplete")
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        for row in rows:
            if row["status"] == "ok":
                print(f"{row['run']}: xi={row['xi']} E={row['E']:.4e} {row['label'] or '-'}")
                print("    " + " + ".join(row["terms"] or []))
            else:
                print(f"{row['run']}: {row['status']} {row.get('error', '')}")
        labels = [r.get("label") for r in rows if r.get("label")]
        if len(rows) > 1 and labels:
            counts = {lab: labels.count(lab) for lab in sorted(set(labels))}
            print("outcomes: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="narxfloat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a benchmark dataset CSV")
    p.add_argument("--config")
    p.add_argument("--system", required=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--split", type=int)
    p.add_argument("--noise-free", dest="noise_free", action="store_true")
    p.add_argument("--out", help="CSV path (a .json sidecar is written next to it)")

    p = sub.add_parser("identify", help="select a structure and fit it")
    _add_run_options(p)
    p = sub.add_parser("sweep", help="run a cardinality sweep and print the criteria table")
    _add_run_options(p)

    p = sub.add_parser("classify", help="label a found subset against the truth")
    p.add_argument("--found", action="append", required=True, help="comma-separated terms")
    p.add_argument("--truth", action="append", help="comma-separated true terms")
    p.add_argument("--system", help="take the truth from a built-in system")

    p = sub.add_parser("freq", help="term selection frequency over a sweep")
    p.add_argument("--sweep", required=True, help="sweep.json or a run directory")
    p.add_argument("--terms", action="append", help="comma-separated terms of interest")
    p.add_argument("--system", help="use this system's true terms")
    p.add_argument("--xi-star", dest="xi_star", type=int)

    p = sub.add_parser("report", help="summarize run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--json", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command in ("identify", "sweep"):
            return _cmd_run(args, args.command)
        if args.command == "classify":
            return _cmd_classify(args)
        if args.command == "freq":
            return _cmd_freq(args)
        return _cmd_report(args)
    except NarxFloatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
