"""Batch command-line front door.

Subcommands: estimate, simulate, wtp, recover, summarize. Exit codes:
0 success, 1 model/convergence failure (diagnostics are still written),
2 input error. All randomness flows from explicit --seed flags; omitting
one means seed 0, never entropy. Identical invocations produce
byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import load_long_table, save_long_table, summarize_attributes
from .errors import DataParseError, PanelMxlError, SchemaError
from .estimate import estimate_pipeline, result_from_json, result_to_json
from .modelspec import format_model_spec, parse_model_spec, validate_spec
from .serialize import canonical_json
from .simulate import generate_design, simulate_choices, truth_from_mapping
from .wtp import build_report, report_csv_lines


def _read_text(path, what: str) -> str:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{what} file not found: {p}")
    return p.read_text(encoding="utf-8")


def _read_json(path, what: str) -> dict:
    text = _read_text(path, what)
    try:
        return json.loads(text)
    except ValueError as e:
        raise DataParseError(f"{what} file {path} is not valid JSON: {e}")


def _load_spec(path):
    return parse_model_spec(_read_text(path, "spec"))


def _truth_mapping(doc: dict) -> dict:
    # Accept both a result document ({"estimates": {...}}) and a flat map.
    return doc["estimates"] if "estimates" in doc else doc


def _parse_primes(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise DataParseError(f"--halton-primes must be a comma list of ints, "
                             f"got {text!r}")


def _default_threads() -> int:
    return os.cpu_count() or 1


def cmd_estimate(args) -> int:
    dataset = load_long_table(args.data)
    spec = _load_spec(args.spec)
    violations = validate_spec(spec, dataset)
    if violations:
        for v in violations:
            print(f"error: {v}", file=sys.stderr)
        return 2
    result = estimate_pipeline(dataset, spec, n_draws=args.draws,
                               burn_in=args.burn_in,
                               primes=_parse_primes(args.halton_primes),
                               threads=args.threads)
    Path(args.out).write_text(result_to_json(result), encoding="utf-8")
    healthy = result.converged and bool(np.isfinite(result.robust_se).all())
    status = "converged" if result.converged else "NOT converged"
    if result.converged and not healthy:
        status += " (covariance unavailable)"
    print(f"{status} after {result.iterations} iterations; "
          f"LL {result.ll_final:.4f}, adjusted rho-square "
          f"{result.adjusted_rho_sq:.4f}; wrote {args.out}")
    return 0 if healthy else 1


def cmd_simulate(args) -> int:
    spec = _load_spec(args.spec)
    truth = truth_from_mapping(spec, _truth_mapping(_read_json(args.truth, "truth")),
                               seed=args.seed)
    design = generate_design(args.n, seed=args.seed)
    dataset = simulate_choices(design, truth)
    save_long_table(dataset, args.out)
    echo = {
        "seed": truth.seed,
        "estimates": {n: float(v) for n, v in
                      zip(spec.estimated_names(), truth.values)},
        "spec_echo": format_model_spec(spec),
    }
    truth_path = Path(args.out).with_suffix(".truth.json")
    truth_path.write_text(canonical_json(echo) + "\n", encoding="utf-8")
    print(f"wrote {dataset.n_observations} tasks for "
          f"{len(dataset.individuals)} individuals to {args.out} "
          f"(truth echoed to {truth_path})")
    return 0


def cmd_wtp(args) -> int:
    result = result_from_json(_read_text(args.result, "result"))
    scenarios = (args.scenario,) if args.scenario else ("low", "moderate", "extreme")
    report = build_report(result, scenarios)
    print(f"{'attribute':<22}{'scenario':<12}{'value':>12}  {'direction':<12}unit")
    for row in (*report.rows, *report.scenario_rows):
        print(f"{row.attribute:<22}{row.scenario:<12}{row.amount:>12.2f}  "
              f"{row.direction:<12}{row.unit}")
    if report.cov_table:
        print("\ncoefficient of variation (spread / location):")
        for name, cov in report.cov_table:
            print(f"  {name:<22}{cov:>10.3f}")
        print("share of population with a positive coefficient:")
        for name, share in report.sign_shares:
            print(f"  {name:<22}{share:>10.3f}")
    if args.out:
        Path(args.out).write_text("\n".join(report_csv_lines(report)) + "\n",
                                  encoding="utf-8")
        print(f"\nwrote {args.out}")
    return 0


def cmd_recover(args) -> int:
    spec = _load_spec(args.spec)
    truth = truth_from_mapping(spec, _truth_mapping(_read_json(args.truth, "truth")),
                               seed=args.seed)
    design = generate_design(args.n, seed=args.seed)
    dataset = simulate_choices(design, truth)
    result = estimate_pipeline(dataset, spec, n_draws=args.draws,
                               threads=args.threads)
    if args.out:
        Path(args.out).write_text(result_to_json(result), encoding="utf-8")

    # Fixed-parameter slots, identified structurally (not by name suffix).
    fixed_slot = []
    for p in spec.parameters:
        fixed_slot.append(not p.is_random)
        if p.is_random:
            fixed_slot.append(False)

    print(f"{'parameter':<22}{'truth':>12}{'estimate':>12}{'robust_se':>12}"
          f"{'z':>8}  within2se")
    n_within = 0
    signs_ok = True
    for i, name in enumerate(result.names):
        t, e, se = truth.values[i], result.estimates[i], result.robust_se[i]
        z = (e - t) / se if se > 0 else float("nan")
        within = abs(z) <= 2.0
        n_within += within
        if fixed_slot[i] and np.sign(e) != np.sign(t) and t != 0.0:
            signs_ok = False
        print(f"{name:<22}{t:>12.4f}{e:>12.4f}{se:>12.4f}{z:>8.2f}  "
              f"{'yes' if within else 'NO'}")
    k = len(result.names)
    print(f"\n{n_within}/{k} parameters within 2 robust SEs of truth; "
          f"fixed-parameter signs {'match' if signs_ok else 'DIFFER'}; "
          f"LL {result.ll_final:.3f}; "
          f"{'converged' if result.converged else 'NOT converged'}")
    return 0 if result.converged else 1


def cmd_summarize(args) -> int:
    dataset = load_long_table(args.data)
    print(f"{'attribute':<22}{'min':>10}{'max':>10}{'mean':>12}{'sd':>12}")
    for s in summarize_attributes(dataset):
        print(f"{s.name:<22}{s.minimum:>10.3f}{s.maximum:>10.3f}"
              f"{s.mean:>12.4f}{s.sd:>12.4f}")
    print(f"\n{len(dataset.individuals)} individuals, "
          f"{dataset.n_observations} choice tasks, "
          f"{dataset.n_alternatives} alternatives")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelmxl",
        description="Panel mixed logit estimation in preference or "
                    "willingness-to-pay space, with WTP reporting and "
                    "synthetic-data recovery checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate a model on a long-format CSV")
    p.add_argument("--data", required=True, help="long-format choice CSV (.gz ok)")
    p.add_argument("--spec", required=True, help="model spec file")
    p.add_argument("--draws", required=True, type=int, help="Halton draws per person")
    p.add_argument("--burn-in", type=int, default=10,
                   help="leading Halton points to discard (default 10)")
    p.add_argument("--seed", type=int, default=0,
                   help="reserved; estimation itself is deterministic")
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--halton-primes", default=None,
                   help="comma list overriding the default primes 2,3,5,...")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker cap for per-individual parallelism")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="write synthetic choices at known parameters")
    p.add_argument("--spec", required=True)
    p.add_argument("--truth", required=True,
                   help="JSON with parameter values (a result document works)")
    p.add_argument("--n", required=True, type=int, help="number of individuals")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path (.gz ok)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("wtp", help="money-value report from a result JSON")
    p.add_argument("--result", required=True)
    p.add_argument("--scenario", choices=("low", "moderate", "extreme"), default=None)
    p.add_argument("--out", default=None, help="also write the report as CSV")
    p.set_defaults(func=cmd_wtp)

    p = sub.add_parser("recover", help="simulate at known truth, re-estimate, compare")
    p.add_argument("--spec", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--draws", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", default=None, help="optionally write the result JSON")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("summarize", help="attribute summary of a choice CSV")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PanelMxlError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
