"""Command-line entry point: ``dpm <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dpm import casegen, experiment
from dpm.audit import AuditLedger, export_archive, verify_archive
from dpm.backends import DEFAULT_SEED
from dpm.errors import DPMError
from dpm.experiment import ExperimentManifest, parse_budgets, parse_conditions
from dpm.pipeline import Condition
from dpm.projection import Budget
from dpm.replay_study import replay_study, reports_csv
from dpm.stats import PairedSample, paired_stats, stats_table_csv
from dpm.scoring import AXES, AXIS_LABELS, ScoreRecord
from dpm.tams import TamsInput, tams_select

log = logging.getLogger("dpm")


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "y", "on"):
        return True
    if value in ("0", "false", "no", "n", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _load_suite(suite_dir: str | None, seed: int) -> list[casegen.CaseBundle]:
    if suite_dir:
        return casegen.read_suite(suite_dir)
    return casegen.generate_suite(seed)


def cmd_gen_suite(args) -> int:
    suite = casegen.generate_suite(args.seed)
    bad = {b.case_id: casegen.validate_case(b) for b in suite}
    bad = {k: v for k, v in bad.items() if v}
    path = casegen.write_suite(suite, args.out, seed=args.seed)
    for b in suite:
        print(f"{b.case_id}\t{b.scale}\t{len(b.events)} events\t{b.total_chars} chars\t{b.truth.label}")
    print(f"manifest: {path}")
    if bad:
        for case_id, problems in bad.items():
            print(f"invalid {case_id}: {'; '.join(problems)}", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    suite = _load_suite(args.suite, args.seed)
    out = Path(args.out)
    manifest = ExperimentManifest(seed=args.seed, backend=args.backend, budgets=parse_budgets(args.budget),
                                  conditions=parse_conditions(args.condition), capture=args.audit,
                                  n_replays=args.replays, workers=args.workers)
    problems: list[str] = []
    if args.exp in (1, 3):
        result = experiment.run_exp1(suite, manifest)
        experiment.write_exp1(result, out / "exp1")
        print(result.table_csv(), end="")
        if args.exp == 3:
            scaling = experiment.run_exp3(result, suite)
            (out / "exp3").mkdir(parents=True, exist_ok=True)
            (out / "exp3" / "scaling.csv").write_text(scaling, encoding="utf-8")
            print(scaling, end="")
        problems += experiment.verify_exp1(result, suite)
    else:
        reports = experiment.run_exp2(suite, manifest)
        experiment.write_exp2(reports, manifest, out / "exp2")
        print(reports_csv(reports), end="")
        problems += experiment.verify_exp2(reports, manifest.backend_descriptor.get("deterministic", False))
    for p in problems:
        print(f"invariant violated: {p}", file=sys.stderr)
    return 1 if (args.verify and problems) else 0


def cmd_replay(args) -> int:
    suite = {b.case_id: b for b in _load_suite(args.suite, args.seed)}
    if args.case not in suite:
        print(f"unknown case {args.case!r}; known: {', '.join(sorted(suite))}", file=sys.stderr)
        return 2
    bundle = suite[args.case]
    budget = Budget.parse(args.budget) if args.budget else (
        experiment.SMALL_CASE_BUDGET if bundle.scale == casegen.SMALL else Budget.named("moderate"))
    report = replay_study(bundle, args.condition, budget, args.backend, args.replays, seed=args.seed)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(reports_csv([report]), end="")
    print(f"drifted_fraction={report.drifted_fraction:.3f} mean_perturbed_calls={report.mean_perturbed_calls:.3f}")
    problems = experiment.verify_exp2([report], args.backend == "extractive")
    for p in problems:
        print(f"invariant violated: {p}", file=sys.stderr)
    return 1 if (args.verify and problems) else 0


def cmd_stats(args) -> int:
    path = Path(args.results)
    scores = path / "scores.jsonl" if path.is_dir() else path
    if not scores.exists() and (path / "exp1" / "scores.jsonl").exists():
        scores = path / "exp1" / "scores.jsonl"
    records = [ScoreRecord.from_json(line) for line in scores.read_text(encoding="utf-8").splitlines() if line]
    budgets = sorted({r.budget_label for r in records}, key=lambda b: [r.budget_label for r in records].index(b))
    rows = []
    for budget in budgets:
        dpm = {r.case_id: r for r in records if r.budget_label == budget and r.condition == "dpm"}
        summ = {r.case_id: r for r in records if r.budget_label == budget and r.condition == "summ"}
        shared = sorted(set(dpm) & set(summ))
        for axis in AXES:
            if len(shared) < 2:
                rows.append((budget, AXIS_LABELS[axis], None))
                continue
            sample = PairedSample(tuple(shared), tuple(float(getattr(dpm[c], axis)) for c in shared),
                                  tuple(float(getattr(summ[c], axis)) for c in shared))
            rows.append((budget, AXIS_LABELS[axis], paired_stats(sample, args.resamples, args.seed)))
    print(stats_table_csv(rows), end="")
    return 0


def cmd_tams(args) -> int:
    decision = tams_select(TamsInput(args.replay, args.audit, args.isolation, args.ratio), args.threshold)
    print(json.dumps({"choice": decision.choice.value, "triggered_rule": decision.triggered_rule.value}))
    return 0


def cmd_audit_export(args) -> int:
    ledger_dir = Path(args.ledgers)
    ledger, run_id = AuditLedger.read(ledger_dir / f"{args.run}.ledger.jsonl")
    bundle = None
    if args.suite:
        case_id = args.run.split(".")[0]
        bundle = casegen.read_case(Path(args.suite) / case_id)
    out = Path(args.out or f"{args.run}.archive.json")
    log_path = None
    if bundle is not None:
        log_path = str(Path(args.suite) / bundle.case_id / bundle.log.file_name())
    export_archive(ledger, run_id, out, log=bundle.log if bundle else None, log_path=log_path,
                   include_log=args.include_log)
    ok = verify_archive(out)
    print(f"{out}\tsurfaces={ledger.surface_count(run_id).total}\tverified={ok}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpm", description="Projection memory workbench.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-suite", help="generate and store the case suite")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_suite)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--exp", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--backend", default="extractive")
    p.add_argument("--budget", default="all")
    p.add_argument("--condition", default="both", choices=("dpm", "summ", "both"))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--suite", help="stored suite directory (default: generate from --seed)")
    p.add_argument("--out", required=True)
    p.add_argument("--audit", choices=("digest", "full"), default="digest")
    p.add_argument("--replays", type=int, default=experiment.EXP2_REPLAYS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--verify", action="store_true", help="exit nonzero on any invariant violation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="replay one (case, condition) cell")
    p.add_argument("--case", required=True)
    p.add_argument("--condition", choices=[c.value for c in Condition], default="dpm")
    p.add_argument("--replays", type=int, default=experiment.EXP2_REPLAYS)
    p.add_argument("--backend", default="extractive")
    p.add_argument("--budget")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--suite")
    p.add_argument("--out")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("stats", help="paired statistics from stored scores")
    p.add_argument("--results", required=True)
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("tams", help="architecture selection rule")
    p.add_argument("--replay", type=_bool, default=False)
    p.add_argument("--audit", type=_bool, default=False)
    p.add_argument("--isolation", type=_bool, default=False)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--threshold", type=float, default=10.0)
    p.set_defaults(func=cmd_tams)

    p = sub.add_parser("audit-export", help="export one run as a self-verifying archive")
    p.add_argument("--run", required=True, help="run id, e.g. loan_L01.dpm.tight")
    p.add_argument("--ledgers", required=True, help="directory of ledger files")
    p.add_argument("--suite", help="suite directory, to reference or embed the event log")
    p.add_argument("--include-log", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DPMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
