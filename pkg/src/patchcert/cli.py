"""Command line front end.

One binary, five subcommands:

  maskgen    build a covering mask set and verify it
  gen-data   emit a synthetic dataset
  evaluate   run defenders over a dataset and write metrics reports
  verify     run the attack oracle (exhaustive or random) or a fixture
  report     recompute a metrics report from saved evaluation records

Exit codes: 0 success (and, for verify, zero violations), 1 violations
or coverage failures found, 2 usage or configuration errors, 3 broken
input files. Outputs are byte-deterministic for a fixed configuration
and seed, whatever the worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Sequence

from . import dataset_io
from .classifiers import HashClassifier, LinearClassifier, Prediction, \
    TableClassifier, classify_mutants
from .cover import MaskSet, gen_multi_cover, gen_rect_cover, gen_square_cover, \
    verify_cover
from .defenders import (
    DEFENDER_KINDS,
    Defender,
    DefenderSpec,
    Verdict,
    assign_case,
    classify_sample,
    make_composite,
    make_defender,
)
from .errors import (
    BudgetExceededError,
    FileFormatError,
    InvalidInputError,
    PatchCertError,
    UnsupportedOperationError,
)
from .metrics import EvalRecord, compute_metrics
from .oracle import (
    CHECK_DEF1,
    CHECK_THM1,
    AttackConfig,
    check_profile_fixture,
    run_soundness,
)
from .tensor import PatchSpec

WORKERS_ENV = "PATCHCERT_WORKERS"

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if value < 1:
        raise InvalidInputError(f"{WORKERS_ENV} must be at least 1")
    return value


def _positive(name: str):
    def parse(text: str) -> int:
        value = int(text)
        if value < 1:
            raise argparse.ArgumentTypeError(f"{name} must be at least 1")
        return value

    return parse


def _non_negative(name: str):
    def parse(text: str) -> int:
        value = int(text)
        if value < 0:
            raise argparse.ArgumentTypeError(f"{name} must be non-negative")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchcert",
        description="Mask-based certified detection of adversarial patches, "
        "with brute-force soundness checking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("maskgen", help="generate and verify a covering mask set")
    p.add_argument("--plane", nargs=2, type=_positive("plane"), required=True,
                   metavar=("H", "W"))
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--patch-size", type=_positive("patch size"))
    group.add_argument("--patch-area", type=_positive("patch area"))
    p.add_argument("--patches", type=_positive("patches"), default=1,
                   help="number of disjoint patches (square patches only)")
    p.add_argument("--masks-per-axis", type=_positive("masks per axis"),
                   required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-verify", action="store_true",
                   help="write the set without the exhaustive coverage check")
    p.set_defaults(func=cmd_maskgen)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--count", type=_positive("count"), required=True)
    p.add_argument("--plane", nargs=2, type=_positive("plane"), required=True,
                   metavar=("H", "W"))
    p.add_argument("--channels", type=_positive("channels"), default=1)
    p.add_argument("--alphabet", type=_positive("alphabet"), default=256)
    p.add_argument("--num-labels", type=_positive("num labels"), default=10)
    p.add_argument("--seed", type=_non_negative("seed"), default=0)
    p.add_argument("--label-mode", choices=dataset_io.LABEL_MODES,
                   default="classifier")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("evaluate", help="run defenders and write metric reports")
    _add_common_inputs(p)
    _add_defender_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=_positive("workers"), default=None)
    p.add_argument("--timing", action="store_true",
                   help="print per-sample wall time")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="attack-oracle soundness checks")
    _add_common_inputs(p, required=False)
    _add_defender_flags(p)
    p.add_argument("--fixture", help="profile fixture JSON instead of a dataset")
    p.add_argument("--defender-override",
                   help='mixed pair, e.g. "certify=hicert:0.8,warn=doma"')
    p.add_argument("--patch-size", type=_positive("patch size"))
    p.add_argument("--patch-area", type=_positive("patch area"))
    p.add_argument("--patches", type=_positive("patches"), default=1)
    p.add_argument("--mode", choices=("exhaustive", "random"),
                   default="exhaustive")
    p.add_argument("--trials", type=_non_negative("trials"), default=1000)
    p.add_argument("--attack-seed", type=_non_negative("attack seed"), default=0)
    p.add_argument("--budget", type=_positive("budget"), default=None)
    p.add_argument("--checks", default="def1",
                   help="comma list from def1,thm1,thm2-paths")
    p.add_argument("--out", help="write the soundness report here")
    p.add_argument("--workers", type=_positive("workers"), default=None)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="recompute metrics from saved records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _add_common_inputs(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--dataset", required=required)
    p.add_argument("--masks", required=required)
    p.add_argument("--classifier", choices=("hash", "linear", "table"),
                   default="hash")
    p.add_argument("--num-labels", type=_positive("num labels"), default=10)
    p.add_argument("--seed", type=_non_negative("seed"), default=0)
    p.add_argument("--predictions", help="prediction table for --classifier table")


def _add_defender_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--defender", choices=DEFENDER_KINDS, default="hicert")
    p.add_argument("--tau", type=float, action="append", default=None,
                   help="threshold; repeat for a sweep (evaluate only)")


def _build_classifier(args):
    if args.classifier == "hash":
        return HashClassifier(seed=args.seed, num_labels=args.num_labels)
    if args.classifier == "linear":
        return LinearClassifier(seed=args.seed, num_labels=args.num_labels)
    if not args.predictions:
        raise InvalidInputError("--classifier table needs --predictions")
    return dataset_io.load_predictions(args.predictions)


def _classifier_doc(args) -> dict:
    doc = {"kind": args.classifier}
    if args.classifier in ("hash", "linear"):
        doc["seed"] = args.seed
        doc["num_labels"] = args.num_labels
    else:
        doc["predictions"] = args.predictions
    return doc


def _taus(args) -> list[float]:
    spec_probe = DefenderSpec(args.defender, 0.0)
    if not spec_probe.uses_tau:
        return [0.0]
    if not args.tau:
        raise InvalidInputError(f"--defender {args.defender} needs --tau")
    return args.tau


def _parse_override(text: str) -> Defender:
    parts: dict[str, DefenderSpec] = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk or "=" not in chunk:
            raise InvalidInputError(
                f'bad override chunk {chunk!r}; expected role=kind[:tau]'
            )
        role, _, value = chunk.partition("=")
        role = role.strip()
        if role not in ("certify", "warn"):
            raise InvalidInputError(f"override role must be certify or warn, got {role!r}")
        kind, _, tau_text = value.partition(":")
        tau = float(tau_text) if tau_text else 0.0
        parts[role] = DefenderSpec(kind.strip(), tau)
    if set(parts) != {"certify", "warn"}:
        raise InvalidInputError("override needs both certify= and warn=")
    return make_composite(parts["certify"], parts["warn"])


def _tau_tag(tau: float) -> str:
    return f"{tau:g}".replace("-", "m")


def _resolved_workers(args) -> int:
    return args.workers if args.workers is not None else _default_workers()


# ---------- subcommands ----------


def cmd_maskgen(args) -> int:
    h, w = args.plane
    if args.patch_area is not None:
        if args.patches != 1:
            raise InvalidInputError("multiple patches need --patch-size")
        mask_set = gen_rect_cover((h, w), args.patch_area, args.masks_per_axis)
    else:
        mask_set = gen_square_cover((h, w), args.patch_size, args.masks_per_axis)
        if args.patches > 1:
            mask_set = gen_multi_cover(mask_set, args.patches)
    if args.skip_verify:
        dataset_io.save_maskset(mask_set, args.out)
        print(f"masks: {len(mask_set)} (coverage not verified)")
        return EXIT_OK
    report = verify_cover(mask_set)
    dataset_io.save_maskset(mask_set, args.out)
    if report.ok:
        print(
            f"masks: {len(mask_set)}, cover: ok "
            f"({report.placements_checked} placements)"
        )
        return EXIT_OK
    print(
        f"masks: {len(mask_set)}, cover: FAILED at placement "
        f"{[r.to_list() for r in report.first_uncovered]}"
    )
    return EXIT_FINDINGS


def cmd_gen_data(args) -> int:
    records = dataset_io.gen_synthetic_dataset(
        count=args.count,
        plane=tuple(args.plane),
        channels=args.channels,
        alphabet_size=args.alphabet,
        num_labels=args.num_labels,
        seed=args.seed,
        label_mode=args.label_mode,
    )
    dataset_io.save_dataset(records, args.out)
    print(f"wrote {len(records)} samples to {args.out}")
    return EXIT_OK


def _evaluate_one(classifier, record, mask_set, defender) -> EvalRecord:
    profile = classify_mutants(
        classifier, record.image, mask_set, sample_id=record.id
    )
    verdict = defender.verdict(profile, record.true_label)
    taxonomy = classify_sample(profile, record.true_label)
    return EvalRecord(
        sample_id=record.id,
        true_label=record.true_label,
        base=profile.base,
        verdict=verdict,
        consistent=taxonomy.consistent,
    )


def cmd_evaluate(args) -> int:
    records = dataset_io.load_dataset(args.dataset)
    mask_set = dataset_io.load_maskset(args.masks)
    classifier = _build_classifier(args)
    os.makedirs(args.out_dir, exist_ok=True)
    for tau in _taus(args):
        defender = make_defender(DefenderSpec(args.defender, tau))
        tag = args.defender
        if DefenderSpec(args.defender, tau).uses_tau:
            tag = f"{args.defender}_tau{_tau_tag(tau)}"
        eval_records = []
        records_path = os.path.join(args.out_dir, f"records_{tag}.jsonl")
        with open(records_path, "w", encoding="utf-8") as fh:
            for record in records:
                t0 = time.perf_counter()
                er = _evaluate_one(classifier, record, mask_set, defender)
                if args.timing:
                    ms = (time.perf_counter() - t0) * 1000
                    print(f"{er.sample_id}: {ms:.2f} ms")
                eval_records.append(er)
                doc = {
                    "sample_id": er.sample_id,
                    "true_label": er.true_label,
                    "base_label": er.base.label,
                    "base_confidence": er.base.confidence,
                    "certified": er.verdict.certified,
                    "warned": er.verdict.warned,
                    "consistent": er.consistent,
                    "case": (
                        assign_case(er.correct, er.verdict)
                        if er.verdict.warned is not None
                        else None
                    ),
                }
                fh.write(dataset_io.dumps_canonical(doc) + "\n")
        report = compute_metrics(eval_records)
        doc = report.to_dict()
        doc["config"] = {
            "dataset": args.dataset,
            "masks": args.masks,
            "classifier": _classifier_doc(args),
            "defender": {"kind": args.defender, "tau": tau,
                         "name": defender.name},
        }
        report_path = os.path.join(args.out_dir, f"report_{tag}.json")
        dataset_io.save_report(doc, report_path)
        print(f"{defender.name}: wrote {report_path}")
    return EXIT_OK


def _parse_checks(text: str) -> frozenset:
    mapping = {"def1": CHECK_DEF1, "thm1": CHECK_THM1, "thm2-paths": CHECK_DEF1}
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part not in mapping:
            raise InvalidInputError(
                f"unknown check {part!r}; expected def1, thm1, thm2-paths"
            )
        out.add(mapping[part])
    if not out:
        raise InvalidInputError("no checks requested")
    return frozenset(out)


def _verify_fixture(args, defender: Defender) -> int:
    fixture = dataset_io.load_profile_fixture(args.fixture)
    report = check_profile_fixture(fixture, defender)
    doc = {"fixture": args.fixture, "report": report.to_dict()}
    if args.out:
        dataset_io.save_report(doc, args.out)
    n = len(report.violations)
    certified = "certified" if report.certified_count else "not certified"
    print(f"{defender.name}: benign sample {certified}, "
          f"{report.variants_evaluated} variants, {n} violation(s)")
    for v in report.violations:
        print(f"  violation: variant {v['variant_id']} "
              f"labeled {v['variant_label']} drew no warning")
    return EXIT_FINDINGS if n else EXIT_OK


def cmd_verify(args) -> int:
    if args.defender_override:
        defender = _parse_override(args.defender_override)
    else:
        taus = _taus(args)
        if len(taus) != 1:
            raise InvalidInputError("verify takes a single --tau")
        defender = make_defender(DefenderSpec(args.defender, taus[0]))

    if args.fixture:
        return _verify_fixture(args, defender)

    if not args.dataset or not args.masks:
        raise InvalidInputError("verify needs --dataset and --masks (or --fixture)")
    records = dataset_io.load_dataset(args.dataset)
    mask_set = dataset_io.load_maskset(args.masks)
    classifier = _build_classifier(args)
    checks = _parse_checks(args.checks)

    spec = mask_set.spec
    if args.patch_size or args.patch_area or args.patches > 1:
        h, w = spec.plane_height, spec.plane_width
        if args.patch_area:
            spec = PatchSpec.rectangle(h, w, args.patch_area)
        elif args.patches > 1:
            spec = PatchSpec.multi(h, w, args.patches, args.patch_size)
        elif args.patch_size:
            spec = PatchSpec.square(h, w, args.patch_size)

    cfg = AttackConfig(
        patch_spec=spec,
        mode=args.mode,
        trials=args.trials,
        seed=args.attack_seed,
        budget=args.budget if args.budget else 10_000_000,
    )
    workers = _resolved_workers(args)
    t0 = time.perf_counter()
    run = run_soundness(
        classifier, records, mask_set, [defender], cfg,
        checks=checks, workers=workers,
    )
    elapsed = time.perf_counter() - t0

    findings = 0
    doc: dict = {"mode": cfg.mode, "samples": run.samples, "reports": {}}
    doc["config"] = {
        "dataset": args.dataset,
        "masks": args.masks,
        "classifier": _classifier_doc(args),
        "defender": {"name": defender.name},
        "attack": {
            "patch_spec": spec.to_dict(),
            "mode": cfg.mode,
            "trials": cfg.trials if cfg.mode == "random" else None,
            "seed": cfg.seed,
            "budget": cfg.budget,
        },
        "checks": sorted(checks),
    }
    if run.def1:
        rep = run.def1[defender.name]
        findings += len(rep.violations)
        doc["reports"]["def1"] = rep.to_dict()
        print(
            f"def1 [{defender.name}]: {rep.certified_count}/{rep.samples_checked} "
            f"certified, {rep.variants_evaluated} variants, "
            f"{len(rep.violations)} violation(s)"
        )
    if run.theorem1 is not None:
        rep = run.theorem1
        findings += len(rep.thm1_violations)
        doc["reports"]["thm1"] = rep.to_dict()
        print(
            f"thm1: {rep.variants_evaluated} variants, "
            f"{len(rep.thm1_violations)} counterexample(s)"
        )
    if args.timing:
        print(f"elapsed: {elapsed:.2f} s ({run.samples} samples)")
    if args.out:
        dataset_io.save_report(doc, args.out)
    return EXIT_FINDINGS if findings else EXIT_OK


def cmd_report(args) -> int:
    eval_records = []
    for lineno, obj in dataset_io._read_jsonl(args.records):
        try:
            eval_records.append(
                EvalRecord(
                    sample_id=obj["sample_id"],
                    true_label=obj["true_label"],
                    base=Prediction(obj["base_label"], obj["base_confidence"]),
                    verdict=Verdict(obj["certified"], obj["warned"]),
                    consistent=obj["consistent"],
                )
            )
        except (KeyError, TypeError) as e:
            raise FileFormatError(args.records, lineno, f"bad record: {e}")
    report = compute_metrics(eval_records)
    doc = report.to_dict()
    doc["config"] = {"records": args.records}
    dataset_io.save_report(doc, args.out)
    print(f"wrote {args.out} ({report.total} records)")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except BudgetExceededError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, UnsupportedOperationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except PatchCertError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
