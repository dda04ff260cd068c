"""Exhaustive attack oracle for soundness checking.

Certification claims are universally quantified over every in-scope
tampered variant of a sample, so at desk scale they can be checked by
brute force: enumerate every (placement, content) pair, classify the
variant and its one-mask mutants, and confirm that each harmful variant
draws a warning. Violations are recorded in the report, never raised;
negative controls rely on being able to count them.

The scan also attributes every warned harmful variant to the warning
clause that caught it (label difference or low confidence), and can
check the stronger claim that a consistent covering mask forces a label
difference among the variant's mutants, independent of any defender.
"""

from __future__ import annotations

import hashlib
import itertools
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .classifiers import Prediction, TableClassifier, classify_mutants
from .cover import MaskSet
from .dataset_io import DatasetRecord, ProfileFixture
from .defenders import Defender, MutantProfile
from .errors import (
    BudgetExceededError,
    DimensionMismatchError,
    InvalidInputError,
    UnsupportedOperationError,
)
from .tensor import Image, PatchSpec, Placement, apply_mask, apply_patch, \
    count_placements, iter_placements, mask_covers

__all__ = [
    "DEFAULT_BUDGET",
    "AttackConfig",
    "SoundnessReport",
    "SoundnessRun",
    "enumerate_variants",
    "count_variants",
    "check_certified_detection",
    "check_theorem1",
    "check_profile_fixture",
    "run_soundness",
    "defense_success_ratio",
    "merge_reports",
]

DEFAULT_BUDGET = 10_000_000

CHECK_DEF1 = "def1"
CHECK_THM1 = "thm1"
CHECK_RSUC = "rsuc"
ALL_CHECKS = frozenset({CHECK_DEF1, CHECK_THM1, CHECK_RSUC})

CLAUSE_LABEL_DIFF = "label_difference"
CLAUSE_LOW_CONF = "low_confidence"


@dataclass(frozen=True)
class AttackConfig:
    """What the adversary may do, and how the oracle explores it.

    Exhaustive mode refuses to start when the variant count exceeds the
    budget; it never silently samples. Random mode draws `trials`
    placement/content pairs i.i.d. from a seeded generator.
    """

    patch_spec: PatchSpec
    mode: str = "exhaustive"
    trials: int = 0
    seed: int = 0
    alphabet_size: int | None = None
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.mode not in ("exhaustive", "random"):
            raise InvalidInputError(f"unknown attack mode {self.mode!r}")
        if self.mode == "random" and self.trials < 0:
            raise InvalidInputError("trials must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must fit in 64 bits")
        if self.budget < 1:
            raise InvalidInputError("budget must be positive")

    def resolve_alphabet(self, image: Image) -> int:
        a = self.alphabet_size if self.alphabet_size is not None else image.alphabet_size
        if not 2 <= a <= image.alphabet_size:
            raise InvalidInputError(
                f"content alphabet {a} must lie in [2, {image.alphabet_size}]"
            )
        return a


@dataclass
class SoundnessReport:
    """Tally of one oracle run; merging is commutative and associative."""

    defender: str
    mode: str
    samples_checked: int = 0
    certified_count: int = 0
    variants_evaluated: int = 0
    violations: list[dict] = field(default_factory=list)
    thm1_violations: list[dict] = field(default_factory=list)
    thm2_clause_stats: dict[str, int] = field(
        default_factory=lambda: {CLAUSE_LABEL_DIFF: 0, CLAUSE_LOW_CONF: 0}
    )

    @property
    def ok(self) -> bool:
        return not self.violations and not self.thm1_violations

    def to_dict(self) -> dict:
        return {
            "defender": self.defender,
            "mode": self.mode,
            "samples_checked": self.samples_checked,
            "certified_count": self.certified_count,
            "variants_evaluated": self.variants_evaluated,
            "violations": self.violations,
            "thm1_violations": self.thm1_violations,
            "thm2_clause_stats": dict(self.thm2_clause_stats),
        }


def merge_reports(reports: Iterable[SoundnessReport]) -> SoundnessReport:
    """Fold per-sample reports into one; input order fixes list order."""
    merged: SoundnessReport | None = None
    for r in reports:
        if merged is None:
            merged = SoundnessReport(r.defender, r.mode)
        elif (merged.defender, merged.mode) != (r.defender, r.mode):
            raise InvalidInputError("cannot merge reports from different runs")
        merged.samples_checked += r.samples_checked
        merged.certified_count += r.certified_count
        merged.variants_evaluated += r.variants_evaluated
        merged.violations.extend(r.violations)
        merged.thm1_violations.extend(r.thm1_violations)
        for k, v in r.thm2_clause_stats.items():
            merged.thm2_clause_stats[k] = merged.thm2_clause_stats.get(k, 0) + v
    if merged is None:
        raise InvalidInputError("no reports to merge")
    return merged


# ---------- variant enumeration ----------


def count_variants(
    image: Image, cfg: AttackConfig, cap: int | None = None
) -> tuple[int, bool]:
    """Exact number of in-scope variants, or a lower bound.

    The second element says whether the count is exact. Only the multi
    kind ever returns a bound: its placements are counted by
    enumeration, which stops early once `cap` variants are exceeded.
    """
    spec = cfg.patch_spec
    a = cfg.resolve_alphabet(image)
    c = image.channels
    if spec.kind == "square":
        placements, _ = count_placements(spec)
        return placements * a ** (spec.size * spec.size * c), True
    if spec.kind == "rectangle":
        h, w = spec.plane_height, spec.plane_width
        total = 0
        for rh in range(1, min(h, spec.area) + 1):
            max_rw = min(w, spec.area // rh)
            for rw in range(1, max_rw + 1):
                total += (h - rh + 1) * (w - rw + 1) * a ** (rh * rw * c)
        return total, True
    per_placement = a ** (spec.count * spec.size * spec.size * c)
    if cap is not None and per_placement > cap:
        return per_placement, False
    placement_cap = None if cap is None else cap // per_placement + 1
    placements, exact = count_placements(spec, cap=placement_cap)
    return placements * per_placement, exact


def _check_spec_matches(image: Image, spec: PatchSpec) -> None:
    if (spec.plane_height, spec.plane_width) != (image.height, image.width):
        raise DimensionMismatchError(
            f"patch spec plane {spec.plane_height}x{spec.plane_width} does not "
            f"match image {image.height}x{image.width}"
        )


def _guard_budget(image: Image, cfg: AttackConfig) -> None:
    if cfg.mode == "random":
        if cfg.trials > cfg.budget:
            raise BudgetExceededError(cfg.trials, cfg.budget)
        return
    total, exact = count_variants(image, cfg, cap=cfg.budget)
    if total > cfg.budget:
        raise BudgetExceededError(total, cfg.budget, exact=exact)


def _sample_rng(seed: int, sample_id: str) -> random.Random:
    digest = hashlib.blake2b(
        sample_id.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    return random.Random(int.from_bytes(digest, "little"))


def _random_pairs(
    image: Image, cfg: AttackConfig, sample_id: str
) -> Iterator[tuple[Placement, tuple[int, ...]]]:
    placements = list(iter_placements(cfg.patch_spec))
    a = cfg.resolve_alphabet(image)
    c = image.channels
    rng = _sample_rng(cfg.seed, sample_id)
    for _ in range(cfg.trials):
        placement = placements[rng.randrange(len(placements))]
        npix = sum(r.area for r in placement) * c
        content = tuple(rng.randrange(a) for _ in range(npix))
        yield placement, content


def enumerate_variants(
    image: Image, cfg: AttackConfig, sample_id: str = "sample"
) -> Iterator[tuple[Placement, tuple[int, ...], Image]]:
    """Yield (placement, content, tampered image) for every in-scope variant.

    Exhaustive order is lexicographic: placements as iter_placements
    gives them, contents counting upward in base alphabet with the last
    value fastest. Random mode yields `trials` i.i.d. draws instead and
    may repeat itself.
    """
    _check_spec_matches(image, cfg.patch_spec)
    _guard_budget(image, cfg)
    a = cfg.resolve_alphabet(image)
    c = image.channels
    if cfg.mode == "random":
        for placement, content in _random_pairs(image, cfg, sample_id):
            yield placement, content, apply_patch(image, placement, content)
        return
    for placement in iter_placements(cfg.patch_spec):
        npix = sum(r.area for r in placement) * c
        for content in itertools.product(range(a), repeat=npix):
            yield placement, content, apply_patch(image, placement, content)


def _content_digest(content: Sequence[int]) -> str:
    if all(v < 256 for v in content):
        data = bytes(content)
    else:
        data = b"".join(v.to_bytes(4, "little") for v in content)
    return hashlib.blake2b(data, digest_size=8).hexdigest()


# ---------- the scan engine ----------


class _PlacementPlan:
    """Everything the inner loop needs about one placement, precomputed."""

    __slots__ = (
        "placement",
        "placement_doc",
        "positions",
        "proj_positions",
        "covering",
        "consistent_cover",
    )

    def __init__(
        self,
        placement: Placement,
        image: Image,
        mask_set: MaskSet,
        benign_labels: Sequence[int],
        true_label: int,
    ):
        self.placement = placement
        self.placement_doc = [r.to_list() for r in placement]
        c = image.channels
        w = image.width
        coords: list[tuple[int, int]] = []
        positions: list[int] = []
        for r in placement:
            for y in range(r.top, r.bottom):
                for x in range(r.left, r.right):
                    for ch in range(c):
                        coords.append((y, x))
                        positions.append((y * w + x) * c + ch)
        self.positions = positions
        grids = [m.to_matrix() for m in mask_set.masks]
        self.proj_positions = [
            tuple(
                k for k, (y, x) in enumerate(coords) if not grid[y][x]
            )
            for grid in grids
        ]
        self.covering = tuple(
            i for i, m in enumerate(mask_set.masks) if mask_covers(m, placement)
        )
        self.consistent_cover = any(
            benign_labels[i] == true_label for i in self.covering
        )


class _MutantOracle:
    """Classify one-mask mutants of tampered variants, with memoization.

    A variant's mutant under mask i is the masked original with the
    patch content written back at the patch positions that survive the
    mask. Its pixels therefore depend only on (mask, surviving content
    values), which is the memo key; the cache stores real classifier
    outputs on real mutant bytes and assumes nothing else.
    """

    def __init__(self, classifier, image: Image, mask_set: MaskSet):
        self.classifier = classifier
        self.image = image
        self.mask_set = mask_set
        self.masked_bases = [apply_mask(image, m) for m in mask_set.masks]
        self.cache: dict[tuple, Prediction] = {}
        self.fast = (
            image.bytes_per_pixel == 1
            and hasattr(classifier, "_predict_packed")
        )
        if self.fast:
            self.masked_packed = [img.packed for img in self.masked_bases]

    def classify_variant(self, plan: _PlacementPlan, content) -> Prediction:
        if self.fast:
            buf = bytearray(self.image.packed)
            for pos, v in zip(plan.positions, content):
                buf[pos] = v
            label, conf = self.classifier._predict_packed(bytes(buf))
            return Prediction(label, conf)
        variant = apply_patch(self.image, plan.placement, content)
        return self.classifier.classify(variant)

    def mutant(self, plan: _PlacementPlan, content, mask_idx: int) -> Prediction:
        proj = plan.proj_positions[mask_idx]
        key = (mask_idx, tuple(content[k] for k in proj))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.fast:
            buf = bytearray(self.masked_packed[mask_idx])
            positions = plan.positions
            for k in proj:
                buf[positions[k]] = content[k]
            label, conf = self.classifier._predict_packed(bytes(buf))
            pred = Prediction(label, conf)
        else:
            base = self.masked_bases[mask_idx]
            surviving = [(plan.positions[k], content[k]) for k in proj]
            if surviving:
                pixels = list(base.pixels)
                for pos, v in surviving:
                    pixels[pos] = v
                mutant_img = Image(
                    base.height, base.width, base.channels,
                    base.alphabet_size, tuple(pixels),
                )
            else:
                mutant_img = base
            pred = self.classifier.classify(mutant_img)
        self.cache[key] = pred
        return pred

    def profile(self, plan: _PlacementPlan, content, base: Prediction) -> MutantProfile:
        mutants = tuple(
            self.mutant(plan, content, i) for i in range(len(self.mask_set.masks))
        )
        return MutantProfile(base, mutants)


@dataclass
class _SampleOutcome:
    sample_id: str
    certified: dict[str, bool]
    consistent: bool
    variants_evaluated: int
    violations: dict[str, list[dict]]
    thm1_violations: list[dict]
    clause_stats: dict[str, dict[str, int]]
    evaded: dict[str, bool]


def _scan_sample(
    classifier,
    record: DatasetRecord,
    mask_set: MaskSet,
    defenders: Sequence[Defender],
    cfg: AttackConfig,
    checks: frozenset,
) -> _SampleOutcome:
    image, true_label, sample_id = record.image, record.true_label, record.id
    _check_spec_matches(image, cfg.patch_spec)
    _guard_budget(image, cfg)

    profile = classify_mutants(classifier, image, mask_set)
    benign_labels = [m.label for m in profile.mutants]
    certified = {d.name: d.certify(profile, true_label) for d in defenders}
    consistent = all(lbl == true_label for lbl in benign_labels)

    outcome = _SampleOutcome(
        sample_id=sample_id,
        certified=certified,
        consistent=consistent,
        variants_evaluated=0,
        violations={d.name: [] for d in defenders},
        thm1_violations=[],
        clause_stats={
            d.name: {CLAUSE_LABEL_DIFF: 0, CLAUSE_LOW_CONF: 0} for d in defenders
        },
        evaded={d.name: False for d in defenders},
    )

    def1_defenders = [
        d for d in defenders if CHECK_DEF1 in checks and certified[d.name]
    ]
    want_rsuc = CHECK_RSUC in checks
    want_thm1 = CHECK_THM1 in checks
    active = [
        (d, d.name, d in def1_defenders)
        for d in defenders
        if d in def1_defenders or want_rsuc
    ]
    if not active and not want_thm1:
        return outcome

    oracle = _MutantOracle(classifier, image, mask_set)
    a = cfg.resolve_alphabet(image)
    c = image.channels
    num_masks = len(mask_set.masks)

    if cfg.mode == "random":
        plans: dict[Placement, _PlacementPlan] = {}

        def pair_stream():
            for placement, content in _random_pairs(image, cfg, sample_id):
                plan = plans.get(placement)
                if plan is None:
                    plan = _PlacementPlan(
                        placement, image, mask_set, benign_labels, true_label
                    )
                    plans[placement] = plan
                yield plan, content

        stream = pair_stream()
    else:

        def plan_stream():
            for placement in iter_placements(cfg.patch_spec):
                plan = _PlacementPlan(
                    placement, image, mask_set, benign_labels, true_label
                )
                npix = sum(r.area for r in placement) * c
                for content in itertools.product(range(a), repeat=npix):
                    yield plan, content

        stream = plan_stream()

    variant_index = -1
    for plan, content in stream:
        variant_index += 1
        outcome.variants_evaluated += 1
        base_pred = oracle.classify_variant(plan, content)
        if base_pred.label == true_label:
            continue  # not harmful; nothing to detect

        need_profile = bool(active) or (want_thm1 and plan.consistent_cover)
        if not need_profile:
            continue
        vprofile = oracle.profile(plan, content, base_pred)

        if want_thm1 and plan.consistent_cover:
            if all(m.label == base_pred.label for m in vprofile.mutants):
                outcome.thm1_violations.append(
                    {
                        "sample_id": sample_id,
                        "variant_index": variant_index,
                        "placement": plan.placement_doc,
                        "content_digest": _content_digest(content),
                        "variant_label": base_pred.label,
                        "consistent_covering_masks": [
                            i
                            for i in plan.covering
                            if benign_labels[i] == true_label
                        ],
                    }
                )

        for d, name, in_def1 in active:
            label_diff, low_conf = d.warn_clauses(vprofile)
            warned = label_diff or low_conf
            if warned:
                if in_def1:
                    clause = CLAUSE_LABEL_DIFF if label_diff else CLAUSE_LOW_CONF
                    outcome.clause_stats[name][clause] += 1
                continue
            if want_rsuc:
                outcome.evaded[name] = True
            if in_def1:
                outcome.violations[name].append(
                    {
                        "sample_id": sample_id,
                        "variant_index": variant_index,
                        "placement": plan.placement_doc,
                        "content_digest": _content_digest(content),
                        "variant_label": base_pred.label,
                        "reason": "harmful variant drew no warning",
                    }
                )
    return outcome


def _scan_task(args) -> _SampleOutcome:
    return _scan_sample(*args)


@dataclass
class SoundnessRun:
    """Joined results of one oracle pass over a dataset."""

    mode: str
    samples: int
    def1: dict[str, SoundnessReport]
    theorem1: SoundnessReport | None
    evaded_samples: dict[str, int]

    def success_ratio(self, defender_name: str) -> float:
        evaded = self.evaded_samples[defender_name]
        return (self.samples - evaded) / self.samples


def run_soundness(
    classifier,
    records: Sequence[DatasetRecord],
    mask_set: MaskSet,
    defenders: Sequence[Defender],
    cfg: AttackConfig,
    checks: Iterable[str] = (CHECK_DEF1,),
    workers: int = 1,
) -> SoundnessRun:
    """Scan every sample against every defender in one enumeration pass.

    Results are deterministic and independent of `workers`: samples are
    scanned independently and merged in dataset order.
    """
    checks = frozenset(checks)
    unknown = checks - ALL_CHECKS
    if unknown:
        raise InvalidInputError(f"unknown checks: {sorted(unknown)}")
    if not records:
        raise InvalidInputError("no samples to scan")
    names = [d.name for d in defenders]
    if len(set(names)) != len(names):
        raise InvalidInputError("defender names must be unique in one run")
    needs_warn = (CHECK_DEF1 in checks or CHECK_RSUC in checks)
    if needs_warn:
        for d in defenders:
            if not d.has_warn:
                raise UnsupportedOperationError(
                    f"{d.name} cannot be soundness-checked"
                )
    if isinstance(classifier, TableClassifier):
        raise InvalidInputError(
            "table classifiers cannot label tampered pixels; "
            "use a profile fixture instead"
        )

    tasks = [
        (classifier, r, mask_set, tuple(defenders), cfg, checks) for r in records
    ]
    if workers > 1 and len(records) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_scan_task, tasks, chunksize=1))
    else:
        outcomes = [_scan_task(t) for t in tasks]

    def1: dict[str, SoundnessReport] = {}
    if CHECK_DEF1 in checks:
        for d in defenders:
            rep = SoundnessReport(d.name, cfg.mode)
            for o in outcomes:
                rep.samples_checked += 1
                rep.certified_count += int(o.certified[d.name])
                rep.variants_evaluated += o.variants_evaluated
                rep.violations.extend(o.violations[d.name])
                for k, v in o.clause_stats[d.name].items():
                    rep.thm2_clause_stats[k] += v
            def1[d.name] = rep

    theorem1 = None
    if CHECK_THM1 in checks:
        theorem1 = SoundnessReport("(defender independent)", cfg.mode)
        for o in outcomes:
            theorem1.samples_checked += 1
            theorem1.variants_evaluated += o.variants_evaluated
            theorem1.thm1_violations.extend(o.thm1_violations)

    evaded = {name: 0 for name in names}
    if CHECK_RSUC in checks:
        for o in outcomes:
            for name in names:
                evaded[name] += int(o.evaded[name])

    return SoundnessRun(
        mode=cfg.mode,
        samples=len(records),
        def1=def1,
        theorem1=theorem1,
        evaded_samples=evaded,
    )


def check_certified_detection(
    classifier,
    image: Image,
    true_label: int,
    mask_set: MaskSet,
    defender: Defender,
    cfg: AttackConfig,
    sample_id: str = "sample",
) -> SoundnessReport:
    """Verify the certification guarantee for one sample.

    If the defender certifies the sample, every in-scope variant is
    enumerated and each harmful one must draw a warning; failures land
    in the report's violations list. Uncertified samples are recorded
    and skipped.
    """
    if not defender.has_warn:
        raise UnsupportedOperationError(
            f"{defender.name} cannot be soundness-checked"
        )
    record = DatasetRecord(sample_id, true_label, image)
    run = run_soundness(
        classifier, [record], mask_set, [defender], cfg, checks={CHECK_DEF1}
    )
    return run.def1[defender.name]


def check_theorem1(
    classifier,
    image: Image,
    true_label: int,
    mask_set: MaskSet,
    cfg: AttackConfig,
    sample_id: str = "sample",
) -> SoundnessReport:
    """Check, defender-free, that consistent covering masks betray patches.

    For every variant whose placement is covered by a mask whose benign
    mutant keeps the true label: if the variant is harmful, at least one
    of its own mutants must disagree with its label.
    """
    record = DatasetRecord(sample_id, true_label, image)
    run = run_soundness(
        classifier, [record], mask_set, [], cfg, checks={CHECK_THM1}
    )
    return run.theorem1


def check_profile_fixture(fixture: ProfileFixture, defender: Defender) -> SoundnessReport:
    """Run the certification check on a hand-written prediction scenario.

    The fixture's variant list plays the role of the enumerated attack
    set; profiles come straight from the table.
    """
    if not defender.has_warn:
        raise UnsupportedOperationError(
            f"{defender.name} cannot be soundness-checked"
        )
    report = SoundnessReport(defender.name, "fixture")
    report.samples_checked = 1
    benign = fixture.benign_profile()
    certified = defender.certify(benign, fixture.true_label)
    report.certified_count = int(certified)
    if not certified:
        return report
    for variant_id, vprofile in fixture.variant_profiles():
        report.variants_evaluated += 1
        if vprofile.base.label == fixture.true_label:
            continue
        label_diff, low_conf = defender.warn_clauses(vprofile)
        if label_diff or low_conf:
            clause = CLAUSE_LABEL_DIFF if label_diff else CLAUSE_LOW_CONF
            report.thm2_clause_stats[clause] += 1
            continue
        report.violations.append(
            {
                "sample_id": fixture.benign_id,
                "variant_id": variant_id,
                "variant_label": vprofile.base.label,
                "reason": "harmful variant drew no warning",
            }
        )
    return report


def defense_success_ratio(
    classifier,
    records: Sequence[DatasetRecord],
    mask_set: MaskSet,
    defender: Defender,
    cfg: AttackConfig,
    workers: int = 1,
) -> float:
    """Fraction of samples with no enumerated harmful variant that evades warning.

    Counts every sample, certified or not; certification soundness makes
    this ratio at least the certification rate.
    """
    run = run_soundness(
        classifier, records, mask_set, [defender], cfg,
        checks={CHECK_RSUC}, workers=workers,
    )
    return run.success_ratio(defender.name)
