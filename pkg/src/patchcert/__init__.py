"""Certified detection of adversarial patches by masked-mutant agreement.

The package builds covering mask sets, runs mask-based defenders over
deterministic desk-scale classifiers, scores the outcomes, and checks
the certification guarantee itself by exhaustive attack enumeration.
"""

from .classifiers import (
    CONFIDENCE_EPSILON,
    HashClassifier,
    LinearClassifier,
    Prediction,
    TableClassifier,
    classify_mutants,
)
from .cover import (
    CoverageReport,
    MaskSet,
    gen_multi_cover,
    gen_rect_cover,
    gen_square_cover,
    verify_cover,
)
from .dataset_io import (
    DatasetRecord,
    ProfileFixture,
    gen_synthetic_dataset,
    load_dataset,
    load_maskset,
    load_predictions,
    load_profile_fixture,
    save_dataset,
    save_maskset,
    save_predictions,
    save_report,
)
from .defenders import (
    DEFENDER_KINDS,
    Defender,
    DefenderSpec,
    MutantProfile,
    SampleTaxonomy,
    Verdict,
    assign_case,
    c2_certify,
    classify_sample,
    doma_certify,
    doma_warn,
    hicert_certify,
    hicert_flip_certify,
    hicert_warn,
    hicert_warn_parts,
    make_composite,
    make_defender,
    oma,
    pgpp_certify,
    pgpp_flip_certify,
    pgpp_warn,
)
from .errors import (
    BudgetExceededError,
    DimensionMismatchError,
    DuplicateKeyError,
    FileFormatError,
    InvalidInputError,
    InvariantViolationError,
    MalformedLineError,
    PatchCertError,
    SchemaViolationError,
    TableLookupError,
    UnsupportedOperationError,
    ValueOutOfRangeError,
)
from .metrics import EvalRecord, MetricsReport, MetricValue, case_histogram, \
    compute_metrics
from .oracle import (
    DEFAULT_BUDGET,
    AttackConfig,
    SoundnessReport,
    SoundnessRun,
    check_certified_detection,
    check_profile_fixture,
    check_theorem1,
    count_variants,
    defense_success_ratio,
    enumerate_variants,
    merge_reports,
    run_soundness,
)
from .tensor import (
    Image,
    Mask,
    PatchSpec,
    Rect,
    apply_mask,
    apply_patch,
    count_placements,
    iter_placements,
    mask_covers,
)

__version__ = "0.1.0"
