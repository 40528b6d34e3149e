"""Statistical-parity measures for ranked outputs, a controlled-bias ranking
generator, dataset ingestion helpers, and a prototype-based fair re-scoring
optimizer."""

from .ranking import (
    CutoffSchedule,
    Item,
    Ranking,
    RankingFormatError,
    ValidationError,
    build_schedule,
    prefix_counts,
    ranking_from_flags,
    read_ranking_csv,
    validate_ranking,
    write_ranking_csv,
)
from .measures import (
    BinaryDistribution,
    DegenerateGroupError,
    FairnessReport,
    MeasureKind,
    RrdInapplicableError,
    fairness_report,
    kl_divergence,
    measure,
    measure_from_flags,
    normalizer,
    parity_term,
    report_to_json,
    unnormalized_sum,
)
from .generator import (
    GeneratorConfig,
    SweepRow,
    aggregate_sweep,
    generate_unfair,
    random_base_ranking,
    sweep,
)
from .fairopt import (
    DivergenceError,
    FeatureMatrix,
    Hyperparams,
    PrototypeModel,
    TraceRecord,
    accuracy_score_diff,
    apply_model,
    gradient,
    losses,
    soft_assignments,
    total_loss,
    train,
)

__version__ = "0.1.0"
