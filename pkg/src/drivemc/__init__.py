"""Driver-behavior Markov chain toolkit.

Turns scene-by-scene human and autonomous-vehicle interaction traces into
statistically validated non-stationary Markov chain models and exports them
as model-checker DTMC source.
"""

from .chain import (
    ChainModel,
    CountMatrix,
    RecoveredCounts,
    SecondOrderModel,
    TransitionMatrix,
    chain_from_counts,
    chain_from_dict,
    chain_to_dict,
    chain_to_count_csv,
    chain_to_percent_csv,
    estimate_chain,
    estimate_second_order,
    recover_counts,
    round_half_up_tenths,
    second_order_to_dict,
    synthesize_dataset,
)
from .errors import (
    AmbiguityError,
    DomainError,
    DrivemcError,
    InapplicableTestError,
    InconsistencyError,
    PrismParseError,
    UndefinedRowError,
    ValidationError,
)
from .ingest import (
    Dataset,
    RejectionRecord,
    StateSequence,
    parse_dataset,
    parse_datasets,
    serialize_dataset,
    slice_dataset,
    to_state_sequences,
)
from .prism import (
    SelfCheckReport,
    evaluate_property,
    export_dtmc,
    export_properties,
    parse_dtmc,
    self_check,
)
from .simulate import (
    StateDistribution,
    Trajectory,
    empirical_distribution,
    propagate,
    sample,
    sample_states,
    total_variation,
)
from .stats import (
    ContingencyTable,
    TestResult,
    chi_square_cdf,
    chi_square_sf,
    compare_groups,
    make_contingency_table,
    pearson_chi_square,
    test_homogeneity,
    test_order,
    test_stationarity,
)
from .types import (
    Condition,
    DriverState,
    Environment,
    InfoLevel,
    InteractionTrace,
    ParticipantProfile,
    ScenarioOrder,
    SceneResponse,
    Sex,
    STATES,
    StudyConfig,
    as_loa,
    format_loa,
    load_study_config,
    loa_from_choices,
    map_state,
    parse_loa,
    study_config_from_dict,
    trace_from_dict,
    trace_from_json,
    trace_to_dict,
    trace_to_json,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
