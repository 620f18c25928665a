"""Initiative analysis for timestamped two-party communication logs."""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateInputError,
    DistributionError,
    DuplicatePersonError,
    InitiativeError,
    InputError,
    InsufficientDataError,
    MalformedRowError,
    NumericalError,
    SelfLoopError,
    TraitFormatError,
)
from .events import (  # noqa: E402
    Dataset,
    Event,
    IngestReport,
    LinkKey,
    TraitRecord,
    canonical_link,
    ingest_events,
    ingest_traits,
    write_events,
    write_traits,
)
from .initiatives import (  # noqa: E402
    DAY,
    CountTable,
    Initiatives,
    extract_initiatives,
    fit_power_law,
    interevent_gaps,
    link_counts,
)
from .mixture import (  # noqa: E402
    EstimatorOptions,
    MixtureDistribution,
    estimate_link_mixture,
    estimate_person_mixture,
    folded_link_likelihood,
    make_grid,
    summarize_mixture,
    total_variation,
)
from .synthetic import (  # noqa: E402
    ReplicaPlan,
    bootstrap_validate,
    generate_feedback_sequences,
    generate_replica,
    simulate_population,
    simulate_traits,
)
from .dynamics import (  # noqa: E402
    InitiativeSequence,
    detect_discontinuations,
    ending_probability_curve,
    fit_exponential,
    run_length_annotate,
    sequences_from_initiatives,
    turn_probability_curve,
)
from .persons import (  # noqa: E402
    friend_abundance,
    pearson_with_bootstrap,
    person_initiative_ratio,
    trait_correlations,
    with_friend_abundance,
)
from .pipeline import RunConfig, fixture_paths, run_pipeline  # noqa: E402
