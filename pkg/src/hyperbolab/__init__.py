"""Numerical analysis of smooth multimodal interval maps: derivative
growth along critical orbits, critical recurrence statistics, pull-back
geometry, distortion probes, and topological conjugacy construction."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    ConfigurationError,
    ConjugacyMismatchError,
    DomainError,
    DynamicsError,
    GeometryError,
    HypothesisError,
    InsufficientDataError,
    MapInvariantError,
    NotMultimodalError,
    PrecisionError,
    StructureError,
)
from .mapkit import (
    Branch,
    ConjugateFamily,
    CriticalPoint,
    MapSpec,
    PolynomialFamily,
    TrigPolynomialFamily,
    branch_partition,
    build_map,
    eval_deriv,
    eval_map,
    load_map,
    map_from_dict,
    map_to_dict,
    nonflatness_probe,
    save_map,
)
from .orbit import (
    OrbitRecord,
    PeriodicOrbit,
    PrecisionPolicy,
    RepellingReport,
    critical_orbit,
    periodic_points,
    point_orbit,
    repelling_check,
    write_orbit_csv,
)
from .hyperbolicity import (
    CEFit,
    RecurrenceFit,
    RecurrenceModel,
    SlowRecurrenceStat,
    TransportParams,
    ce_fit,
    ce_threshold_beta0,
    recurrence_fit,
    recurrence_series,
    ser_exponent_after_transport,
    slow_recurrence_stat,
    transport_recurrence_bound,
    transport_slow_recurrence_params,
)
from .pullback import (
    ChainConstants,
    Component,
    ComponentChain,
    DistortionProbe,
    QuasiChainCertificate,
    ShrinkCertificate,
    ShrinkingFit,
    criticality_count,
    esc_fit,
    estimate_chain_constants,
    koebe_probe,
    preimage_components,
    pull_stable_probe,
    pullback_chain,
    quasi_chain,
    sample_distortion_probes,
    shrink_to_ce_bound,
    tce_density,
)
from .conjugacy import (
    ConjugacyTable,
    HolderFit,
    Itinerary,
    build_conjugacy,
    holder_fit,
    invariance_report,
    itinerary,
    table_pairs,
)
from .fixtures import fixture, fixture_names

__all__ = [name for name in dir() if not name.startswith("_")]
