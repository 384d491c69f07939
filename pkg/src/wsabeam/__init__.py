"""Hybrid beamforming simulator for widely-spaced antenna arrays.

A base station splits its antennas into widely-spaced compact subarrays,
enlarging the effective aperture so multiple users at similar angles can
be separated by range as well as angle.  The package covers geometry
construction, cross-field channel synthesis, architecture search,
sub-connected and fully-connected precoder algorithms, and a
Monte-Carlo evaluation harness with a CSV-emitting CLI.
"""

from .config import SystemConfig, dbm_to_watts, thermal_noise_watts, watts_to_dbm
from .errors import (
    ApertureViolationError,
    AssemblyError,
    ConfigurationError,
    DegenerateGeometryError,
    RankDeficiencyError,
    WsabeamError,
)
from .geometry import (
    ArrayGeometry,
    SubarrayUserGeometry,
    UserPlacement,
    build_wsa_geometry,
    export_geometry,
    max_subarray_spacing,
    rayleigh_distance,
    subarray_user_geometry,
    taylor_distance,
    taylor_distance_difference,
)
from .channel import (
    ChannelRealization,
    PathComponent,
    ScenarioPolicy,
    assemble_cnff_channel,
    drop_rng,
    dump_channels,
    generate_scenario,
    numerical_rank,
    receive_steering_matrix,
    subarray_channel,
    upa_steering_vector,
)
from .archsearch import (
    ArchitectureCandidate,
    TheoremDiagnostics,
    architecture_report,
    gram_deviation,
    los_capacity,
    search_architecture,
    theorem_guard,
)
from .beamforming import (
    BeamformerSet,
    ao_analog_subconnected,
    bd_digital,
    constant_modulus_projection,
    design_beamformers,
    dump_beamformers,
    fully_digital_bound,
    svd_phase_benchmark,
    svr_analog,
    waterfilling,
)
from .evaluation import (
    BeamPatternGrid,
    BeamPatternGridSpec,
    EvaluationReport,
    ExperimentResult,
    beam_pattern,
    evaluate_beamformers,
    run_experiment,
    user_se,
)

__version__ = "0.1.0"
