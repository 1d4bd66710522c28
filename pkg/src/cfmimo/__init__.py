"""Uplink cell-free massive MIMO simulator.

Channel-similarity-aware pilot assignment and AP selection, MMSE channel
estimation, local MMSE combining and use-and-then-forget spectral efficiency.
"""
from .apselect import (
    ServingMap,
    default_similarity_threshold,
    group_aps,
    select_all,
    select_capa_aps,
    select_top_m,
)
from .channel import (
    CovarianceSet,
    Layout,
    build_covariance_set,
    large_scale_fading,
    place_network,
    sample_channels,
    spatial_covariance,
    wrap_distance,
)
from .config import ConfigError, NetworkConfig
from .experiment import ExperimentSpec, ResultRecord, Sweep, run_experiment
from .pilots import PilotAssignment, assign_capa, assign_random, pilot_usage_counts
from .results import cdf, emit, likely_95, read_records
from .similarity import (
    ap_similarity_matrix,
    expected_similarity_ap,
    expected_similarity_ue,
    instantaneous_similarity,
    ue_similarity_matrix,
)
from .uplink import (
    accumulate_uatf,
    combine_local,
    mmse_estimate,
    observe_pilots,
    spectral_efficiency,
)

__version__ = "0.1.0"
