"""Numerical laboratory for multi-field quantum conference key agreement.

An analytic key-rate engine (channel model, coincidence-matching
statistics, multiparty decoy-state bounds, finite-size corrections,
parameter optimization) cross-validated by an event-level Monte Carlo
simulator of the full protocol including bit extraction.
"""

from .model import (
    Bundle,
    ChannelParams,
    CoincidenceStats,
    ConfigError,
    DecoyBounds,
    DegenerateChannelError,
    EstimationError,
    RateReport,
    SecurityParams,
    SourceConfig,
    bundle_from_dict,
    validate,
)
from .channel import (
    adjacent_bit_error,
    arm_transmittance,
    gain_fixed_phase,
    gain_phase_averaged,
    marginal_error,
    total_efficiency,
)
from .matching import expected_stats, retained_clicks, sifted_coincidences, slice_total
from .photonstats import pair_yield, phase_error_exact, signal_coincidences_nphoton, threshold_click_prob
from .decoy import (
    ObservedCounts,
    bounds_3user_asymptotic,
    bounds_3user_finite,
    bounds_4user_asymptotic,
    bounds_5user_asymptotic,
    chernoff_expected_bounds,
    chernoff_observed_lower,
)
from .keyrate import asymptotic_rate, finite_rate, multicast_bound
from .optimizer import ScanRecord, SearchSpec, optimize_at_distance, scan_distances
from .montecarlo import (
    ComparisonReport,
    TimeBinRecord,
    TrialSummary,
    compare_to_analytic,
    detect_port,
    extract_bits,
    run_protocol,
    simulate_bin,
)
from .special_math import bessel_i0, binary_entropy, binomial

__version__ = "0.1.0"
