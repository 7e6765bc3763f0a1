"""Antenna subarray selection for single-source direction estimation."""
__version__ = "0.1.0"

from .array_core import (ArrayGeometry, SelectionVector, Subarray, UniqueSetStats, align_layout,
                         enumerate_subarrays, positions_from_selection, score, switch_counts,
                         unique_subarray_set)
from .beam_metrics import (AnchorSet, BeampatternProfile, anchor_set, beampattern, crlb, outlier_probability,
                           psl, sidelobe_profile, tra_mse, worst_case_tra)
from .estimator import GridSpec, mle_estimate
from .selector import (Method, SelectionQuery, SelectionResult, multiplication_count, select_exhaustive_tra,
                       select_greedy_tra, select_psl_c, select_ula)
from .signal_model import SignalParams, generate_snapshot, sample_covariance, snr_and_diversity, steering_vector
from .special import bessel_i0_scaled

__all__ = [name for name in dir() if not name.startswith("_")]
