"""Spatial-qudit states of down-converted photon pairs through multi-slits.

Forward models (pump profile -> two-qudit state -> mixture -> near/far-field
coincidences) and the inverse pipeline (counts -> probabilities, states and
arm weights).
"""

from .config import ExperimentConfig, load_config
from .density import (DensityOperator, MixtureSpec, concurrence, fidelity_with_pure,
                      hwp_weights, mix, pure_concurrence, purity, schmidt, state_fidelity)
from .detection import (CountRecord, PatternData, ScanConfig, coincidence_pattern,
                        expected_record, farfield_scan, nearfield_scan, sample_counts,
                        singles_pattern, slit_amplitude)
from .estimation import (PeakIntegrals, WeightEstimate, bootstrap_uncertainty, compose_peaks,
                         estimate_weights, integrate_peaks, probabilities_from_peaks,
                         reconstruct_state)
from .experiment import (arm_states, blocked_arm_patterns, open_mixture,
                         sample_blocked_arm_records)
from .geometry import MultiSlit, OpticalSetup, basis_overlap_oracle, slit_centers, transmission
from .pump import ArmConfiguration, Gaussian, Sampled, TopHat, broad_arm2, evaluate, focused_arm1
from .states import TwoQuditState, phase_phi, psi1, psi2, synthesize

__version__ = "0.1.0"
