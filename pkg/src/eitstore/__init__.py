"""Maxwell-Bloch simulation of light storage in a three-level medium,
with the homodyne phase read-out used to measure the retrieved phase."""

from .model import (AtomicState, FieldGrid, ModelError, PhysicalParams, bloch_rhs,
                    default_params, derive_eta_from_optical_depth, rabi_from_power)
from .solver import (GridConfig, NumericalError, PulseShape, SequenceTimeline,
                     SimulationRecord, pump_to_steady_state, simulate_sequence,
                     steady_profile)
from .linear import eit_susceptibility, linear_propagate, transmission_fwhm
from .homodyne import (compute_phi_eit, ensemble_phase, extract_envelopes, extract_phase,
                       filter_artifacts, recover_signal_and_contrast, synthesize_records)
from .scenarios import (ConfigError, Scenario, load_preset, run_detuning_scan, run_raman_scan,
                        run_scenario, run_storage_vs_propagation)

__version__ = "0.1.0"
