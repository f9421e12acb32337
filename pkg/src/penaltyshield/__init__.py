"""Energy-penalty error suppression: exact dynamics, second-order theory and bounds."""

from .dynamics import (
    EvolutionRecord,
    corrected_fidelity,
    evolve_joint,
    interaction_picture,
    leakage,
    reduced_system,
    run_experiment,
)
from .model import (
    CodeSpace,
    LocalityMetadata,
    LocalTerm,
    PenaltyModel,
    build_hamiltonian,
    check_error_detection,
    equilibrium_state,
    ground_code_space,
    locality_metadata,
)
from .perturbation import b_coefficient, gamma, lamb_shift, theorem1_loss
from .spectral import SpectralLineSet, cumulative_psd, psd_lines, verify_theorem3
from .suppression_bounds import BoundReport, q_factor, theorem2_rhs, verify_theorem2

__version__ = "0.1.0"
