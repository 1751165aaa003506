"""Gate-set shadow estimation: simulate random gate sequences once, estimate many noise properties afterwards."""

from __future__ import annotations

__version__ = "0.1.0"

from .applications import (
    FidelityLandscape,
    UnitalMarginalSet,
    crosstalk_metrics,
    crosstalk_reconstruct,
    learn_unitary,
    pauli_eigenvalues,
    reconstruct_unital,
)
from .clifford import (
    CliffordElement,
    LocalCliffordElement,
    clifford_to_ptm,
    compose_clifford,
    conjugate_pauli,
    enumerate_local_cliffords,
    invert,
    local_second_moment_oracle,
    sample_clifford,
    sample_local_clifford,
    second_moment_oracle,
    third_moment_weingarten,
)
from .estimation import (
    EstimationResult,
    ProbeOperator,
    SequenceAverages,
    correlate_dense,
    correlate_pauli_prop,
    correlate_pauli_tau,
    estimate,
    estimate_many,
    sequence_averages,
    theory_k,
    theory_phi,
    variance_diagnostics,
)
from .experiment import (
    ExperimentConfig,
    GateSetShadow,
    ShadowRecord,
    read_shadow,
    run_experiment,
    run_pauli_interleaved,
    run_uirs,
    simulate_sequence,
    write_shadow,
)
from .fitting import fit_single_exponential, median_of_means, mom_parameters
from .liouville import (
    IrrepProjector,
    SuperOperator,
    apply,
    choi,
    choi_hs_distance,
    compose,
    effect_to_pauli_vec,
    is_cptp,
    projector,
    state_to_pauli_vec,
    tensor,
    unitarity,
)
from .noise import (
    GateNoiseModel,
    SpamModel,
    build_noise_model,
    depolarizing,
    pauli_channel,
    rotation_z,
    xx_coupling,
    zz_coupling,
)
from .pauli import PauliString, pauli_mul
