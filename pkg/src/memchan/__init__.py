"""Simulation of quantum channels whose noise is correlated through a finite memory."""

__version__ = "0.1.0"

from .core import (
    DensityMatrix, KrausSet, PureState, UnitaryMatrix, apply_kraus, binary_entropy,
    partial_trace, purify, tensor, trace_distance, von_neumann_entropy,
)
from .errors import ConfigError, ResourceCapError
from .memory import JointOutput, MemoryChannel, apply_n, apply_n_purified, channel_choi, memoryless_probe
from .markov import (
    MarkovNoiseSpec, build_unitary_model, convergence_fit, equivalence_check,
    markov_channel_direct, n_block_approximation_error, steady_state,
    verify_appendix_A1, verify_appendix_A2,
)
from .metrics import (
    Ensemble, coherent_information, ce_trend, entanglement_fidelity, entropy_exchange,
    fano_bound, holevo_quantity, info_report, rate_sandwich,
)
from .capacity import OptimizerOptions, maximize_holevo
from .zoo import (
    MPParams, correlated_dephasing_cnot, correlated_dephasing_cphase, correlated_dephasing_spec,
    mp_channel, parity_decode, parity_encode, shift_channel,
)
