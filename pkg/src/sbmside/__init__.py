"""Single hidden-community recovery with per-node side information.

Generators, belief-propagation and maximum-likelihood detectors, an
exact-recovery voting stage, threshold and phase-diagram calculators, and a
density-evolution engine, with a CLI experiment harness.
"""

from .core import (
    DetectionResult,
    DivergenceReport,
    GraphInstance,
    SideChannel,
    SideObservations,
    custom_channel,
    divergences,
    edge_llr,
    generate_graph,
    lambda_side,
    lambda_snr,
    load_graph,
    load_side,
    make_channel,
    mismatch,
    node_llr,
    node_llrs,
    noisy_label_channel,
    partial_reveal_channel,
    replicated_channel,
    sample_side_info,
    save_graph,
    save_side,
)
from .detectors import (
    BPConfig,
    BPState,
    VotingConfig,
    bp_message_fn,
    bp_run,
    ml_bruteforce,
    ml_score,
    topk,
    voting_cleanup,
)
from .exponents import (
    ExactRecoveryReport,
    ExponentQuery,
    ExponentResult,
    OutcomeTrend,
    RegimeParams,
    WeakRecoveryReport,
    chernoff_exponent,
    eta,
    exact_recovery_check,
    lemma_interval,
    phase_region,
    psi,
    psi_curve,
    regime_threshold,
    weak_recovery_check,
)
from .kernels import BACKEND
from .tree_de import (
    BoundReport,
    DeTrace,
    PopulationTrace,
    TreeInstance,
    bound_report,
    de_predict_error,
    de_run,
    log_star,
    measure_b_sequence,
    population_run,
    sample_tree,
    tree_llr,
    tree_map_error,
)

__version__ = "0.1.0"
