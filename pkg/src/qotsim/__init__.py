"""Statevector simulation of an entanglement-based attack on a
cheat-sensitive 2-1 oblivious transfer protocol.

The attack sends halves of entangled pairs instead of committed states:
the receiver's reduced state is identical to the honest one, so his
random state tests pass with probability 1, while measuring the retained
registers after the test phase reveals which announced index set was
selected by his choice bit.
"""

from .qcore import (
    DensityMatrix,
    Ket,
    SchmidtDecomposition,
    UnitaryMatrix,
    apply_on_subsystem,
    basis_ket,
    born_probabilities,
    complete_to_unitary,
    fidelity,
    measure_subsystem,
    overlap,
    partial_trace,
    projective_test,
    schmidt_decompose,
    tensor,
)
from .states import (
    Family,
    correction_unitary,
    embed_phi,
    make_phi,
    make_phi_prime,
    make_state,
    prob_e1,
    validate_beta,
)
from .protocol import (
    AliceStrategy,
    EprAlice,
    HonestAlice,
    Mode,
    NaiveCheatAlice,
    ProtocolParams,
    RetriableSession,
    Transcript,
    alice_infer_choice,
    bob_partition,
    bob_test,
    epr_answer_test,
    epr_observe,
    epr_prepare,
    run_session,
)
from .harness import (
    ExperimentConfig,
    IdentityReport,
    RunStats,
    analytic_accuracy,
    emit_report,
    run_experiment,
    verify_identities,
    wilson_interval,
)

__version__ = "0.1.0"
