"""Transmission states, their purifications, and the correction unitary.

Three qubit-state families parametrized by a bias beta in (0, 1]:

    honest        sqrt(1 - b/2)|0> +- sqrt(b/2)|1>
    prime         sqrt(1 - 3b/4)|0> +- sqrt(3b/4)|1>
    double prime  sqrt(1 - b/4)|0> +- sqrt(b/4)|1>

The honest sender transmits honest states. A cheating sender instead keeps
a 4-level register entangled with each transmitted qubit; the equal-weight
superposition over the prime and double-prime branches has exactly the same
reduced state on the receiver's side as the honest purification, which is
what makes the cheat undetectable. ``correction_unitary`` returns the local
rotation that maps the cheating purification onto the honest one.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .qcore import Ket, UnitaryMatrix, complete_to_unitary

BETA_MIN = 0.0
BETA_MAX = 1.0
# Schmidt terms with squared weight below this are rank-deficient and are
# recovered by unitary completion instead of a basis-vector match.
RANK_FLOOR = 1e-14


class Family(Enum):
    """Which of the three state families a qubit was drawn from."""

    HONEST = "honest"
    PRIME = "prime"
    DOUBLE_PRIME = "double_prime"


def validate_beta(beta: float) -> float:
    """Check the bias parameter lies in (0, 1] and return it as a float."""
    beta = float(beta)
    if not BETA_MIN < beta <= BETA_MAX:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    return beta


def prob_e1(family: Family, beta: float) -> float:
    """Born weight of outcome 1 for a computational measurement of the family's states.

    This is the squared |1> amplitude: b/2 for honest, 3b/4 for prime and
    b/4 for double prime, so for every beta in (0, 1] the ordering
    double prime < honest < prime holds strictly.
    """
    beta = validate_beta(beta)
    if family is Family.HONEST:
        return beta / 2.0
    if family is Family.PRIME:
        return 3.0 * beta / 4.0
    return beta / 4.0


def make_state(family: Family, sign: int, beta: float) -> Ket:
    """Single-qubit state of the given family; ``sign`` flips the |1> amplitude."""
    if sign not in (0, 1):
        raise ValueError(f"sign bit must be 0 or 1, got {sign}")
    w = prob_e1(family, beta)
    amp1 = np.sqrt(w)
    return Ket([np.sqrt(1.0 - w), -amp1 if sign else amp1], (2,))


def make_phi(beta: float) -> Ket:
    """Honest purification: (|0>|psi_0> + |1>|psi_1>)/sqrt(2), dims (2, 2).

    Subsystem 0 is the sender's register, subsystem 1 the transmitted qubit.
    """
    beta = validate_beta(beta)
    branches = [make_state(Family.HONEST, sign, beta).amplitudes for sign in (0, 1)]
    return Ket(np.concatenate(branches) / np.sqrt(2.0), (2, 2))


def make_phi_prime(beta: float) -> Ket:
    """Cheating purification over a 4-level register, dims (4, 2).

    Register levels 0 and 1 carry the prime states, levels 2 and 3 the
    double-prime states, each branch with weight 1/4.
    """
    beta = validate_beta(beta)
    branches = [
        make_state(Family.PRIME, 0, beta).amplitudes,
        make_state(Family.PRIME, 1, beta).amplitudes,
        make_state(Family.DOUBLE_PRIME, 0, beta).amplitudes,
        make_state(Family.DOUBLE_PRIME, 1, beta).amplitudes,
    ]
    return Ket(np.concatenate(branches) / 2.0, (4, 2))


def embed_phi(beta: float) -> Ket:
    """Honest purification with its register embedded into levels {0, 1} of dim 4."""
    phi = make_phi(beta)
    amps = np.zeros(8, dtype=np.complex128)
    amps[:4] = phi.amplitudes
    return Ket(amps, (4, 2))


def correction_unitary(beta: float) -> UnitaryMatrix:
    """Local 4x4 rotation taking the cheating purification onto the honest one.

    Both purifications share the receiver-side reduced state
    diag(1 - b/2, b/2). Fixing one eigenbasis {|b_k>} of that matrix, each
    purification defines sender-side Schmidt vectors
    ``a_k = (I x <b_k|) |state> / sqrt(lambda_k)``; the unitary matching the
    cheating vectors to the embedded honest ones (completed on the
    orthogonal remainder) satisfies (U x I)|phi'> = embed(|phi>). Deriving
    both vector families from the same eigenbasis keeps the map well defined
    at beta = 1, where the two eigenvalues coincide.
    """
    beta = validate_beta(beta)
    target = embed_phi(beta).amplitudes.reshape(4, 2)
    source = make_phi_prime(beta).amplitudes.reshape(4, 2)
    rho_b = target.conj().T @ target
    eigenvalues, eigenvectors = np.linalg.eigh(rho_b)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    target_cols = []
    source_cols = []
    for lam, bob_vec in zip(eigenvalues, eigenvectors.T):
        if lam < RANK_FLOOR:
            continue
        root = np.sqrt(lam)
        target_cols.append(target @ bob_vec.conj() / root)
        source_cols.append(source @ bob_vec.conj() / root)
    to_target = complete_to_unitary(target_cols, 4)
    from_source = complete_to_unitary(source_cols, 4)
    return UnitaryMatrix(to_target.entries @ from_source.entries.conj().T, 4)
