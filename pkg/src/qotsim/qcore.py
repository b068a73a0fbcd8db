"""Minimal dense statevector engine for few-level protocol simulation.

A pure state is a flat complex amplitude vector together with an ordered
tuple of subsystem dimensions. All values here are immutable; every
operation is a pure function except the two sampling operations, which
take an explicit ``numpy.random.Generator`` (or any object exposing a
compatible ``random()`` method).

Measurement branches whose Born weight falls below ``BRANCH_FLOOR`` are
never sampled: the remaining weights are renormalized before the draw.
This keeps numerically-dead branches (weight ~1e-30) from ever being
returned while changing sampled distributions by less than 1e-15.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

NORM_ATOL = 1e-12
HERMITIAN_ATOL = 1e-12
EIGENVALUE_FLOOR = -1e-12
TRACE_ATOL = 1e-12
UNITARY_ATOL = 1e-10
ORTHONORMAL_ATOL = 1e-10
BRANCH_FLOOR = 1e-15
# Schmidt terms with squared coefficient below 1e-14 are dropped.
SCHMIDT_COEFF_FLOOR = 1e-7


@dataclass(frozen=True, eq=False)
class Ket:
    """Pure state: unit-norm complex amplitudes over ``prod(dims)`` levels."""

    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        amps.setflags(write=False)
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be positive, got {dims}")
        if int(np.prod(dims)) != amps.size:
            raise ValueError(
                f"prod(dims)={int(np.prod(dims))} does not match {amps.size} amplitudes"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"state norm {norm!r} is not 1 within {NORM_ATOL}")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def subsystem_count(self) -> int:
        return len(self.dims)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Mixed state: Hermitian, positive semidefinite, unit-trace matrix."""

    entries: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.complex128)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "dim", int(self.dim))
        if entries.shape != (self.dim, self.dim):
            raise ValueError(f"expected a {self.dim}x{self.dim} matrix, got {entries.shape}")
        if np.abs(entries - entries.conj().T).max() > HERMITIAN_ATOL:
            raise ValueError("density matrix is not Hermitian")
        eigenvalues = np.linalg.eigvalsh(entries)
        if eigenvalues.min() < EIGENVALUE_FLOOR:
            raise ValueError(f"density matrix has negative eigenvalue {eigenvalues.min()}")
        if abs(entries.trace().real - 1.0) > TRACE_ATOL or abs(entries.trace().imag) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {entries.trace()} is not 1")


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """Square complex matrix with U†U = I within ``UNITARY_ATOL``."""

    entries: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=np.complex128)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "dim", int(self.dim))
        if entries.shape != (self.dim, self.dim):
            raise ValueError(f"expected a {self.dim}x{self.dim} matrix, got {entries.shape}")
        defect = np.abs(entries.conj().T @ entries - np.eye(self.dim)).max()
        if defect > UNITARY_ATOL:
            raise ValueError(f"matrix is not unitary (defect {defect:.3e})")


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Biorthogonal form of a bipartite pure state, coefficients descending."""

    coefficients: np.ndarray
    basis_a: tuple[Ket, ...]
    basis_b: tuple[Ket, ...]

    def __post_init__(self) -> None:
        coeffs = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "basis_a", tuple(self.basis_a))
        object.__setattr__(self, "basis_b", tuple(self.basis_b))
        if not (len(coeffs) == len(self.basis_a) == len(self.basis_b)):
            raise ValueError("coefficient and basis counts disagree")
        if np.any(coeffs < 0) or np.any(np.diff(coeffs) > 0):
            raise ValueError("coefficients must be non-negative and descending")
        if abs(np.sum(coeffs**2) - 1.0) > ORTHONORMAL_ATOL:
            raise ValueError("squared coefficients do not sum to 1")
        for family in (self.basis_a, self.basis_b):
            vectors = np.stack([k.amplitudes for k in family])
            gram = vectors.conj() @ vectors.T
            if np.abs(gram - np.eye(len(family))).max() > ORTHONORMAL_ATOL:
                raise ValueError("Schmidt basis family is not orthonormal")

    def reconstruct(self) -> Ket:
        """Rebuild the source state as sum of coeff * a_k (x) b_k."""
        total = sum(
            c * np.kron(a.amplitudes, b.amplitudes)
            for c, a, b in zip(self.coefficients, self.basis_a, self.basis_b)
        )
        return Ket(total, self.basis_a[0].dims + self.basis_b[0].dims)


def basis_ket(index: int, dim: int) -> Ket:
    """Computational basis state |index> in a single dim-level subsystem."""
    if not 0 <= index < dim:
        raise ValueError(f"basis index {index} out of range for dimension {dim}")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[index] = 1.0
    return Ket(amps, (dim,))


def tensor(a: Ket, b: Ket) -> Ket:
    """Kronecker product; dims concatenate, norm is preserved."""
    return Ket(np.kron(a.amplitudes, b.amplitudes), a.dims + b.dims)


def _split_dims(dims: tuple[int, ...], target: int) -> tuple[int, int, int]:
    if not 0 <= target < len(dims):
        raise ValueError(f"subsystem index {target} out of range for dims {dims}")
    pre = int(np.prod(dims[:target], dtype=np.int64)) if target else 1
    post = int(np.prod(dims[target + 1 :], dtype=np.int64)) if target + 1 < len(dims) else 1
    return pre, dims[target], post


def apply_on_subsystem(u: UnitaryMatrix, target: int, state: Ket) -> Ket:
    """Apply ``u`` to one subsystem, identity on the rest."""
    pre, d, post = _split_dims(state.dims, target)
    if u.dim != d:
        raise ValueError(f"unitary dimension {u.dim} does not match subsystem dimension {d}")
    block = state.amplitudes.reshape(pre, d, post)
    rotated = np.einsum("ij,ajz->aiz", u.entries, block)
    return Ket(rotated.reshape(-1), state.dims)


def partial_trace(state: Ket, keep: int) -> DensityMatrix:
    """Reduced density matrix of the kept subsystem."""
    if state.subsystem_count() < 2:
        raise ValueError("partial trace needs a state with at least two subsystems")
    pre, d, post = _split_dims(state.dims, keep)
    block = state.amplitudes.reshape(pre, d, post)
    rho = np.einsum("aiz,ajz->ij", block, block.conj())
    return DensityMatrix(rho, d)


def born_probabilities(state: Ket, target: int) -> np.ndarray:
    """Raw Born weights for a computational-basis measurement of ``target``."""
    pre, d, post = _split_dims(state.dims, target)
    block = state.amplitudes.reshape(pre, d, post)
    return (block.real**2 + block.imag**2).sum(axis=(0, 2))


def _sample_branch(weights: np.ndarray, u: float) -> int:
    """Sample an index from raw Born weights with the sub-floor guard applied."""
    masked = np.where(weights < BRANCH_FLOOR, 0.0, weights)
    total = masked.sum()
    if total <= 0.0:
        raise ValueError("no measurement branch has weight above the floor")
    cumulative = np.cumsum(masked / total)
    outcome = int(np.searchsorted(cumulative, u, side="right"))
    if outcome >= masked.size or masked[outcome] == 0.0:
        outcome = int(np.flatnonzero(masked > 0.0).max())
    return outcome


def measure_subsystem(state: Ket, target: int, rng) -> tuple[int, Ket, float]:
    """Computational-basis measurement of one subsystem.

    Returns ``(outcome, post_state, probability)`` where ``probability`` is
    the raw Born weight of the sampled outcome and ``post_state`` is the
    normalized collapse, still living in the full space.
    """
    pre, d, post = _split_dims(state.dims, target)
    weights = born_probabilities(state, target)
    outcome = _sample_branch(weights, rng.random())
    block = np.array(state.amplitudes.reshape(pre, d, post))
    keep = block[:, outcome, :].copy()
    block[:] = 0.0
    block[:, outcome, :] = keep / np.sqrt(weights[outcome])
    return outcome, Ket(block.reshape(-1), state.dims), float(weights[outcome])


def projective_test(
    state: Ket, target: int, reference: Ket, rng
) -> tuple[bool, Ket, float]:
    """Binary test {|ref><ref|, 1 - |ref><ref|} on one subsystem.

    Returns ``(passed, post_state, pass_probability)``. Branches with
    weight below ``BRANCH_FLOOR`` (or within it of 1) are decided
    deterministically, so an exactly-matching state always passes.
    """
    pre, d, post = _split_dims(state.dims, target)
    if reference.dims != (d,):
        raise ValueError(
            f"reference dimension {reference.dim} does not match subsystem dimension {d}"
        )
    block = state.amplitudes.reshape(pre, d, post)
    inner = np.einsum("b,abz->az", reference.amplitudes.conj(), block)
    p_pass = float((inner.real**2 + inner.imag**2).sum())
    if p_pass >= 1.0 - BRANCH_FLOOR:
        passed = True
    elif p_pass <= BRANCH_FLOOR:
        passed = False
    else:
        passed = rng.random() < p_pass
    if passed:
        projected = np.einsum("az,b->abz", inner, reference.amplitudes)
        collapsed = projected / np.sqrt(p_pass)
    else:
        projected = np.einsum("az,b->abz", inner, reference.amplitudes)
        residual = block - projected
        weight = (residual.real**2 + residual.imag**2).sum()
        collapsed = residual / np.sqrt(weight)
    return passed, Ket(collapsed.reshape(-1), state.dims), p_pass


def overlap(a: Ket, b: Ket) -> complex:
    """Inner product <a|b> for states of identical shape."""
    if a.dims != b.dims:
        raise ValueError(f"shape mismatch: {a.dims} vs {b.dims}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: Ket, b: Ket) -> float:
    """|<a|b>|^2; equals 1 iff the states match up to global phase."""
    return abs(overlap(a, b)) ** 2


def schmidt_decompose(state: Ket) -> SchmidtDecomposition:
    """Schmidt form of a bipartite state via SVD of the amplitude matrix.

    Coefficients below ``SCHMIDT_COEFF_FLOOR`` are dropped, so a product
    state yields a single term.
    """
    if state.subsystem_count() != 2:
        raise ValueError("Schmidt decomposition is defined for exactly two subsystems")
    da, db = state.dims
    matrix = state.amplitudes.reshape(da, db)
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    keep = s > SCHMIDT_COEFF_FLOOR
    coefficients = s[keep]
    basis_a = tuple(Ket(u[:, k], (da,)) for k in np.flatnonzero(keep))
    basis_b = tuple(Ket(vh[k, :], (db,)) for k in np.flatnonzero(keep))
    return SchmidtDecomposition(coefficients, basis_a, basis_b)


def complete_to_unitary(
    columns: Iterable[Union[Ket, np.ndarray, Sequence[complex]]], dim: int
) -> UnitaryMatrix:
    """Extend orthonormal columns to a full unitary.

    The first ``len(columns)`` columns of the result equal the inputs; the
    remainder is a deterministic Gram-Schmidt completion seeded from the
    computational basis. An empty input yields the identity.
    """
    vectors: list[np.ndarray] = []
    for column in columns:
        vec = np.asarray(
            column.amplitudes if isinstance(column, Ket) else column, dtype=np.complex128
        ).reshape(-1)
        if vec.size != dim:
            raise ValueError(f"column length {vec.size} does not match dimension {dim}")
        vectors.append(vec)
    if len(vectors) > dim:
        raise ValueError(f"{len(vectors)} columns exceed dimension {dim}")
    if vectors:
        stacked = np.stack(vectors)
        gram = stacked.conj() @ stacked.T
        if np.abs(gram - np.eye(len(vectors))).max() > ORTHONORMAL_ATOL:
            raise ValueError("input columns are not orthonormal")
    basis = list(vectors)
    for j in range(dim):
        if len(basis) == dim:
            break
        candidate = np.zeros(dim, dtype=np.complex128)
        candidate[j] = 1.0
        # two projection passes keep the completion orthogonal to ~1e-15
        for _ in range(2):
            for existing in basis:
                candidate = candidate - np.vdot(existing, candidate) * existing
        norm = np.linalg.norm(candidate)
        if norm > 1e-6:
            basis.append(candidate / norm)
    if len(basis) != dim:
        raise RuntimeError("Gram-Schmidt completion failed to span the space")
    return UnitaryMatrix(np.column_stack(basis), dim)
