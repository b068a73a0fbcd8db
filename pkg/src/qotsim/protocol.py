"""Session engine for the transmission / test / partition protocol.

One session: Alice sends ``n_states`` qubits; Bob flags each index for
testing with probability ``test_fraction`` and runs the state test on the
flagged ones in index order, aborting at the first failure. He measures
every untested qubit in the computational basis (outcome ``e``), then
announces two disjoint index sets: the one labelled by his secret choice
bit is drawn from the ``e=1`` pool, the other from the ``e=0`` pool.

Three sender strategies are provided:

* ``HonestAlice``   sends honest states and never guesses.
* ``EprAlice``      keeps a 4-level register entangled with every qubit;
                    when tested she rotates the register with the
                    correction unitary and follows the honest script, so
                    the test passes with probability 1. Measuring the
                    remaining registers tells her which family each
                    untested qubit collapsed to, and the family counts of
                    the announced sets reveal Bob's choice bit.
* ``NaiveCheatAlice`` commits up front to a random prime / double-prime
                    state per index. The family counts leak exactly as
                    much as the entangled attack, but the transmitted
                    states no longer match the test reference, so the
                    cheat is detectable.

``run_session`` is a pure function of ``(params, rng)``. Sessions are
independent given independent generators, so they can run in parallel.
The per-index loops execute in compiled kernels (see ``_kernels``); with
``QOTSIM_DISABLE_NUMBA=1`` an equivalent strategy-object lane built on
``qcore`` runs instead, consuming the identical uniform stream.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .qcore import Ket, apply_on_subsystem, measure_subsystem, projective_test
from .states import (
    Family,
    correction_unitary,
    make_phi_prime,
    make_state,
    validate_beta,
)

CODE_UNSET = -1
CODE_ENTANGLED = -2

_FAMILY_ORDER: tuple[tuple[Family, int], ...] = (
    (Family.HONEST, 0),
    (Family.HONEST, 1),
    (Family.PRIME, 0),
    (Family.PRIME, 1),
    (Family.DOUBLE_PRIME, 0),
    (Family.DOUBLE_PRIME, 1),
)

PRIME_CODES = (2, 3)


def state_code(family: Family, sign: int) -> int:
    """Integer code of a (family, sign) pair, as stored in transcripts."""
    return _FAMILY_ORDER.index((family, sign))


def code_family(code: int) -> tuple[Family, int]:
    """Inverse of ``state_code``."""
    if not 0 <= code < len(_FAMILY_ORDER):
        raise ValueError(f"not a state code: {code}")
    return _FAMILY_ORDER[code]


class Mode(str, Enum):
    """Which sender strategy a session runs."""

    HONEST = "honest"
    EPR = "epr"
    NAIVE = "naive"


class RetriableSession(Exception):
    """A pool was too small to announce both sets; rerun with a fresh stream."""


@dataclass(frozen=True)
class ProtocolParams:
    """Session parameters.

    ``n_states`` transmitted indices, per-index test probability
    ``test_fraction``, announced sets of ``set_size`` indices each. The
    expected untested count must cover both sets; realized shortfalls are
    still possible and surface as ``RetriableSession``.
    """

    beta: float
    n_states: int
    test_fraction: float
    set_size: int
    mode: Mode
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", validate_beta(self.beta))
        object.__setattr__(self, "n_states", int(self.n_states))
        object.__setattr__(self, "test_fraction", float(self.test_fraction))
        object.__setattr__(self, "set_size", int(self.set_size))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "seed", int(self.seed))
        if self.n_states < 1:
            raise ValueError(f"n_states must be positive, got {self.n_states}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in [0, 1), got {self.test_fraction}")
        if self.set_size < 1:
            raise ValueError(f"set_size must be positive, got {self.set_size}")
        expected_untested = self.n_states * (1.0 - self.test_fraction)
        if expected_untested < 2 * self.set_size:
            raise ValueError(
                f"expected untested count {expected_untested:.1f} cannot fill two "
                f"sets of {self.set_size}"
            )


@dataclass(frozen=True, eq=False)
class Transcript:
    """Full record of one session.

    Per-index columns use ``CODE_UNSET`` (-1) for fields that never got a
    value; ``family_prepared`` holds state codes, or ``CODE_ENTANGLED``
    when the index was sent as half of the cheating purification.
    ``probe_guess`` is a strategy-independent coin used as the no-signal
    baseline; honest Alice herself never guesses.
    """

    family_prepared: np.ndarray
    tested: np.ndarray
    revealed_bit: np.ndarray
    test_passed: np.ndarray
    e_outcome: np.ndarray
    alice_observation: np.ndarray
    bob_choice: Optional[int]
    r0: Optional[np.ndarray]
    r1: Optional[np.ndarray]
    alice_guess: Optional[int]
    probe_guess: Optional[int]
    aborted: bool

    def __post_init__(self) -> None:
        n = self.family_prepared.size
        for name in ("tested", "revealed_bit", "test_passed", "e_outcome", "alice_observation"):
            if getattr(self, name).size != n:
                raise ValueError(f"column {name} does not cover all {n} indices")
        for name in ("family_prepared", "tested", "revealed_bit", "test_passed",
                     "e_outcome", "alice_observation"):
            getattr(self, name).setflags(write=False)
        failed = bool((self.test_passed == 0).any())
        if failed != self.aborted:
            raise ValueError("aborted flag disagrees with recorded test failures")
        if self.aborted:
            if self.r0 is not None or self.r1 is not None or self.bob_choice is not None:
                raise ValueError("aborted sessions announce no sets")
        else:
            if self.r0 is None or self.r1 is None or self.bob_choice not in (0, 1):
                raise ValueError("completed sessions must carry both sets and a choice bit")
            self.r0.setflags(write=False)
            self.r1.setflags(write=False)
            if self.r0.size != self.r1.size:
                raise ValueError("announced sets differ in size")
            if np.intersect1d(self.r0, self.r1).size:
                raise ValueError("announced sets overlap")
            untested = set(np.flatnonzero(~self.tested).tolist())
            if not set(self.r0.tolist()) | set(self.r1.tolist()) <= untested:
                raise ValueError("announced sets contain tested indices")

    @property
    def n_states(self) -> int:
        return self.family_prepared.size


class AliceStrategy(ABC):
    """Per-index sender behaviour inside one session.

    The session owns the quantum values: ``prepare`` returns the full
    transmitted object (a bare qubit, or a register-qubit pair of dims
    (4, 2) with subsystem 0 retained by Alice), and the later hooks
    receive the current state back and return its successor.
    """

    @abstractmethod
    def prepare(self, index: int, rng) -> Ket:
        """State sent for this index, including any retained ancilla."""

    @abstractmethod
    def answer_test(self, index: int, state: Ket, rng) -> tuple[int, Ket]:
        """Revealed bit plus any local operation, when Bob tests this index."""

    @abstractmethod
    def observe(self, index: int, state: Ket, rng) -> tuple[Optional[Family], Optional[int], Ket]:
        """Local measurement after the test phase; (family, sign, new state)."""

    @abstractmethod
    def guess_choice(self, r0: Sequence[int], r1: Sequence[int], rng) -> Optional[int]:
        """Guess of Bob's choice bit, or None for a strategy that cannot."""


class HonestAlice(AliceStrategy):
    """Sends honest states for i.i.d. uniform sign bits; keeps no ancilla."""

    def __init__(self, beta: float) -> None:
        self.beta = validate_beta(beta)
        self.sign_bits: dict[int, int] = {}

    def prepare(self, index: int, rng) -> Ket:
        bit = 0 if rng.random() < 0.5 else 1
        self.sign_bits[index] = bit
        return make_state(Family.HONEST, bit, self.beta)

    def answer_test(self, index: int, state: Ket, rng) -> tuple[int, Ket]:
        return self.sign_bits[index], state

    def observe(self, index, state, rng):
        return None, None, state

    def guess_choice(self, r0, r1, rng) -> Optional[int]:
        return None


class EprAlice(AliceStrategy):
    """Delays her commitment by sending halves of the cheating purification."""

    def __init__(self, beta: float) -> None:
        self.beta = validate_beta(beta)
        self.observations: dict[int, Family] = {}

    def prepare(self, index: int, rng) -> Ket:
        return epr_prepare(self.beta)

    def answer_test(self, index: int, state: Ket, rng) -> tuple[int, Ket]:
        return epr_answer_test(state, self.beta, rng)

    def observe(self, index, state, rng):
        family, sign, post = epr_observe(state, rng)
        self.observations[index] = family
        return family, sign, post

    def guess_choice(self, r0, r1, rng) -> Optional[int]:
        return alice_infer_choice(self.observations, r0, r1, rng)


class NaiveCheatAlice(AliceStrategy):
    """Commits up front to a uniformly random family and sign per index."""

    def __init__(self, beta: float) -> None:
        self.beta = validate_beta(beta)
        self.families: dict[int, Family] = {}
        self.sign_bits: dict[int, int] = {}

    def prepare(self, index: int, rng) -> Ket:
        family = Family.PRIME if rng.random() < 0.5 else Family.DOUBLE_PRIME
        sign = 0 if rng.random() < 0.5 else 1
        self.families[index] = family
        self.sign_bits[index] = sign
        return make_state(family, sign, self.beta)

    def answer_test(self, index: int, state: Ket, rng) -> tuple[int, Ket]:
        return self.sign_bits[index], state

    def observe(self, index, state, rng):
        return self.families[index], self.sign_bits[index], state

    def guess_choice(self, r0, r1, rng) -> Optional[int]:
        return alice_infer_choice(self.families, r0, r1, rng)


def make_strategy(mode: Mode, beta: float) -> AliceStrategy:
    if mode is Mode.HONEST:
        return HonestAlice(beta)
    if mode is Mode.EPR:
        return EprAlice(beta)
    return NaiveCheatAlice(beta)


# ---------------------------------------------------------------------------
# per-index operations


def epr_prepare(beta: float) -> Ket:
    """Joint state for one attacked index; Alice retains subsystem 0."""
    return make_phi_prime(beta)


@lru_cache(maxsize=None)
def _correction(beta: float):
    return correction_unitary(beta)


def epr_answer_test(joint: Ket, beta: float, rng) -> tuple[int, Ket]:
    """Rotate the retained register onto the honest purification and measure it.

    The measurement outcome is the bit Alice reveals; Bob's register is then
    exactly the honest state for that bit, so his test passes with
    probability 1. Register outcomes 2 and 3 have weight below 1e-12 after
    the correction; sampling one indicates a broken correction unitary.
    """
    rotated = apply_on_subsystem(_correction(beta), 0, joint)
    outcome, post, _ = measure_subsystem(rotated, 0, rng)
    if outcome > 1:
        raise RuntimeError("correction unitary left register weight outside levels 0 and 1")
    return outcome, post


def epr_observe(joint: Ket, rng) -> tuple[Family, int, Ket]:
    """Measure the retained register of an untested index.

    Outcomes 0 and 1 mean Bob's qubit collapsed to a prime state, 2 and 3
    to a double-prime state. Commutes with Bob's own measurement.
    """
    outcome, post, _ = measure_subsystem(joint, 0, rng)
    family = Family.PRIME if outcome < 2 else Family.DOUBLE_PRIME
    return family, outcome & 1, post


def bob_test(state: Ket, target: int, revealed_bit: int, beta: float, rng) -> tuple[bool, Ket, float]:
    """Test one subsystem against the honest state for the revealed bit."""
    if revealed_bit not in (0, 1):
        raise ValueError(f"revealed bit must be 0 or 1, got {revealed_bit}")
    reference = make_state(Family.HONEST, revealed_bit, beta)
    return projective_test(state, target, reference, rng)


def bob_partition(
    e_outcomes: Mapping[int, int], choice: int, set_size: int, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Draw the announced sets: R_choice from the e=1 pool, the other from e=0.

    Both samples are uniform without replacement; raises
    ``RetriableSession`` if either pool holds fewer than ``set_size``
    indices.
    """
    if choice not in (0, 1):
        raise ValueError(f"choice bit must be 0 or 1, got {choice}")
    if set_size < 1:
        raise ValueError(f"set_size must be positive, got {set_size}")
    pool1 = np.array(sorted(i for i, e in e_outcomes.items() if e == 1), dtype=np.int64)
    pool0 = np.array(sorted(i for i, e in e_outcomes.items() if e == 0), dtype=np.int64)
    if pool1.size + pool0.size != len(e_outcomes):
        raise ValueError("e outcomes must be 0 or 1")
    if pool1.size < set_size or pool0.size < set_size:
        raise RetriableSession(
            f"pools of {pool1.size} (e=1) and {pool0.size} (e=0) cannot fill two "
            f"sets of {set_size}"
        )
    from_e1 = np.sort(rng.choice(pool1, size=set_size, replace=False))
    from_e0 = np.sort(rng.choice(pool0, size=set_size, replace=False))
    return (from_e1, from_e0) if choice == 0 else (from_e0, from_e1)


def alice_infer_choice(
    observations: Mapping[int, Family], r0: Sequence[int], r1: Sequence[int], rng
) -> int:
    """Guess which announced set is R_choice from the family counts.

    The set with strictly more prime-family indices is named; an exact tie
    falls back to a uniform coin.
    """
    counts = []
    for group in (r0, r1):
        primes = 0
        for index in group:
            family = observations.get(int(index))
            if family is None:
                raise ValueError(f"no observation recorded for index {int(index)}")
            if family is Family.PRIME:
                primes += 1
        counts.append(primes)
    if counts[0] > counts[1]:
        return 0
    if counts[1] > counts[0]:
        return 1
    return int(rng.integers(0, 2))


# ---------------------------------------------------------------------------
# session execution


@dataclass(frozen=True)
class _SessionRows:
    family: np.ndarray
    tested: np.ndarray
    revealed: np.ndarray
    passed: np.ndarray
    observed: np.ndarray
    e_outcome: np.ndarray
    fail_at: int


@lru_cache(maxsize=None)
def _tables(beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kernel inputs for one beta: state table, cheating state, correction."""
    states6 = np.stack(
        [make_state(family, sign, beta).amplitudes for family, sign in _FAMILY_ORDER]
    )
    phi_prime = make_phi_prime(beta).amplitudes.copy()
    u_corr = _correction(beta).entries.copy()
    return states6, phi_prime, u_corr


def _empty_rows(n: int) -> dict[str, np.ndarray]:
    return {
        "family": np.full(n, CODE_UNSET, dtype=np.int8),
        "tested": np.zeros(n, dtype=np.bool_),
        "revealed": np.full(n, CODE_UNSET, dtype=np.int8),
        "passed": np.full(n, CODE_UNSET, dtype=np.int8),
        "observed": np.full(n, CODE_UNSET, dtype=np.int8),
        "e_outcome": np.full(n, CODE_UNSET, dtype=np.int8),
    }


def _rows_kernel(params: ProtocolParams, uniforms: np.ndarray) -> _SessionRows:
    states6, phi_prime, u_corr = _tables(params.beta)
    cols = _empty_rows(params.n_states)
    if params.mode is Mode.HONEST:
        fail_at = _kernels.honest_rows(
            states6, params.test_fraction, uniforms,
            cols["family"], cols["tested"], cols["revealed"], cols["passed"],
            cols["e_outcome"],
        )
    elif params.mode is Mode.NAIVE:
        fail_at = _kernels.naive_rows(
            states6, params.test_fraction, uniforms,
            cols["family"], cols["tested"], cols["revealed"], cols["passed"],
            cols["observed"], cols["e_outcome"],
        )
    else:
        cols["family"][:] = CODE_ENTANGLED
        fail_at = _kernels.epr_rows(
            phi_prime, u_corr, states6, params.test_fraction, uniforms,
            cols["tested"], cols["revealed"], cols["passed"],
            cols["observed"], cols["e_outcome"],
        )
    return _SessionRows(fail_at=int(fail_at), **cols)


class _Script:
    """Replays preassigned uniforms to code expecting a Generator."""

    __slots__ = ("_values", "_cursor")

    def __init__(self, values: Sequence[float]) -> None:
        self._values = values
        self._cursor = 0

    def random(self) -> float:
        value = float(self._values[self._cursor])
        self._cursor += 1
        return value


def _rows_reference(params: ProtocolParams, uniforms: np.ndarray) -> _SessionRows:
    """Strategy-object lane; consumes the same uniform columns as the kernels."""
    n = params.n_states
    strategy = make_strategy(params.mode, params.beta)
    cols = _empty_rows(n)
    kets: list[Ket] = []
    for i in range(n):
        kets.append(strategy.prepare(i, _Script((uniforms[i, 1], uniforms[i, 2]))))
        cols["tested"][i] = uniforms[i, 0] < params.test_fraction
    if params.mode is Mode.HONEST:
        for i in range(n):
            cols["family"][i] = strategy.sign_bits[i]
    elif params.mode is Mode.NAIVE:
        for i in range(n):
            cols["family"][i] = state_code(strategy.families[i], strategy.sign_bits[i])
    else:
        cols["family"][:] = CODE_ENTANGLED

    fail_at = -1
    for i in range(n):
        if not cols["tested"][i]:
            continue
        revealed_bit, state = strategy.answer_test(i, kets[i], _Script((uniforms[i, 1],)))
        target = 1 if state.subsystem_count() == 2 else 0
        ok, state, _ = bob_test(
            state, target, revealed_bit, params.beta, _Script((uniforms[i, 3],))
        )
        kets[i] = state
        cols["revealed"][i] = revealed_bit
        cols["passed"][i] = 1 if ok else 0
        if not ok:
            fail_at = i
            break
    if fail_at < 0:
        for i in range(n):
            if cols["tested"][i]:
                continue
            family, sign, state = strategy.observe(i, kets[i], _Script((uniforms[i, 1],)))
            if family is not None:
                cols["observed"][i] = state_code(family, sign)
            target = 1 if state.subsystem_count() == 2 else 0
            outcome, state, _ = measure_subsystem(state, target, _Script((uniforms[i, 3],)))
            kets[i] = state
            cols["e_outcome"][i] = outcome
    return _SessionRows(fail_at=fail_at, **cols)


def run_session(params: ProtocolParams, rng: np.random.Generator) -> Transcript:
    """Execute one full session.

    Order of play: preparation and delivery, test flagging, ordered tests
    (first failure aborts the session), computational measurements of the
    untested indices, Bob's partition under a fresh uniform choice bit,
    and finally the strategy's guess. Raises ``RetriableSession`` when a
    pool cannot fill its announced set; callers rerun with a fresh stream.
    """
    uniforms = rng.random((params.n_states, 4))
    if _kernels.NUMBA_ENABLED:
        rows = _rows_kernel(params, uniforms)
    else:
        rows = _rows_reference(params, uniforms)
    base = dict(
        family_prepared=rows.family,
        tested=rows.tested,
        revealed_bit=rows.revealed,
        test_passed=rows.passed,
        e_outcome=rows.e_outcome,
        alice_observation=rows.observed,
    )
    if rows.fail_at >= 0:
        return Transcript(
            bob_choice=None, r0=None, r1=None, alice_guess=None, probe_guess=None,
            aborted=True, **base,
        )
    untested = np.flatnonzero(~rows.tested)
    e_map = {int(i): int(rows.e_outcome[i]) for i in untested}
    choice = int(rng.integers(0, 2))
    r0, r1 = bob_partition(e_map, choice, params.set_size, rng)
    if params.mode is Mode.HONEST:
        guess: Optional[int] = None
    else:
        observations = {}
        for index in np.concatenate([r0, r1]):
            family, _sign = code_family(int(rows.observed[index]))
            observations[int(index)] = family
        guess = alice_infer_choice(observations, r0, r1, rng)
    probe = int(rng.integers(0, 2))
    return Transcript(
        bob_choice=choice, r0=r0, r1=r1, alice_guess=guess, probe_guess=probe,
        aborted=False, **base,
    )
