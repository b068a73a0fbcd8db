"""Seeded Monte Carlo experiments, exact oracles, and report emission.

Trial ``i`` of an experiment draws its generator from the stateless mix
``SeedSequence([seed, i, retry])``, so results are independent of
execution order and identical configs reproduce byte-identical reports.
Sessions that cannot fill both announced sets are retried with the next
retry counter and reported, never silently merged.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import binom

from .protocol import (
    CODE_UNSET,
    Mode,
    PRIME_CODES,
    ProtocolParams,
    RetriableSession,
    code_family,
    run_session,
)
from .qcore import apply_on_subsystem, fidelity, partial_trace
from .states import (
    Family,
    correction_unitary,
    embed_phi,
    make_phi,
    make_phi_prime,
    prob_e1,
    validate_beta,
)

Z95 = 1.96
MAX_SESSION_RETRIES = 1000
MAX_SET_SIZE = 10_000

REDUCED_STATE_TOL = 1e-12
CORRECTION_DEFICIT_TOL = 1e-10
DEFAULT_BETA_GRID = tuple(i / 100 for i in range(1, 100))

# Fixed key set of the JSON report; emit_report must produce exactly these.
REPORT_FIELDS = (
    "config",
    "seed",
    "trials_completed",
    "retried_sessions",
    "abort_rate",
    "abort_rate_ci",
    "guess_accuracy",
    "guess_accuracy_ci",
    "e1_freq_honest",
    "e1_freq_prime",
    "e1_freq_double_prime",
    "prime_fraction_rc",
    "prime_fraction_other",
)

CSV_FIELDS = (
    "mode",
    "beta",
    "n_states",
    "test_fraction",
    "set_size",
    "trials",
    "seed",
    "trials_completed",
    "retried_sessions",
    "abort_rate",
    "abort_rate_lo",
    "abort_rate_hi",
    "guess_accuracy",
    "guess_accuracy_lo",
    "guess_accuracy_hi",
    "e1_freq_honest",
    "e1_freq_prime",
    "e1_freq_double_prime",
    "prime_fraction_rc",
    "prime_fraction_other",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """A protocol configuration plus how often and where to run it."""

    params: ProtocolParams
    trials: int
    output_format: str = "json"
    output_path: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", int(self.trials))
        if self.trials < 1:
            raise ValueError(f"trials must be positive, got {self.trials}")
        if self.output_format not in ("json", "csv"):
            raise ValueError(f"unknown output format {self.output_format!r}")


@dataclass(frozen=True)
class RunStats:
    """Aggregated results of one experiment.

    ``guess_accuracy`` scores the strategy's guess in attack modes and the
    no-signal probe coin in honest mode; rates are over non-aborted
    sessions except ``abort_rate`` itself. ``tests_run``/``tests_passed``
    count individual state tests across all sessions.
    """

    config: ExperimentConfig
    seed: int
    trials_completed: int
    retried_sessions: int
    abort_rate: float
    abort_rate_ci: tuple[float, float]
    guess_accuracy: Optional[float]
    guess_accuracy_ci: Optional[tuple[float, float]]
    e1_frequency_by_family: dict[Family, tuple[float, tuple[float, float]]]
    untested_by_family: dict[Family, int]
    prime_fraction_rc: Optional[float]
    prime_fraction_other: Optional[float]
    tests_run: int
    tests_passed: int

    def __post_init__(self) -> None:
        pairs = [(self.abort_rate, self.abort_rate_ci)]
        if self.guess_accuracy is not None:
            pairs.append((self.guess_accuracy, self.guess_accuracy_ci))
        pairs.extend(self.e1_frequency_by_family.values())
        for rate, (lo, hi) in pairs:
            if not 0.0 <= lo <= rate <= hi <= 1.0:
                raise ValueError(f"interval ({lo}, {hi}) does not bracket rate {rate}")


def wilson_interval(successes: int, n: int, z: float) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes {successes} outside [0, {n}]")
    if z < 0:
        raise ValueError(f"z must be non-negative, got {z}")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return float(max(0.0, center - half)), float(min(1.0, center + half))


def analytic_accuracy(beta: float, set_size: int, max_set_size: int = MAX_SET_SIZE) -> float:
    """Exact probability that the family-count inference names R_choice.

    Conditioned on e=1, the posterior weight of the prime family is
    (3b/4) / (3b/4 + b/4) = 3/4 independent of beta, so the prime count in
    R_choice is Binomial(m, 3/4); in the other set it is Binomial(m, p0)
    with p0 = (1 - 3b/4) / (2 - b). The guess is right when the R_choice
    count is strictly larger, plus half of the ties. Computed by exact
    convolution of the two pmfs, no sampling.
    """
    beta = validate_beta(beta)
    set_size = int(set_size)
    if set_size < 1:
        raise ValueError(f"set_size must be positive, got {set_size}")
    if set_size > max_set_size:
        raise ValueError(f"set_size {set_size} exceeds the convolution bound {max_set_size}")
    p_rc = 0.75
    p_other = (1.0 - 0.75 * beta) / (2.0 - beta)
    k = np.arange(set_size + 1)
    pmf_rc = binom.pmf(k, set_size, p_rc)
    pmf_other = binom.pmf(k, set_size, p_other)
    cdf_other = np.cumsum(pmf_other)
    win = float(pmf_rc[1:] @ cdf_other[:-1])
    tie = float(pmf_rc @ pmf_other)
    return win + 0.5 * tie


def run_experiment(config: ExperimentConfig) -> RunStats:
    """Run ``config.trials`` sessions and fold their transcripts into stats."""
    params = config.params
    master = params.seed & 0xFFFFFFFFFFFFFFFF
    aborted = 0
    retried = 0
    tests_run = 0
    tests_passed = 0
    guess_hits = 0
    guess_total = 0
    untested_counts = {family: 0 for family in Family}
    e1_counts = {family: 0 for family in Family}
    prime_rc_sum = 0.0
    prime_other_sum = 0.0
    prime_sessions = 0

    for trial in range(config.trials):
        transcript = None
        for retry in range(MAX_SESSION_RETRIES):
            rng = np.random.default_rng(np.random.SeedSequence([master, trial, retry]))
            try:
                transcript = run_session(params, rng)
                break
            except RetriableSession:
                retried += 1
        if transcript is None:
            raise RuntimeError(
                f"trial {trial} failed to form both sets in {MAX_SESSION_RETRIES} retries"
            )
        ran = transcript.test_passed != CODE_UNSET
        tests_run += int(ran.sum())
        tests_passed += int((transcript.test_passed == 1).sum())
        if transcript.aborted:
            aborted += 1
            continue

        untested = ~transcript.tested
        if params.mode is Mode.EPR:
            codes = transcript.alice_observation
        else:
            codes = transcript.family_prepared
        for code in range(6):
            mask = untested & (codes == code)
            count = int(mask.sum())
            if not count:
                continue
            family, _ = code_family(code)
            untested_counts[family] += count
            e1_counts[family] += int((transcript.e_outcome[mask] == 1).sum())

        if params.mode is Mode.HONEST:
            guess = transcript.probe_guess
        else:
            guess = transcript.alice_guess
            r_choice = transcript.r0 if transcript.bob_choice == 0 else transcript.r1
            r_other = transcript.r1 if transcript.bob_choice == 0 else transcript.r0
            prime_rc_sum += float(np.isin(codes[r_choice], PRIME_CODES).mean())
            prime_other_sum += float(np.isin(codes[r_other], PRIME_CODES).mean())
            prime_sessions += 1
        guess_total += 1
        guess_hits += int(guess == transcript.bob_choice)

    e1_frequency = {
        family: (
            e1_counts[family] / untested_counts[family],
            wilson_interval(e1_counts[family], untested_counts[family], Z95),
        )
        for family in Family
        if untested_counts[family]
    }
    return RunStats(
        config=config,
        seed=params.seed,
        trials_completed=config.trials,
        retried_sessions=retried,
        abort_rate=aborted / config.trials,
        abort_rate_ci=wilson_interval(aborted, config.trials, Z95),
        guess_accuracy=guess_hits / guess_total if guess_total else None,
        guess_accuracy_ci=wilson_interval(guess_hits, guess_total, Z95) if guess_total else None,
        e1_frequency_by_family=e1_frequency,
        untested_by_family={f: c for f, c in untested_counts.items() if c},
        prime_fraction_rc=prime_rc_sum / prime_sessions if prime_sessions else None,
        prime_fraction_other=prime_other_sum / prime_sessions if prime_sessions else None,
        tests_run=tests_run,
        tests_passed=tests_passed,
    )


# ---------------------------------------------------------------------------
# analytic identity verification


@dataclass(frozen=True)
class IdentityCheck:
    """Per-beta numbers behind the undetectability claims."""

    beta: float
    reduced_state_distance: float
    correction_deficit: float
    ordering_ok: bool


@dataclass(frozen=True)
class IdentityReport:
    checks: tuple[IdentityCheck, ...]
    violations: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_identities(beta_grid=DEFAULT_BETA_GRID) -> IdentityReport:
    """Check the three analytic identities on a grid of beta values.

    Per beta: the receiver-side reduced states of both purifications agree
    entrywise within 1e-12, the corrected cheating state matches the
    embedded honest purification with fidelity deficit at most 1e-10, and
    the e=1 weights order strictly as double prime < honest < prime.
    """
    grid = [validate_beta(b) for b in beta_grid]
    if not grid:
        raise ValueError("beta grid must not be empty")
    checks = []
    violations = []
    for beta in grid:
        rho_honest = partial_trace(make_phi(beta), keep=1).entries
        rho_cheat = partial_trace(make_phi_prime(beta), keep=1).entries
        distance = float(np.abs(rho_honest - rho_cheat).max())
        corrected = apply_on_subsystem(correction_unitary(beta), 0, make_phi_prime(beta))
        deficit = float(1.0 - fidelity(corrected, embed_phi(beta)))
        ordering_ok = (
            prob_e1(Family.DOUBLE_PRIME, beta)
            < prob_e1(Family.HONEST, beta)
            < prob_e1(Family.PRIME, beta)
        )
        checks.append(IdentityCheck(beta, distance, deficit, ordering_ok))
        if distance > REDUCED_STATE_TOL:
            violations.append(f"beta={beta:g}: reduced-state distance {distance:.3e}")
        if deficit > CORRECTION_DEFICIT_TOL:
            violations.append(f"beta={beta:g}: correction fidelity deficit {deficit:.3e}")
        if not ordering_ok:
            violations.append(f"beta={beta:g}: e=1 weights are not ordered")
    return IdentityReport(tuple(checks), tuple(violations))


# ---------------------------------------------------------------------------
# report emission


def _fmt(value: Optional[float]) -> Optional[float]:
    """Round to 12 significant digits so printed reports are diff-stable."""
    if value is None:
        return None
    return float(f"{value:.12g}")


def _fmt_pair(pair) -> Optional[list[float]]:
    if pair is None:
        return None
    return [_fmt(pair[0]), _fmt(pair[1])]


def _family_freq(stats: RunStats, family: Family) -> Optional[float]:
    entry = stats.e1_frequency_by_family.get(family)
    return None if entry is None else entry[0]


def emit_report(stats: RunStats, output_format: str = "json") -> str:
    """Serialize stats deterministically; floats carry 12 significant digits."""
    params = stats.config.params
    if output_format == "json":
        payload = {
            "config": {
                "mode": params.mode.value,
                "beta": _fmt(params.beta),
                "n_states": params.n_states,
                "test_fraction": _fmt(params.test_fraction),
                "set_size": params.set_size,
                "trials": stats.config.trials,
                "seed": stats.seed,
            },
            "seed": stats.seed,
            "trials_completed": stats.trials_completed,
            "retried_sessions": stats.retried_sessions,
            "abort_rate": _fmt(stats.abort_rate),
            "abort_rate_ci": _fmt_pair(stats.abort_rate_ci),
            "guess_accuracy": _fmt(stats.guess_accuracy),
            "guess_accuracy_ci": _fmt_pair(stats.guess_accuracy_ci),
            "e1_freq_honest": _fmt(_family_freq(stats, Family.HONEST)),
            "e1_freq_prime": _fmt(_family_freq(stats, Family.PRIME)),
            "e1_freq_double_prime": _fmt(_family_freq(stats, Family.DOUBLE_PRIME)),
            "prime_fraction_rc": _fmt(stats.prime_fraction_rc),
            "prime_fraction_other": _fmt(stats.prime_fraction_other),
        }
        return json.dumps(payload, indent=2) + "\n"
    if output_format == "csv":
        def cell(value) -> str:
            if value is None:
                return ""
            if isinstance(value, float):
                return f"{value:.12g}"
            return str(value)

        abort_lo, abort_hi = stats.abort_rate_ci
        guess_lo, guess_hi = stats.guess_accuracy_ci or (None, None)
        row = {
            "mode": params.mode.value,
            "beta": params.beta,
            "n_states": params.n_states,
            "test_fraction": params.test_fraction,
            "set_size": params.set_size,
            "trials": stats.config.trials,
            "seed": stats.seed,
            "trials_completed": stats.trials_completed,
            "retried_sessions": stats.retried_sessions,
            "abort_rate": stats.abort_rate,
            "abort_rate_lo": abort_lo,
            "abort_rate_hi": abort_hi,
            "guess_accuracy": stats.guess_accuracy,
            "guess_accuracy_lo": guess_lo,
            "guess_accuracy_hi": guess_hi,
            "e1_freq_honest": _family_freq(stats, Family.HONEST),
            "e1_freq_prime": _family_freq(stats, Family.PRIME),
            "e1_freq_double_prime": _family_freq(stats, Family.DOUBLE_PRIME),
            "prime_fraction_rc": stats.prime_fraction_rc,
            "prime_fraction_other": stats.prime_fraction_other,
        }
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        writer.writerow([cell(row[name]) for name in CSV_FIELDS])
        return buffer.getvalue()
    raise ValueError(f"unknown output format {output_format!r}")


def write_report(text: str, path: str) -> None:
    """Write a serialized report; I/O failures propagate as OSError."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)
