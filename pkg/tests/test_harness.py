"""Tests for the Monte Carlo harness, the exact oracle, and report emission."""

import csv
import io
import json
from math import comb

import numpy as np
import pytest

from qotsim.harness import (
    CSV_FIELDS,
    DEFAULT_BETA_GRID,
    ExperimentConfig,
    REPORT_FIELDS,
    RunStats,
    analytic_accuracy,
    emit_report,
    run_experiment,
    verify_identities,
    wilson_interval,
    write_report,
)
from qotsim.protocol import Mode, ProtocolParams
from qotsim.states import Family


def brute_accuracy(beta, m):
    """Independent enumeration oracle: sum over all (prime count) pairs."""
    p_rc = 0.75
    p_other = (1 - 0.75 * beta) / (2 - beta)
    total = 0.0
    for x in range(m + 1):
        for y in range(m + 1):
            joint = (
                comb(m, x) * p_rc**x * (1 - p_rc) ** (m - x)
                * comb(m, y) * p_other**y * (1 - p_other) ** (m - y)
            )
            if x > y:
                total += joint
            elif x == y:
                total += 0.5 * joint
    return total


class TestAnalyticAccuracy:
    def test_hand_enumerated_small_case(self):
        # m=1, beta=0.5: P(X>Y) = 3/4 * 7/12, ties = 1/4 * 7/12 + 3/4 * 5/12
        assert analytic_accuracy(0.5, 1) == pytest.approx(2 / 3, abs=1e-12)

    @pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
    @pytest.mark.parametrize("m", [1, 2, 3, 7])
    def test_matches_brute_force_enumeration(self, beta, m):
        assert analytic_accuracy(beta, m) == pytest.approx(brute_accuracy(beta, m), abs=1e-12)

    def test_monotone_in_set_size(self):
        for beta in (0.25, 0.5, 0.75):
            values = [analytic_accuracy(beta, m) for m in (1, 2, 5, 10, 25)]
            assert all(a < b for a, b in zip(values, values[1:]))

    def test_monotone_in_posterior_gap(self):
        # p_other falls with beta while p_rc stays 3/4, so accuracy rises
        values = [analytic_accuracy(beta, 5) for beta in np.linspace(0.1, 1.0, 10)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_large_set_approaches_certainty(self):
        assert analytic_accuracy(0.5, 200) > 0.9999

    def test_convolution_bound_enforced(self):
        with pytest.raises(ValueError):
            analytic_accuracy(0.5, 10_001)
        assert analytic_accuracy(0.5, 100, max_set_size=100) < 1.0

    def test_set_size_validated(self):
        with pytest.raises(ValueError):
            analytic_accuracy(0.5, 0)


class TestWilsonInterval:
    def test_zero_successes_floor_is_zero(self):
        lo, hi = wilson_interval(0, 40, 1.96)
        assert lo == 0.0 and 0 < hi < 1

    def test_full_successes_ceiling_is_one(self):
        lo, hi = wilson_interval(40, 40, 1.96)
        assert hi == 1.0 and 0 < lo < 1

    def test_half_successes_reference_values(self):
        lo, hi = wilson_interval(50, 100, 1.96)
        assert lo == pytest.approx(0.404, abs=5e-4)
        assert hi == pytest.approx(0.596, abs=5e-4)

    def test_interval_contains_point_estimate(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            n = int(rng.integers(1, 500))
            s = int(rng.integers(0, n + 1))
            lo, hi = wilson_interval(s, n, 1.96)
            assert lo <= s / n <= hi

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError):
            wilson_interval(5, 0, 1.96)
        with pytest.raises(ValueError):
            wilson_interval(6, 5, 1.96)
        with pytest.raises(ValueError):
            wilson_interval(1, 5, -1.0)


class TestVerifyIdentities:
    def test_default_grid_passes_everywhere(self):
        report = verify_identities()
        assert len(report.checks) == len(DEFAULT_BETA_GRID) == 99
        assert report.passed and report.violations == ()
        assert max(c.reduced_state_distance for c in report.checks) <= 1e-12
        assert max(c.correction_deficit for c in report.checks) <= 1e-10
        assert all(c.ordering_ok for c in report.checks)

    def test_degenerate_point_included_explicitly(self):
        report = verify_identities([0.5, 1.0])
        assert report.passed
        assert report.checks[-1].beta == 1.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            verify_identities([])

    def test_invalid_beta_rejected(self):
        with pytest.raises(ValueError):
            verify_identities([0.5, 1.5])


def experiment(mode, beta, n, test_fraction, set_size, trials, seed):
    params = ProtocolParams(beta, n, test_fraction, set_size, mode, seed)
    return run_experiment(ExperimentConfig(params, trials))


class TestRunExperiment:
    def test_honest_baseline(self):
        stats = experiment(Mode.HONEST, 0.5, 60, 0.2, 5, 400, seed=1)
        assert stats.abort_rate == 0.0
        assert stats.tests_passed == stats.tests_run
        sigma = np.sqrt(0.25 / 400)
        assert abs(stats.guess_accuracy - 0.5) < 3 * sigma
        freq, _ = stats.e1_frequency_by_family[Family.HONEST]
        count = stats.untested_by_family[Family.HONEST]
        assert abs(freq - 0.25) < 3 * np.sqrt(0.25 * 0.75 / count)
        assert stats.prime_fraction_rc is None and stats.prime_fraction_other is None

    def test_retried_sessions_are_counted_not_dropped(self):
        stats = experiment(Mode.HONEST, 0.02, 120, 0.0, 1, 200, seed=2)
        assert stats.trials_completed == 200
        assert stats.retried_sessions > 0

    def test_reports_are_reproducible_bytes(self):
        for fmt in ("json", "csv"):
            first = emit_report(experiment(Mode.EPR, 0.5, 100, 0.3, 10, 40, seed=3), fmt)
            second = emit_report(experiment(Mode.EPR, 0.5, 100, 0.3, 10, 40, seed=3), fmt)
            assert first == second

    def test_trials_validated(self):
        params = ProtocolParams(0.5, 60, 0.2, 5, Mode.HONEST, 1)
        with pytest.raises(ValueError):
            ExperimentConfig(params, 0)

    @pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
    @pytest.mark.parametrize("set_size,n", [(1, 32), (5, 80), (25, 320)])
    def test_guess_accuracy_agrees_with_exact_oracle(self, beta, set_size, n):
        trials = 2000
        stats = experiment(Mode.EPR, beta, n, 0.0, set_size, trials, seed=1000 + set_size)
        expected = analytic_accuracy(beta, set_size)
        sigma = np.sqrt(expected * (1 - expected) / trials)
        assert abs(stats.guess_accuracy - expected) < 3 * sigma

    def test_leakage_grows_with_set_size(self):
        sizes_and_n = [(1, 24), (2, 24), (5, 80), (10, 160), (25, 320)]
        measured = []
        for set_size, n in sizes_and_n:
            stats = experiment(Mode.EPR, 0.5, n, 0.0, set_size, 2000, seed=2000 + set_size)
            expected = analytic_accuracy(0.5, set_size)
            sigma = np.sqrt(expected * (1 - expected) / 2000)
            assert abs(stats.guess_accuracy - expected) < 3 * sigma
            measured.append(stats.guess_accuracy)
        assert all(a < b for a, b in zip(measured, measured[1:]))

    def test_wilson_interval_coverage(self):
        # 200 small experiments with known accuracy 2/3: the 95% interval
        # must cover the true value in at least 90% of them
        truth = 2 / 3
        covered = 0
        for rep in range(200):
            stats = experiment(Mode.EPR, 0.5, 24, 0.0, 1, 150, seed=3000 + rep)
            lo, hi = stats.guess_accuracy_ci
            covered += int(lo <= truth <= hi)
        assert covered >= 180


class TestReports:
    def test_json_key_set_is_exact(self):
        stats = experiment(Mode.EPR, 0.5, 60, 0.2, 5, 25, seed=4)
        payload = json.loads(emit_report(stats, "json"))
        assert list(payload.keys()) == list(REPORT_FIELDS)
        assert list(payload["config"].keys()) == [
            "mode", "beta", "n_states", "test_fraction", "set_size", "trials", "seed",
        ]

    def test_json_round_trip_preserves_printed_values(self):
        stats = experiment(Mode.EPR, 0.5, 60, 0.2, 5, 25, seed=5)
        text = emit_report(stats, "json")
        payload = json.loads(text)
        assert payload["abort_rate"] == float(f"{stats.abort_rate:.12g}")
        assert payload["guess_accuracy"] == float(f"{stats.guess_accuracy:.12g}")
        assert json.loads(json.dumps(payload)) == payload

    def test_json_nulls_for_modes_without_families(self):
        honest = json.loads(emit_report(experiment(Mode.HONEST, 0.5, 60, 0.2, 5, 25, seed=6)))
        assert honest["e1_freq_prime"] is None
        assert honest["e1_freq_double_prime"] is None
        assert honest["prime_fraction_rc"] is None
        assert honest["e1_freq_honest"] is not None
        attack = json.loads(emit_report(experiment(Mode.EPR, 0.5, 60, 0.2, 5, 25, seed=6)))
        assert attack["e1_freq_honest"] is None
        assert attack["e1_freq_prime"] is not None

    def test_csv_header_is_byte_stable(self):
        stats = experiment(Mode.NAIVE, 0.5, 60, 0.2, 5, 25, seed=7)
        text = emit_report(stats, "csv")
        header = text.splitlines()[0]
        assert header == ",".join(CSV_FIELDS)
        rows = list(csv.reader(io.StringIO(text)))
        assert len(rows) == 2 and len(rows[1]) == len(CSV_FIELDS)

    def test_unknown_format_rejected(self):
        stats = experiment(Mode.HONEST, 0.5, 60, 0.2, 5, 10, seed=8)
        with pytest.raises(ValueError):
            emit_report(stats, "yaml")

    def test_write_report_propagates_io_failure(self, tmp_path):
        with pytest.raises(OSError):
            write_report("text", str(tmp_path))  # a directory is not writable as a file

    def test_runstats_rejects_broken_interval(self):
        stats = experiment(Mode.HONEST, 0.5, 60, 0.2, 5, 10, seed=9)
        with pytest.raises(ValueError):
            RunStats(
                config=stats.config, seed=stats.seed, trials_completed=10,
                retried_sessions=0, abort_rate=0.5, abort_rate_ci=(0.6, 0.7),
                guess_accuracy=None, guess_accuracy_ci=None,
                e1_frequency_by_family={}, untested_by_family={},
                prime_fraction_rc=None, prime_fraction_other=None,
                tests_run=0, tests_passed=0,
            )
