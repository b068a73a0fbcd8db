"""Per-index session loops, compiled with numba when available.

These kernels are the hot path of ``protocol.run_session``. Each one walks
the transmitted indices of a single session in three passes (test flags,
ordered tests until the first failure, measurements of the untested rest)
and fills per-index output arrays. All randomness comes from a pre-drawn
``(n, 4)`` uniform matrix with fixed column roles:

    column 0: test flag        column 1: Alice draw (bit / family / register)
    column 2: naive sign draw  column 3: Bob draw (test pass / e outcome)

Sampling replicates ``qcore`` exactly: raw Born weights, branches below
``BRANCH_FLOOR`` zeroed and renormalized, cumulative scan, and the same
deterministic guard on near-certain test outcomes. The pure-Python
versions of the kernels stay reachable via ``.py_func`` when compiled.

Set ``QOTSIM_DISABLE_NUMBA=1`` to skip compilation; ``protocol`` then runs
its strategy-object reference lane instead.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and os.environ.get("QOTSIM_DISABLE_NUMBA", "") != "1"

BRANCH_FLOOR = 1e-15  # keep in sync with qcore.BRANCH_FLOOR


def honest_rows(states, test_frac, u, family, tested, revealed, passed, e_out):
    """Honest sender: per-index honest state with a uniform sign bit."""
    n = u.shape[0]
    for i in range(n):
        family[i] = 0 if u[i, 1] < 0.5 else 1
        tested[i] = u[i, 0] < test_frac
    for i in range(n):
        if not tested[i]:
            continue
        b = family[i]
        ov = 0j
        for j in range(2):
            ov += np.conj(states[b, j]) * states[b, j]
        q = ov.real * ov.real + ov.imag * ov.imag
        revealed[i] = b
        if q >= 1.0 - BRANCH_FLOOR:
            passed[i] = 1
        elif q <= BRANCH_FLOOR:
            passed[i] = 0
        else:
            passed[i] = 1 if u[i, 3] < q else 0
        if passed[i] == 0:
            return i
    for i in range(n):
        if tested[i]:
            continue
        b = family[i]
        p0 = states[b, 0].real ** 2 + states[b, 0].imag ** 2
        p1 = states[b, 1].real ** 2 + states[b, 1].imag ** 2
        if p0 < BRANCH_FLOOR:
            p0 = 0.0
        if p1 < BRANCH_FLOOR:
            p1 = 0.0
        total = p0 + p1
        e = 1 if p1 > 0.0 else 0
        climb = p0 / total
        if u[i, 3] < climb:
            e = 0
        e_out[i] = e
    return -1


def naive_rows(states, test_frac, u, family, tested, revealed, passed, observed, e_out):
    """Committed cheater: sends a prime or double-prime state chosen up front."""
    n = u.shape[0]
    for i in range(n):
        prime = u[i, 1] < 0.5
        sign = 0 if u[i, 2] < 0.5 else 1
        family[i] = (2 if prime else 4) + sign
        tested[i] = u[i, 0] < test_frac
    for i in range(n):
        if not tested[i]:
            continue
        code = family[i]
        sign = (code - 2) & 1
        ov = 0j
        for j in range(2):
            ov += np.conj(states[sign, j]) * states[code, j]
        q = ov.real * ov.real + ov.imag * ov.imag
        revealed[i] = sign
        if q >= 1.0 - BRANCH_FLOOR:
            passed[i] = 1
        elif q <= BRANCH_FLOOR:
            passed[i] = 0
        else:
            passed[i] = 1 if u[i, 3] < q else 0
        if passed[i] == 0:
            return i
    for i in range(n):
        if tested[i]:
            continue
        code = family[i]
        observed[i] = code  # she committed at preparation, so she just recalls
        p0 = states[code, 0].real ** 2 + states[code, 0].imag ** 2
        p1 = states[code, 1].real ** 2 + states[code, 1].imag ** 2
        if p0 < BRANCH_FLOOR:
            p0 = 0.0
        if p1 < BRANCH_FLOOR:
            p1 = 0.0
        total = p0 + p1
        e = 1 if p1 > 0.0 else 0
        climb = p0 / total
        if u[i, 3] < climb:
            e = 0
        e_out[i] = e
    return -1


def epr_rows(phi_prime, u_corr, states, test_frac, u, tested, revealed, passed, observed, e_out):
    """Entangled cheater: every index carries the 4x2 cheating purification."""
    n = u.shape[0]
    rotated = np.empty(8, dtype=np.complex128)
    probs = np.empty(4, dtype=np.float64)
    for i in range(n):
        tested[i] = u[i, 0] < test_frac
    for i in range(n):
        if not tested[i]:
            continue
        # correction on the retained register, then measure it
        for k in range(4):
            for j in range(2):
                acc = 0j
                for l in range(4):
                    acc += u_corr[k, l] * phi_prime[2 * l + j]
                rotated[2 * k + j] = acc
        total = 0.0
        last = 0
        for k in range(4):
            s = 0.0
            for j in range(2):
                z = rotated[2 * k + j]
                s += z.real * z.real + z.imag * z.imag
            if s < BRANCH_FLOOR:
                s = 0.0
            probs[k] = s
            total += s
            if s > 0.0:
                last = k
        outcome = last
        climb = 0.0
        for k in range(4):
            climb += probs[k] / total
            if u[i, 1] < climb:
                outcome = k
                break
        if outcome > 1:
            raise ValueError("correction left register weight outside levels 0 and 1")
        root = np.sqrt(probs[outcome])
        ov = 0j
        for j in range(2):
            ov += np.conj(states[outcome, j]) * (rotated[2 * outcome + j] / root)
        q = ov.real * ov.real + ov.imag * ov.imag
        revealed[i] = outcome
        if q >= 1.0 - BRANCH_FLOOR:
            passed[i] = 1
        elif q <= BRANCH_FLOOR:
            passed[i] = 0
        else:
            passed[i] = 1 if u[i, 3] < q else 0
        if passed[i] == 0:
            return i
    for i in range(n):
        if tested[i]:
            continue
        # measure the retained register as prepared, then the sent qubit
        total = 0.0
        last = 0
        for k in range(4):
            s = 0.0
            for j in range(2):
                z = phi_prime[2 * k + j]
                s += z.real * z.real + z.imag * z.imag
            if s < BRANCH_FLOOR:
                s = 0.0
            probs[k] = s
            total += s
            if s > 0.0:
                last = k
        outcome = last
        climb = 0.0
        for k in range(4):
            climb += probs[k] / total
            if u[i, 1] < climb:
                outcome = k
                break
        observed[i] = outcome + 2  # prime codes 2/3, double-prime codes 4/5
        root = np.sqrt(probs[outcome])
        b0 = phi_prime[2 * outcome] / root
        b1 = phi_prime[2 * outcome + 1] / root
        p0 = b0.real * b0.real + b0.imag * b0.imag
        p1 = b1.real * b1.real + b1.imag * b1.imag
        if p0 < BRANCH_FLOOR:
            p0 = 0.0
        if p1 < BRANCH_FLOOR:
            p1 = 0.0
        total2 = p0 + p1
        e = 1 if p1 > 0.0 else 0
        climb = p0 / total2
        if u[i, 3] < climb:
            e = 0
        e_out[i] = e
    return -1


if NUMBA_ENABLED:
    _jit = numba.njit(cache=True)
    honest_rows = _jit(honest_rows)
    naive_rows = _jit(naive_rows)
    epr_rows = _jit(epr_rows)
