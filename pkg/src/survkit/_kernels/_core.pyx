# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: Efron partial-likelihood scan and concordance counting.

Contracts match `_ref.py`. Kept to plain C loops over sorted copies; the
caller-facing semantics (row order of the gradient, integer pair counts)
are identical to the reference implementation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def efron_loss_grad(times, events, eta):
    """Efron negative log partial likelihood and gradient wrt scores."""
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.float64)
    x = np.asarray(eta, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0]
    if n == 0 or e.shape[0] != n or x.shape[0] != n:
        raise ValueError("times, events, eta must be equal-length non-empty 1-D arrays")

    order = np.argsort(t, kind="stable")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ts = np.ascontiguousarray(t[order])
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x[order])
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] es = np.ascontiguousarray(
        e[order] != 0, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ord_view = np.ascontiguousarray(
        order, dtype=np.int64)

    cdef double shift = xs[0]
    cdef Py_ssize_t i
    for i in range(1, n):
        if xs[i] > shift:
            shift = xs[i]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] phi = np.empty(n)
    for i in range(n):
        phi[i] = exp(xs[i] - shift)

    # Backwards pass: per event-time group, accumulate the risk-set sum and
    # the tied-event sums, then the l = 0..d-1 denominators.
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grp_time = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grp_a = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grp_b = np.empty(n)
    cdef Py_ssize_t n_grp = 0
    cdef double risk_phi = 0.0, tie_phi = 0.0, tie_eta = 0.0
    cdef double value = 0.0, denom, frac, a_sum, b_sum
    cdef Py_ssize_t d = 0, l

    for i in range(n - 1, -1, -1):
        risk_phi += phi[i]
        if es[i]:
            tie_phi += phi[i]
            tie_eta += xs[i]
            d += 1
        if i == 0 or ts[i - 1] != ts[i]:
            if d > 0:
                a_sum = 0.0
                b_sum = 0.0
                for l in range(d):
                    frac = (<double>l) / (<double>d)
                    denom = risk_phi - frac * tie_phi
                    if denom <= 0.0:
                        # risk-set sum underflowed: report as infeasible
                        return float("inf"), np.full(n, np.nan)
                    value += log(denom)
                    a_sum += 1.0 / denom
                    b_sum += frac / denom
                # each log(denom) is short by the max shift, one per event
                value += shift * d - tie_eta
                grp_time[n_grp] = ts[i]
                grp_a[n_grp] = a_sum
                grp_b[n_grp] = b_sum
                n_grp += 1
            tie_phi = 0.0
            tie_eta = 0.0
            d = 0

    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad = np.zeros(n)
    if n_grp == 0:
        return 0.0, grad

    # Groups were recorded in decreasing time order; walk them ascending.
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cum_a = np.empty(n_grp)
    cdef double acc = 0.0
    for i in range(n_grp):
        acc += grp_a[n_grp - 1 - i]
        cum_a[i] = acc

    cdef Py_ssize_t ptr = 0
    cdef double a_i, b_i
    for i in range(n):
        while ptr < n_grp and grp_time[n_grp - 1 - ptr] <= ts[i]:
            ptr += 1
        if ptr == 0:
            a_i = 0.0
        else:
            a_i = cum_a[ptr - 1]
        b_i = 0.0
        if es[i]:
            # an event's own time is always the last covered group
            b_i = grp_b[n_grp - ptr]
        grad[ord_view[i]] = phi[i] * (a_i - b_i) - (1.0 if es[i] else 0.0)

    return value, grad


def concordance_counts(times, events, scores):
    """Exact Harrell pair counts: (concordant, tied_score, comparable)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(
        np.asarray(times, dtype=np.float64))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] e = np.ascontiguousarray(
        np.asarray(events, dtype=np.float64) != 0, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(
        np.asarray(scores, dtype=np.float64))
    cdef Py_ssize_t n = t.shape[0]
    if n == 0 or e.shape[0] != n or s.shape[0] != n:
        raise ValueError("times, events, scores must be equal-length non-empty 1-D arrays")

    cdef long long conc = 0, tied = 0, comp = 0
    cdef Py_ssize_t i, j
    for i in range(n):
        if not e[i]:
            continue
        for j in range(n):
            if t[j] > t[i] or (t[j] == t[i] and not e[j]):
                comp += 1
                if s[i] > s[j]:
                    conc += 1
                elif s[i] == s[j]:
                    tied += 1
    return int(conc), int(tied), int(comp)
