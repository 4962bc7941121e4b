"""Jackknife pseudo-observations for the restricted time to event.

Two kinds are provided. The standard kind transforms every subject of one
sample:

    gamma_i = n * I(S_hat) - (n - 1) * I(S_hat without subject i),

where I(.) is the integral of the product-limit curve over [0, tau]. The
split kind scores subjects of an evaluation sample against a disjoint
reference sample used only for the curve:

    gamma_i = (m + 1) * I(S_hat with subject i added) - m * I(S_hat),

with m the reference-sample size. Both reduce to min(t_i, tau) exactly when
no observation is censored.

The fast standard path computes all n leave-one-out integrals in one sorted
pass: removing a subject with time t only rescales at-risk counts at unique
times <= t, so prefix products of the reduced-risk factors plus a suffix
recursion of tail integrals give every integral in O(n log n) total. The
naive quadratic refit is kept as the test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllCensored,
    DegenerateJackknife,
    DimensionMismatch,
    EmptyData,
    TauOutOfRange,
)
from .survival import Dataset, event_table, km_fit, rmst


@dataclass(frozen=True)
class PseudoObservationSet:
    """Per-subject pseudo-values with their provenance."""

    values: np.ndarray
    tau: float
    kind: str  # "standard" | "split"
    km_set_size: int = 0  # reference-sample size, split kind only

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.kind not in ("standard", "split"):
            raise ValueError(f"unknown pseudo-observation kind {self.kind!r}")


def _check_tau(tau: float, max_time: float) -> None:
    if not tau > 0:
        raise TauOutOfRange(f"tau must be > 0, got {tau}")
    if tau > max_time:
        raise TauOutOfRange(f"tau={tau} exceeds the largest observed time {max_time}")


def _segment_widths(times: np.ndarray, tau: float) -> np.ndarray:
    """Widths within [0, tau] of the m+1 segments cut by m jump times."""
    lo = np.minimum(np.concatenate(([0.0], times)), tau)
    hi = np.minimum(np.concatenate((times, [np.inf])), tau)
    return hi - lo


def _clamp(values: np.ndarray, tau: float, clamp: bool) -> np.ndarray:
    return np.clip(values, 0.0, tau) if clamp else values


def standard_pobs(data: Dataset, tau: float, clamp: bool = False) -> PseudoObservationSet:
    """All-subject jackknife pseudo-values, single sorted pass.

    ``clamp`` clips the values into [0, tau]; raw jackknife values can fall
    outside that range and are returned untouched by default.
    """
    if data.n == 0:
        raise EmptyData("pseudo-observations need a nonempty dataset")
    if data.n < 2:
        raise EmptyData("jackknife pseudo-observations need at least two observations")
    n_events = int(data.event.sum())
    if n_events == 0:
        raise AllCensored("pseudo-observations need at least one event")
    if n_events == 1:
        raise DegenerateJackknife(
            "leaving out the only event yields an eventless subsample"
        )
    _check_tau(tau, float(data.time.max()))

    # The jackknife difference n*I - (n-1)*I_loo amplifies rounding by a
    # factor of n, so accumulate in extended precision throughout.
    tab = event_table(data.time, data.event)
    m = len(tab.times)
    d = tab.events.astype(np.longdouble)
    r = tab.at_risk.astype(np.longdouble)
    f = 1.0 - d / r
    surv = np.cumprod(f)
    w = _segment_widths(tab.times, tau).astype(np.longdouble)  # length m + 1

    full = w[0] + np.dot(w[1:], surv)

    # Prefix part: factors with one subject removed from every risk set at or
    # below the removal time. Valid for unique-time indices 0..m-2; a removal
    # at index q only ever reads entries < q.
    one = np.longdouble(1.0)
    g = one - d[:-1] / (r[:-1] - one) if m > 1 else np.empty(0, dtype=np.longdouble)
    G = np.cumprod(g)
    # prefix[q] = integral of the reduced curve over segments 0..q
    prefix = w[0] + np.concatenate(([np.longdouble(0.0)], np.cumsum(w[1:m] * G)))
    G_before = np.concatenate(([one], G))  # G_before[q] = product of g below q

    # tail[q] = sum over segments j > q of width_j * prod(f[q+1..j-1]);
    # the unmodified factors above the removal time.
    tail = np.empty(m, dtype=np.longdouble)
    tail[m - 1] = w[m]
    for q in range(m - 2, -1, -1):
        tail[q] = w[q + 1] + f[q + 1] * tail[q + 1]

    q_of = np.searchsorted(tab.times, data.time)
    delta = data.event.astype(np.longdouble)
    r_q = r[q_of]
    d_q = d[q_of]
    h = np.where(r_q > one, one - (d_q - delta) / np.where(r_q > one, r_q - one, one), one)
    loo = prefix[q_of] + G_before[q_of] * h * tail[q_of]

    n = np.longdouble(data.n)
    gamma = (n * full - (n - one) * loo).astype(float)
    return PseudoObservationSet(_clamp(gamma, tau, clamp), tau, "standard")


def standard_pobs_naive(data: Dataset, tau: float, clamp: bool = False) -> PseudoObservationSet:
    """Literal n leave-one-out refits; quadratic, kept as the test oracle."""
    if data.n == 0:
        raise EmptyData("pseudo-observations need a nonempty dataset")
    if data.n < 2:
        raise EmptyData("jackknife pseudo-observations need at least two observations")
    n_events = int(data.event.sum())
    if n_events == 0:
        raise AllCensored("pseudo-observations need at least one event")
    if n_events == 1:
        raise DegenerateJackknife(
            "leaving out the only event yields an eventless subsample"
        )
    _check_tau(tau, float(data.time.max()))

    n = data.n
    full = rmst(km_fit(data), tau)
    keep = np.ones(n, dtype=bool)
    gamma = np.empty(n)
    for i in range(n):
        keep[i] = False
        gamma[i] = n * full - (n - 1) * rmst(km_fit(data.subset(keep)), tau)
        keep[i] = True
    return PseudoObservationSet(_clamp(gamma, tau, clamp), tau, "standard")


def split_pobs(
    km_set: Dataset, eval_set: Dataset, tau: float, clamp: bool = False
) -> PseudoObservationSet:
    """Add-one pseudo-values for ``eval_set`` against the ``km_set`` curve.

    Each value refits the product-limit estimator on the reference sample
    plus the one evaluated subject (a linear merge into the pre-sorted
    reference tallies), making the outputs independent across subjects
    given the reference sample.
    """
    if km_set.n == 0 or eval_set.n == 0:
        raise EmptyData("split pseudo-observations need nonempty KM and evaluation sets")
    if km_set.d != eval_set.d:
        raise DimensionMismatch(
            f"KM set has d={km_set.d} but evaluation set has d={eval_set.d}"
        )
    if not km_set.event.any():
        raise AllCensored("the KM set must contain at least one event")
    _check_tau(tau, float(km_set.time.max()))

    tab = event_table(km_set.time, km_set.event)
    base = km_curve_integral(tab.times, tab.events, tab.totals, tau)
    n1 = km_set.n

    gamma = np.empty(eval_set.n)
    for i in range(eval_set.n):
        s = float(eval_set.time[i])
        dlt = int(eval_set.event[i])
        pos = int(np.searchsorted(tab.times, s))
        if pos < len(tab.times) and tab.times[pos] == s:
            times = tab.times
            events = tab.events.copy()
            totals = tab.totals.copy()
            events[pos] += dlt
            totals[pos] += 1
        else:
            times = np.insert(tab.times, pos, s)
            events = np.insert(tab.events, pos, dlt)
            totals = np.insert(tab.totals, pos, 1)
        plus = km_curve_integral(times, events, totals, tau)
        gamma[i] = float((n1 + np.longdouble(1.0)) * plus - np.longdouble(n1) * base)
    return PseudoObservationSet(_clamp(gamma, tau, clamp), tau, "split", km_set_size=n1)


def km_curve_integral(times: np.ndarray, events: np.ndarray, totals: np.ndarray, tau: float):
    """Integral over [0, tau] of the product-limit curve of tallied data.

    Returns an extended-precision scalar; the add-one difference in
    ``split_pobs`` amplifies its rounding by the reference-sample size.
    """
    at_risk = np.cumsum(totals[::-1].astype(np.longdouble))[::-1]
    surv = np.cumprod(1.0 - events.astype(np.longdouble) / at_risk)
    w = _segment_widths(times, tau).astype(np.longdouble)
    return w[0] + np.dot(w[1:], surv)
