"""Product-limit estimation and restricted-mean integration of step curves.

The survival curve is a right-continuous step function equal to 1 before its
first jump. At tied times, events are processed before censorings (the usual
product-limit convention), which here simply means censored subjects at time
t still count as at risk for the events at t. Integrals are accumulated with
``math.fsum`` because downstream jackknife differences amplify rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllCensored, DimensionMismatch, EmptyData, NonFinite


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Observation:
    """One right-censored record: observed time, event flag, covariates."""

    time: float
    event: bool
    covariates: np.ndarray

    def __post_init__(self):
        cov = _readonly(np.asarray(self.covariates, dtype=float))
        object.__setattr__(self, "covariates", cov)
        if not np.isfinite(self.time) or self.time < 0:
            raise NonFinite(f"observation time must be finite and >= 0, got {self.time}")
        if cov.ndim != 1 or not np.all(np.isfinite(cov)):
            raise NonFinite("covariates must be a finite 1-d vector")


@dataclass(frozen=True)
class Dataset:
    """Column-typed collection of observations.

    ``time`` is float (n,), ``event`` is bool (n,) with True meaning the
    event was observed, ``covariates`` is float (n, d). Immutable: the
    backing arrays are made read-only at construction.
    """

    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float).ravel()
        e = np.asarray(self.event).ravel().astype(bool)
        z = np.asarray(self.covariates, dtype=float)
        if z.ndim == 1:
            z = z.reshape(len(t), -1) if len(t) else z.reshape(0, 1)
        if len(t) != len(e) or len(t) != z.shape[0]:
            raise DimensionMismatch(
                f"column lengths disagree: time {len(t)}, event {len(e)}, covariates {z.shape[0]}"
            )
        if len(t) and (not np.all(np.isfinite(t)) or t.min() < 0):
            raise NonFinite("times must be finite and >= 0")
        if z.size and not np.all(np.isfinite(z)):
            raise NonFinite("covariates must be finite")
        object.__setattr__(self, "time", _readonly(t))
        object.__setattr__(self, "event", _readonly(e))
        object.__setattr__(self, "covariates", _readonly(z))

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def row(self, i: int) -> Observation:
        return Observation(float(self.time[i]), bool(self.event[i]), self.covariates[i])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.time[idx], self.event[idx], self.covariates[idx])

    @staticmethod
    def from_observations(rows) -> "Dataset":
        rows = list(rows)
        if not rows:
            raise EmptyData("cannot build a dataset from zero observations")
        d = len(rows[0].covariates)
        if any(len(o.covariates) != d for o in rows):
            raise DimensionMismatch("observations have unequal covariate dimension")
        return Dataset(
            np.array([o.time for o in rows]),
            np.array([o.event for o in rows]),
            np.vstack([o.covariates for o in rows]) if d else np.empty((len(rows), 0)),
        )


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous step function from the product-limit estimator.

    ``values[k]`` is the curve on ``[jump_times[k], jump_times[k+1])``; the
    curve is 1 before the first jump and constant after the last one.
    """

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        jt = _readonly(np.asarray(self.jump_times, dtype=float))
        vals = _readonly(np.asarray(self.values, dtype=float))
        if len(jt) != len(vals):
            raise DimensionMismatch("jump_times and values must have equal length")
        if len(jt):
            if np.any(np.diff(jt) <= 0):
                raise NonFinite("jump times must be strictly increasing")
            if jt[0] <= 0:
                raise NonFinite("jump times must be positive")
            if np.any(vals < 0) or np.any(vals > 1) or np.any(np.diff(vals) > 0):
                raise NonFinite("values must be nonincreasing within [0, 1]")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class EventTable:
    """Per-unique-time tallies backing the product-limit computations.

    ``times`` strictly increasing; ``events[j]`` and ``totals[j]`` count
    events and all exits at ``times[j]``; ``at_risk[j]`` counts subjects
    with observed time >= ``times[j]``.
    """

    times: np.ndarray
    events: np.ndarray
    totals: np.ndarray
    at_risk: np.ndarray = field(init=False)

    def __post_init__(self):
        risk = np.cumsum(self.totals[::-1])[::-1]
        object.__setattr__(self, "times", _readonly(self.times))
        object.__setattr__(self, "events", _readonly(self.events))
        object.__setattr__(self, "totals", _readonly(self.totals))
        object.__setattr__(self, "at_risk", _readonly(risk))


def event_table(time: np.ndarray, event: np.ndarray) -> EventTable:
    """Tally unique times with event counts, total exits, and at-risk sizes."""
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=bool)
    times, inverse, totals = np.unique(t, return_inverse=True, return_counts=True)
    events = np.bincount(inverse, weights=e.astype(float), minlength=len(times))
    return EventTable(times, np.rint(events).astype(np.int64), totals.astype(np.int64))


def km_fit(data: Dataset) -> SurvivalCurve:
    """Kaplan-Meier product-limit fit; jumps only at event times."""
    if data.n == 0:
        raise EmptyData("cannot fit a survival curve to zero observations")
    if not data.event.any():
        raise AllCensored("product-limit fit needs at least one event")
    tab = event_table(data.time, data.event)
    factors = 1.0 - tab.events / tab.at_risk
    surv = np.cumprod(factors)
    has_event = tab.events > 0
    return SurvivalCurve(tab.times[has_event], surv[has_event])


def survival_at(curve: SurvivalCurve, t: float) -> float:
    """Right-continuous evaluation; 1 before the first jump."""
    if t < 0:
        raise NonFinite(f"evaluation time must be >= 0, got {t}")
    k = int(np.searchsorted(curve.jump_times, t, side="right"))
    return 1.0 if k == 0 else float(curve.values[k - 1])


def survival_before(curve: SurvivalCurve, t: float) -> float:
    """Left limit: the curve value just before ``t``."""
    if t < 0:
        raise NonFinite(f"evaluation time must be >= 0, got {t}")
    k = int(np.searchsorted(curve.jump_times, t, side="left"))
    return 1.0 if k == 0 else float(curve.values[k - 1])


def rmst(curve: SurvivalCurve, tau: float) -> float:
    """Exact piecewise-constant integral of the curve over [0, tau]."""
    if tau <= 0:
        raise NonFinite(f"tau must be > 0, got {tau}")
    return step_integral(curve.jump_times, curve.values, tau)


def step_integral(jump_times: np.ndarray, values: np.ndarray, tau: float) -> float:
    """fsum of segment-width x segment-value for a unit-start step function."""
    pieces = [min(float(jump_times[0]), tau) if len(jump_times) else tau]
    for k in range(len(jump_times)):
        left = float(jump_times[k])
        if left >= tau:
            break
        right = float(jump_times[k + 1]) if k + 1 < len(jump_times) else tau
        pieces.append((min(right, tau) - left) * float(values[k]))
    return math.fsum(pieces)
