"""Step and interpolated curve types shared by estimators and metrics.

All time-indexed outputs (cumulative hazards, survival curves, censoring
curves) are represented as knot arrays plus values, evaluated either as
right-continuous step functions or by linear interpolation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def _as_1d_float(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def step_eval(knots: np.ndarray, values: np.ndarray, t, baseline: float):
    """Evaluate a right-continuous step function.

    Returns `values[i]` for the largest knot <= t, and `baseline` for
    t before the first knot.
    """
    t_arr = np.asarray(t, dtype=float)
    if len(knots) == 0:
        out = np.full(t_arr.shape, baseline)
    else:
        idx = np.searchsorted(knots, t_arr, side="right") - 1
        out = np.where(idx >= 0, values[np.clip(idx, 0, len(values) - 1)], baseline)
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(out)
    return out


def step_eval_left(knots: np.ndarray, values: np.ndarray, t, baseline: float):
    """Evaluate the left limit of a right-continuous step function at t.

    Returns `values[i]` for the largest knot strictly < t; used for
    inverse-probability weights G(t-) at event times.
    """
    t_arr = np.asarray(t, dtype=float)
    if len(knots) == 0:
        out = np.full(t_arr.shape, baseline)
    else:
        idx = np.searchsorted(knots, t_arr, side="left") - 1
        out = np.where(idx >= 0, values[np.clip(idx, 0, len(values) - 1)], baseline)
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(out)
    return out


@dataclass
class CumHazardFn:
    """Non-decreasing right-continuous cumulative hazard step function.

    `knots` are strictly increasing event times; `values[i]` is H(knots[i]).
    H(t) = 0 before the first knot.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.knots = _as_1d_float(self.knots, "knots")
        self.values = _as_1d_float(self.values, "values")
        if self.knots.shape != self.values.shape:
            raise ValueError("knots and values must have equal length")
        if len(self.knots) and np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if len(self.values) and (np.any(np.diff(self.values) < 0) or self.values[0] < 0):
            raise ValueError("cumulative hazard must be non-negative and non-decreasing")

    def __call__(self, t):
        return step_eval(self.knots, self.values, t, 0.0)


@dataclass
class KmCurve:
    """Kaplan-Meier product-limit curve, a non-increasing step function.

    S(t) = 1 before the first knot. `at_risk` and `n_events` record the
    risk-set size and event count at each knot for downstream variance or
    reporting needs.
    """

    knots: np.ndarray
    values: np.ndarray
    at_risk: np.ndarray = field(default=None)
    n_events: np.ndarray = field(default=None)

    def __post_init__(self):
        self.knots = _as_1d_float(self.knots, "knots")
        self.values = _as_1d_float(self.values, "values")
        if self.knots.shape != self.values.shape:
            raise ValueError("knots and values must have equal length")

    def __call__(self, t):
        return step_eval(self.knots, self.values, t, 1.0)

    def left(self, t):
        """Left limit S(t-): the value just before t."""
        return step_eval_left(self.knots, self.values, t, 1.0)


@dataclass
class SurvivalCurve:
    """Predicted survival probability S(t) on a time grid.

    kind="step": right-continuous step function, S=1 before the first knot.
    kind="linear": piecewise-linear between grid points, clamped to the
    terminal value beyond the grid.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str = "step"

    def __post_init__(self):
        self.times = _as_1d_float(self.times, "times")
        self.values = _as_1d_float(self.values, "values")
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if self.kind not in ("step", "linear"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if len(self.values):
            if np.any(self.values < -1e-12) or np.any(self.values > 1 + 1e-12):
                raise ValueError("survival values must lie in [0, 1]")
            if np.any(np.diff(self.values) > 1e-12):
                raise ValueError("survival values must be non-increasing")

    def __call__(self, t):
        if self.kind == "step":
            return step_eval(self.times, self.values, t, 1.0)
        t_arr = np.asarray(t, dtype=float)
        out = np.interp(t_arr, self.times, self.values)
        if np.isscalar(t) or t_arr.ndim == 0:
            return float(out)
        return out


def curves_to_csv(ids, curves, path):
    """Write predicted curves as long-format CSV with columns patient_id,t,S."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "t", "S"])
        for pid, curve in zip(ids, curves):
            for t, s in zip(curve.times, curve.values):
                writer.writerow([pid, repr(float(t)), repr(float(s))])
