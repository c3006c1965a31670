"""Confidence-weighted running estimate with change detection.

All updates are value-to-value: each returns a new :class:`EstimateAccumulator`
and never mutates its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..exceptions import InvalidInputError
from ..validation import check_positive
from .params import SystemParams


class Mode(str, Enum):
    TASK = "task"
    EXPLORE = "explore"


class UpdateEvent(str, Enum):
    BLEND = "blend"
    REPLACE = "replace"
    REJECT = "reject"
    EXPLORE = "explore"


@dataclass(frozen=True)
class EstimateAccumulator:
    """Running estimate ``mean`` with accumulated confidence ``weight``.

    ``recent`` keeps the latest solutions with their confidences for the
    windowed baseline policies.
    """

    mean: SystemParams
    weight: float = 0.0
    low_conf_count: int = 0
    mode: Mode = Mode.TASK
    recent: tuple = field(default=())
    last_event: UpdateEvent | None = None

    def __post_init__(self):
        if not isinstance(self.mean, SystemParams):
            raise InvalidInputError("mean must be SystemParams")
        if not self.weight >= 0:
            raise InvalidInputError("accumulated weight must be nonnegative")
        if self.low_conf_count < 0:
            raise InvalidInputError("low_conf_count must be nonnegative")
        object.__setattr__(self, "mode", Mode(self.mode))


def _check_solution(acc, solution):
    if not isinstance(solution, SystemParams):
        raise InvalidInputError("solution must be SystemParams")
    if solution.targets != acc.mean.targets:
        raise InvalidInputError("solution and estimate address different parameters")


def blend(mean_values, mean_weight, values, weight):
    """One fold of the confidence-weighted average."""
    total = mean_weight + weight
    if total <= 0:
        return np.asarray(values, dtype=float), 0.0
    return (mean_weight * np.asarray(mean_values) + weight * np.asarray(values)) / total, total


def update_estimate(acc, solution, confidence, eps_conf, eps_dist, n_history, window=5):
    """Apply one modeling-cycle result to ``acc``.

    A confident solution (``confidence > eps_conf``) is blended into the
    estimate when it lies within ``eps_dist`` (bound-normalized Euclidean
    distance) of it and replaces the estimate otherwise; either way the
    low-confidence counter resets and the mode returns to task. An
    unconfident solution increments the counter, and on reaching
    ``n_history`` the mode switches to explore and the counter restarts.
    """
    _check_solution(acc, solution)
    check_positive(eps_conf, "eps_conf")
    check_positive(eps_dist, "eps_dist")
    if int(n_history) < 1:
        raise InvalidInputError("n_history must be >= 1")
    confidence = float(confidence)
    recent = (acc.recent + ((solution.values.copy(), confidence),))[-window:]
    if confidence > eps_conf:
        dist = acc.mean.normalized_distance(solution)
        if dist < eps_dist:
            values, weight = blend(acc.mean.values, acc.weight, solution.values, confidence)
            event = UpdateEvent.BLEND
        else:
            values, weight = solution.values, confidence
            event = UpdateEvent.REPLACE
        return replace(
            acc,
            mean=acc.mean.with_values(values),
            weight=weight,
            low_conf_count=0,
            mode=Mode.TASK,
            recent=recent,
            last_event=event,
        )
    count = acc.low_conf_count + 1
    if count >= int(n_history):
        return replace(
            acc, low_conf_count=0, mode=Mode.EXPLORE, recent=recent, last_event=UpdateEvent.EXPLORE
        )
    return replace(acc, low_conf_count=count, recent=recent, last_event=UpdateEvent.REJECT)


def update_naive(acc, solution, confidence=0.0, window=5):
    """Adopt the latest solution."""
    _check_solution(acc, solution)
    recent = (acc.recent + ((solution.values.copy(), float(confidence)),))[-window:]
    return replace(
        acc, mean=acc.mean.with_values(solution.values), weight=float(confidence),
        recent=recent, last_event=UpdateEvent.REPLACE,
    )


def update_smooth(acc, solution, confidence=0.0, window=5):
    """Plain mean of the last ``window`` solutions."""
    _check_solution(acc, solution)
    recent = (acc.recent + ((solution.values.copy(), float(confidence)),))[-window:]
    values = np.mean([v for v, _ in recent], axis=0)
    return replace(acc, mean=acc.mean.with_values(values), recent=recent, last_event=UpdateEvent.BLEND)


def update_weighted(acc, solution, confidence, window=5):
    """Confidence-weighted mean of the last ``window`` solutions, always accepted.

    Falls back to equal weights when every confidence in the window is zero.
    """
    _check_solution(acc, solution)
    recent = (acc.recent + ((solution.values.copy(), float(confidence)),))[-window:]
    vals = np.array([v for v, _ in recent])
    ws = np.array([w for _, w in recent])
    if ws.sum() <= 0:
        ws = np.ones_like(ws)
    values = ws @ vals / ws.sum()
    return replace(
        acc, mean=acc.mean.with_values(values), weight=float(ws.sum()),
        recent=recent, last_event=UpdateEvent.BLEND,
    )


METHODS = ("ours", "naive", "smooth", "weighted")


def make_updater(method, eps_conf, eps_dist, n_history, window=5):
    """``(acc, solution, confidence) -> acc`` for a named estimate-update method."""
    if method == "ours":
        return lambda acc, sol, w: update_estimate(acc, sol, w, eps_conf, eps_dist, n_history, window)
    if method == "naive":
        return lambda acc, sol, w: update_naive(acc, sol, w, window)
    if method == "smooth":
        return lambda acc, sol, w: update_smooth(acc, sol, w, window)
    if method == "weighted":
        return lambda acc, sol, w: update_weighted(acc, sol, w, window)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")
