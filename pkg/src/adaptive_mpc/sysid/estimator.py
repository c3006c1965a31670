"""Estimator-style wrapper around fitting, scoring and the online update rule."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..dynamics.api import step
from ..exceptions import InvalidInputError
from ..validation import check_actions, check_states
from .confidence import ObservationBatch, confidence_score
from .estimate import METHODS, EstimateAccumulator, make_updater
from .fit import FitOptions, fit_parameters
from .params import SystemParams


def _pair(model, states, actions):
    xs = check_states(model, states)
    us = check_actions(model, actions)
    if xs.shape[0] != us.shape[0] + 1:
        raise InvalidInputError(
            f"need one more state than actions, got {xs.shape[0]} states and {us.shape[0]} actions"
        )
    if us.shape[0] < 2:
        raise InvalidInputError("a batch needs at least two transitions")
    return xs, us


class OnlineSysID(RegressorMixin, BaseEstimator):
    """Identify the unknowns in ``params`` from observed trajectories.

    ``fit(states, actions)`` runs one offline fit over the whole trajectory.
    ``partial_fit`` treats each call as one online batch and folds the result
    into a running estimate with the chosen update ``method``. ``predict``
    returns one-step state predictions under the current estimate.

    ``states`` has one more row than ``actions``.
    """

    def __init__(
        self,
        model,
        params: SystemParams,
        eps1=0.02,
        eps2=0.5,
        n_his=5,
        method="ours",
        window=5,
        max_iter=30,
        velocity_weight=None,
        include_coriolis=False,
    ):
        self.model = model
        self.params = params
        self.eps1 = eps1
        self.eps2 = eps2
        self.n_his = n_his
        self.method = method
        self.window = window
        self.max_iter = max_iter
        self.velocity_weight = velocity_weight
        self.include_coriolis = include_coriolis

    def _check_config(self):
        if not isinstance(self.params, SystemParams):
            raise InvalidInputError("params must be a SystemParams")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}")

    def _fit_batch(self, xs, us, start):
        batch = ObservationBatch(xs, us, self.model.dt)
        opts = FitOptions(max_iter=self.max_iter, velocity_weight=self.velocity_weight)
        result = fit_parameters(self.model, batch, start, opts)
        score = confidence_score(self.model, result.params, batch, include_coriolis=self.include_coriolis)
        return result, score

    def fit(self, states, actions):
        self._check_config()
        xs, us = _pair(self.model, states, actions)
        result, score = self._fit_batch(xs, us, self.params)
        self.accumulator_ = EstimateAccumulator(result.params, weight=score.normalized)
        self._set_outputs(result, score)
        return self

    def partial_fit(self, states, actions):
        self._check_config()
        xs, us = _pair(self.model, states, actions)
        if not hasattr(self, "accumulator_"):
            self.accumulator_ = EstimateAccumulator(self.params)
        result, score = self._fit_batch(xs, us, self.accumulator_.mean)
        update = make_updater(self.method, self.eps1, self.eps2, self.n_his, self.window)
        self.accumulator_ = update(self.accumulator_, result.params, score.normalized)
        self._set_outputs(result, score)
        return self

    def _set_outputs(self, result, score):
        self.params_ = self.accumulator_.mean
        self.mode_ = self.accumulator_.mode.value
        self.confidence_ = float(score.normalized)
        self.residual_ = float(result.residual)
        self.converged_ = bool(result.converged)
        self.n_features_in_ = 2 * self.model.n_dof

    def predict(self, states, actions):
        """Next state for every ``(state, action)`` row pair."""
        check_is_fitted(self, "params_")
        xs = check_states(self.model, states)
        us = check_actions(self.model, actions)
        if xs.shape[0] != us.shape[0]:
            raise InvalidInputError("predict needs one action per state")
        return np.array([step(self.model, self.params_, x, u) for x, u in zip(xs, us)])

    def score(self, states, actions):
        """R^2 of one-step predictions along the trajectory."""
        xs, us = _pair(self.model, states, actions)
        pred = self.predict(xs[:-1], us)
        truth = xs[1:]
        ss_res = float(np.sum((truth - pred) ** 2))
        ss_tot = float(np.sum((truth - truth.mean(axis=0)) ** 2))
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
