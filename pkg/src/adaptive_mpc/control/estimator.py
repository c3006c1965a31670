"""Estimator-style wrapper around the trajectory optimizer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InvalidInputError
from ..validation import check_state, check_states
from .costs import CostSpec
from .ilqr import IlqrOptions, feedback_action, ilqr_solve


class ILQRController(BaseEstimator):
    """Plan a ``T``-step trajectory from an initial state.

    ``fit(x0)`` solves the plan (warm-starting from the previous fit when
    ``warm_start`` is set); ``predict(states)`` applies the feedback law with
    row ``i`` taken as the state at plan step ``i``.
    """

    def __init__(self, model, params, cost: CostSpec, T=100, max_iter=50, tol=1e-6, warm_start=False, action_limit=None):
        self.model = model
        self.params = params
        self.cost = cost
        self.T = T
        self.max_iter = max_iter
        self.tol = tol
        self.warm_start = warm_start
        self.action_limit = action_limit

    def fit(self, x0, y=None):
        if not isinstance(self.cost, CostSpec):
            raise InvalidInputError("cost must be a CostSpec")
        x0 = check_state(self.model, np.ravel(np.asarray(x0, dtype=float)), "x0")
        warm = getattr(self, "solution_", None) if self.warm_start else None
        opts = IlqrOptions(max_iter=self.max_iter, tol=self.tol, action_limit=self.action_limit)
        sol = ilqr_solve(self.model, self.params, x0, self.cost, self.T, warm=warm, opts=opts)
        self.solution_ = sol
        self.states_ = sol.states
        self.actions_ = sol.actions
        self.gains_ = sol.K
        self.cost_ = sol.cost
        self.n_iter_ = sol.n_iter
        self.converged_ = sol.converged
        self.n_features_in_ = x0.size
        return self

    def predict(self, states):
        check_is_fitted(self, "solution_")
        xs = check_states(self.model, np.atleast_2d(states))
        return np.array([feedback_action(self.solution_, t, x) for t, x in enumerate(xs)])
