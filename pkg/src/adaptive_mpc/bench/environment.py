"""Simulated plant with scheduled parameter changes and Gaussian noise."""

from __future__ import annotations

import numpy as np

from ..dynamics.api import step as dyn_step


class Environment:
    """Ground-truth plant for a scenario.

    The true parameters follow the scenario schedule, switching atomically at
    the start of the scheduled step. Observations add ``N(0, sigma_state^2)``
    to every state coordinate; executed actions add ``N(0, sigma_action^2)``.
    """

    def __init__(self, scenario, seed=0, sigma_state=None, sigma_action=None):
        self.scenario = scenario
        self.model = scenario.model
        self.rng = np.random.default_rng(seed)
        self.sigma_state = scenario.sigma_state if sigma_state is None else float(sigma_state)
        self.sigma_action = scenario.sigma_action if sigma_action is None else float(sigma_action)
        self.t = 0
        self.true_state = np.array(scenario.initial_state, dtype=float)
        self._params = scenario.params

    @property
    def true_values(self):
        return self.scenario.true_values_at(self.t)

    def true_params(self):
        return self._params.with_values(self.true_values, clip=False)

    def observe(self):
        noise = self.rng.normal(0.0, self.sigma_state, self.true_state.shape) if self.sigma_state > 0 else 0.0
        return self.true_state + noise

    def apply(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.sigma_action > 0:
            u = u + self.rng.normal(0.0, self.sigma_action, u.shape)
        self.true_state = dyn_step(self.model, self.true_params(), self.true_state, u)
        self.t += 1
        return self.true_state


def make_environment(scenario, seed=0, **kwargs):
    return Environment(scenario, seed, **kwargs)
