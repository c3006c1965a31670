"""Shared buffers between the executor, planner and modeler.

Both buffers guard their state with a lock and hand out immutable snapshots,
so a reader never observes a half-written entry.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..control.ilqr import IlqrSolution, feedback_action
from ..exceptions import InvalidInputError
from ..sysid.confidence import ObservationBatch


class HistoryBuffer:
    """Ring of ``(t, observed state, commanded action)``.

    The action for step ``t`` is recorded after the state, so the newest
    entry may still lack its action.
    """

    def __init__(self, capacity, dt):
        if capacity < 3:
            raise InvalidInputError("history capacity must hold at least 3 states")
        self.capacity = int(capacity)
        self.dt = float(dt)
        self._times = deque(maxlen=self.capacity)
        self._states = deque(maxlen=self.capacity)
        self._actions = deque(maxlen=self.capacity)
        self._lock = threading.Lock()

    def push_state(self, t, x):
        with self._lock:
            if self._times and t <= self._times[-1]:
                raise InvalidInputError(f"time index {t} does not follow {self._times[-1]}")
            self._times.append(int(t))
            self._states.append(np.array(x, dtype=float))
            self._actions.append(None)

    def record_action(self, t, u):
        with self._lock:
            if not self._times or self._times[-1] != t:
                raise InvalidInputError(f"no state recorded for time index {t}")
            self._actions[-1] = np.atleast_1d(np.array(u, dtype=float))

    def __len__(self):
        return len(self._times)

    @property
    def latest_time(self):
        return self._times[-1] if self._times else None

    def recent_batch(self, H):
        """Newest ``H + 1`` states with the ``H`` actions between them, or ``None``."""
        with self._lock:
            if len(self._times) < H + 1:
                return None
            states = np.array(list(self._states)[-(H + 1) :])
            actions = list(self._actions)[-(H + 1) : -1]
            times = list(self._times)[-(H + 1) :]
        if any(a is None for a in actions) or times[-1] - times[0] != H:
            return None
        return ObservationBatch(states, np.array(actions), self.dt)


@dataclass(frozen=True)
class PlanEntry:
    """A plan anchored at absolute time index ``start``."""

    start: int
    solution: IlqrSolution
    cycle: int = 0

    @property
    def end(self):
        return self.start + self.solution.horizon

    def covers(self, t):
        return self.start <= t < self.end

    def action(self, t, x):
        return feedback_action(self.solution, t - self.start, x)

    def fallback_action(self, x):
        """Hold with the terminal gains around the terminal nominal state."""
        sol = self.solution
        return sol.actions[-1] + sol.K[-1] @ (np.asarray(x, dtype=float) - sol.states[-1])


class PlanBuffer:
    """Active plan plus at most one staged plan that takes over at its start index."""

    def __init__(self):
        self._active = None
        self._staged = None
        self._lock = threading.Lock()

    def install(self, entry: PlanEntry):
        with self._lock:
            self._active = entry
            self._staged = None

    def stage(self, entry: PlanEntry):
        with self._lock:
            self._staged = entry

    @property
    def active(self):
        return self._active

    @property
    def staged(self):
        return self._staged

    def advance(self, t):
        """Promote the staged plan if its start has come; return True on a swap."""
        with self._lock:
            if self._staged is not None and t >= self._staged.start:
                self._active = self._staged
                self._staged = None
                return True
            return False

    def lookup(self, t):
        """Plan that would be used at ``t`` without mutating the buffer."""
        with self._lock:
            staged, active = self._staged, self._active
        if staged is not None and t >= staged.start and staged.covers(t):
            return staged
        if active is not None and active.covers(t):
            return active
        return None

    def latest(self):
        with self._lock:
            return self._staged or self._active
