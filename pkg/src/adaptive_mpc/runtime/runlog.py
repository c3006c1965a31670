"""Per-step run records and their CSV form.

Column order: ``step, time, true_<p>..., est_<p>..., confidence, mode,
u_<i>..., x_<i>..., goal_distance, stale``. ``<p>`` are parameter labels
such as ``mass[pole]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Event:
    step: int
    kind: str
    detail: str = ""


@dataclass
class RunLog:
    labels: list
    n_action: int
    n_state: int
    dt: float
    steps: list = field(default_factory=list)
    true_params: list = field(default_factory=list)
    est_params: list = field(default_factory=list)
    confidence: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    observed: list = field(default_factory=list)
    goal_distance: list = field(default_factory=list)
    stale: list = field(default_factory=list)
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, step, true_params, est_params, confidence, mode, action, observed, goal, stale):
        self.steps.append(int(step))
        self.true_params.append(np.array(true_params, dtype=float))
        self.est_params.append(np.array(est_params, dtype=float))
        self.confidence.append(float(confidence))
        self.modes.append(str(mode))
        self.actions.append(np.atleast_1d(np.array(action, dtype=float)))
        self.observed.append(np.array(observed, dtype=float))
        self.goal_distance.append(float(goal))
        self.stale.append(bool(stale))

    def event(self, step, kind, detail=""):
        self.events.append(Event(int(step), kind, str(detail)))

    def events_of(self, kind):
        return [e for e in self.events if e.kind == kind]

    def __len__(self):
        return len(self.steps)

    @property
    def columns(self):
        return (
            ["step", "time"]
            + [f"true_{p}" for p in self.labels]
            + [f"est_{p}" for p in self.labels]
            + ["confidence", "mode"]
            + [f"u_{i}" for i in range(self.n_action)]
            + [f"x_{i}" for i in range(self.n_state)]
            + ["goal_distance", "stale"]
        )

    def rows(self):
        for i, step in enumerate(self.steps):
            yield (
                [step, repr(step * self.dt)]
                + [repr(float(v)) for v in self.true_params[i]]
                + [repr(float(v)) for v in self.est_params[i]]
                + [repr(self.confidence[i]), self.modes[i]]
                + [repr(float(v)) for v in self.actions[i]]
                + [repr(float(v)) for v in self.observed[i]]
                + [repr(self.goal_distance[i]), int(self.stale[i])]
            )

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            writer.writerows(self.rows())
        return path

    def events_to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "kind", "detail"])
            for e in self.events:
                writer.writerow([e.step, e.kind, e.detail])
        return path

    def as_arrays(self):
        return {
            "steps": np.asarray(self.steps, dtype=int),
            "true": np.asarray(self.true_params, dtype=float).reshape(len(self), -1),
            "est": np.asarray(self.est_params, dtype=float).reshape(len(self), -1),
            "confidence": np.asarray(self.confidence, dtype=float),
            "goal_distance": np.asarray(self.goal_distance, dtype=float),
            "stale": np.asarray(self.stale, dtype=bool),
        }

    def fingerprint(self):
        """Bytes identifying the log content exactly (for determinism checks)."""
        parts = [",".join(map(str, r)) for r in self.rows()]
        parts += [f"{e.step}|{e.kind}|{e.detail}" for e in self.events]
        return "\n".join(parts).encode()


def read_runlog(path, dt=None):
    """Load a CSV written by :meth:`RunLog.to_csv` (events are not stored there)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = list(reader)
    labels = [c[len("true_") :] for c in header if c.startswith("true_")]
    n_action = sum(1 for c in header if c.startswith("u_"))
    n_state = sum(1 for c in header if c.startswith("x_"))
    col = {c: i for i, c in enumerate(header)}
    if dt is None:
        dt = float(data[1][1]) - float(data[0][1]) if len(data) > 1 else 0.01
    log = RunLog(labels, n_action, n_state, dt)
    for row in data:
        get = lambda names: [float(row[col[n]]) for n in names]
        log.append(
            int(row[col["step"]]),
            get([f"true_{p}" for p in labels]),
            get([f"est_{p}" for p in labels]),
            float(row[col["confidence"]]),
            row[col["mode"]],
            get([f"u_{i}" for i in range(n_action)]),
            get([f"x_{i}" for i in range(n_state)]),
            float(row[col["goal_distance"]]),
            bool(int(row[col["stale"]])),
        )
    return log
