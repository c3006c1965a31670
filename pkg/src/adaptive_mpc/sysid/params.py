"""Bounded vector of unknown physical parameters.

Each entry addresses one scalar inside a :class:`ModelSpec` through one of the
target types below; the remaining physical quantities keep their nominal model
values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from ..exceptions import InvalidInputError

_AXES = "xyz"


@dataclass(frozen=True)
class LinkMass:
    link: int

    def index(self, layout):
        return layout.mass(self.link)

    group = "mass"


@dataclass(frozen=True)
class LinkInertiaAxis:
    link: int
    axis: int

    def index(self, layout):
        return layout.inertia(self.link, self.axis)

    group = "inertia"


@dataclass(frozen=True)
class LinkComAxis:
    link: int
    axis: int

    def index(self, layout):
        return layout.com(self.link, self.axis)

    group = "com"


@dataclass(frozen=True)
class JointStiffness:
    joint: int

    def index(self, layout):
        return layout.stiffness(self.joint)

    group = "stiffness"


@dataclass(frozen=True)
class JointDamping:
    joint: int

    def index(self, layout):
        return layout.damping(self.joint)

    group = "damping"


Target = Union[LinkMass, LinkInertiaAxis, LinkComAxis, JointStiffness, JointDamping]


def target_label(model, target):
    if isinstance(target, LinkMass):
        return f"mass[{model.links[target.link].name}]"
    if isinstance(target, LinkInertiaAxis):
        return f"inertia[{model.links[target.link].name}].{_AXES[target.axis]}"
    if isinstance(target, LinkComAxis):
        return f"com[{model.links[target.link].name}].{_AXES[target.axis]}"
    if isinstance(target, JointStiffness):
        return f"stiffness[{model.joints[target.joint].name}]"
    return f"damping[{model.joints[target.joint].name}]"


@dataclass(frozen=True)
class SystemParams:
    """Immutable, bound-respecting parameter vector.

    Parameters
    ----------
    targets : tuple of Target
    values : array of float
    lower, upper : arrays of float
        Inclusive bounds; ``values`` must lie inside them.
    """

    targets: tuple
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        targets = tuple(self.targets)
        if not (len(targets) == values.size == lower.size == upper.size):
            raise InvalidInputError("targets, values and bounds must have equal length")
        if len(set(targets)) != len(targets):
            raise InvalidInputError("duplicate parameter targets")
        if np.any(lower > upper):
            raise InvalidInputError("lower bound exceeds upper bound")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("parameter values must be finite")
        if np.any(values < lower) or np.any(values > upper):
            raise InvalidInputError(f"parameter values {values} outside bounds [{lower}, {upper}]")
        for arr in (values, lower, upper):
            arr.setflags(write=False)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __len__(self):
        return len(self.targets)

    def __eq__(self, other):
        return (
            isinstance(other, SystemParams)
            and self.targets == other.targets
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    __hash__ = None

    @property
    def width(self):
        w = self.upper - self.lower
        return np.where(w > 0, w, 1.0)

    @property
    def groups(self):
        return tuple(t.group for t in self.targets)

    def with_values(self, values, clip=True):
        values = np.asarray(values, dtype=float).reshape(-1)
        if clip:
            values = np.clip(values, self.lower, self.upper)
        return replace(self, values=values)

    def clip(self, values):
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def normalized(self, values=None):
        values = self.values if values is None else np.asarray(values, dtype=float)
        return (values - self.lower) / self.width

    def normalized_distance(self, other):
        """Euclidean distance after dividing each coordinate by its bound width."""
        other_values = other.values if isinstance(other, SystemParams) else np.asarray(other)
        return float(np.linalg.norm((self.values - other_values) / self.width))

    def midpoint(self):
        return self.with_values(0.5 * (self.lower + self.upper))

    def indices(self, model):
        layout = model.layout
        return [t.index(layout) for t in self.targets]

    def physical_vector(self, model, base=None):
        """Model's nominal parameter vector with these entries substituted."""
        theta = model.parameter_vector() if base is None else np.array(base, dtype=float)
        theta[self.indices(model)] = self.values
        return theta

    def labels(self, model):
        return [target_label(model, t) for t in self.targets]

    def as_dict(self, model):
        return dict(zip(self.labels(model), self.values.tolist()))

    def check_compatible(self, model):
        """Validate addresses against ``model`` and COM bounds against link extents."""
        for t, lo, hi in zip(self.targets, self.lower, self.upper):
            if isinstance(t, (LinkMass, LinkInertiaAxis, LinkComAxis)):
                if not 0 <= t.link < model.n_links:
                    raise InvalidInputError(f"link index {t.link} out of range")
            else:
                if not 0 <= t.joint < model.n_dof:
                    raise InvalidInputError(f"joint index {t.joint} out of range")
            if isinstance(t, LinkComAxis):
                ext_lo, ext_hi = model.links[t.link].extent
                if lo < ext_lo[t.axis] - 1e-12 or hi > ext_hi[t.axis] + 1e-12:
                    raise InvalidInputError(
                        f"{target_label(model, t)} bounds [{lo}, {hi}] leave the link extent"
                    )
            if isinstance(t, (LinkMass,)) and lo <= 0:
                raise InvalidInputError(f"{target_label(model, t)} lower bound must be positive")
        return self


def make_params(model, spec):
    """Build SystemParams from ``[(target, value, (lo, hi)), ...]``."""
    targets, values, lower, upper = [], [], [], []
    for target, value, (lo, hi) in spec:
        targets.append(target)
        values.append(value)
        lower.append(lo)
        upper.append(hi)
    return SystemParams(tuple(targets), values, lower, upper).check_compatible(model)


def params_from_model(model, targets, lower, upper):
    """SystemParams holding ``model``'s nominal values for ``targets``."""
    theta = model.parameter_vector()
    values = [theta[t.index(model.layout)] for t in targets]
    return SystemParams(tuple(targets), values, lower, upper).check_compatible(model)
