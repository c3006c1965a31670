"""Kinematic-tree model description.

A model is a list of links, each attached to its parent link (or the world)
by exactly one 1-DOF joint, so the number of generalized coordinates equals
the number of links. Physical parameters live in a flat vector with a fixed
layout (see :class:`ParamLayout`) so that kernels can be compiled once per
tree structure and re-evaluated for any parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..exceptions import InvalidInputError

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


def _vec3(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: expected a finite 3-vector, got {value!r}")
    return tuple(float(v) for v in arr)


def rpy_to_matrix(rpy):
    """Rotation matrix for fixed-axis roll, pitch, yaw (applied x, then y, then z)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class LinkSpec:
    """Rigid link.

    ``com`` is expressed in the link's own (parent-joint) frame and
    ``inertia`` holds the principal moments about the COM in that frame.
    ``extent`` is the link's bounding box ``(lo, hi)`` in the same frame.
    """

    name: str
    mass: float
    com: tuple = (0.0, 0.0, 0.0)
    inertia: tuple = (1e-3, 1e-3, 1e-3)
    extent: tuple = ((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1))

    def __post_init__(self):
        object.__setattr__(self, "com", _vec3(self.com, f"{self.name}.com"))
        object.__setattr__(self, "inertia", _vec3(self.inertia, f"{self.name}.inertia"))
        lo, hi = self.extent
        lo, hi = _vec3(lo, f"{self.name}.extent.lo"), _vec3(hi, f"{self.name}.extent.hi")
        object.__setattr__(self, "extent", (lo, hi))
        if not self.mass > 0:
            raise InvalidInputError(f"{self.name}.mass must be positive, got {self.mass}")
        object.__setattr__(self, "mass", float(self.mass))
        if min(self.inertia) <= 0:
            raise InvalidInputError(f"{self.name}.inertia moments must be positive")
        if any(l > h for l, h in zip(lo, hi)):
            raise InvalidInputError(f"{self.name}.extent: lo must not exceed hi")
        if any(c < l or c > h for c, l, h in zip(self.com, lo, hi)):
            raise InvalidInputError(f"{self.name}.com lies outside the link extent")


@dataclass(frozen=True)
class JointSpec:
    """1-DOF joint connecting a link to its parent.

    ``origin``/``rotation`` give the joint frame (at zero displacement) in the
    parent link frame. ``axis`` is a unit vector in the joint frame.
    """

    name: str
    kind: str
    parent: int
    axis: tuple = (0.0, 0.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    stiffness: float = 0.0
    damping: float = 0.0

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise InvalidInputError(f"{self.name}.kind must be revolute or prismatic, got {self.kind!r}")
        axis = np.asarray(_vec3(self.axis, f"{self.name}.axis"))
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise InvalidInputError(f"{self.name}.axis must have unit norm")
        object.__setattr__(self, "axis", tuple(axis))
        object.__setattr__(self, "origin", _vec3(self.origin, f"{self.name}.origin"))
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise InvalidInputError(f"{self.name}.rotation must be a 3x3 rotation matrix")
        object.__setattr__(self, "rotation", tuple(tuple(float(v) for v in row) for row in rot))
        if self.stiffness < 0 or self.damping < 0:
            raise InvalidInputError(f"{self.name}: stiffness and damping must be nonnegative")
        object.__setattr__(self, "stiffness", float(self.stiffness))
        object.__setattr__(self, "damping", float(self.damping))
        object.__setattr__(self, "parent", int(self.parent))


@dataclass(frozen=True)
class ParamLayout:
    """Offsets of each physical quantity inside the flat parameter vector.

    Layout: masses (L), COM (L x 3), principal inertia (L x 3),
    joint stiffness (L), joint damping (L).
    """

    n_links: int

    @property
    def size(self):
        return 9 * self.n_links

    def mass(self, k):
        return k

    def com(self, k, axis):
        return self.n_links + 3 * k + axis

    def inertia(self, k, axis):
        return 4 * self.n_links + 3 * k + axis

    def stiffness(self, j):
        return 7 * self.n_links + j

    def damping(self, j):
        return 8 * self.n_links + j

    def split(self, theta):
        """Split a flat vector (numpy or jax) into its named blocks."""
        L = self.n_links
        return (
            theta[:L],
            theta[L : 4 * L].reshape(L, 3),
            theta[4 * L : 7 * L].reshape(L, 3),
            theta[7 * L : 8 * L],
            theta[8 * L : 9 * L],
        )

    def labels(self, model):
        out = [f"mass[{l.name}]" for l in model.links]
        out += [f"com[{l.name}].{a}" for l in model.links for a in "xyz"]
        out += [f"inertia[{l.name}].{a}" for l in model.links for a in "xyz"]
        out += [f"stiffness[{j.name}]" for j in model.joints]
        out += [f"damping[{j.name}]" for j in model.joints]
        return out


@dataclass(frozen=True)
class ModelSpec:
    """Articulated tree: ``joints[k]`` attaches ``links[k]`` to ``joints[k].parent``."""

    name: str
    links: tuple
    joints: tuple
    dt: float = 0.01
    gravity: tuple = (0.0, 0.0, -9.8)
    actuated: tuple = ()
    rest_pose: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "actuated", tuple(int(a) for a in self.actuated))
        object.__setattr__(self, "gravity", _vec3(self.gravity, "gravity"))
        n = len(self.links)
        if n == 0 or len(self.joints) != n:
            raise InvalidInputError("model needs one joint per link and at least one link")
        for k, joint in enumerate(self.joints):
            if not -1 <= joint.parent < k:
                raise InvalidInputError(
                    f"joint {joint.name}: parent index {joint.parent} must precede link {k}"
                )
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "dt", float(self.dt))
        if len(set(self.actuated)) != len(self.actuated) or any(
            not 0 <= a < n for a in self.actuated
        ):
            raise InvalidInputError("actuated must list distinct joint indices")
        rest = tuple(float(v) for v in self.rest_pose) if len(self.rest_pose) else (0.0,) * n
        if len(rest) != n:
            raise InvalidInputError(f"rest_pose must have {n} entries")
        object.__setattr__(self, "rest_pose", rest)

    @property
    def n_dof(self):
        return len(self.links)

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_act(self):
        return len(self.actuated)

    @property
    def layout(self):
        return ParamLayout(self.n_links)

    @property
    def actuation_matrix(self):
        """N x A selection map from actuator forces to generalized forces."""
        B = np.zeros((self.n_dof, self.n_act))
        for col, j in enumerate(self.actuated):
            B[j, col] = 1.0
        return B

    def link_index(self, name):
        for k, link in enumerate(self.links):
            if link.name == name:
                return k
        raise KeyError(name)

    def joint_index(self, name):
        for k, joint in enumerate(self.joints):
            if joint.name == name:
                return k
        raise KeyError(name)

    def parameter_vector(self):
        """Nominal physical parameters in :class:`ParamLayout` order."""
        return np.concatenate(
            [
                [l.mass for l in self.links],
                np.ravel([l.com for l in self.links]),
                np.ravel([l.inertia for l in self.links]),
                [j.stiffness for j in self.joints],
                [j.damping for j in self.joints],
            ]
        ).astype(float)

    def with_parameters(self, theta):
        """Return a copy whose nominal parameters equal the flat vector ``theta``."""
        masses, com, inertia, ks, kd = self.layout.split(np.asarray(theta, dtype=float))
        links = [
            replace(l, mass=float(masses[k]), com=tuple(com[k]), inertia=tuple(inertia[k]))
            for k, l in enumerate(self.links)
        ]
        joints = [
            replace(j, stiffness=float(ks[k]), damping=float(kd[k]))
            for k, j in enumerate(self.joints)
        ]
        return replace(self, links=tuple(links), joints=tuple(joints))

    def with_gravity(self, gravity):
        return replace(self, gravity=tuple(gravity))

    def with_dt(self, dt):
        return replace(self, dt=float(dt))

    def structure_key(self):
        """Everything kernels close over; parameter values are excluded."""
        return (
            tuple((j.kind, j.parent, j.axis, j.origin, j.rotation) for j in self.joints),
            self.gravity,
            self.dt,
            self.actuated,
            self.rest_pose,
        )


@dataclass(frozen=True)
class GeneralizedState:
    q: np.ndarray
    qdot: np.ndarray

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[0] // 2
        return cls(q=x[:n].copy(), qdot=x[n:].copy())

    def as_vector(self):
        return np.concatenate([np.ravel(self.q), np.ravel(self.qdot)])


@dataclass(frozen=True)
class Trajectory:
    """``states`` has shape (H+1, 2N); ``actions`` has shape (H, A)."""

    states: np.ndarray
    actions: np.ndarray
    dt: float = field(default=0.01)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        actions = np.asarray(self.actions, dtype=float)
        if actions.ndim == 1:
            actions = actions.reshape(-1, 1) if actions.size else actions.reshape(0, 0)
        if states.ndim != 2 or actions.shape[0] != states.shape[0] - 1:
            raise InvalidInputError(
                f"trajectory needs H+1 states and H actions, got {states.shape} and {actions.shape}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    @property
    def horizon(self):
        return self.actions.shape[0]

    def __len__(self):
        return self.states.shape[0]

    @property
    def q(self):
        return self.states[:, : self.states.shape[1] // 2]

    @property
    def qdot(self):
        return self.states[:, self.states.shape[1] // 2 :]


def make_model(name, links: Sequence[LinkSpec], joints: Sequence[JointSpec], **kwargs):
    return ModelSpec(name=name, links=tuple(links), joints=tuple(joints), **kwargs)
