"""Input validation helpers shared by the estimators and functional API."""

import numpy as np

from .exceptions import InvalidInputError


def as_finite_array(value, name, shape=None, ndim=None):
    """Convert ``value`` to a float64 array and check it.

    Parameters
    ----------
    value : array-like
    name : str
        Used in error messages.
    shape : tuple, optional
        Exact expected shape; ``None`` entries match any length.
    ndim : int, optional
        Expected number of dimensions when ``shape`` is not given.
    """
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: cannot convert to a float array ({exc})") from exc
    if shape is not None:
        if arr.ndim != len(shape) or any(
            s is not None and s != a for s, a in zip(shape, arr.shape)
        ):
            raise InvalidInputError(f"{name}: expected shape {shape}, got {arr.shape}")
    elif ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: contains non-finite entries")
    return arr


def check_state(model, x, name="x"):
    """Return the flat ``[q, qdot]`` vector for ``model``.

    Accepts a flat array of length ``2 * n_dof`` or any object with ``q`` and
    ``qdot`` attributes.
    """
    if hasattr(x, "q") and hasattr(x, "qdot"):
        x = np.concatenate([np.ravel(x.q), np.ravel(x.qdot)])
    return as_finite_array(x, name, shape=(2 * model.n_dof,))


def check_action(model, u, name="u"):
    if u is None:
        return np.zeros(model.n_act)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return as_finite_array(u, name, shape=(model.n_act,))


def check_states(model, xs, name="states"):
    return as_finite_array(xs, name, shape=(None, 2 * model.n_dof))


def check_actions(model, us, name="actions"):
    us = np.asarray(us, dtype=float)
    if us.ndim == 1 and model.n_act == 1:
        us = us[:, None]
    if us.size == 0:
        us = us.reshape(0, model.n_act)
    return as_finite_array(us, name, shape=(None, model.n_act))


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be positive, got {value}")
    return value
