"""Analytic periodic profiles used for potentials, kernels and initial data.

Each profile knows its values and its exact gradient so that particle
oracles can use continuum forces instead of grid interpolants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, load_field

TWO_PI = 2.0 * np.pi


def _mode(mode, dim):
    if mode is None:
        return (1,) + (0,) * (dim - 1)
    mode = tuple(int(m) for m in np.atleast_1d(mode))
    if len(mode) == 1 and dim == 2:
        mode = mode + (0,)
    if len(mode) != dim:
        raise ValueError(f"mode {mode} does not match dimension {dim}")
    return mode


@dataclass(frozen=True)
class Profile:
    """A smooth periodic function on the unit torus with a known gradient."""

    kind: str
    params: dict = field(default_factory=dict)

    def value(self, *x):
        return _VALUE[self.kind](self.params, *x)

    def grad(self, *x):
        return _GRAD[self.kind](self.params, *x)

    def on(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(self.value(*grid.coords()), grid.shape).astype(float)


def _zero_value(p, *x):
    return np.zeros(np.broadcast(*x).shape)


def _zero_grad(p, *x):
    return tuple(np.zeros(np.broadcast(*x).shape) for _ in x)


def _phase_arg(p, *x):
    mode = _mode(p.get("mode"), len(x))
    arg = sum(TWO_PI * k * xi for k, xi in zip(mode, x)) + p.get("phase", 0.0)
    return mode, arg


def _cos_value(p, *x):
    _, arg = _phase_arg(p, *x)
    return p.get("offset", 0.0) + p.get("amplitude", 1.0) * np.cos(arg)


def _cos_grad(p, *x):
    mode, arg = _phase_arg(p, *x)
    s = -p.get("amplitude", 1.0) * np.sin(arg)
    return tuple(TWO_PI * k * s for k in mode)


def _sin_value(p, *x):
    _, arg = _phase_arg(p, *x)
    return p.get("offset", 0.0) + p.get("amplitude", 1.0) * np.sin(arg)


def _sin_grad(p, *x):
    mode, arg = _phase_arg(p, *x)
    c = p.get("amplitude", 1.0) * np.cos(arg)
    return tuple(TWO_PI * k * c for k in mode)


def _bump_factors(p, *x):
    center = np.broadcast_to(np.atleast_1d(p.get("center", 0.0)), (len(x),))
    width = float(p.get("width", 0.1))
    kappa = 1.0 / (TWO_PI * width) ** 2
    parts = [np.exp(kappa * (np.cos(TWO_PI * (xi - c)) - 1.0)) for xi, c in zip(x, center)]
    return center, kappa, parts


def _bump_value(p, *x):
    _, _, parts = _bump_factors(p, *x)
    return p.get("offset", 0.0) + p.get("amplitude", 1.0) * np.prod(np.broadcast_arrays(*parts), axis=0)


def _bump_grad(p, *x):
    center, kappa, parts = _bump_factors(p, *x)
    total = p.get("amplitude", 1.0) * np.prod(np.broadcast_arrays(*parts), axis=0)
    return tuple(-kappa * TWO_PI * np.sin(TWO_PI * (xi - c)) * total for xi, c in zip(x, center))


_VALUE = {"zero": _zero_value, "cosine": _cos_value, "sine": _sin_value,
          "periodic_gaussian": _bump_value}
_GRAD = {"zero": _zero_grad, "cosine": _cos_grad, "sine": _sin_grad,
         "periodic_gaussian": _bump_grad}

PROFILE_KINDS = tuple(_VALUE)


def profile(spec: dict) -> Profile:
    """Build a :class:`Profile` from a config dict such as
    ``{"preset": "cosine", "amplitude": 0.05, "mode": [1]}``.
    """
    spec = dict(spec)
    kind = spec.pop("preset")
    if kind not in _VALUE:
        raise ValueError(f"unknown preset {kind!r}; choose from {', '.join(PROFILE_KINDS)}")
    return Profile(kind, spec)


def field_from_spec(spec: dict, grid: Grid) -> np.ndarray:
    """Sample a preset on ``grid``, or load a field CSV when ``spec`` has ``file``."""
    if "file" in spec:
        values = load_field(spec["file"])
        return grid.check(values, spec["file"])
    return profile(spec).on(grid)


def fourier_density(grid: Grid, amplitude: float = 0.5, mode=None) -> np.ndarray:
    """``1 + a cos(2 pi k.x)`` normalized to unit mass (already unit mass for ``k != 0``)."""
    rho = Profile("cosine", {"offset": 1.0, "amplitude": amplitude, "mode": mode}).on(grid)
    return rho / (rho.sum() * grid.cell_volume)
