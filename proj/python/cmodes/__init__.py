"""Coupling-mode analysis of a synchronous machine, a grid-following inverter
and an equivalent grid.

Configs are plain dicts in the JSON scenario layout; ``None`` means the
built-in nominal case.
"""

import json

from . import _core
from ._core import NumericalError, ValidationError, classify, fit_ringdown, frequency_damping
from ._core import star_to_triangle, triangle_to_star

__all__ = [
    "NumericalError",
    "ValidationError",
    "classify",
    "cli",
    "fit_ringdown",
    "frequency_damping",
    "modes",
    "nominal_config",
    "reduce",
    "resolved_config",
    "simulate",
    "solve",
    "star_to_triangle",
    "state_matrix",
    "sweep",
    "triangle_to_star",
]


def _dump(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def nominal_config():
    return json.loads(_core.nominal_config())


def resolved_config(config=None):
    return json.loads(_core.resolved_config(_dump(config)))


def solve(config=None):
    return json.loads(_core.solve(_dump(config)))


def state_matrix(config=None):
    """Returns (A, state labels)."""
    return _core.state_matrix(_dump(config))


def modes(config=None, threshold=0.05):
    return json.loads(_core.modes(_dump(config), threshold))


def sweep(parameter, values, config=None):
    return json.loads(_core.sweep(_dump(config), parameter, list(values)))


def simulate(events=(), t_end=0.1, channels=(), config=None, max_step=10e-6):
    """events: iterable of (time, input, value)."""
    return _core.simulate(_dump(config), list(events), t_end, list(channels), max_step)


def reduce(measurements, generators, between=None, x_over_r=10.0, template=None,
           inverter="inverter", machine="machine"):
    return json.loads(_core.reduce(str(measurements), str(generators), inverter, machine,
                                   between, x_over_r, _dump(template)))


def cli(*args):
    return _core.cli([str(a) for a in args])
