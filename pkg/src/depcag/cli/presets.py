"""
Filename: presets.py
Description:
    Shipped run configurations. Each preset is a plain JSON-ready document
    that validates into a RunConfig, so `depcag presets NAME` output can be
    saved, edited and fed back through --config.

License: Apache 2.0
"""
import copy
from typing import Any

from ..engine.error import ConfigError
from ..model.runconfig import RunConfig, parse_run_config


def _analytic(value: float) -> dict:
    return {"analytic": value}


PRESETS: dict[str, dict[str, Any]] = {
    # x' = -x + 0.1 x([t]) + 0.01 tanh(x)
    "scalar-stable": {
        "grid": {"family": "floor"},
        "system": {
            "dim": 1,
            "A": [["-1"]],
            "A0": [["0.1"]],
            "bounds": {"M": _analytic(1.0), "M0": _analytic(0.1)},
        },
        "nonlinearity": {
            "f": ["0.01*tanh(x1)"],
            "bounds": {"mu": _analytic(0.01), "ell1": _analytic(0.01), "ell2": _analytic(0.0)},
        },
        "dichotomy": {"P": [[1.0]], "K": "auto", "alpha": 0.5},
        "seed": 0,
    },
    # stable and unstable direction, P = diag(1, 0)
    "planar-saddle": {
        "grid": {"family": "floor"},
        "system": {
            "dim": 2,
            "A": [["-1", "0"], ["0", "1"]],
            "A0": [["0.1", "0"], ["0", "0.1"]],
            "bounds": {"M": _analytic(1.0), "M0": _analytic(0.1)},
        },
        "nonlinearity": {
            "f": ["0.01*tanh(x1)", "0.01*tanh(x2)"],
            "bounds": {"mu": _analytic(0.0142), "ell1": _analytic(0.01), "ell2": _analytic(0.0)},
        },
        "dichotomy": {"P": [[1.0, 0.0], [0.0, 0.0]], "K": "auto", "alpha": 0.5},
        "seed": 0,
    },
    # A0 == 0: the ordinary differential equation limit
    "palmer-limit": {
        "grid": {"family": "floor"},
        "system": {
            "dim": 1,
            "A": [["-1"]],
            "A0": [["0"]],
            "bounds": {"M": _analytic(1.0), "M0": _analytic(0.0)},
        },
        "nonlinearity": {
            "f": ["0.01*tanh(x1)"],
            "bounds": {"mu": _analytic(0.01), "ell1": _analytic(0.01), "ell2": _analytic(0.0)},
        },
        "dichotomy": {"P": [[1.0]], "K": "auto", "alpha": 0.5},
        "seed": 0,
    },
    # A == 0: pure piecewise constant argument, x(n+1) = 0.5 x(n) on the floor grid
    "pure-pca": {
        "grid": {"family": "floor"},
        "system": {
            "dim": 1,
            "A": [["0"]],
            "A0": [["-0.5"]],
            "bounds": {"M": _analytic(0.0), "M0": _analytic(0.5)},
        },
        "nonlinearity": {
            "f": ["0.01*tanh(y1)"],
            "bounds": {"mu": _analytic(0.01), "ell1": _analytic(0.0), "ell2": _analytic(0.01)},
        },
        "dichotomy": {"P": [[1.0]], "K": "auto", "alpha": 0.5},
        "seed": 0,
    },
}


def preset_document(name: str) -> dict[str, Any]:
    """A fresh copy of a preset document.

    :raises ConfigError: unknown preset
    """
    if name not in PRESETS:
        raise ConfigError("", f"unknown preset '{name}'; choose from {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])


def load_preset(name: str) -> RunConfig:
    return parse_run_config(preset_document(name))
