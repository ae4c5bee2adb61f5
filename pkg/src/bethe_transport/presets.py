"""
Named experiment presets for the acceptance-scale runs.

A preset is a partial experiment config; ``--preset NAME`` starts from it and the
config file and flags are merged on top.
"""

import logging
from typing import Any, Dict

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Dict[str, Any]] = {
    "oracle": {
        "mode": "green-validate",
        "geometry": {"branching": 2, "depth": 5},
        "distribution": {"kind": "uniform", "width": 1.0},
        "spectral": {"energies": [0.0, 1.0], "etas": [1e-3, 1e-1, 1.0]},
        "sampling": {"field_count": 20},
        "description": "Recursive columns against the dense solve, 20 seeds",
    },
    "free-anchors": {
        "mode": "pool-run",
        "distribution": {"kind": "free"},
        "spectral": {"energies": [0.0], "etas": [1e-3], "s_values": [2.0]},
        "pool": {"size": 100_000, "burn_in": 100},
        "description": "Free tree: Im G(0,0) near 1/sqrt(K) and the s = 2 free energy",
    },
    "ballistic-tail": {
        "mode": "bounds-check",
        "geometry": {"branching": 2, "depth": 20},
        "distribution": {"kind": "uniform", "width": 1.0},
        "dynamics": {"t_grid": [1.0, 2.0, 3.0, 4.0]},
        "checks": {"enabled": ["ballistic_tail"]},
        "description": "Front tails against the certificate bound at D = 20",
    },
    "second-moment": {
        "mode": "bounds-check",
        "distribution": {"kind": "uniform", "width": 0.5},
        "spectral": {"energies": [-1.0, 0.0, 1.0], "etas": [1e-2]},
        "sampling": {"path_samples": 1_000_000, "n_range": [5, 10, 15, 20, 25]},
        "checks": {"enabled": ["second_moment_decay"]},
        "description": "K^n E|G(0,x_n)|^2 does not grow inside the ac window",
    },
    "free-energy": {
        "mode": "bounds-check",
        "distribution": {"kind": "uniform", "width": 1.0},
        "spectral": {"energies": [0.0, 1.0], "etas": [0.05], "s_values": [0.5, 1.0, 2.0]},
        "checks": {"enabled": ["free_energy_apriori"]},
        "description": "A-priori free-energy bound at two energies",
    },
    "distribution-bounds": {
        "mode": "bounds-check",
        "distribution": {"kind": "uniform", "width": 1.0},
        "spectral": {"energies": [0.0], "etas": [0.1]},
        "pool": {"root_samples": 1_000_000},
        "checks": {"enabled": ["lemma6", "recursion_step", "recursive_inequality", "F_power_law"]},
        "description": "Distribution-function inequalities of the root Green function",
    },
    "lingering": {
        "mode": "theorem1-scan",
        "geometry": {"branching": 2, "depth": 20},
        "distribution": {"kind": "uniform", "width": 0.5},
        "spectral": {"window": [-1.0, 1.0], "etas": [0.1, 0.05, 0.025], "b_grid": [0.1, 0.2, 0.3, 0.4, 0.5]},
        "sampling": {"field_count": 50},
        "description": "Lingering probability linear in b, slope stable as eta shrinks",
    },
    "phase-weak": {
        "mode": "phase-map",
        "distribution": {"kind": "uniform", "width": 0.5},
        "spectral": {"energies": [0.0], "etas": [1e-3]},
        "pool": {"size": 1_000_000},
        "description": "Weak disorder at the band centre: ac-like",
    },
    "phase-strong": {
        "mode": "phase-map",
        "distribution": {"kind": "uniform", "width": 100.0},
        "spectral": {"energies": [0.0], "etas": [1e-3]},
        "pool": {"size": 1_000_000},
        "description": "Strong disorder at the band centre: pp-like",
    },
    "transport-weak": {
        "mode": "dynamics-run",
        "geometry": {"branching": 2, "depth": 20},
        "distribution": {"kind": "uniform", "width": 0.5},
        "dynamics": {"t_grid": [1.0, 2.0, 3.0, 4.0], "expected_regime": "ballistic"},
        "sampling": {"field_count": 5},
        "description": "Ballistic first moment under weak disorder",
    },
    "transport-strong": {
        "mode": "dynamics-run",
        "geometry": {"branching": 2, "depth": 20},
        "distribution": {"kind": "uniform", "width": 100.0},
        "dynamics": {"t_grid": [1.0, 2.0, 3.0, 4.0], "expected_regime": "bounded"},
        "sampling": {"field_count": 5},
        "description": "Bounded first moment under strong disorder",
    },
    "wegner": {
        "mode": "bounds-check",
        "distribution": {"kind": "uniform", "width": 8.0},
        "spectral": {"energies": [0.0, 1.0], "etas": [1e-2]},
        "checks": {"enabled": ["wegner"]},
        "description": "Smoothed density of states below ||rho||_inf",
    },
}


def get_preset(name: str) -> Dict[str, Any]:
    """
    Get the config mapping of a named preset.

    Args:
        name: Preset name

    Returns:
        Copy of the preset without its description

    Raises:
        KeyError: unknown preset
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    logger.info(f"Using preset: {name}")
    return {k: v for k, v in PRESETS[name].items() if k != "description"}


def list_available_presets() -> str:
    """
    List all presets with their modes and descriptions.

    Returns:
        String with formatted list of presets
    """
    result = "Available presets:\n\n"
    for name, preset in PRESETS.items():
        result += f"- {name} ({preset['mode']}): {preset['description']}\n"
    return result
