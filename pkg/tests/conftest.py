import copy
import json
import math
from pathlib import Path
from typing import Any

import pytest

from circuit_srpt.models import PHI_Q, CircuitSpec, ValidatedSpec, validate

PHI0 = PHI_Q / (2 * math.pi)

BAMBA: dict[str, Any] = {
    "topology": "Fig5c_BambaCircuit",
    "n_cells": 1,
    "resonator": {"l_r": 1e-9, "c_r": 1e-12},
    "cell": {"l_c": 1e-10, "e_j": 1e-22, "c_j": 1e-15, "phi_ext_over_phi_q": 0.5},
}

TLINE: dict[str, Any] = {
    "l_t": 4e-7,
    "c_t": 1.6e-10,
    "dx": 1e-3,
    "length": 1e-2,
    "lambda_min": 2.5e-3,
    "omega_a": 2 * math.pi * 5e9,
}


def spec_dict(topology: str, **overrides: Any) -> dict[str, Any]:
    """a valid spec dict for any topology, nested overrides as `block__field`"""
    data: dict[str, Any] = {"topology": topology, "n_cells": 1}
    if topology in ("Fig4_CapacitiveTline", "Fig6_InductiveTline"):
        data["tline"] = dict(TLINE)
    elif topology == "Fig5d_NoResonatorInductor":
        data["resonator"] = {"c_r": 1e-12}
    else:
        data["resonator"] = {"l_r": 1e-9, "c_r": 1e-12}

    if topology in ("Fig5b_InductivePerCell", "Fig5c_BambaCircuit", "Fig5d_NoResonatorInductor"):
        data["cell"] = copy.deepcopy(BAMBA["cell"])
    elif topology == "Fig6_InductiveTline":
        data["cell"] = {"l_t_prime": 2e-7}

    for key, value in overrides.items():
        if "__" in key:
            block, name = key.split("__")
            data.setdefault(block, {})[name] = value
        else:
            data[key] = value
    return data


def make_spec(topology: str, **overrides: Any) -> ValidatedSpec:
    return validate(CircuitSpec.from_dict(spec_dict(topology, **overrides)))


def bamba(n_cells: int = 1, ratio: float | None = None, **overrides: Any) -> ValidatedSpec:
    """fig5c spec, with N*L_R at `ratio` times the critical value when given"""
    data = copy.deepcopy(BAMBA)
    data["n_cells"] = n_cells
    data["cell"].update(overrides)
    if ratio is not None:
        cell = data["cell"]
        threshold = PHI0**2 / cell["e_j"] - cell["l_c"]
        data["resonator"]["l_r"] = ratio * threshold / n_cells
    return validate(CircuitSpec.from_dict(data))


def soft_bamba(n_cells: int = 1, **overrides: Any) -> ValidatedSpec:
    """weakly coupled fig5c with photon and cell near resonance, cheap to diagonalize"""
    cell = {"l_c": 1e-8, "e_j": 1e-24, "c_j": 1e-13, "phi_ext_over_phi_q": 0.5}
    cell.update(overrides)
    data = {
        "topology": "Fig5c_BambaCircuit",
        "n_cells": n_cells,
        "resonator": {"l_r": 1e-9, "c_r": 1e-12},
        "cell": cell,
    }
    return validate(CircuitSpec.from_dict(data))


@pytest.fixture
def write_spec(tmp_path: Path) -> Any:
    def write(data: dict[str, Any], name: str = "spec.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write
