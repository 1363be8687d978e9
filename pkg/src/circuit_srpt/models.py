import json
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any

import scipy.constants as pyc

# CODATA h/(2e), pinned independent of the scipy version
PHI_Q = 2.067833848e-15
HBAR: float = pyc.hbar
K_B: float = pyc.k
E_CHARGE: float = pyc.e

SEGMENT_TOLERANCE = 1e-9


class CircuitError(Exception):
    """base class for every domain error, `code` is stable across releases"""

    code = "circuit_error"


class NonPositiveElement(CircuitError):
    code = "non_positive_element"

    def __init__(self, field_name: str, value: object = None):
        self.field_name = field_name
        self.value = value
        super().__init__(f"{field_name} must be positive, got {value}")


class TopologyFieldMismatch(CircuitError):
    code = "topology_field_mismatch"

    def __init__(self, field_name: str, reason: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {reason}")


class NonIntegerSegments(CircuitError):
    code = "non_integer_segments"

    def __init__(self, ratio: float):
        self.ratio = ratio
        super().__init__(f"length/dx must be an integer >= 2, got {ratio:.12g}")


class SpecFormatError(CircuitError):
    code = "spec_format_error"


class InvalidSpec(CircuitError):
    code = "invalid_spec"

    def __init__(self, violations: list[CircuitError]):
        self.violations = violations
        if violations:
            self.code = violations[0].code
        super().__init__("; ".join(str(v) for v in violations))


class Topology(Enum):
    FIG2_INDUCTIVE_LC = "Fig2_InductiveLC"
    FIG3_CAPACITIVE_LC = "Fig3_CapacitiveLC"
    FIG4_CAPACITIVE_TLINE = "Fig4_CapacitiveTline"
    FIG5A_GENERAL_COUPLING = "Fig5a_GeneralCoupling"
    FIG5B_INDUCTIVE_PER_CELL = "Fig5b_InductivePerCell"
    FIG5C_BAMBA_CIRCUIT = "Fig5c_BambaCircuit"
    FIG5D_NO_RESONATOR_INDUCTOR = "Fig5d_NoResonatorInductor"
    FIG6_INDUCTIVE_TLINE = "Fig6_InductiveTline"

    @property
    def figure(self) -> str:
        return self.value.split("_")[0]

    @property
    def is_tline(self) -> bool:
        return self in (Topology.FIG4_CAPACITIVE_TLINE, Topology.FIG6_INDUCTIVE_TLINE)


class TopologyClass(Enum):
    NO_GO_FAMILY = "NoGoFamily"
    NOT_CONFIRMED_FAMILY = "NotConfirmedFamily"


NO_GO_TOPOLOGIES = frozenset(
    {Topology.FIG2_INDUCTIVE_LC, Topology.FIG3_CAPACITIVE_LC, Topology.FIG4_CAPACITIVE_TLINE}
)
MEAN_FIELD_TOPOLOGIES = frozenset(
    {Topology.FIG5B_INDUCTIVE_PER_CELL, Topology.FIG5C_BAMBA_CIRCUIT}
)


@dataclass(frozen=True)
class ResonatorParams:
    c_r: float
    l_r: float | None = None

    @property
    def impedance(self) -> float | None:
        if self.l_r is None:
            return None
        return math.sqrt(self.l_r / self.c_r)

    @property
    def omega(self) -> float | None:
        if self.l_r is None:
            return None
        return 1.0 / math.sqrt(self.l_r * self.c_r)


@dataclass(frozen=True)
class CellParams:
    l_c: float | None = None
    e_j: float | None = None
    c_j: float | None = None
    phi_ext: float = 0.0
    l_t_prime: float | None = None

    @property
    def is_concrete(self) -> bool:
        return self.e_j is not None and self.c_j is not None

    @property
    def reduced_bias(self) -> float:
        """external flux folded into [0, phi_q)"""
        return math.fmod(math.fmod(self.phi_ext, PHI_Q) + PHI_Q, PHI_Q)


@dataclass(frozen=True)
class TlineParams:
    l_t: float
    c_t: float
    dx: float
    length: float
    lambda_min: float
    omega_a: float

    @property
    def velocity(self) -> float:
        return 1.0 / math.sqrt(self.l_t * self.c_t)

    @property
    def lambda_a(self) -> float:
        return 2.0 * math.pi * self.velocity / self.omega_a

    @property
    def segment_ratio(self) -> float:
        return self.length / self.dx

    @property
    def segments(self) -> int:
        return int(round(self.segment_ratio))

    @property
    def mode_count(self) -> int:
        return max(1, int(math.floor(self.length / self.lambda_min * (1 + 1e-12))))

    @property
    def fundamental(self) -> float:
        """angular frequency pi*v/length of the lowest standing wave"""
        return math.pi * self.velocity / self.length


@dataclass(frozen=True)
class CircuitSpec:
    topology: Topology
    n_cells: int = 1
    resonator: ResonatorParams | None = None
    cell: CellParams | None = None
    tline: TlineParams | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CircuitSpec":
        if "topology" not in data:
            raise SpecFormatError("missing key: topology")
        try:
            topology = Topology(data["topology"])
        except ValueError:
            allowed = ", ".join(t.value for t in Topology)
            raise SpecFormatError(
                f"unknown topology {data['topology']!r}, expected one of: {allowed}"
            ) from None

        n_cells = data.get("n_cells", 1)
        if not isinstance(n_cells, int) or isinstance(n_cells, bool):
            raise SpecFormatError(f"n_cells must be an integer, got {n_cells!r}")

        try:
            resonator = None
            if data.get("resonator") is not None:
                r = data["resonator"]
                resonator = ResonatorParams(c_r=_number(r, "c_r"), l_r=_optional(r, "l_r"))

            cell = None
            if data.get("cell") is not None:
                c = data["cell"]
                cell = CellParams(
                    l_c=_optional(c, "l_c"),
                    e_j=_optional(c, "e_j"),
                    c_j=_optional(c, "c_j"),
                    phi_ext=float(c.get("phi_ext_over_phi_q", 0.0)) * PHI_Q,
                    l_t_prime=_optional(c, "l_t_prime"),
                )

            tline = None
            if data.get("tline") is not None:
                t = data["tline"]
                tline = TlineParams(
                    l_t=_number(t, "l_t"),
                    c_t=_number(t, "c_t"),
                    dx=_number(t, "dx"),
                    length=_number(t, "length"),
                    lambda_min=_number(t, "lambda_min"),
                    omega_a=_number(t, "omega_a"),
                )
        except (KeyError, TypeError, ValueError) as e:
            raise SpecFormatError(f"malformed circuit spec: {e}") from e

        return cls(
            topology=topology, n_cells=n_cells, resonator=resonator, cell=cell, tline=tline
        )

    @classmethod
    def from_file(cls, path: Path) -> "CircuitSpec":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SpecFormatError(f"{path}: invalid json: {e}") from e
        if not isinstance(data, dict):
            raise SpecFormatError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"topology": self.topology.value, "n_cells": self.n_cells}
        if self.resonator is not None:
            data["resonator"] = {"l_r": self.resonator.l_r, "c_r": self.resonator.c_r}
        if self.cell is not None:
            data["cell"] = {
                "l_c": self.cell.l_c,
                "e_j": self.cell.e_j,
                "c_j": self.cell.c_j,
                "phi_ext_over_phi_q": self.cell.phi_ext / PHI_Q,
                "l_t_prime": self.cell.l_t_prime,
            }
        if self.tline is not None:
            data["tline"] = {f.name: getattr(self.tline, f.name) for f in fields(self.tline)}
        return data


def _number(data: dict[str, Any], key: str) -> float:
    return float(data[key])


def _optional(data: dict[str, Any], key: str) -> float | None:
    value = data.get(key)
    return None if value is None else float(value)


@dataclass(frozen=True)
class UnitSystem:
    """internal units: hbar = 1, energies in `energy`, fluxes in phi_q/2pi"""

    energy: float

    @property
    def flux(self) -> float:
        return PHI_Q / (2.0 * math.pi)

    @property
    def charge(self) -> float:
        # conjugate to the reduced flux so that [phi, q] = i in internal units
        return HBAR / self.flux

    @property
    def inductance(self) -> float:
        return self.flux**2 / self.energy

    @property
    def capacitance(self) -> float:
        return self.charge**2 / self.energy

    @property
    def omega(self) -> float:
        return self.energy / HBAR

    def beta(self, temperature: float) -> float:
        if temperature <= 0:
            return math.inf
        return self.energy / (K_B * temperature)

    def temperature(self, beta: float) -> float:
        return self.energy / (K_B * beta)


@dataclass(frozen=True)
class ValidatedSpec:
    spec: CircuitSpec
    units: UnitSystem
    phi_q: float = PHI_Q
    z_r: float | None = None
    omega_c: float | None = None
    velocity: float | None = None
    lambda_a: float | None = None
    segments: int | None = None

    @property
    def topology(self) -> Topology:
        return self.spec.topology

    @property
    def n_cells(self) -> int:
        return self.spec.n_cells

    @property
    def resonator(self) -> ResonatorParams | None:
        return self.spec.resonator

    @property
    def cell(self) -> CellParams | None:
        return self.spec.cell

    @property
    def tline(self) -> TlineParams | None:
        return self.spec.tline


# which optional blocks/fields a topology demands ("req"), allows ("opt") or forbids
_RESONATOR_RULES: dict[Topology, str | None] = {
    Topology.FIG2_INDUCTIVE_LC: "lc",
    Topology.FIG3_CAPACITIVE_LC: "lc",
    Topology.FIG4_CAPACITIVE_TLINE: None,
    Topology.FIG5A_GENERAL_COUPLING: "lc",
    Topology.FIG5B_INDUCTIVE_PER_CELL: "lc",
    Topology.FIG5C_BAMBA_CIRCUIT: "lc",
    Topology.FIG5D_NO_RESONATOR_INDUCTOR: "c_only",
    Topology.FIG6_INDUCTIVE_TLINE: None,
}

_CELL_RULES: dict[Topology, dict[str, str]] = {
    Topology.FIG2_INDUCTIVE_LC: {"l_c": "opt", "e_j": "opt", "c_j": "opt"},
    Topology.FIG3_CAPACITIVE_LC: {},
    Topology.FIG4_CAPACITIVE_TLINE: {},
    Topology.FIG5A_GENERAL_COUPLING: {"l_c": "opt", "e_j": "opt", "c_j": "opt"},
    Topology.FIG5B_INDUCTIVE_PER_CELL: {"l_c": "req", "e_j": "opt", "c_j": "opt"},
    Topology.FIG5C_BAMBA_CIRCUIT: {"l_c": "req", "e_j": "req", "c_j": "req"},
    Topology.FIG5D_NO_RESONATOR_INDUCTOR: {"l_c": "req", "e_j": "opt", "c_j": "opt"},
    Topology.FIG6_INDUCTIVE_TLINE: {"l_t_prime": "req"},
}


def check(spec: CircuitSpec) -> list[CircuitError]:
    violations: list[CircuitError] = []
    topo = spec.topology

    if spec.n_cells < 1:
        violations.append(NonPositiveElement("n_cells", spec.n_cells))

    rule = _RESONATOR_RULES[topo]
    if rule is None:
        if spec.resonator is not None:
            violations.append(TopologyFieldMismatch("resonator", f"not used by {topo.value}"))
    elif spec.resonator is None:
        violations.append(TopologyFieldMismatch("resonator", f"required by {topo.value}"))
    else:
        _positive(violations, "resonator.c_r", spec.resonator.c_r)
        if rule == "lc":
            if spec.resonator.l_r is None:
                violations.append(
                    TopologyFieldMismatch("resonator.l_r", f"required by {topo.value}")
                )
            else:
                _positive(violations, "resonator.l_r", spec.resonator.l_r)
        elif spec.resonator.l_r is not None:
            violations.append(
                TopologyFieldMismatch("resonator.l_r", f"{topo.value} has no resonator inductor")
            )

    if topo.is_tline:
        if spec.tline is None:
            violations.append(TopologyFieldMismatch("tline", f"required by {topo.value}"))
        else:
            t = spec.tline
            for f in fields(t):
                _positive(violations, f"tline.{f.name}", getattr(t, f.name))
            if t.dx > 0 and t.length > 0:
                ratio = t.segment_ratio
                nearest = round(ratio)
                if abs(ratio - nearest) > SEGMENT_TOLERANCE * max(ratio, 1.0) or nearest < 2:
                    violations.append(NonIntegerSegments(ratio))
    elif spec.tline is not None:
        violations.append(TopologyFieldMismatch("tline", f"not used by {topo.value}"))

    violations.extend(_check_cell(spec))
    return violations


def _check_cell(spec: CircuitSpec) -> list[CircuitError]:
    violations: list[CircuitError] = []
    topo = spec.topology
    rules = _CELL_RULES[topo]
    cell = spec.cell

    if cell is None:
        for name, need in rules.items():
            if need == "req":
                violations.append(
                    TopologyFieldMismatch(f"cell.{name}", f"required by {topo.value}")
                )
        return violations

    if not rules:
        violations.append(TopologyFieldMismatch("cell", f"not used by {topo.value}"))
        return violations

    for name in ("l_c", "e_j", "c_j", "l_t_prime"):
        value = getattr(cell, name)
        need = rules.get(name)
        if value is None:
            if need == "req":
                violations.append(
                    TopologyFieldMismatch(f"cell.{name}", f"required by {topo.value}")
                )
            continue
        if need is None:
            violations.append(TopologyFieldMismatch(f"cell.{name}", f"not used by {topo.value}"))
            continue
        if name == "e_j":
            if not math.isfinite(value) or value < 0:
                violations.append(NonPositiveElement("cell.e_j", value))
        else:
            _positive(violations, f"cell.{name}", value)

    # a concrete black box (fig2/fig5a/fig5b/fig5d) needs the whole junction
    if topo in (
        Topology.FIG2_INDUCTIVE_LC,
        Topology.FIG5A_GENERAL_COUPLING,
        Topology.FIG5B_INDUCTIVE_PER_CELL,
        Topology.FIG5D_NO_RESONATOR_INDUCTOR,
    ):
        given = [n for n in ("e_j", "c_j") if getattr(cell, n) is not None]
        if len(given) == 1:
            missing = "c_j" if given[0] == "e_j" else "e_j"
            violations.append(
                TopologyFieldMismatch(f"cell.{missing}", "junction needs both e_j and c_j")
            )
        if topo is Topology.FIG2_INDUCTIVE_LC and given and cell.l_c is None:
            violations.append(
                TopologyFieldMismatch("cell.l_c", "concrete fig2 cell needs its shunt inductor")
            )

    if not math.isfinite(cell.phi_ext):
        violations.append(NonPositiveElement("cell.phi_ext_over_phi_q", cell.phi_ext))
    return violations


def _positive(violations: list[CircuitError], name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        violations.append(NonPositiveElement(name, value))


def reference_energy(spec: CircuitSpec) -> float:
    """energy unit of the internal system for a (checked) spec"""
    if spec.tline is not None:
        return HBAR * spec.tline.fundamental
    assert spec.resonator is not None
    omega = spec.resonator.omega
    if omega is None:
        # fig5d: the photon flux only sees the n coupling inductors in parallel
        assert spec.cell is not None and spec.cell.l_c is not None
        omega = math.sqrt(spec.n_cells / (spec.cell.l_c * spec.resonator.c_r))
    return HBAR * omega


def validate(spec: CircuitSpec) -> ValidatedSpec:
    violations = check(spec)
    if violations:
        raise InvalidSpec(violations)

    units = UnitSystem(energy=reference_energy(spec))
    z_r = omega_c = velocity = lambda_a = None
    segments = None
    if spec.resonator is not None:
        z_r = spec.resonator.impedance
        omega_c = spec.resonator.omega
    if spec.tline is not None:
        velocity = spec.tline.velocity
        lambda_a = spec.tline.lambda_a
        segments = spec.tline.segments

    return ValidatedSpec(
        spec=spec,
        units=units,
        z_r=z_r,
        omega_c=omega_c,
        velocity=velocity,
        lambda_a=lambda_a,
        segments=segments,
    )


def classify_topology(spec: ValidatedSpec) -> TopologyClass:
    if spec.topology in NO_GO_TOPOLOGIES:
        return TopologyClass.NO_GO_FAMILY
    return TopologyClass.NOT_CONFIRMED_FAMILY


@dataclass
class RunConfig:
    photon_cutoff: int = 16
    cell_cutoff: int = 16
    cutoff_ladder: list[int] = field(default_factory=lambda: [8, 16, 24, 32])
    temperatures: list[float] = field(default_factory=list)
    seed: int = 1234
    workers: int = 1
    dimension_budget: int = 20000
    dense_threshold: int = 4096
    format: str = "json"

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        suffix = path.suffix.lower()

        if suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib

            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif suffix in (".yaml", ".yml"):
            import yaml

            with open(path) as f:
                data = yaml.safe_load(f) or {}
        else:
            raise ValueError(f"unsupported config format: {suffix}")

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")

        config = cls(**data)
        if config.format not in ("json", "csv"):
            raise ValueError(f"unsupported output format: {config.format}")
        return config
