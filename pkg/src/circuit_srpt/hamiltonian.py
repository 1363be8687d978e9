"""quantized circuit hamiltonians as coefficient objects

every model lives in the internal unit system of its spec (hbar = 1, fluxes in
phi_q/2pi, energies in the circuit's reference energy); SI values only appear in
`model_to_dict`.
"""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction

import numpy as np
from numpy.typing import NDArray

from .log import log
from .models import (
    HBAR,
    PHI_Q,
    CellParams,
    CircuitError,
    Topology,
    TopologyFieldMismatch,
    UnitSystem,
    ValidatedSpec,
)

SYMPLECTIC_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-12
DECOUPLING_TOLERANCE = 1e-14


class TopologyMismatch(CircuitError):
    code = "topology_mismatch"


class UnsupportedTopology(CircuitError):
    code = "unsupported_topology"


class NonSymplecticGenerator(CircuitError):
    code = "non_symplectic_generator"


class NoPhotonSector(CircuitError):
    code = "no_photon_sector"


class CellsNotDecoupled(CircuitError):
    code = "cells_not_decoupled"


class Kind(Enum):
    FLUX = "flux"
    CHARGE = "charge"


class Sector(Enum):
    PHOTON = "photon"
    MATTER = "matter"


class Boundary(Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class CanonicalVariable:
    id: str
    kind: Kind
    sector: Sector
    conjugate: str
    label: str
    cell: int | None = None


@dataclass(frozen=True)
class AffineExpr:
    """sum of rational multiples of canonical variables plus a c-number"""

    terms: tuple[tuple[str, Fraction], ...] = ()
    constant: float = 0.0

    @classmethod
    def of(
        cls, coefficients: Mapping[str, float | Fraction], constant: float = 0.0
    ) -> "AffineExpr":
        terms = tuple(
            (var, Fraction(c)) for var, c in coefficients.items() if Fraction(c) != 0
        )
        return cls(terms=terms, constant=float(constant))

    @classmethod
    def var(cls, var_id: str) -> "AffineExpr":
        return cls.of({var_id: 1})

    def coefficient(self, var_id: str) -> Fraction:
        for var, c in self.terms:
            if var == var_id:
                return c
        return Fraction(0)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(var for var, _ in self.terms)

    def substitute(self, mapping: Mapping[str, "AffineExpr"]) -> "AffineExpr":
        coefficients: dict[str, Fraction] = {}
        constant = self.constant
        for var, c in self.terms:
            image = mapping.get(var)
            if image is None:
                coefficients[var] = coefficients.get(var, Fraction(0)) + c
                continue
            for inner, ic in image.terms:
                coefficients[inner] = coefficients.get(inner, Fraction(0)) + c * ic
            constant += float(c) * image.constant
        return AffineExpr.of(coefficients, constant)

    def evaluate(self, values: Mapping[str, float]) -> "AffineExpr":
        return self.substitute({var: AffineExpr(constant=v) for var, v in values.items()})

    def render(self, labels: Mapping[str, str]) -> str:
        parts: list[str] = []
        for var, c in self.terms:
            name = labels.get(var, var)
            if c == 1:
                parts.append(f"+ {name}")
            elif c == -1:
                parts.append(f"- {name}")
            else:
                sign = "-" if c < 0 else "+"
                parts.append(f"{sign} {abs(float(c)):.6g}*{name}")
        if self.constant != 0.0 or not parts:
            sign = "-" if self.constant < 0 else "+"
            parts.append(f"{sign} {abs(self.constant):.6g}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """H = q.G.q/2 + phi.F.phi/2 + b.phi + c.q + constant, indexed by canonical pair"""

    flux_matrix: NDArray[np.float64]
    charge_matrix: NDArray[np.float64]
    linear_flux: NDArray[np.float64]
    linear_charge: NDArray[np.float64]
    constant: float = 0.0

    def __post_init__(self) -> None:
        for arr in (self.flux_matrix, self.charge_matrix, self.linear_flux, self.linear_charge):
            arr.setflags(write=False)

    @classmethod
    def zeros(cls, n: int) -> "QuadraticForm":
        return cls(np.zeros((n, n)), np.zeros((n, n)), np.zeros(n), np.zeros(n))

    @property
    def size(self) -> int:
        return int(self.flux_matrix.shape[0])

    def min_eigenvalues(self) -> tuple[float, float]:
        if self.size == 0:
            return 0.0, 0.0
        return (
            float(np.linalg.eigvalsh(self.flux_matrix)[0]),
            float(np.linalg.eigvalsh(self.charge_matrix)[0]),
        )

    def is_psd(self, tol: float = PSD_TOLERANCE) -> bool:
        lf, lq = self.min_eigenvalues()
        return lf >= -tol and lq >= -tol


@dataclass(frozen=True, eq=False)
class CosineTerm:
    """amplitude * cos(coefficients . phi + phase_offset)"""

    amplitude: float
    coefficients: NDArray[np.float64]
    phase_offset: float = 0.0

    def __post_init__(self) -> None:
        self.coefficients.setflags(write=False)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.coefficients))


@dataclass(frozen=True)
class BlackBoxAccess:
    """the affine combinations through which an unspecified subcircuit is entered"""

    flux_args: tuple[AffineExpr, ...] = ()
    charge_args: tuple[AffineExpr, ...] = ()

    @property
    def arguments(self) -> tuple[AffineExpr, ...]:
        return self.flux_args + self.charge_args

    @property
    def is_empty(self) -> bool:
        return not self.flux_args and not self.charge_args

    def substitute(self, mapping: Mapping[str, AffineExpr]) -> "BlackBoxAccess":
        return BlackBoxAccess(
            flux_args=tuple(a.substitute(mapping) for a in self.flux_args),
            charge_args=tuple(a.substitute(mapping) for a in self.charge_args),
        )


@dataclass(frozen=True)
class PhotonMode:
    """oscillator used to convert a photon pair to ladder amplitudes

    convention "flux": phi = sqrt(Z/2)(a + a^dag); "charge": q = sqrt(1/2Z)(a + a^dag)
    """

    pair: int
    inductance: float
    capacitance: float
    convention: str = "flux"

    @property
    def impedance(self) -> float:
        return math.sqrt(self.inductance / self.capacitance)

    @property
    def omega(self) -> float:
        return 1.0 / math.sqrt(self.inductance * self.capacitance)

    @property
    def flux_scale(self) -> float:
        return math.sqrt(self.impedance / 2.0)

    @property
    def charge_scale(self) -> float:
        return math.sqrt(1.0 / (2.0 * self.impedance))

    def c_numbers(self, alpha: complex) -> tuple[float, float]:
        re, im = alpha.real, alpha.imag
        if self.convention == "flux":
            return 2.0 * self.flux_scale * re, 2.0 * self.charge_scale * im
        return 2.0 * self.flux_scale * im, 2.0 * self.charge_scale * re


@dataclass(frozen=True)
class ModeParams:
    impedance: float
    omega: float
    flux_scale: float
    charge_scale: float


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    topology: Topology | None
    variables: tuple[CanonicalVariable, ...]
    quad: QuadraticForm
    cosines: tuple[CosineTerm, ...]
    blackbox: BlackBoxAccess
    units: UnitSystem
    modes: tuple[PhotonMode, ...] = ()
    concrete: bool = False

    def __post_init__(self) -> None:
        declared = {v.id for v in self.variables}
        for expr in self.blackbox.arguments:
            unknown = set(expr.variables) - declared
            if unknown:
                raise ValueError(f"black box references undeclared variables: {sorted(unknown)}")
        n = len(self.variables) // 2
        if self.quad.size != n:
            raise ValueError(f"quadratic form has size {self.quad.size}, expected {n}")

    @property
    def pair_count(self) -> int:
        return len(self.variables) // 2

    @property
    def fluxes(self) -> tuple[CanonicalVariable, ...]:
        return self.variables[0::2]

    @property
    def charges(self) -> tuple[CanonicalVariable, ...]:
        return self.variables[1::2]

    @property
    def labels(self) -> dict[str, str]:
        return {v.id: v.label for v in self.variables}

    def pair_index(self, var_id: str) -> int:
        for i, v in enumerate(self.variables):
            if v.id == var_id:
                return i // 2
        raise KeyError(var_id)

    def variable(self, var_id: str) -> CanonicalVariable:
        for v in self.variables:
            if v.id == var_id:
                return v
        raise KeyError(var_id)

    def pairs_in(self, sector: Sector) -> list[int]:
        return [i for i, v in enumerate(self.fluxes) if v.sector is sector]

    @property
    def parity_symmetric(self) -> bool:
        if np.any(self.quad.linear_flux != 0) or np.any(self.quad.linear_charge != 0):
            return False
        if not self.blackbox.is_empty:
            return False
        for c in self.cosines:
            folded = math.remainder(c.phase_offset, math.pi)
            if abs(folded) > 1e-15:
                return False
        return True


def _pair(
    flux_id: str,
    charge_id: str,
    sector: Sector,
    flux_label: str,
    charge_label: str,
    cell: int | None = None,
) -> tuple[CanonicalVariable, CanonicalVariable]:
    return (
        CanonicalVariable(flux_id, Kind.FLUX, sector, charge_id, flux_label, cell),
        CanonicalVariable(charge_id, Kind.CHARGE, sector, flux_id, charge_label, cell),
    )


def _junction(
    cell: CellParams, units: UnitSystem, n_pairs: int, pair: int
) -> CosineTerm | None:
    """josephson term -E_J cos(2 pi psi/phi_q - 2 pi phi_ext/phi_q)"""
    if not cell.e_j:
        return None
    fraction = cell.reduced_bias / PHI_Q
    coefficients = np.zeros(n_pairs)
    coefficients[pair] = 1.0
    e_j = cell.e_j / units.energy
    if abs(fraction - 0.5) < 1e-15:
        # a half flux quantum flips the sign of the cosine
        return CosineTerm(e_j, coefficients, 0.0)
    return CosineTerm(-e_j, coefficients, math.remainder(-2.0 * math.pi * fraction, 2 * math.pi))


def _resolve_concrete(spec: ValidatedSpec, concrete: bool | None) -> bool:
    cell = spec.cell
    available = cell is not None and cell.is_concrete
    if spec.topology is Topology.FIG6_INDUCTIVE_TLINE:
        if concrete:
            raise TopologyFieldMismatch("cell", "fig6 is only built with an abstract black box")
        return False
    if concrete is None:
        return available
    if concrete and not available:
        raise TopologyFieldMismatch("cell", "concrete mode needs e_j and c_j")
    return concrete


FLUX_TOPOLOGIES = frozenset(
    {
        Topology.FIG2_INDUCTIVE_LC,
        Topology.FIG5B_INDUCTIVE_PER_CELL,
        Topology.FIG5C_BAMBA_CIRCUIT,
        Topology.FIG5D_NO_RESONATOR_INDUCTOR,
        Topology.FIG6_INDUCTIVE_TLINE,
    }
)
CHARGE_TOPOLOGIES = frozenset({Topology.FIG3_CAPACITIVE_LC, Topology.FIG4_CAPACITIVE_TLINE})


def _check_buildable(spec: ValidatedSpec, allowed: frozenset[Topology], procedure: str) -> None:
    if spec.topology is Topology.FIG5A_GENERAL_COUPLING:
        raise UnsupportedTopology(
            "no hamiltonian is derived for Fig5a in the flux- or charge-based procedure"
        )
    if spec.topology not in allowed:
        raise TopologyMismatch(f"{spec.topology.value} is not built by the {procedure} procedure")


def build_flux_hamiltonian(
    spec: ValidatedSpec,
    concrete: bool | None = None,
    boundary: Boundary = Boundary.PERIODIC,
) -> HamiltonianModel:
    _check_buildable(spec, FLUX_TOPOLOGIES, "flux-based")
    if spec.topology is Topology.FIG6_INDUCTIVE_TLINE:
        return _build_fig6(spec, boundary)

    u = spec.units
    concrete = _resolve_concrete(spec, concrete)
    res = spec.resonator
    cell = spec.cell
    assert res is not None

    if spec.topology is Topology.FIG2_INDUCTIVE_LC:
        # the black box is entered through a single node flux, whatever it contains
        ports = 1
    else:
        ports = spec.n_cells
    n = 1 + ports

    variables: list[CanonicalVariable] = list(_pair("phi", "q", Sector.PHOTON, "φ", "q"))
    for j in range(1, ports + 1):
        suffix = "" if spec.topology is Topology.FIG2_INDUCTIVE_LC else f"_{j}"
        variables.extend(
            _pair(f"psi{suffix}", f"rho{suffix}", Sector.MATTER, f"ψ{suffix}", f"ρ{suffix}", j)
        )

    flux = np.zeros((n, n))
    charge = np.zeros((n, n))
    charge[0, 0] = u.capacitance / res.c_r
    cosines: list[CosineTerm] = []

    if spec.topology is Topology.FIG2_INDUCTIVE_LC:
        assert res.l_r is not None
        k = u.inductance / res.l_r
        flux[np.ix_([0, 1], [0, 1])] += k * np.array([[1.0, -1.0], [-1.0, 1.0]])
        if concrete:
            assert cell is not None and cell.l_c is not None and cell.c_j is not None
            # shunt inductor of the junction cell to ground
            flux[1, 1] += u.inductance / cell.l_c
    else:
        assert cell is not None and cell.l_c is not None
        if res.l_r is not None:
            flux[0, 0] += u.inductance / res.l_r
        k = u.inductance / cell.l_c
        for j in range(1, n):
            flux[0, 0] += k
            flux[0, j] -= k
            flux[j, 0] -= k
            flux[j, j] += k

    if concrete:
        assert cell is not None and cell.c_j is not None
        for j in range(1, n):
            charge[j, j] = u.capacitance / cell.c_j
            term = _junction(cell, u, n, j)
            if term is not None:
                cosines.append(term)
        blackbox = BlackBoxAccess()
    else:
        blackbox = BlackBoxAccess(
            flux_args=tuple(AffineExpr.var(v.id) for v in variables[2::2]),
            charge_args=tuple(AffineExpr.var(v.id) for v in variables[3::2]),
        )

    if res.l_r is not None:
        mode = PhotonMode(0, res.l_r / u.inductance, res.c_r / u.capacitance, "flux")
    else:
        mode = PhotonMode(0, 1.0 / flux[0, 0], res.c_r / u.capacitance, "flux")

    model = HamiltonianModel(
        topology=spec.topology,
        variables=tuple(variables),
        quad=QuadraticForm(flux, charge, np.zeros(n), np.zeros(n)),
        cosines=tuple(cosines),
        blackbox=blackbox,
        units=u,
        modes=(mode,),
        concrete=concrete,
    )
    log(f"built {spec.topology.value}: {n} pairs, {len(cosines)} cosine terms", "debug")
    return model


def _tline_pairs(segments: int, sector: Sector, prefix: tuple[str, str, str, str]) -> list[
    CanonicalVariable
]:
    flux_id, charge_id, flux_label, charge_label = prefix
    variables: list[CanonicalVariable] = []
    for j in range(1, segments + 1):
        cell = j if sector is Sector.MATTER else None
        variables.extend(
            _pair(
                f"{flux_id}_{j}",
                f"{charge_id}_{j}",
                sector,
                f"{flux_label}_{j}",
                f"{charge_label}_{j}",
                cell,
            )
        )
    return variables


def _build_fig6(spec: ValidatedSpec, boundary: Boundary) -> HamiltonianModel:
    u = spec.units
    t = spec.tline
    cell = spec.cell
    assert t is not None and cell is not None and cell.l_t_prime is not None
    m = t.segments
    n = 3 * m

    variables = _tline_pairs(m, Sector.PHOTON, ("phi", "q", "φ", "q"))
    variables += _tline_pairs(m, Sector.MATTER, ("psi", "rho", "ψ", "ρ"))
    variables += _tline_pairs(m, Sector.MATTER, ("psip", "rhop", "ψ'", "ρ'"))

    a = u.inductance / (t.l_t * t.dx)
    b = u.inductance / (cell.l_t_prime * t.dx)
    c = u.capacitance / (t.c_t * t.dx)

    flux = np.zeros((n, n))
    charge = np.zeros((n, n))
    for j in range(m):
        phi, psi = j, m + j
        charge[phi, phi] = c
        _add_difference(flux, phi, psi, a)
        if j == 0 and boundary is Boundary.OPEN:
            continue
        # psi'_{j-1}, wrapping around for a periodic line
        _add_difference(flux, phi, 2 * m + (j - 1) % m, b)

    modes = tuple(
        PhotonMode(j, 1.0 / flux[j, j], 1.0 / charge[j, j], "flux") for j in range(m)
    )
    matter = variables[2 * m :]
    blackbox = BlackBoxAccess(
        flux_args=tuple(AffineExpr.var(v.id) for v in matter[0::2]),
        charge_args=tuple(AffineExpr.var(v.id) for v in matter[1::2]),
    )
    return HamiltonianModel(
        topology=spec.topology,
        variables=tuple(variables),
        quad=QuadraticForm(flux, charge, np.zeros(n), np.zeros(n)),
        cosines=(),
        blackbox=blackbox,
        units=u,
        modes=modes,
    )


def _add_difference(matrix: NDArray[np.float64], i: int, j: int, k: float) -> None:
    """accumulate k*(x_i - x_j)^2 into a symmetric matrix (factor 1/2 implied)"""
    matrix[i, i] += k
    matrix[j, j] += k
    matrix[i, j] -= k
    matrix[j, i] -= k


def tline_charge_matrix(segments: int, boundary: Boundary = Boundary.PERIODIC) -> NDArray[
    np.float64
]:
    """sum_j (q_{j+1} - q_j)^2 as a matrix in units of 1/(C_T dx)

    a single segment degenerates to one capacitor C_T dx.
    """
    if segments == 1:
        return np.ones((1, 1))
    g = np.zeros((segments, segments))
    last = segments if boundary is Boundary.PERIODIC else segments - 1
    for j in range(last):
        _add_difference(g, j, (j + 1) % segments, 1.0)
    return g


def build_charge_hamiltonian(
    spec: ValidatedSpec, boundary: Boundary = Boundary.PERIODIC
) -> HamiltonianModel:
    _check_buildable(spec, CHARGE_TOPOLOGIES, "charge-based")
    u = spec.units

    if spec.topology is Topology.FIG3_CAPACITIVE_LC:
        res = spec.resonator
        assert res is not None and res.l_r is not None
        ports = spec.n_cells
        n = 1 + ports
        variables = list(_pair("phi", "q", Sector.PHOTON, "φ", "q"))
        for j in range(1, ports + 1):
            variables.extend(_pair(f"psi_{j}", f"rho_{j}", Sector.MATTER, f"ψ_{j}", f"ρ_{j}", j))
        flux = np.zeros((n, n))
        charge = np.zeros((n, n))
        flux[0, 0] = u.inductance / res.l_r
        charge[0, 0] = u.capacitance / res.c_r
        blackbox = BlackBoxAccess(
            flux_args=tuple(
                AffineExpr.of({f"psi_{j}": 1, "phi": -1}) for j in range(1, ports + 1)
            ),
            charge_args=tuple(AffineExpr.var(f"rho_{j}") for j in range(1, ports + 1)),
        )
        modes: tuple[PhotonMode, ...] = (
            PhotonMode(0, res.l_r / u.inductance, res.c_r / u.capacitance, "charge"),
        )
    else:
        t = spec.tline
        assert t is not None
        m = t.segments
        n = 2 * m
        variables = _tline_pairs(m, Sector.PHOTON, ("phi", "q", "φ", "q"))
        variables += _tline_pairs(m, Sector.MATTER, ("psi", "rho", "ψ", "ρ"))
        flux = np.zeros((n, n))
        charge = np.zeros((n, n))
        flux[:m, :m] = np.eye(m) * (u.inductance / (t.l_t * t.dx))
        charge[:m, :m] = tline_charge_matrix(m, boundary) * (u.capacitance / (t.c_t * t.dx))
        blackbox = BlackBoxAccess(
            flux_args=tuple(
                AffineExpr.of({f"psi_{j}": 1, f"phi_{j}": -1}) for j in range(1, m + 1)
            ),
            charge_args=tuple(AffineExpr.var(f"rho_{j}") for j in range(1, m + 1)),
        )
        modes = tuple(
            PhotonMode(j, 1.0 / flux[j, j], 1.0 / charge[j, j], "charge") for j in range(m)
        )

    return HamiltonianModel(
        topology=spec.topology,
        variables=tuple(variables),
        quad=QuadraticForm(flux, charge, np.zeros(n), np.zeros(n)),
        cosines=(),
        blackbox=blackbox,
        units=u,
        modes=modes,
    )


def build_hamiltonian(
    spec: ValidatedSpec,
    concrete: bool | None = None,
    boundary: Boundary = Boundary.PERIODIC,
) -> HamiltonianModel:
    """dispatch to the quantization procedure the topology is derived with"""
    if spec.topology in CHARGE_TOPOLOGIES:
        if concrete:
            raise TopologyFieldMismatch("cell", "charge-based topologies keep an abstract box")
        return build_charge_hamiltonian(spec, boundary)
    return build_flux_hamiltonian(spec, concrete, boundary)


def resonator_mode(spec: ValidatedSpec) -> ModeParams | None:
    """(Z_R, omega_c) and ladder conversion coefficients in SI, None without an LC resonator"""
    res = spec.resonator
    if res is None or res.l_r is None:
        return None
    z = math.sqrt(res.l_r / res.c_r)
    return ModeParams(
        impedance=z,
        omega=1.0 / math.sqrt(res.l_r * res.c_r),
        flux_scale=math.sqrt(HBAR * z / 2.0),
        charge_scale=math.sqrt(HBAR / (2.0 * z)),
    )


@dataclass(frozen=True)
class ShiftSpec:
    """generator of a linear point transformation followed by c-number displacements

    `flux_shift` maps a flux to {source flux: coefficient}, the old flux being the
    new one plus the listed multiples; charges then transform with the inverse
    transpose. `charge_shift` is the dual generated by charges. `displacement`
    adds c-numbers to old variables.
    """

    flux_shift: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    charge_shift: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    displacement: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def point(cls, target: str, sources: Mapping[str, float]) -> "ShiftSpec":
        return cls(flux_shift={target: dict(sources)})

    @property
    def is_identity(self) -> bool:
        shifts = (*self.flux_shift.values(), *self.charge_shift.values())
        return all(c == 0 for s in shifts for c in s.values()) and all(
            d == 0 for d in self.displacement.values()
        )

    def matrices(
        self, model: HamiltonianModel
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """(T, S, d_flux, d_charge) with old fluxes T.phi + d_flux and old charges S.q + d_charge"""
        if self.flux_shift and self.charge_shift:
            raise NonSymplecticGenerator("generator mixes flux and charge point shifts")
        n = model.pair_count
        index = {v.id: (i // 2, v.kind) for i, v in enumerate(model.variables)}

        def lookup(var_id: str, kind: Kind) -> int:
            if var_id not in index:
                raise NonSymplecticGenerator(f"unknown variable {var_id!r}")
            pair, actual = index[var_id]
            if actual is not kind:
                raise NonSymplecticGenerator(
                    f"{var_id!r} is a {actual.value}, expected {kind.value}"
                )
            return pair

        def fill(shift: Mapping[str, Mapping[str, float]], kind: Kind) -> NDArray[np.float64]:
            m = np.eye(n)
            for target, sources in shift.items():
                t = lookup(target, kind)
                for source, c in sources.items():
                    m[t, lookup(source, kind)] += c
            return m

        try:
            if self.charge_shift:
                s = fill(self.charge_shift, Kind.CHARGE)
                t = np.linalg.inv(s).T
            else:
                t = fill(self.flux_shift, Kind.FLUX)
                s = np.linalg.inv(t).T
        except np.linalg.LinAlgError:
            raise NonSymplecticGenerator("point transformation is singular") from None

        omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
        full = np.block([[t, np.zeros((n, n))], [np.zeros((n, n)), s]])
        defect = float(np.max(np.abs(full.T @ omega @ full - omega))) if n else 0.0
        if not np.isfinite(defect) or defect > SYMPLECTIC_TOLERANCE:
            raise NonSymplecticGenerator(f"transformation is not symplectic (defect {defect:.3g})")

        d_flux = np.zeros(n)
        d_charge = np.zeros(n)
        for var_id, value in self.displacement.items():
            if var_id not in index:
                raise NonSymplecticGenerator(f"unknown variable {var_id!r}")
            pair, kind = index[var_id]
            (d_flux if kind is Kind.FLUX else d_charge)[pair] += value
        return t, s, d_flux, d_charge

    def inverse(self, model: HamiltonianModel) -> "ShiftSpec":
        t, s, d_flux, d_charge = self.matrices(model)
        t_inv = np.linalg.inv(t)
        s_inv = np.linalg.inv(s)
        fluxes = [v.id for v in model.fluxes]
        charges = [v.id for v in model.charges]

        def as_shift(m: NDArray[np.float64], ids: list[str]) -> dict[str, dict[str, float]]:
            delta = m - np.eye(len(ids))
            out: dict[str, dict[str, float]] = {}
            for i, j in zip(*np.nonzero(delta)):
                out.setdefault(ids[i], {})[ids[j]] = float(delta[i, j])
            return out

        displacement = {
            **{fluxes[i]: float(v) for i, v in enumerate(-t_inv @ d_flux) if v != 0},
            **{charges[i]: float(v) for i, v in enumerate(-s_inv @ d_charge) if v != 0},
        }
        if self.charge_shift:
            return ShiftSpec(charge_shift=as_shift(s_inv, charges), displacement=displacement)
        return ShiftSpec(flux_shift=as_shift(t_inv, fluxes), displacement=displacement)


def apply_unitary_shift(model: HamiltonianModel, generator: ShiftSpec) -> HamiltonianModel:
    """rewrite every coefficient of the model in the shifted variables"""
    if generator.is_identity:
        return model
    t, s, d_flux, d_charge = generator.matrices(model)
    q = model.quad
    f, g = q.flux_matrix, q.charge_matrix

    flux = t.T @ f @ t
    charge = s.T @ g @ s
    quad = QuadraticForm(
        flux_matrix=(flux + flux.T) / 2.0,
        charge_matrix=(charge + charge.T) / 2.0,
        linear_flux=t.T @ (f @ d_flux + q.linear_flux),
        linear_charge=s.T @ (g @ d_charge + q.linear_charge),
        constant=float(
            q.constant
            + 0.5 * d_flux @ f @ d_flux
            + q.linear_flux @ d_flux
            + 0.5 * d_charge @ g @ d_charge
            + q.linear_charge @ d_charge
        ),
    )
    cosines = tuple(
        CosineTerm(
            c.amplitude, t.T @ c.coefficients, c.phase_offset + float(c.coefficients @ d_flux)
        )
        for c in model.cosines
    )

    mapping: dict[str, AffineExpr] = {}
    for i, (fv, cv) in enumerate(zip(model.fluxes, model.charges)):
        mapping[fv.id] = AffineExpr.of(
            {model.fluxes[j].id: t[i, j] for j in range(model.pair_count)}, d_flux[i]
        )
        mapping[cv.id] = AffineExpr.of(
            {model.charges[j].id: s[i, j] for j in range(model.pair_count)}, d_charge[i]
        )
    return replace(model, quad=quad, cosines=cosines, blackbox=model.blackbox.substitute(mapping))


def dress_modes(model: HamiltonianModel) -> HamiltonianModel:
    """replace the photon modes by the oscillators on the photon diagonal"""
    f = model.quad.flux_matrix
    g = model.quad.charge_matrix
    modes = []
    for mode in model.modes:
        p = mode.pair
        if f[p, p] <= 0 or g[p, p] <= 0:
            raise NoPhotonSector(f"photon pair {model.fluxes[p].id} has no restoring term")
        modes.append(PhotonMode(p, 1.0 / f[p, p], 1.0 / g[p, p], mode.convention))
    return replace(model, modes=tuple(modes))


@dataclass(frozen=True, eq=False)
class CNumberModel:
    """photon operators replaced by coherent-state amplitudes

    `photon_energy` is sum omega(|alpha|^2 + 1/2) of the photon modes; everything
    else the c-numbers leave behind sits in `matter`, constants included.
    """

    alpha: tuple[complex, ...]
    photon_values: dict[str, float]
    photon_energy: float
    matter: HamiltonianModel

    @property
    def phi_c(self) -> float:
        return next(iter(self.photon_values.values()))


def _alphas(alpha: complex | Sequence[complex], count: int) -> tuple[complex, ...]:
    if isinstance(alpha, (int, float, complex)):
        values: tuple[complex, ...] = (complex(alpha),)
    else:
        values = tuple(complex(a) for a in alpha)
    if len(values) != count:
        raise ValueError(f"expected {count} coherent amplitudes, got {len(values)}")
    return values


def c_number_substitute(
    model: HamiltonianModel, alpha: complex | Sequence[complex]
) -> CNumberModel:
    photon = model.pairs_in(Sector.PHOTON)
    if not photon or not model.modes:
        raise NoPhotonSector("model has no photon sector")
    if sorted(m.pair for m in model.modes) != photon:
        raise NoPhotonSector("every photon pair needs a mode")
    alphas = _alphas(alpha, len(model.modes))
    matter = model.pairs_in(Sector.MATTER)

    q = model.quad
    n = model.pair_count
    f = np.array(q.flux_matrix)
    g = np.array(q.charge_matrix)
    phi_c = np.zeros(n)
    q_c = np.zeros(n)
    energy = 0.0
    values: dict[str, float] = {}
    for mode, a in zip(model.modes, alphas):
        p = mode.pair
        phi_c[p], q_c[p] = mode.c_numbers(a)
        f[p, p] -= 1.0 / mode.inductance
        g[p, p] -= 1.0 / mode.capacitance
        energy += mode.omega * (abs(a) ** 2 + 0.5)
        values[model.fluxes[p].id] = float(phi_c[p])
        values[model.charges[p].id] = float(q_c[p])

    ph = np.array(photon)
    mt = np.array(matter, dtype=int)
    constant = (
        q.constant
        + 0.5 * phi_c[ph] @ f[np.ix_(ph, ph)] @ phi_c[ph]
        + q.linear_flux[ph] @ phi_c[ph]
        + 0.5 * q_c[ph] @ g[np.ix_(ph, ph)] @ q_c[ph]
        + q.linear_charge[ph] @ q_c[ph]
    )

    cosines: list[CosineTerm] = []
    for c in model.cosines:
        offset = c.phase_offset + float(c.coefficients[ph] @ phi_c[ph])
        k = np.array(c.coefficients[mt])
        if not np.any(k):
            constant += c.amplitude * math.cos(offset)
        else:
            cosines.append(CosineTerm(c.amplitude, k, offset))

    variables = tuple(v for v in model.variables if v.sector is Sector.MATTER)
    reduced = HamiltonianModel(
        topology=model.topology,
        variables=variables,
        quad=QuadraticForm(
            flux_matrix=f[np.ix_(mt, mt)],
            charge_matrix=g[np.ix_(mt, mt)],
            linear_flux=q.linear_flux[mt] + f[np.ix_(mt, ph)] @ phi_c[ph],
            linear_charge=q.linear_charge[mt] + g[np.ix_(mt, ph)] @ q_c[ph],
            constant=float(constant),
        ),
        cosines=tuple(cosines),
        blackbox=model.blackbox.substitute(
            {var: AffineExpr(constant=v) for var, v in values.items()}
        ),
        units=model.units,
        concrete=model.concrete,
    )
    return CNumberModel(alphas, values, energy, reduced)


@dataclass(frozen=True, eq=False)
class CellDecomposition:
    constant: float
    cells: tuple[HamiltonianModel, ...]


def split_cells(model: HamiltonianModel, tol: float = DECOUPLING_TOLERANCE) -> CellDecomposition:
    """split a matter-only model into one model per cell, the shared constant kept apart"""
    if model.pairs_in(Sector.PHOTON):
        raise CellsNotDecoupled("model still contains photon variables")
    cell_of = [v.cell for v in model.fluxes]
    cells = sorted({c for c in cell_of if c is not None})
    q = model.quad
    scale = max(float(np.max(np.abs(q.flux_matrix), initial=0.0)), 1.0)
    scale_q = max(float(np.max(np.abs(q.charge_matrix), initial=0.0)), 1.0)

    for i in range(model.pair_count):
        for j in range(i + 1, model.pair_count):
            if cell_of[i] == cell_of[j]:
                continue
            if abs(q.flux_matrix[i, j]) > tol * scale or abs(q.charge_matrix[i, j]) > tol * scale_q:
                raise CellsNotDecoupled(
                    f"{model.fluxes[i].label} and {model.fluxes[j].label} remain coupled"
                )

    def cell_of_var(var_id: str) -> int | None:
        return cell_of[model.pair_index(var_id)]

    parts: list[HamiltonianModel] = []
    for cell in cells:
        idx = np.array([i for i, c in enumerate(cell_of) if c == cell])
        ids = {model.fluxes[i].id for i in idx} | {model.charges[i].id for i in idx}
        cosines: list[CosineTerm] = []
        for c in model.cosines:
            owners = {cell_of[i] for i in c.support}
            if len(owners) > 1:
                raise CellsNotDecoupled("a cosine term spans several cells")
            if owners == {cell}:
                cosines.append(
                    CosineTerm(c.amplitude, np.array(c.coefficients[idx]), c.phase_offset)
                )
        flux_args: list[AffineExpr] = []
        charge_args: list[AffineExpr] = []
        box = model.blackbox
        for args, out in ((box.flux_args, flux_args), (box.charge_args, charge_args)):
            for expr in args:
                owners = {cell_of_var(v) for v in expr.variables}
                if len(owners) > 1:
                    raise CellsNotDecoupled(
                        f"black-box argument {expr.render(model.labels)} spans cells"
                    )
                if set(expr.variables) <= ids and expr.variables:
                    out.append(expr)
        parts.append(
            HamiltonianModel(
                topology=model.topology,
                variables=tuple(v for v in model.variables if v.id in ids),
                quad=QuadraticForm(
                    flux_matrix=np.array(q.flux_matrix[np.ix_(idx, idx)]),
                    charge_matrix=np.array(q.charge_matrix[np.ix_(idx, idx)]),
                    linear_flux=np.array(q.linear_flux[idx]),
                    linear_charge=np.array(q.linear_charge[idx]),
                ),
                cosines=tuple(cosines),
                blackbox=BlackBoxAccess(tuple(flux_args), tuple(charge_args)),
                units=model.units,
                concrete=model.concrete,
            )
        )
    return CellDecomposition(constant=q.constant, cells=tuple(parts))


def _role(a: CanonicalVariable, b: CanonicalVariable) -> str:
    if a.sector is not b.sector:
        return "interaction"
    return a.sector.value


def term_breakdown(model: HamiltonianModel) -> list[dict[str, object]]:
    """every nonzero quadratic coefficient in SI, tagged photon, matter or interaction"""
    u = model.units
    terms: list[dict[str, object]] = []
    for kind, matrix, unit, names in (
        ("flux", model.quad.flux_matrix, u.inductance, model.fluxes),
        ("charge", model.quad.charge_matrix, u.capacitance, model.charges),
    ):
        for i in range(model.pair_count):
            for j in range(i, model.pair_count):
                value = 0.5 * matrix[i, j] if i == j else matrix[i, j]
                if value == 0:
                    continue
                a, b = names[i], names[j]
                terms.append(
                    {
                        "term": f"{a.label}^2" if i == j else f"{a.label}*{b.label}",
                        "kind": kind,
                        "role": _role(a, b),
                        "coefficient": float(value / unit),
                    }
                )
    return terms


def _affine_to_dict(expr: AffineExpr, labels: Mapping[str, str], unit: float) -> dict[str, object]:
    return {
        "expression": expr.render(labels),
        "coefficients": {var: float(c) for var, c in expr.terms},
        "constant": expr.constant * unit,
    }


def model_to_dict(model: HamiltonianModel) -> dict[str, object]:
    """JSON-ready description in SI units: 1/H, 1/F, A, V, J, rad/Wb"""
    u = model.units
    q = model.quad
    labels = model.labels
    fluxes = [v.id for v in model.fluxes]
    return {
        "topology": model.topology.value if model.topology else None,
        "concrete": model.concrete,
        "energy_unit": u.energy,
        "variables": [
            {
                "id": v.id,
                "label": v.label,
                "kind": v.kind.value,
                "sector": v.sector.value,
                "conjugate": v.conjugate,
                "cell": v.cell,
            }
            for v in model.variables
        ],
        "flux_matrix": (q.flux_matrix / u.inductance).tolist(),
        "charge_matrix": (q.charge_matrix / u.capacitance).tolist(),
        "linear_flux": (q.linear_flux * u.energy / u.flux).tolist(),
        "linear_charge": (q.linear_charge * u.energy / u.charge).tolist(),
        "constant": q.constant * u.energy,
        "cosines": [
            {
                "amplitude": c.amplitude * u.energy,
                "coefficients": {
                    fluxes[i]: float(c.coefficients[i]) / u.flux for i in c.support
                },
                "phase_offset": c.phase_offset,
            }
            for c in model.cosines
        ],
        "blackbox": {
            "flux_args": [_affine_to_dict(a, labels, u.flux) for a in model.blackbox.flux_args],
            "charge_args": [
                _affine_to_dict(a, labels, u.charge) for a in model.blackbox.charge_args
            ],
        },
        "modes": [
            {
                "pair": fluxes[m.pair],
                "convention": m.convention,
                "impedance": m.impedance * math.sqrt(u.inductance / u.capacitance),
                "omega": m.omega * u.omega,
            }
            for m in model.modes
        ],
        "terms": term_breakdown(model),
    }
