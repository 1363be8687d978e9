"""mean-field analysis of the per-cell inductive topologies

the classical potential of the photon flux phi and the common cell flux psi is
worked on in reduced variables x = phi/phi0, y = psi/phi0 with phi0 = phi_q/2pi;
dividing by N*phi0^2/L_c leaves

    u(x, y) = r x^2/2 + (x - y)^2/2 + s j cos(y - a) - e x

with r = L_c/(N L_R), j = E_J L_c/phi0^2 and the bias folded into (s, a).
"""

import concurrent.futures
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from scipy.optimize import brentq, minimize_scalar, root

from .hamiltonian import (
    CNumberModel,
    HamiltonianModel,
    Sector,
    TopologyMismatch,
    build_flux_hamiltonian,
    c_number_substitute,
    split_cells,
)
from .log import log, log_table
from .models import (
    PHI_Q,
    CircuitError,
    CircuitSpec,
    Topology,
    ValidatedSpec,
    validate,
)
from .oscillator import quadrature
from .spectrum import TruncatedBasis, assemble_matrix, log_partition

SAMPLES = 4001
GRID_POINTS = 2001
TOL_FLUX_FRACTION = 1e-9
RESIDUAL_TOLERANCE = 1e-10
CURVATURE_EPS = 1e-12
FREE_ENERGY_RTOL = 1e-8
MAX_CELL_CUTOFF = 256
TC_RTOL = 1e-4


class ZeroJosephsonEnergy(CircuitError):
    code = "zero_josephson_energy"


class MeanFieldNonConvergence(CircuitError):
    code = "mean_field_non_convergence"

    def __init__(
        self, message: str, best: "MeanFieldResult | None" = None, residual: float = math.nan
    ):
        self.best = best
        self.residual = residual
        super().__init__(message)


class BasisNotConverged(CircuitError):
    code = "basis_not_converged"


class NotSuperradiantAtZeroT(CircuitError):
    code = "not_superradiant_at_zero_t"


class Phase(Enum):
    NORMAL = "Normal"
    SUPERRADIANT = "Superradiant"
    MATTER_POLARIZED = "MatterPolarized"


MEAN_FIELD_BUILDS = frozenset(
    {
        Topology.FIG5B_INDUCTIVE_PER_CELL,
        Topology.FIG5C_BAMBA_CIRCUIT,
        Topology.FIG5D_NO_RESONATOR_INDUCTOR,
    }
)


@dataclass(frozen=True)
class EffectivePotential:
    """classical potential of the photon flux and the common cell flux

    U = phi^2/2L_R + N[(phi - psi)^2/2L_c - E_J cos(2pi(psi - phi_ext)/phi_q)] - eps*phi,
    the first term absent without a resonator inductor
    """

    n_cells: int
    l_c: float
    e_j: float
    l_r: float | None = None
    phi_ext: float = PHI_Q / 2
    epsilon: float = 0.0
    phi_q: float = PHI_Q

    @classmethod
    def from_spec(cls, spec: ValidatedSpec, epsilon: float = 0.0) -> "EffectivePotential":
        if spec.topology not in MEAN_FIELD_BUILDS:
            raise TopologyMismatch(f"no mean-field potential for {spec.topology.value}")
        cell = spec.cell
        res = spec.resonator
        assert cell is not None and cell.l_c is not None and res is not None
        return cls(
            n_cells=spec.n_cells,
            l_c=cell.l_c,
            e_j=cell.e_j or 0.0,
            l_r=res.l_r,
            phi_ext=cell.phi_ext,
            epsilon=epsilon,
            phi_q=spec.phi_q,
        )

    @property
    def flux_unit(self) -> float:
        return self.phi_q / (2.0 * math.pi)

    @property
    def energy_scale(self) -> float:
        """phi0^2/L_c, the per-cell unit of u"""
        return self.flux_unit**2 / self.l_c

    @property
    def ratio(self) -> float:
        return 0.0 if self.l_r is None else self.l_c / (self.n_cells * self.l_r)

    @property
    def kappa(self) -> float:
        return self.ratio / (1.0 + self.ratio)

    @property
    def coupling(self) -> float:
        return self.e_j / self.energy_scale

    @property
    def tilt(self) -> float:
        return self.epsilon * self.flux_unit / (self.n_cells * self.energy_scale)

    @property
    def josephson(self) -> tuple[float, float]:
        """(s, a) with the junction energy s*E_J*cos(y - a)"""
        fraction = math.fmod(math.fmod(self.phi_ext, self.phi_q) + self.phi_q, self.phi_q)
        fraction /= self.phi_q
        if abs(fraction - 0.5) < 1e-15:
            return 1.0, 0.0
        if fraction == 0.0:
            return -1.0, 0.0
        return -1.0, 2.0 * math.pi * fraction

    @property
    def parity_symmetric(self) -> bool:
        return self.epsilon == 0.0 and self.josephson[1] == 0.0

    @property
    def tol_flux(self) -> float:
        return TOL_FLUX_FRACTION * self.phi_q


def potential_value(p: EffectivePotential, phi: float, psi: float) -> float:
    """U in joules at the fluxes (phi, psi) in webers"""
    s, a = p.josephson
    y = 2.0 * math.pi * psi / p.phi_q
    junction = s * p.e_j * (math.cos(y) if a == 0.0 else math.cos(y - a))
    u = p.n_cells * ((phi - psi) ** 2 / (2.0 * p.l_c) + junction) - p.epsilon * phi
    if p.l_r is not None:
        u += phi**2 / (2.0 * p.l_r)
    return u


@dataclass(frozen=True)
class CriticalCondition:
    """superradiant iff N*L_R > threshold = phi0^2/E_J - L_c"""

    threshold: float
    n_l_r: float
    superradiant: bool

    @property
    def ratio(self) -> float:
        return self.n_l_r / self.threshold if self.threshold > 0 else math.inf


def critical_inductance(source: ValidatedSpec | EffectivePotential) -> CriticalCondition:
    p = source if isinstance(source, EffectivePotential) else EffectivePotential.from_spec(source)
    if p.l_r is None:
        raise TopologyMismatch("the critical inductance needs a resonator inductor")
    if p.e_j == 0:
        raise ZeroJosephsonEnergy("E_J = 0 leaves a harmonic potential without a transition")
    s, a = p.josephson
    effective = s * p.e_j * math.cos(a)
    n_l_r = p.n_cells * p.l_r
    if effective <= 0:
        return CriticalCondition(math.inf, n_l_r, False)
    threshold = p.flux_unit**2 / effective - p.l_c
    return CriticalCondition(threshold, n_l_r, n_l_r > threshold)


@dataclass(frozen=True)
class MeanFieldResult:
    """classical minimum, fluxes in webers and energies in joules

    `curvature_at_origin` is d^2U/dpsi^2 at the origin with phi relaxed, in 1/H.
    """

    phi0: float
    psi0: float
    u_min: float
    phase: Phase
    curvature_at_origin: float
    residual: float
    barrier: float | None = None


def _derivatives(
    p: EffectivePotential,
) -> tuple[Callable[[float], float], Callable[[float], float], Callable[[float], float]]:
    """(g, g', g'') of the reduced potential with x relaxed"""
    kappa, j, e_t = p.kappa, p.coupling, p.tilt / (1.0 + p.ratio)
    s, a = p.josephson

    def g(y: float) -> float:
        return kappa * y * y / 2.0 - e_t * y + s * j * math.cos(y - a)

    def dg(y: float) -> float:
        return kappa * y - e_t - s * j * math.sin(y - a)

    def d2g(y: float) -> float:
        return kappa - s * j * math.cos(y - a)

    return g, dg, d2g


def _polish(y: float, dg: Callable[[float], float], d2g: Callable[[float], float]) -> float:
    for _ in range(3):
        curvature = d2g(y)
        if curvature == 0:
            break
        step = y - dg(y) / curvature
        if abs(dg(step)) >= abs(dg(y)):
            break
        y = step
    return y


def _stationary_points(p: EffectivePotential) -> list[float]:
    _, dg, d2g = _derivatives(p)
    kappa, j = p.kappa, p.coupling
    e_t = abs(p.tilt) / (1.0 + p.ratio)
    bound = 2.0 * math.pi
    if kappa > 0:
        bound = max(bound, (e_t + j) / kappa + 1.0)

    ys = np.linspace(-bound, bound, SAMPLES)
    values = np.array([dg(float(y)) for y in ys])
    points = [-bound, bound]
    points += [float(y) for y in ys[values == 0]]
    for i in np.flatnonzero(values[:-1] * values[1:] < 0):
        lo, hi = float(ys[i]), float(ys[i + 1])
        if p.parity_symmetric and lo < 0 < hi:
            continue
        points.append(_polish(brentq(dg, lo, hi, xtol=1e-15), dg, d2g))

    if p.parity_symmetric:
        points.append(0.0)
        if d2g(0.0) < -CURVATURE_EPS * max(kappa, j, 1e-300):
            # the branch leaving the origin may sit closer to 0 than the sampling step
            start = bound / SAMPLES
            while dg(start) >= 0 and start > 1e-300:
                start /= 2.0
            if dg(start) < 0:
                y0 = _polish(brentq(dg, start, math.pi + 1e-6, xtol=1e-15), dg, d2g)
                points += [y0, -y0]
    return points


def _best_point(p: EffectivePotential) -> float:
    g, _, _ = _derivatives(p)
    candidates = sorted(set(_stationary_points(p)), key=lambda y: (abs(y), -y))
    values = [g(y) for y in candidates]
    lowest = min(values)
    tie = 1e-13 * (1.0 + abs(lowest))
    # among degenerate minima the smallest |y| wins, then the positive branch
    for y, v in zip(candidates, values):
        if v <= lowest + tie:
            return y
    return candidates[int(np.argmin(values))]


def _cross_check(p: EffectivePotential, x0: float, y0: float) -> float | None:
    """re-minimize one cell at the photon flux x0, the lower single-cell flux if it disagrees"""
    s, a = p.josephson
    j = p.coupling

    def h(y: float) -> float:
        return (x0 - y) ** 2 / 2.0 + s * j * math.cos(y - a)

    found = minimize_scalar(
        h, bounds=(y0 - math.pi, y0 + math.pi), method="bounded", options={"xatol": 1e-12}
    )
    if abs(found.x - y0) > 1e-6 and h(found.x) < h(y0) - 1e-12:
        return float(found.x)
    return None


def minimize_potential(p: EffectivePotential) -> MeanFieldResult:
    y0 = _best_point(p)
    r = p.ratio
    e = p.tilt
    x0 = (y0 + e) / (1.0 + r)
    s, a = p.josephson
    j = p.coupling

    residual = max(
        abs((1.0 + r) * x0 - y0 - e),
        abs(y0 - x0 - s * j * math.sin(y0 - a)),
    )
    phi0 = x0 * p.flux_unit
    psi0 = y0 * p.flux_unit
    curvature = p.n_cells / p.l_c * _derivatives(p)[2](0.0)

    if p.l_r is None:
        phase = Phase.MATTER_POLARIZED if abs(psi0) > p.tol_flux else Phase.NORMAL
    else:
        phase = Phase.SUPERRADIANT if abs(phi0) > p.tol_flux else Phase.NORMAL
    u_min = potential_value(p, phi0, psi0)
    barrier = potential_value(p, 0.0, 0.0) - u_min if p.parity_symmetric else None
    result = MeanFieldResult(phi0, psi0, u_min, phase, curvature, residual, barrier)

    if residual > RESIDUAL_TOLERANCE:
        raise MeanFieldNonConvergence(
            f"stationary residual {residual:.3g} above {RESIDUAL_TOLERANCE:g}", result, residual
        )
    single = _cross_check(p, x0, y0)
    if single is not None:
        raise MeanFieldNonConvergence(
            f"single-cell minimum {single:.10g} disagrees with common psi {y0:.10g}",
            result,
            residual,
        )
    log(f"mean-field minimum phi0 = {phi0:.10g} Wb, psi0 = {psi0:.10g} Wb ({phase.value})", "debug")
    return result


def barrier_height(p: EffectivePotential, n_cells: int | None = None) -> float:
    """U(0, 0) - U_min in joules, optionally for another number of cells at fixed N*L_R"""
    if n_cells is not None:
        l_r = None if p.l_r is None else p.l_r * p.n_cells / n_cells
        p = replace(p, n_cells=n_cells, l_r=l_r)
    return potential_value(p, 0.0, 0.0) - minimize_potential(p).u_min


@dataclass(frozen=True)
class BiasPoint:
    epsilon: float
    phi0: float
    psi0: float
    u_min: float


def order_parameter_vs_bias(p: EffectivePotential, epsilons: Sequence[float]) -> list[BiasPoint]:
    points = []
    for eps in epsilons:
        r = minimize_potential(replace(p, epsilon=float(eps)))
        points.append(BiasPoint(float(eps), r.phi0, r.psi0, r.u_min))
    return points


@dataclass(frozen=True)
class GridSearchResult:
    phi0: float
    psi0: float
    u_min: float
    grid_phi0: float
    grid_psi0: float


def grid_search_minimum(p: EffectivePotential, points: int = GRID_POINTS) -> GridSearchResult:
    """brute-force minimum over phi, psi in [-phi_q, phi_q], refined on the gradient"""
    s, a = p.josephson
    r, j, e = p.ratio, p.coupling, p.tilt
    axis = np.linspace(-2.0 * math.pi, 2.0 * math.pi, points)
    junction = s * j * np.cos(axis - a)

    best = (math.inf, 0.0, 0.0)
    for start in range(0, points, 256):
        xs = axis[start : start + 256, None]
        u = r * xs**2 / 2.0 + (xs - axis[None, :]) ** 2 / 2.0 + junction[None, :] - e * xs
        k = int(np.argmin(u))
        i, jj = divmod(k, points)
        if u.flat[k] < best[0]:
            best = (float(u.flat[k]), float(xs[i, 0]), float(axis[jj]))
    _, gx, gy = best

    def gradient(v: NDArray[np.float64]) -> NDArray[np.float64]:
        x, y = v
        return np.array([r * x + (x - y) - e, (y - x) - s * j * np.sin(y - a)])

    def hessian(v: NDArray[np.float64]) -> NDArray[np.float64]:
        _, y = v
        return np.array([[r + 1.0, -1.0], [-1.0, 1.0 - s * j * np.cos(y - a)]])

    x, y = gx, gy
    found = root(gradient, np.array([gx, gy]), jac=hessian, method="hybr", tol=1e-14)
    if found.success:
        fx, fy = (float(v) for v in found.x)
        if _reduced_u(p, fx, fy) <= _reduced_u(p, gx, gy) + 1e-12:
            x, y = fx, fy
    if p.parity_symmetric and x < 0:
        x, y, gx, gy = -x, -y, -gx, -gy

    unit = p.flux_unit
    return GridSearchResult(
        phi0=x * unit,
        psi0=y * unit,
        u_min=potential_value(p, x * unit, y * unit),
        grid_phi0=gx * unit,
        grid_psi0=gy * unit,
    )


def _reduced_u(p: EffectivePotential, x: float, y: float) -> float:
    s, a = p.josephson
    return (
        p.ratio * x * x / 2.0
        + (x - y) ** 2 / 2.0
        + s * p.coupling * math.cos(y - a)
        - p.tilt * x
    )


@dataclass(frozen=True)
class CompetitionReport:
    """the three energies of U at the minimum, and the barrier against N"""

    photonic: float
    coupling: float
    atomic: float
    total: float
    barrier: float
    phase: Phase
    barrier_scan: tuple[tuple[int, float], ...]


def competition_report(
    p: EffectivePotential, n_scan: Sequence[int] = (1, 2, 4, 8, 16, 32)
) -> CompetitionReport:
    if p.l_r is None:
        raise TopologyMismatch("the competition report needs a resonator inductor")
    result = minimize_potential(p)
    phi, psi = result.phi0, result.psi0
    s, a = p.josephson
    y = 2.0 * math.pi * psi / p.phi_q
    photonic = phi**2 / (2.0 * p.l_r)
    coupling = p.n_cells * (phi - psi) ** 2 / (2.0 * p.l_c)
    atomic = p.n_cells * s * p.e_j * math.cos(y - a)
    scan = tuple((n, barrier_height(p, n)) for n in n_scan)
    log_table("barrier against N", ("N", "barrier [J]"), scan)
    return CompetitionReport(
        photonic=photonic,
        coupling=coupling,
        atomic=atomic,
        total=photonic + coupling + atomic - p.epsilon * phi,
        barrier=potential_value(p, 0.0, 0.0) - result.u_min,
        phase=result.phase,
        barrier_scan=scan,
    )


def _photon_pair(model: HamiltonianModel) -> int:
    photon = model.pairs_in(Sector.PHOTON)
    if len(photon) != 1 or len(model.modes) != 1:
        raise TopologyMismatch("the thermal mean field needs a single photon mode")
    return photon[0]


def _alpha_for_flux(model: HamiltonianModel, phi_c: float) -> complex:
    mode = model.modes[0]
    return complex(phi_c / (2.0 * mode.flux_scale), 0.0)


def _cell_free_energy(cell: HamiltonianModel, cutoff: int, beta: float, budget: int) -> float:
    basis = TruncatedBasis(cutoff, cutoff, budget)
    energies = scipy.linalg.eigvalsh(assemble_matrix(cell, basis).matrix.toarray())
    if math.isinf(beta):
        return float(energies[0])
    return -log_partition(energies, beta) / beta


@dataclass(frozen=True)
class FreeEnergyPoint:
    """F(alpha) in joules for the photon flux phi_c in webers"""

    phi_c: float
    free_energy: float
    cell_cutoff: int
    change: float


def finite_T_free_energy(
    cmodel: CNumberModel, temperature: float, basis: TruncatedBasis
) -> FreeEnergyPoint:
    """photon energy plus N times the free energy of one quantum cell

    the cell cutoff is doubled from `basis.cell_cutoff` until F moves by less
    than 1e-8*N energy units.
    """
    parts = split_cells(cmodel.matter)
    units = cmodel.matter.units
    beta = units.beta(temperature)
    n = len(parts.cells)
    base = cmodel.photon_energy + parts.constant
    if n == 0:
        return FreeEnergyPoint(cmodel.phi_c * units.flux, base * units.energy, 0, 0.0)

    cell = parts.cells[0]
    cutoff = basis.cell_cutoff
    previous = _cell_free_energy(cell, cutoff, beta, basis.budget)
    history: list[tuple[int, float, float]] = [(cutoff, previous, math.nan)]
    while True:
        cutoff *= 2
        if cutoff > MAX_CELL_CUTOFF:
            log_table("cell free energy", ("cutoff", "F_cell", "N*change"), history, "warning")
            raise BasisNotConverged(
                f"cell free energy still moves by {history[-1][2]:.3g} at cutoff {cutoff // 2}"
            )
        current = _cell_free_energy(cell, cutoff, beta, basis.budget)
        change = n * abs(current - previous)
        history.append((cutoff, current, change))
        if change < FREE_ENERGY_RTOL * n:
            break
        previous = current

    total = base + n * current
    return FreeEnergyPoint(cmodel.phi_c * units.flux, total * units.energy, cutoff, change)


@dataclass(frozen=True)
class ThermalResult:
    temperature: float
    phi0: float
    free_energy: float
    cell_cutoff: int


def thermal_order_parameter(
    model: HamiltonianModel, temperature: float, basis: TruncatedBasis, samples: int = 33
) -> ThermalResult:
    """photon flux minimizing the finite-temperature mean-field free energy

    F is even in phi_c, so only phi_c >= 0 is scanned.
    """
    _photon_pair(model)
    units = model.units

    def free(phi_c: float) -> FreeEnergyPoint:
        cm = c_number_substitute(model, _alpha_for_flux(model, phi_c))
        return finite_T_free_energy(cm, temperature, basis)

    grid = np.linspace(0.0, 2.0 * math.pi, samples)
    values = [free(float(x)).free_energy for x in grid]
    i = int(np.argmin(values))
    lo, hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, samples - 1)])
    found = minimize_scalar(
        lambda x: free(x).free_energy / units.energy,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-9},
    )
    best = free(float(found.x))
    origin = free(0.0)
    if origin.free_energy <= best.free_energy + 1e-12 * abs(best.free_energy):
        best = origin
    log(f"T = {temperature:.6g} K: phi0(T) = {best.phi_c:.10g} Wb", "debug")
    return ThermalResult(temperature, best.phi_c, best.free_energy, best.cell_cutoff)


def _susceptibility(cell: HamiltonianModel, cutoff: int, beta: float, budget: int) -> float:
    """static kubo susceptibility of the cell flux, internal units"""
    assembled = assemble_matrix(cell, TruncatedBasis(cutoff, cutoff, budget))
    energies, vectors = scipy.linalg.eigh(assembled.matrix.toarray())
    frame = assembled.frames[0]
    x, _ = quadrature(cutoff)
    psi = frame.flux_scale * x + assembled.center_flux[0] * np.eye(cutoff)
    elements = vectors.T @ psi @ vectors
    m2 = np.abs(elements) ** 2

    gaps = energies[:, None] - energies[None, :]
    degenerate = np.abs(gaps) < 1e-12
    if math.isinf(beta):
        above = ~degenerate[0]
        if not np.all(above[1:]):
            return math.inf
        return float(2.0 * np.sum(m2[0, 1:] / gaps[1:, 0]))

    weights = np.exp(-beta * (energies - energies[0]))
    p = weights / weights.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.where(degenerate, beta * p[None, :], (p[None, :] - p[:, None]) / gaps)
    mean = float(p @ np.diag(elements))
    return float(np.sum(m2 * kernel) - beta * mean * mean)


@dataclass(frozen=True)
class CriticalTemperature:
    """T_c in kelvin bracketed by [t_low, t_high]; curvature in 1/H"""

    t_c: float
    t_low: float
    t_high: float
    zero_t_curvature: float


def critical_temperature(
    model: HamiltonianModel, basis: TruncatedBasis, max_doublings: int = 60
) -> CriticalTemperature:
    """temperature where the free-energy curvature at phi_c = 0 changes sign

    d^2F/dphi_c^2 = F_pp - sum_j F_pj^2 chi(T) with chi the static response of a
    cell flux; bisection until the bracket is narrower than 1e-4 relative.
    """
    p = _photon_pair(model)
    units = model.units
    cm = c_number_substitute(model, 0.0)
    cell = split_cells(cm.matter).cells[0]
    f = model.quad.flux_matrix
    couplings = [f[p, j] for j in model.pairs_in(Sector.MATTER)]
    bare = float(f[p, p])

    def curvature(temperature: float) -> float:
        beta = units.beta(temperature)
        cutoff = basis.cell_cutoff
        chi = _susceptibility(cell, cutoff, beta, basis.budget)
        while True:
            cutoff *= 2
            if cutoff > MAX_CELL_CUTOFF:
                raise BasisNotConverged(
                    f"cell susceptibility not converged at T = {temperature:g} K"
                )
            finer = _susceptibility(cell, cutoff, beta, basis.budget)
            if abs(finer - chi) <= FREE_ENERGY_RTOL * max(abs(finer), 1.0):
                chi = finer
                break
            chi = finer
        return bare - sum(c * c for c in couplings) * chi

    zero = curvature(0.0)
    if zero >= 0:
        raise NotSuperradiantAtZeroT(
            f"free-energy curvature {zero / units.inductance:.6g} 1/H at the origin is not negative"
        )

    t_high = units.temperature(1.0)
    for _ in range(max_doublings):
        if curvature(t_high) >= 0:
            break
        t_high *= 2.0
    else:
        raise MeanFieldNonConvergence("no temperature restores the normal phase")

    t_low = 0.0
    while t_high - t_low > TC_RTOL * t_high:
        mid = (t_low + t_high) / 2.0
        if curvature(mid) < 0:
            t_low = mid
        else:
            t_high = mid
    t_c = (t_low + t_high) / 2.0
    log(f"critical temperature {t_c:.6g} K", "success")
    return CriticalTemperature(t_c, t_low, t_high, zero / units.inductance)


@dataclass(frozen=True)
class GridPoint:
    index: int
    spec: CircuitSpec
    ratio: float
    temperature: float = 0.0


@dataclass(frozen=True)
class PhaseRow:
    """one phase-diagram point, SI units, `error` holding a failure code"""

    index: int
    n_cells: int
    l_r: float | None
    l_c: float | None
    e_j: float | None
    ratio: float
    temperature: float
    phi0: float | None = None
    psi0: float | None = None
    t_c: float | None = None
    phase: str | None = None
    error: str | None = None


def ratio_grid(
    spec: ValidatedSpec, ratios: Sequence[float], temperatures: Sequence[float] = (0.0,)
) -> list[GridPoint]:
    """points whose N*L_R sits at the given multiples of the critical threshold"""
    threshold = critical_inductance(EffectivePotential.from_spec(spec)).threshold
    if not 0 < threshold < math.inf:
        raise ZeroJosephsonEnergy(
            f"threshold {threshold:.6g} H leaves no normal phase to sweep across"
        )
    res = spec.resonator
    assert res is not None
    points = []
    for ratio in ratios:
        l_r = ratio * threshold / spec.n_cells
        scaled = replace(spec.spec, resonator=replace(res, l_r=l_r))
        for temperature in temperatures:
            points.append(GridPoint(len(points), scaled, float(ratio), float(temperature)))
    return points


def evaluate_point(
    point: GridPoint, basis: TruncatedBasis | None = None, with_tc: bool = False
) -> PhaseRow:
    basis = basis or TruncatedBasis()
    spec = point.spec
    cell = spec.cell
    row = PhaseRow(
        index=point.index,
        n_cells=spec.n_cells,
        l_r=spec.resonator.l_r if spec.resonator else None,
        l_c=cell.l_c if cell else None,
        e_j=cell.e_j if cell else None,
        ratio=point.ratio,
        temperature=point.temperature,
    )
    try:
        vspec = validate(spec)
        p = EffectivePotential.from_spec(vspec)
        needs_model = point.temperature > 0 or with_tc
        model = build_flux_hamiltonian(vspec, concrete=True) if needs_model else None
        if model is not None and point.temperature > 0:
            thermal = thermal_order_parameter(model, point.temperature, basis)
            phi0, psi0 = thermal.phi0, None
            phase = Phase.SUPERRADIANT if abs(phi0) > p.tol_flux else Phase.NORMAL
        else:
            result = minimize_potential(p)
            phi0, psi0, phase = result.phi0, result.psi0, result.phase
        t_c = None
        if model is not None and with_tc:
            try:
                t_c = critical_temperature(model, basis).t_c
            except NotSuperradiantAtZeroT:
                t_c = 0.0
        return replace(row, phi0=phi0, psi0=psi0, t_c=t_c, phase=phase.value)
    except CircuitError as e:
        log(f"grid point {point.index}: {e}", "warning")
        return replace(row, error=e.code)


def phase_diagram(
    points: Sequence[GridPoint],
    workers: int = 1,
    basis: TruncatedBasis | None = None,
    with_tc: bool = False,
) -> list[PhaseRow]:
    """evaluate every grid point, rows in input order whatever the worker count"""
    rows: list[PhaseRow | None] = [None] * len(points)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            futures = {
                ex.submit(evaluate_point, point, basis, with_tc): i
                for i, point in enumerate(points)
            }
            for future in concurrent.futures.as_completed(futures):
                rows[futures[future]] = future.result()
    else:
        for i, point in enumerate(points):
            rows[i] = evaluate_point(point, basis, with_tc)
    done = [r for r in rows if r is not None]
    log(f"phase diagram: {len(done)} points, {sum(r.error is not None for r in done)} failed")
    return done
