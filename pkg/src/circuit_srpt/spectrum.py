"""truncated-basis numerics: hamiltonian matrices, spectra and partition functions

all energies are in the internal unit of the model (`units.energy` joules) unless a
field says otherwise.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
from numpy.typing import NDArray
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import logsumexp, roots_laguerre

from .hamiltonian import (
    CNumberModel,
    HamiltonianModel,
    NoPhotonSector,
    Sector,
    c_number_substitute,
    dress_modes,
)
from .log import log, log_table
from .models import HBAR, K_B, CircuitError, UnitSystem, ValidatedSpec
from .oscillator import (
    OscillatorFrame,
    antisymmetric_quadrature,
    displacement_elements,
    number,
    quadrature,
)

DEFAULT_BUDGET = 20000
DENSE_THRESHOLD = 4096
HERMITICITY_TOLERANCE = 1e-13
EIGSH_TOLERANCE = 1e-10
TAIL_TOLERANCE = 1e-10
QUADRATURE_RTOL = 1e-8
ASSUMPTION_A_THRESHOLD = 0.1


class DimensionBudgetExceeded(CircuitError):
    code = "dimension_budget_exceeded"

    def __init__(self, dimension: int, budget: int):
        self.dimension = dimension
        self.budget = budget
        super().__init__(f"basis dimension {dimension} exceeds the budget of {budget}")


class AbstractBlackBoxPresent(CircuitError):
    code = "abstract_black_box_present"


class NoConfiningTerm(CircuitError):
    code = "no_confining_term"


class EigensolverNotConverged(CircuitError):
    code = "eigensolver_not_converged"

    def __init__(self, message: str, residuals: Sequence[float] = ()):
        self.residuals = list(residuals)
        super().__init__(message)


class TailBoundTooLoose(CircuitError):
    code = "tail_bound_too_loose"


class QuadratureNotConverged(CircuitError):
    code = "quadrature_not_converged"


class ZeroFreeEnergy(CircuitError):
    code = "zero_free_energy"


@dataclass(frozen=True)
class TruncatedBasis:
    photon_cutoff: int = 16
    cell_cutoff: int = 16
    budget: int = DEFAULT_BUDGET

    def __post_init__(self) -> None:
        if self.photon_cutoff < 2 or self.cell_cutoff < 2:
            raise ValueError("cutoffs must be at least 2")

    def cutoffs(self, model: HamiltonianModel) -> tuple[int, ...]:
        return tuple(
            self.photon_cutoff if v.sector is Sector.PHOTON else self.cell_cutoff
            for v in model.fluxes
        )

    def dimension(self, model: HamiltonianModel) -> int:
        return math.prod(self.cutoffs(model))

    def doubled(self) -> "TruncatedBasis":
        return TruncatedBasis(2 * self.photon_cutoff, 2 * self.cell_cutoff, self.budget)


@dataclass(frozen=True, eq=False)
class AssembledHamiltonian:
    matrix: sparse.csr_matrix
    dims: tuple[int, ...]
    frames: tuple[OscillatorFrame, ...]
    center_flux: NDArray[np.float64]
    center_charge: NDArray[np.float64]
    units: UnitSystem
    observables: dict[str, sparse.csr_matrix] = field(default_factory=dict)
    hermiticity_defect: float = 0.0
    parity_symmetric: bool = False

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])


def _embed(ops: dict[int, NDArray[np.generic]], dims: Sequence[int]) -> sparse.csr_matrix:
    out = sparse.identity(1, format="csr")
    for i, d in enumerate(dims):
        factor = sparse.csr_matrix(ops[i]) if i in ops else sparse.identity(d, format="csr")
        out = sparse.kron(out, factor, format="csr")
    return out


def assemble_matrix(model: HamiltonianModel, basis: TruncatedBasis) -> AssembledHamiltonian:
    """sparse hamiltonian in the product of per-pair oscillator bases

    every pair is expanded around the classical minimum of the quadratic part,
    in the oscillator set by its own diagonal coefficients.
    """
    if not model.blackbox.is_empty:
        raise AbstractBlackBoxPresent(
            f"{len(model.blackbox.arguments)} black-box arguments have no matrix representation"
        )
    dims = basis.cutoffs(model)
    dim = math.prod(dims)
    if dim > basis.budget:
        raise DimensionBudgetExceeded(dim, basis.budget)

    q = model.quad
    f, g = q.flux_matrix, q.charge_matrix
    n = model.pair_count
    if n:
        center_flux = -np.linalg.lstsq(f, q.linear_flux, rcond=None)[0]
        center_charge = -np.linalg.lstsq(g, q.linear_charge, rcond=None)[0]
    else:
        center_flux = np.zeros(0)
        center_charge = np.zeros(0)
    residual_flux = q.linear_flux + f @ center_flux
    residual_charge = q.linear_charge + g @ center_charge
    constant = float(
        q.constant
        + 0.5 * center_flux @ f @ center_flux
        + q.linear_flux @ center_flux
        + 0.5 * center_charge @ g @ center_charge
        + q.linear_charge @ center_charge
    )

    frames = []
    for i, v in enumerate(model.fluxes):
        if f[i, i] <= 0 or g[i, i] <= 0:
            raise NoConfiningTerm(f"{v.label} has no confining quadratic term")
        frames.append(OscillatorFrame(float(f[i, i]), float(g[i, i])))

    xs = [quadrature(d) for d in dims]
    antis = [antisymmetric_quadrature(d) for d in dims]

    is_complex = bool(np.any(residual_charge != 0))
    dtype = np.complex128 if is_complex else np.float64
    h = sparse.identity(dim, format="csr", dtype=dtype) * constant

    for i, frame in enumerate(frames):
        h = h + frame.omega * _embed({i: number(dims[i]) + 0.5 * np.eye(dims[i])}, dims)
        if residual_flux[i] != 0:
            h = h + residual_flux[i] * frame.flux_scale * _embed({i: xs[i][0]}, dims)
        if residual_charge[i] != 0:
            h = h + (-1j * residual_charge[i] * frame.charge_scale) * _embed({i: antis[i]}, dims)

    for i in range(n):
        for j in range(i + 1, n):
            if f[i, j] != 0:
                scale = f[i, j] * frames[i].flux_scale * frames[j].flux_scale
                h = h + scale * _embed({i: xs[i][0], j: xs[j][0]}, dims)
            if g[i, j] != 0:
                # p_i p_j = -t_i t_j (a - a^dag)_i (a - a^dag)_j
                scale = -g[i, j] * frames[i].charge_scale * frames[j].charge_scale
                h = h + scale * _embed({i: antis[i], j: antis[j]}, dims)

    for c in model.cosines:
        phase = c.phase_offset + float(c.coefficients @ center_flux) if n else c.phase_offset
        support = c.support
        if not support:
            h = h + c.amplitude * math.cos(phase) * sparse.identity(dim, format="csr")
            continue
        ops: dict[int, NDArray[np.generic]] = {
            i: displacement_elements(float(c.coefficients[i]) * frames[i].flux_scale, dims[i])
            for i in support
        }
        term = (np.exp(1j * phase) * _embed(ops, dims)).real
        h = h + c.amplitude * term

    h = sparse.csr_matrix(h, dtype=dtype)
    defect = float(abs(h - h.conj().T).max()) if dim > 1 else 0.0
    scale = max(float(abs(h).max()), 1.0)
    if defect > HERMITICITY_TOLERANCE * scale:
        log(f"hermiticity defect {defect:.3g} above tolerance, symmetrizing", "warning")
    h = sparse.csr_matrix((h + h.conj().T) / 2.0)

    observables: dict[str, sparse.csr_matrix] = {}
    photon = model.pairs_in(Sector.PHOTON)
    if photon:
        p = photon[0]
        s = frames[p].flux_scale
        x, x2 = xs[p]
        c0 = float(center_flux[p])
        eye = sparse.identity(dim, format="csr")
        observables["photon_flux"] = s * _embed({p: x}, dims) + c0 * eye
        observables["photon_flux_sq"] = (
            s * s * _embed({p: x2}, dims) + 2.0 * c0 * s * _embed({p: x}, dims) + c0 * c0 * eye
        )
        observables["photon_number"] = _embed({p: number(dims[p])}, dims)

    log(f"assembled matrix of dimension {dim} (cutoffs {dims})", "debug")
    return AssembledHamiltonian(
        matrix=h,
        dims=dims,
        frames=tuple(frames),
        center_flux=center_flux,
        center_charge=center_charge,
        units=model.units,
        observables=observables,
        hermiticity_defect=defect,
        parity_symmetric=model.parity_symmetric,
    )


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """lowest eigenpairs, energies in `energy_unit` joules, fluxes in `flux_unit` webers"""

    eigenvalues: NDArray[np.float64]
    gap: float
    flux_mean: float | None
    flux_sq: float | None
    photon_number: float | None
    energy_unit: float
    flux_unit: float
    dimension: int
    method: str
    residual: float

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def eigenvalues_joule(self) -> NDArray[np.float64]:
        return self.eigenvalues * self.energy_unit


def ground_state(
    assembled: AssembledHamiltonian,
    k: int = 1,
    dense_threshold: int = DENSE_THRESHOLD,
    seed: int = 1234,
    maxiter: int | None = None,
) -> SpectrumResult:
    h = assembled.matrix
    dim = assembled.dimension
    count = min(max(k, 2), dim)

    if dim <= dense_threshold:
        w, v = scipy.linalg.eigh(h.toarray(), subset_by_index=[0, count - 1])
        method = "dense"
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(dim)
        if np.iscomplexobj(h):
            v0 = v0 + 1j * rng.standard_normal(dim)
        try:
            w, v = eigsh(
                h,
                k=count,
                which="SA",
                v0=v0,
                tol=EIGSH_TOLERANCE,
                maxiter=maxiter if maxiter is not None else 20 * dim,
            )
        except ArpackNoConvergence as e:
            residuals = [
                float(np.linalg.norm(h @ e.eigenvectors[:, i] - lam * e.eigenvectors[:, i]))
                for i, lam in enumerate(e.eigenvalues)
            ]
            raise EigensolverNotConverged(
                f"eigsh did not converge for {count} eigenpairs (dimension {dim})", residuals
            ) from None
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        method = "eigsh"

    residual = max(float(np.linalg.norm(h @ v[:, i] - w[i] * v[:, i])) for i in range(count))
    ground = v[:, 0]

    def expect(name: str) -> float | None:
        op = assembled.observables.get(name)
        if op is None:
            return None
        return float(np.real(np.vdot(ground, op @ ground)))

    u = assembled.units
    log(f"ground state by {method}: E0 = {w[0]:.10g}, residual {residual:.2g}", "debug")
    return SpectrumResult(
        eigenvalues=np.asarray(w[:max(k, 1)], dtype=float),
        gap=float(w[1] - w[0]) if count > 1 else math.nan,
        flux_mean=expect("photon_flux"),
        flux_sq=expect("photon_flux_sq"),
        photon_number=expect("photon_number"),
        energy_unit=u.energy,
        flux_unit=u.flux,
        dimension=dim,
        method=method,
        residual=residual,
    )


@dataclass(frozen=True)
class LadderRow:
    photon_cutoff: int
    cell_cutoff: int
    dimension: int
    max_delta: float
    energies_a: tuple[float, ...]
    energies_b: tuple[float, ...]


@dataclass(frozen=True)
class UnitaryEquivalenceReport:
    rows: tuple[LadderRow, ...]
    identical: bool
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.identical or (bool(self.rows) and self.rows[-1].max_delta <= self.tolerance)


def verify_unitary_equivalence(
    model_a: HamiltonianModel,
    model_b: HamiltonianModel,
    ladder: Sequence[TruncatedBasis],
    k: int = 5,
    tol: float = 1e-8,
    dense_threshold: int = DENSE_THRESHOLD,
    seed: int = 1234,
) -> UnitaryEquivalenceReport:
    """compare the lowest k levels of two models over a ladder of cutoffs

    max_delta is relative to max(1, |E|) in internal units; only the finest rung
    decides, coarser rungs show how the difference converges away.
    """
    if not ladder:
        raise ValueError("cutoff ladder is empty")
    rows: list[LadderRow] = []
    identical = False
    for rung, basis in enumerate(ladder):
        a = assemble_matrix(model_a, basis)
        b = assemble_matrix(model_b, basis)
        if rung == 0 and a.matrix.shape == b.matrix.shape:
            diff = abs(a.matrix - b.matrix)
            if sparse.issparse(diff):
                # sparse max() has no `initial`; an empty or all-zero diff has no nonzeros
                identical = diff.count_nonzero() == 0
            else:
                identical = float(diff.max(initial=0.0)) == 0.0
        ea = ground_state(a, k, dense_threshold, seed).eigenvalues
        eb = ground_state(b, k, dense_threshold, seed).eigenvalues
        scale = max(1.0, float(np.max(np.abs(ea))))
        delta = float(np.max(np.abs(ea - eb))) / scale
        rows.append(
            LadderRow(
                basis.photon_cutoff,
                basis.cell_cutoff,
                a.dimension,
                delta,
                tuple(float(e) for e in ea),
                tuple(float(e) for e in eb),
            )
        )
    log_table(
        "unitary equivalence",
        ("photon", "cell", "dim", "max delta"),
        [(r.photon_cutoff, r.cell_cutoff, r.dimension, r.max_delta) for r in rows],
    )
    return UnitaryEquivalenceReport(tuple(rows), identical, tol)


def log_partition(eigenvalues: NDArray[np.float64], beta: float) -> float:
    """ln sum exp(-beta E), zero temperature giving -beta*E0 in the limit"""
    if math.isinf(beta):
        raise ValueError("the partition function needs a finite temperature")
    return float(logsumexp(-beta * np.asarray(eigenvalues)))


@dataclass(frozen=True)
class PartitionFunction:
    beta: float
    log_z: float
    log_tail_ratio: float
    dimension: int

    def free_energy(self) -> float:
        return -self.log_z / self.beta


def partition_function_exact(
    assembled: AssembledHamiltonian, temperature: float
) -> PartitionFunction:
    """Tr exp(-beta H) from the full truncated spectrum

    the truncation error is bounded by dim*exp(-beta*E_max) relative to Z.
    """
    beta = assembled.units.beta(temperature)
    energies = scipy.linalg.eigvalsh(assembled.matrix.toarray())
    log_z = log_partition(energies, beta)
    tail = -beta * float(energies[-1]) + math.log(len(energies)) - log_z
    if tail > math.log(TAIL_TOLERANCE):
        raise TailBoundTooLoose(
            f"highest kept level carries {math.exp(tail):.3g} of Z at T = {temperature:.6g} K"
        )
    return PartitionFunction(beta, log_z, tail, len(energies))


@dataclass(frozen=True)
class CNumberPartitionFunction:
    """Zbar = int d^2 alpha/pi Tr_matter exp(-beta H(alpha)) for a single photon mode"""

    beta: float
    log_zbar: float
    mode_energy: float
    radial_nodes: int
    angular_nodes: int
    change: float


def _matter_log_trace(cmodel: CNumberModel, basis: TruncatedBasis, beta: float) -> float:
    matter = cmodel.matter
    if matter.pair_count == 0:
        return -beta * matter.quad.constant
    energies = scipy.linalg.eigvalsh(assemble_matrix(matter, basis).matrix.toarray())
    return log_partition(energies, beta)


def _cnumber_log_z(
    model: HamiltonianModel, basis: TruncatedBasis, beta: float, radial: int, angular: int
) -> float:
    omega = model.modes[0].omega
    x = beta * omega
    nodes, weights = roots_laguerre(radial)
    angles = 2.0 * math.pi * np.arange(angular) / angular
    terms = []
    for t, w in zip(nodes, weights):
        r = math.sqrt(t / x)
        for theta in angles:
            cm = c_number_substitute(model, r * complex(math.cos(theta), math.sin(theta)))
            terms.append(
                math.log(w) - math.log(x) - math.log(angular) - x / 2.0
                + _matter_log_trace(cm, basis, beta)
            )
    return float(logsumexp(terms))


def partition_function_cnumber(
    model: HamiltonianModel,
    basis: TruncatedBasis,
    temperature: float,
    radial_nodes: int = 16,
    angular_nodes: int = 16,
    max_doublings: int = 5,
    rtol: float = QUADRATURE_RTOL,
) -> CNumberPartitionFunction:
    """coherent-state integral over the photon mode on the photon diagonal

    gauss-laguerre in |alpha|^2 with the exp(-beta omega |alpha|^2) weight
    factored out, trapezoid in the phase; both are doubled until ln Zbar moves
    by less than rtol.
    """
    if len(model.modes) != 1:
        raise NoPhotonSector(
            f"c-number integral needs exactly one photon mode, got {len(model.modes)}"
        )
    model = dress_modes(model)
    beta = model.units.beta(temperature)
    if math.isinf(beta):
        raise ValueError("the partition function needs a finite temperature")

    radial, angular = radial_nodes, angular_nodes
    previous = _cnumber_log_z(model, basis, beta, radial, angular)
    history = [(radial, angular, previous, math.nan)]
    for _ in range(max_doublings):
        radial, angular = 2 * radial, 2 * angular
        current = _cnumber_log_z(model, basis, beta, radial, angular)
        change = abs(current - previous)
        history.append((radial, angular, current, change))
        if change < rtol:
            log_table("c-number quadrature", ("radial", "angular", "ln Zbar", "change"), history)
            return CNumberPartitionFunction(
                beta, current, model.modes[0].omega, radial, angular, change
            )
        previous = current
    log_table("c-number quadrature", ("radial", "angular", "ln Zbar", "change"), history, "warning")
    raise QuadratureNotConverged(
        f"ln Zbar still moved by {history[-1][3]:.3g} at {radial}x{angular} nodes"
    )


@dataclass(frozen=True)
class HeppCheck:
    """Zbar <= Z <= exp(beta sum omega) Zbar, margins relative to Z"""

    beta: float
    log_z: float
    log_zbar: float
    mode_energy_sum: float
    lower_margin: float
    upper_margin: float
    free_energy_lower: float
    free_energy_upper: float
    n_atoms: int = 1

    @property
    def holds(self) -> bool:
        return self.lower_margin >= -TAIL_TOLERANCE and self.upper_margin >= -TAIL_TOLERANCE

    @property
    def free_energy_per_atom(self) -> tuple[float, float]:
        return self.free_energy_lower / self.n_atoms, self.free_energy_upper / self.n_atoms


def hepp_bounds_check(
    log_z: float,
    log_zbar: float,
    beta: float,
    mode_energies: Sequence[float],
    n_atoms: int = 1,
) -> HeppCheck:
    total = float(sum(mode_energies))
    lower = 1.0 - math.exp(log_zbar - log_z)
    upper = math.expm1(beta * total + log_zbar - log_z)
    f_upper = -log_zbar / beta
    return HeppCheck(
        beta=beta,
        log_z=log_z,
        log_zbar=log_zbar,
        mode_energy_sum=total,
        lower_margin=lower,
        upper_margin=upper,
        free_energy_lower=f_upper - total,
        free_energy_upper=f_upper,
        n_atoms=n_atoms,
    )


def hepp_check(
    model: HamiltonianModel, basis: TruncatedBasis, temperature: float, n_atoms: int = 1
) -> HeppCheck:
    """exact and c-number partition functions of a concrete model compared"""
    z = partition_function_exact(assemble_matrix(model, basis), temperature)
    zbar = partition_function_cnumber(model, basis, temperature)
    result = hepp_bounds_check(z.log_z, zbar.log_zbar, z.beta, [zbar.mode_energy], n_atoms)
    level = "success" if result.holds else "warning"
    log(
        f"hepp bounds at T = {temperature:.6g} K: lower margin {result.lower_margin:.3g}, "
        f"upper margin {result.upper_margin:.3g}",
        level,
    )
    return result


@dataclass(frozen=True)
class AssumptionAMargin:
    """sum of photon zero-point energies per atom against the thermal free energy per atom

    energies in joules; `proxy` and `atoms_per_wavelength` only for transmission lines
    """

    mode_count: int
    mode_energy_sum: float
    per_atom_mode_energy: float
    thermal_free_energy: float | None
    ratio: float | None
    proxy: float | None
    atoms_per_wavelength: float | None
    atom_energy: float | None
    justified: bool | None


def photon_mode_energies(spec: ValidatedSpec) -> NDArray[np.float64]:
    """hbar*omega_k in joules of the modes kept in the assumption-a sum"""
    t = spec.tline
    if t is not None:
        k = np.arange(1, t.mode_count + 1)
        return spec.units.energy * k
    return np.array([spec.units.energy])


def assumption_a_margin(
    spec: ValidatedSpec, temperature: float | None = None, log_zbar: float | None = None
) -> AssumptionAMargin:
    energies = photon_mode_energies(spec)
    total = float(np.sum(energies))
    n = spec.n_cells

    free = ratio = None
    if log_zbar is not None:
        if temperature is None or temperature <= 0:
            raise ValueError("a thermal free energy needs a positive temperature")
        if log_zbar == 0:
            raise ZeroFreeEnergy("ln Zbar vanishes, the ratio is undefined")
        free = -K_B * temperature * log_zbar
        ratio = total / abs(free)

    proxy = density = atom = None
    t = spec.tline
    if t is not None:
        proxy = (t.lambda_a / t.lambda_min) ** 2 / 4.0
        density = n * t.lambda_a / t.length
        atom = HBAR * t.omega_a

    if ratio is not None:
        justified: bool | None = ratio < ASSUMPTION_A_THRESHOLD
    elif proxy is not None and density is not None:
        justified = proxy < density
    else:
        justified = None

    return AssumptionAMargin(
        mode_count=len(energies),
        mode_energy_sum=total,
        per_atom_mode_energy=total / n,
        thermal_free_energy=free,
        ratio=ratio,
        proxy=proxy,
        atoms_per_wavelength=density,
        atom_energy=atom,
        justified=justified,
    )
