"""decoupling searches and the superradiance verdict

a decoupling is looked for within a fixed affine family: a point shift of the
photon fluxes by matter fluxes (generated by matter flux times photon charge),
then c-number displacements of the matter variables linear in the photon
c-numbers. failure only means no such shift was found.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .hamiltonian import (
    Boundary,
    CNumberModel,
    HamiltonianModel,
    Kind,
    NoPhotonSector,
    Sector,
    ShiftSpec,
    apply_unitary_shift,
    build_hamiltonian,
    c_number_substitute,
)
from .log import log
from .meanfield import (
    CriticalCondition,
    CriticalTemperature,
    EffectivePotential,
    MeanFieldResult,
    NotSuperradiantAtZeroT,
    Phase,
    ZeroJosephsonEnergy,
    critical_inductance,
    critical_temperature,
    minimize_potential,
)
from .models import (
    MEAN_FIELD_TOPOLOGIES,
    Topology,
    TopologyClass,
    ValidatedSpec,
    classify_topology,
)
from .spectrum import AssumptionAMargin, TruncatedBasis, assumption_a_margin

RANK_TOLERANCE = 1e-10
RESIDUAL_TOLERANCE = 1e-10


class Classification(Enum):
    NO_GO_HOLDS = "NoGoHolds"
    NOT_CONFIRMED = "NotConfirmed"
    MEAN_FIELD_SRPT = "MeanFieldSRPT"
    MATTER_POLARIZED_ONLY = "MatterPolarizedOnly"
    UNSUPPORTED = "Unsupported"


@dataclass(frozen=True)
class ResidualTerm:
    kind: str
    description: str
    magnitude: float


@dataclass(frozen=True)
class StrategyOutcome:
    name: str
    feasible: bool
    residuals: tuple[ResidualTerm, ...] = ()


@dataclass(frozen=True)
class Witness:
    """point shift, then matter displacements linear in the photon c-numbers

    `displacement` maps a matter variable to {photon variable: coefficient}
    """

    point_shift: ShiftSpec
    displacement: Mapping[str, Mapping[str, float]]
    strategy: str

    def displacement_for(self, photon_values: Mapping[str, float]) -> ShiftSpec:
        return ShiftSpec(
            displacement={
                var: sum(c * photon_values[p] for p, c in coefficients.items())
                for var, coefficients in self.displacement.items()
            }
        )

    def describe(self, labels: Mapping[str, str]) -> list[str]:
        lines = []
        for target, sources in self.point_shift.flux_shift.items():
            terms = " + ".join(f"{c:.6g}*{labels.get(s, s)}" for s, c in sources.items())
            lines.append(f"{labels.get(target, target)} -> {labels.get(target, target)} + {terms}")
        for var, coefficients in self.displacement.items():
            terms = " + ".join(f"{c:.6g}*{labels.get(p, p)}_c" for p, c in coefficients.items())
            lines.append(f"{labels.get(var, var)} -> {labels.get(var, var)} + {terms}")
        return lines


@dataclass(frozen=True)
class Certificate:
    outcomes: tuple[StrategyOutcome, ...]
    summary: str


@dataclass(frozen=True)
class DecouplingResult:
    feasible: bool
    witness: Witness | None
    certificate: Certificate | None
    outcomes: tuple[StrategyOutcome, ...] = ()


def _indices(model: HamiltonianModel) -> tuple[NDArray[np.int_], NDArray[np.int_]]:
    photon = np.array(model.pairs_in(Sector.PHOTON), dtype=int)
    matter = np.array(model.pairs_in(Sector.MATTER), dtype=int)
    return photon, matter


def point_shift_generator(model: HamiltonianModel) -> ShiftSpec:
    """photon fluxes shifted by matter fluxes so that no flux-flux cross term is left"""
    photon, matter = _indices(model)
    f = model.quad.flux_matrix
    if not len(matter):
        return ShiftSpec()
    fpp = f[np.ix_(photon, photon)]
    fpm = f[np.ix_(photon, matter)]
    c = np.linalg.lstsq(fpp, -fpm, rcond=RANK_TOLERANCE)[0]
    scale = max(float(np.max(np.abs(c), initial=0.0)), 1.0)
    shift: dict[str, dict[str, float]] = {}
    for a, p in enumerate(photon):
        for b, m in enumerate(matter):
            if abs(c[a, b]) > RANK_TOLERANCE * scale:
                shift.setdefault(model.fluxes[p].id, {})[model.fluxes[m].id] = float(c[a, b])
    return ShiftSpec(flux_shift=shift)


def _cell_coupling(model: HamiltonianModel) -> list[ResidualTerm]:
    """quadratic terms joining matter variables of different cells"""
    u = model.units
    q = model.quad
    _, matter = _indices(model)
    out = []
    for matrix, names, unit, suffix in (
        (q.flux_matrix, model.fluxes, u.inductance, "1/H"),
        (q.charge_matrix, model.charges, u.capacitance, "1/F"),
    ):
        scale = max(float(np.max(np.abs(matrix), initial=0.0)), 1.0)
        for x, i in enumerate(matter):
            for j in matter[x + 1 :]:
                a, b = names[i], names[j]
                if a.cell == b.cell or abs(matrix[i, j]) <= RESIDUAL_TOLERANCE * scale:
                    continue
                value = float(matrix[i, j]) / unit
                out.append(
                    ResidualTerm(
                        "cell_coupling",
                        f"{a.label}*{b.label} coupling {value:.6g} {suffix} "
                        f"between cells {a.cell} and {b.cell}",
                        abs(value),
                    )
                )
    return out


def _displacement_outcome(
    model: HamiltonianModel, name: str
) -> tuple[StrategyOutcome, dict[str, dict[str, float]]]:
    """c-number displacements of matter variables removing every photon c-number

    each constraint reads a.s + b = 0 with s the matter shifts per photon c-number:
    flux-flux and charge-charge cross terms, black-box arguments and cosines.
    """
    photon, matter = _indices(model)
    q = model.quad
    f, g = q.flux_matrix, q.charge_matrix
    nm = len(matter)
    params = [(model.fluxes[p].id, Kind.FLUX, p) for p in photon] + [
        (model.charges[p].id, Kind.CHARGE, p) for p in photon
    ]
    unknown = {model.fluxes[m].id: x for x, m in enumerate(matter)}
    unknown.update({model.charges[m].id: nm + x for x, m in enumerate(matter)})
    param_index = {pid: k for k, (pid, _, _) in enumerate(params)}

    rows_a: list[NDArray[np.float64]] = []
    rows_b: list[NDArray[np.float64]] = []
    labels: list[tuple[str, str]] = []

    for i in matter:
        a = np.zeros(2 * nm)
        b = np.zeros(len(params))
        a[:nm] = f[i, matter]
        for k, (_, kind, p) in enumerate(params):
            if kind is Kind.FLUX:
                b[k] = f[i, p]
        rows_a.append(a)
        rows_b.append(b)
        labels.append(("cross_coupling", f"{model.fluxes[i].label} coupled to photon fluxes"))

        a = np.zeros(2 * nm)
        b = np.zeros(len(params))
        a[nm:] = g[i, matter]
        for k, (_, kind, p) in enumerate(params):
            if kind is Kind.CHARGE:
                b[k] = g[i, p]
        rows_a.append(a)
        rows_b.append(b)
        labels.append(("cross_coupling", f"{model.charges[i].label} coupled to photon charges"))

    for expr in model.blackbox.arguments:
        a = np.zeros(2 * nm)
        b = np.zeros(len(params))
        for var, c in expr.terms:
            if var in unknown:
                a[unknown[var]] = float(c)
            elif var in param_index:
                b[param_index[var]] = float(c)
        rows_a.append(a)
        rows_b.append(b)
        labels.append(
            ("photon_in_argument", f"black-box argument {expr.render(model.labels)}")
        )

    for c in model.cosines:
        a = np.zeros(2 * nm)
        b = np.zeros(len(params))
        a[:nm] = c.coefficients[matter]
        for k, (_, kind, p) in enumerate(params):
            if kind is Kind.FLUX:
                b[k] = c.coefficients[p]
        rows_a.append(a)
        rows_b.append(b)
        support = " + ".join(model.fluxes[i].label for i in c.support)
        labels.append(("photon_in_cosine", f"cosine of {support}"))

    big_a = np.array(rows_a).reshape(len(rows_a), 2 * nm)
    big_b = np.array(rows_b).reshape(len(rows_b), len(params))
    if nm:
        s = np.linalg.lstsq(big_a, -big_b, rcond=RANK_TOLERANCE)[0]
    else:
        s = np.zeros((0, len(params)))
    r = big_a @ s + big_b
    scale = max(
        float(np.max(np.abs(big_a), initial=0.0)),
        float(np.max(np.abs(big_b), initial=0.0)),
        1.0,
    )

    residuals: list[ResidualTerm] = []
    for row, (kind, description) in zip(r, labels):
        magnitude = float(np.max(np.abs(row), initial=0.0))
        if magnitude > RESIDUAL_TOLERANCE * scale:
            residuals.append(
                ResidualTerm(
                    kind,
                    f"{description} cannot be made photon-free "
                    f"(residual {magnitude:.3g} in internal units)",
                    magnitude,
                )
            )
    residuals += _photon_not_bare(model, photon, matter, s, params)
    residuals += _cell_coupling(model)

    displacement: dict[str, dict[str, float]] = {}
    ids = [model.fluxes[m].id for m in matter] + [model.charges[m].id for m in matter]
    col_scale = max(float(np.max(np.abs(s), initial=0.0)), 1.0)
    for x, var in enumerate(ids):
        for k, (pid, _, _) in enumerate(params):
            if abs(s[x, k]) > RANK_TOLERANCE * col_scale:
                displacement.setdefault(var, {})[pid] = float(s[x, k])
    return StrategyOutcome(name, not residuals, tuple(residuals)), displacement


def _photon_not_bare(
    model: HamiltonianModel,
    photon: NDArray[np.int_],
    matter: NDArray[np.int_],
    s: NDArray[np.float64],
    params: list[tuple[str, Kind, int]],
) -> list[ResidualTerm]:
    """the photon quadratic form left after the displacement must stay bounded below"""
    q = model.quad
    nm = len(matter)
    flux_cols = [k for k, (_, kind, _) in enumerate(params) if kind is Kind.FLUX]
    charge_cols = [k for k, (_, kind, _) in enumerate(params) if kind is Kind.CHARGE]
    out = []
    for matrix, rows, cols, what in (
        (q.flux_matrix, slice(0, nm), flux_cols, "flux"),
        (q.charge_matrix, slice(nm, 2 * nm), charge_cols, "charge"),
    ):
        sp = s[rows][:, cols]
        hpp = matrix[np.ix_(photon, photon)]
        hpm = matrix[np.ix_(photon, matter)]
        hmm = matrix[np.ix_(matter, matter)]
        cross = hpm @ sp
        effective = hpp + cross + cross.T + sp.T @ hmm @ sp
        lowest = float(np.linalg.eigvalsh((effective + effective.T) / 2.0)[0])
        if lowest < -RESIDUAL_TOLERANCE * max(float(np.max(np.abs(hpp))), 1.0):
            out.append(
                ResidualTerm(
                    "photon_not_bare",
                    f"photon {what} quadratic form is not bounded below "
                    f"(lowest eigenvalue {lowest:.3g})",
                    abs(lowest),
                )
            )
    return out


def decoupling_transform_exists(model: HamiltonianModel) -> DecouplingResult:
    """search the affine shift family for a form with no photon-matter coupling"""
    if not model.pairs_in(Sector.PHOTON):
        raise NoPhotonSector("model has no photon sector")

    shift = point_shift_generator(model)
    shifted = apply_unitary_shift(model, shift)
    point, point_disp = _displacement_outcome(shifted, "point_shift")
    direct, direct_disp = _displacement_outcome(model, "displacement")
    outcomes = (point, direct)

    witness = None
    if point.feasible:
        witness = Witness(shift, point_disp, point.name)
    elif direct.feasible:
        witness = Witness(ShiftSpec(), direct_disp, direct.name)

    if witness is not None:
        log(f"decoupling found by {witness.strategy}", "success")
        return DecouplingResult(True, witness, None, outcomes)

    kinds = sorted({r.kind for o in outcomes for r in o.residuals})
    summary = (
        "coupling not removable within the affine shift family tried "
        f"(point shift and c-number displacement); residual terms: {', '.join(kinds)}"
    )
    log(summary, "info")
    return DecouplingResult(False, None, Certificate(outcomes, summary), outcomes)


def apply_witness(
    model: HamiltonianModel, witness: Witness, alpha: complex | list[complex]
) -> CNumberModel:
    """the decoupled c-number model at the coherent amplitude alpha"""
    shifted = apply_unitary_shift(model, witness.point_shift)
    cm = c_number_substitute(shifted, alpha)
    matter = apply_unitary_shift(cm.matter, witness.displacement_for(cm.photon_values))
    return replace(cm, matter=matter)


ASSUMPTIONS_NOTE = (
    "holds under assumptions 1 and 2 (the thermodynamic and photon-cutoff limits commute; "
    "presumed, not checked) or under assumption A (photon zero-point energy per atom "
    "negligible against the free energy per atom; checked numerically for lines)"
)


FLUX_BIAS_REMARK = (
    "; an external flux threading the box only enters its own hamiltonian and leaves "
    "the shift unchanged"
)


@dataclass(frozen=True)
class ClassifyOptions:
    thermal: bool = False
    basis: TruncatedBasis = field(default_factory=TruncatedBasis)
    temperature: float | None = None
    log_zbar: float | None = None
    boundary: Boundary = Boundary.PERIODIC


@dataclass(frozen=True)
class Verdict:
    topology: Topology
    family: TopologyClass | None
    classification: Classification
    explanation: str
    assumptions_note: str = ""
    decoupling: DecouplingResult | None = None
    critical: CriticalCondition | None = None
    mean_field: MeanFieldResult | None = None
    critical_temperature: CriticalTemperature | None = None
    assumption_a: AssumptionAMargin | None = None


def classify_srpt(spec: ValidatedSpec, options: ClassifyOptions | None = None) -> Verdict:
    options = options or ClassifyOptions()
    topo = spec.topology
    figure = topo.figure

    if topo is Topology.FIG5A_GENERAL_COUPLING:
        return Verdict(
            topo,
            None,
            Classification.UNSUPPORTED,
            f"{figure}: coupling through every node of a general cell is not analysed",
        )

    family = classify_topology(spec)
    model = build_hamiltonian(spec, boundary=options.boundary)
    decoupling = decoupling_transform_exists(model)

    if family is TopologyClass.NO_GO_FAMILY:
        margin = None
        note = ASSUMPTIONS_NOTE
        if topo.is_tline:
            margin = assumption_a_margin(spec, options.temperature, options.log_zbar)
            if margin.justified is False:
                note += "; assumption A is not justified for these line parameters"
            else:
                value = margin.ratio if margin.ratio is not None else margin.proxy
                if value is not None:
                    note += f"; assumption A margin {value:.3g}"
        else:
            note += "; assumption A is presumed for a single-mode resonator"
        if decoupling.feasible:
            assert decoupling.witness is not None
            return Verdict(
                topo,
                family,
                Classification.NO_GO_HOLDS,
                f"{figure}: the photon decouples after "
                f"{'; '.join(decoupling.witness.describe(model.labels))}, "
                "so the free energy per atom has no photon-driven transition"
                + (FLUX_BIAS_REMARK if topo is Topology.FIG2_INDUCTIVE_LC else ""),
                note,
                decoupling,
                assumption_a=margin,
            )
        return Verdict(
            topo,
            family,
            Classification.NOT_CONFIRMED,
            f"{figure}: no decoupling found, the no-go argument does not apply",
            note,
            decoupling,
            assumption_a=margin,
        )

    critical = mean_field = tc = None
    classification = Classification.NOT_CONFIRMED
    explanation = f"{figure}: the photon cannot be decoupled by the shifts tried"
    if decoupling.feasible:
        explanation = f"{figure}: a decoupling exists for this cell count"

    if topo in MEAN_FIELD_TOPOLOGIES or topo is Topology.FIG5D_NO_RESONATOR_INDUCTOR:
        p = EffectivePotential.from_spec(spec)
        try:
            if topo is not Topology.FIG5D_NO_RESONATOR_INDUCTOR:
                critical = critical_inductance(p)
            if p.e_j > 0:
                mean_field = minimize_potential(p)
        except ZeroJosephsonEnergy as e:
            explanation += f"; {e}"

        if critical is not None and critical.superradiant:
            classification = Classification.MEAN_FIELD_SRPT
            explanation += (
                f"; N*L_R = {critical.n_l_r:.6g} H exceeds phi0^2/E_J - L_c = "
                f"{critical.threshold:.6g} H, the mean-field photon flux is finite"
            )
            if options.thermal and spec.cell is not None and spec.cell.is_concrete:
                concrete = build_hamiltonian(spec, concrete=True)
                try:
                    tc = critical_temperature(concrete, options.basis)
                except NotSuperradiantAtZeroT as e:
                    explanation += f"; quantum cells stay normal ({e})"
        elif mean_field is not None and mean_field.phase is Phase.MATTER_POLARIZED:
            classification = Classification.MATTER_POLARIZED_ONLY
            explanation += "; the cells polarize but no resonator inductor carries a photon flux"

    return Verdict(
        topo,
        family,
        classification,
        explanation,
        "",
        decoupling,
        critical,
        mean_field,
        tc,
    )
