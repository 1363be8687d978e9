import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from circuit_srpt import meanfield
from circuit_srpt.hamiltonian import TopologyMismatch, build_flux_hamiltonian, c_number_substitute
from circuit_srpt.meanfield import (
    EffectivePotential,
    GridPoint,
    MeanFieldNonConvergence,
    NotSuperradiantAtZeroT,
    Phase,
    ZeroJosephsonEnergy,
    barrier_height,
    competition_report,
    critical_inductance,
    critical_temperature,
    evaluate_point,
    finite_T_free_energy,
    grid_search_minimum,
    minimize_potential,
    order_parameter_vs_bias,
    phase_diagram,
    potential_value,
    ratio_grid,
    thermal_order_parameter,
)
from circuit_srpt.models import HBAR, K_B, PHI_Q
from circuit_srpt.spectrum import TruncatedBasis

from .conftest import PHI0, bamba, make_spec, soft_bamba


def potential(
    n_cells: int = 1, ratio: float | None = None, **overrides: float
) -> EffectivePotential:
    return EffectivePotential.from_spec(bamba(n_cells, ratio, **overrides))


class TestEffectivePotential:
    def test_from_spec(self) -> None:
        p = potential(n_cells=3)
        assert p.n_cells == 3
        assert p.l_c == 1e-10
        assert p.l_r == 1e-9
        assert p.phi_ext == pytest.approx(PHI_Q / 2)
        assert p.ratio == pytest.approx(1e-10 / 3e-9)

    def test_fig5d_has_no_resonator_inductor(self) -> None:
        p = EffectivePotential.from_spec(make_spec("Fig5d_NoResonatorInductor"))
        assert p.l_r is None
        assert p.ratio == 0.0

    @pytest.mark.parametrize("topology", ["Fig2_InductiveLC", "Fig4_CapacitiveTline"])
    def test_other_topologies_rejected(self, topology: str) -> None:
        with pytest.raises(TopologyMismatch):
            EffectivePotential.from_spec(make_spec(topology))

    def test_half_flux_bias_flips_the_junction(self) -> None:
        assert potential().josephson == (1.0, 0.0)
        assert potential(phi_ext_over_phi_q=0.0).josephson == (-1.0, 0.0)
        s, a = potential(phi_ext_over_phi_q=0.25).josephson
        assert s == -1.0
        assert a == pytest.approx(math.pi / 2)

    def test_origin(self) -> None:
        p = potential(n_cells=4)
        assert potential_value(p, 0.0, 0.0) == pytest.approx(4 * 1e-22)

    def test_half_quantum_cell_flux(self) -> None:
        p = potential(n_cells=2)
        expected = 2 * (PHI_Q**2 / (8 * 1e-10) - 1e-22)
        assert potential_value(p, 0.0, PHI_Q / 2) == pytest.approx(expected, rel=1e-12)

    @given(
        phi=st.floats(-3 * PHI_Q, 3 * PHI_Q),
        psi=st.floats(-3 * PHI_Q, 3 * PHI_Q),
        n_cells=st.integers(1, 16),
    )
    def test_parity(self, phi: float, psi: float, n_cells: int) -> None:
        p = EffectivePotential(n_cells=n_cells, l_c=1e-10, e_j=1e-22, l_r=1e-9)
        assert potential_value(p, -phi, -psi) == pytest.approx(
            potential_value(p, phi, psi), rel=1e-12, abs=1e-36
        )


class TestCriticalInductance:
    def test_small_cell_inductance_limit(self) -> None:
        p = EffectivePotential(n_cells=1, l_c=1e-16, e_j=1e-22, l_r=1e-9)
        assert critical_inductance(p).threshold == pytest.approx(PHI0**2 / 1e-22, rel=1e-6)

    def test_threshold(self) -> None:
        condition = critical_inductance(potential())
        assert condition.threshold == pytest.approx(PHI0**2 / 1e-22 - 1e-10, rel=1e-12)
        assert condition.superradiant
        assert condition.ratio == pytest.approx(1e-9 / condition.threshold)

    def test_doubling_cells_doubles_the_inductance(self) -> None:
        one = critical_inductance(potential(n_cells=1))
        two = critical_inductance(potential(n_cells=2))
        assert two.threshold == one.threshold
        assert two.n_l_r == pytest.approx(2 * one.n_l_r)

    @pytest.mark.parametrize(("ratio", "expected"), [(0.5, False), (0.99, False), (1.01, True)])
    def test_superradiant_above_threshold(self, ratio: float, expected: bool) -> None:
        assert critical_inductance(potential(n_cells=3, ratio=ratio)).superradiant is expected

    def test_accepts_the_validated_spec(self) -> None:
        spec = bamba(n_cells=2, ratio=1.3)
        assert critical_inductance(spec) == critical_inductance(EffectivePotential.from_spec(spec))
        assert critical_inductance(spec).superradiant

    @pytest.mark.parametrize("n_cells", [1, 2, 4])
    def test_exactly_at_threshold(self, n_cells: int) -> None:
        spec = bamba(n_cells=n_cells, ratio=1.0)
        condition = critical_inductance(spec)
        assert condition.n_l_r == condition.threshold
        assert not condition.superradiant
        p = EffectivePotential.from_spec(spec)
        result = minimize_potential(p)
        assert result.phase is Phase.NORMAL
        assert result.phi0 == 0.0
        assert abs(result.curvature_at_origin) <= 1e-9 * n_cells / p.l_c

    def test_order_parameter_grows_linearly_above_threshold(self) -> None:
        epsilons = np.array([1e-4, 1e-3, 1e-2])
        squares = np.array(
            [(minimize_potential(potential(ratio=1 + eps)).phi0 / PHI0) ** 2 for eps in epsilons]
        )
        slopes = squares / epsilons
        assert np.all(squares > 0)
        assert slopes == pytest.approx(np.full(3, slopes[0]), rel=1e-2)

    def test_zero_josephson_energy(self) -> None:
        with pytest.raises(ZeroJosephsonEnergy):
            critical_inductance(potential(e_j=0.0))

    def test_needs_resonator_inductor(self) -> None:
        with pytest.raises(TopologyMismatch):
            critical_inductance(EffectivePotential(n_cells=1, l_c=1e-10, e_j=1e-22))

    def test_integer_bias_never_condenses(self) -> None:
        condition = critical_inductance(potential(phi_ext_over_phi_q=0.0))
        assert math.isinf(condition.threshold)
        assert not condition.superradiant


class TestMinimizePotential:
    def test_normal_below_threshold(self) -> None:
        result = minimize_potential(potential(ratio=0.8))
        assert result.phase is Phase.NORMAL
        assert result.phi0 == 0.0
        assert result.psi0 == 0.0
        assert result.curvature_at_origin > 0
        assert result.barrier == pytest.approx(0.0, abs=1e-36)

    @pytest.mark.parametrize("n_cells", [1, 2, 5])
    def test_superradiant_above_threshold(self, n_cells: int) -> None:
        p = potential(n_cells=n_cells, ratio=1.2)
        result = minimize_potential(p)
        assert result.phase is Phase.SUPERRADIANT
        assert result.phi0 > 0
        assert result.residual < 1e-10
        assert result.curvature_at_origin < 0
        assert result.barrier is not None and result.barrier > 0

    def test_cell_flux_follows_the_photon(self) -> None:
        rng = np.random.default_rng(7)
        for _ in range(20):
            n_cells = int(rng.integers(1, 9))
            spec = bamba(
                n_cells,
                float(rng.uniform(1.05, 3.0)),
                l_c=float(rng.uniform(0.5e-10, 4e-10)),
                e_j=float(rng.uniform(0.5e-22, 1.5e-22)),
            )
            p = EffectivePotential.from_spec(spec)
            result = minimize_potential(p)
            assert result.phase is Phase.SUPERRADIANT
            assert p.l_r is not None
            assert result.psi0 / result.phi0 == pytest.approx(
                1 + p.l_c / (n_cells * p.l_r), rel=1e-8
            )

    def test_disagreeing_single_cell_minimum_raises(self, monkeypatch: pytest.MonkeyPatch) -> None:
        # with j > 1 the origin is a maximum of every single cell
        p = EffectivePotential(n_cells=2, l_c=5e-10, e_j=3e-22, l_r=1e-9)
        monkeypatch.setattr(meanfield, "_best_point", lambda _: 0.0)
        with pytest.raises(MeanFieldNonConvergence) as excinfo:
            minimize_potential(p)
        assert excinfo.value.best is not None
        assert excinfo.value.best.phi0 == 0.0

    def test_stationary_equations(self) -> None:
        p = potential(ratio=2.0)
        result = minimize_potential(p)
        assert p.l_r is not None
        # dU/dphi = 0 and dU/dpsi = 0 in SI units
        d_phi = result.phi0 / p.l_r + (result.phi0 - result.psi0) / p.l_c
        y = 2 * math.pi * result.psi0 / PHI_Q
        d_psi = (result.psi0 - result.phi0) / p.l_c - p.e_j * math.sin(y) / PHI0
        scale = PHI0 / p.l_c
        assert abs(d_phi) < 1e-9 * scale
        assert abs(d_psi) < 1e-9 * scale

    def test_fig5d_is_matter_polarized(self) -> None:
        p = EffectivePotential.from_spec(make_spec("Fig5d_NoResonatorInductor"))
        result = minimize_potential(p)
        assert result.phase is Phase.MATTER_POLARIZED
        assert result.psi0 == pytest.approx(PHI_Q / 2, rel=1e-9)

    def test_integer_bias_stays_at_origin(self) -> None:
        result = minimize_potential(potential(ratio=3.0, phi_ext_over_phi_q=0.0))
        assert result.phase is Phase.NORMAL
        assert result.phi0 == 0.0

    @pytest.mark.slow
    def test_agrees_with_grid_search(self) -> None:
        rng = np.random.default_rng(20)
        for _ in range(20):
            p = EffectivePotential(
                n_cells=int(rng.integers(1, 9)),
                l_c=float(rng.uniform(0.5e-10, 5e-10)),
                e_j=float(rng.uniform(0.2e-22, 3e-22)),
                l_r=float(rng.uniform(0.1e-9, 5e-9)),
                phi_ext=float(rng.choice([0.5, 0.5, 0.3])) * PHI_Q,
            )
            exact = minimize_potential(p)
            oracle = grid_search_minimum(p)
            assert exact.u_min == pytest.approx(oracle.u_min, rel=1e-9, abs=1e-30)
            assert exact.u_min <= oracle.u_min + 1e-12 * abs(oracle.u_min)
            assert exact.phi0 == pytest.approx(oracle.phi0, rel=1e-8, abs=1e-9 * PHI_Q)
            assert exact.psi0 == pytest.approx(oracle.psi0, rel=1e-8, abs=1e-9 * PHI_Q)
            oracle_phase = Phase.SUPERRADIANT if abs(oracle.phi0) > p.tol_flux else Phase.NORMAL
            assert exact.phase is oracle_phase

    def test_phase_boundary_over_josephson_and_resonator(self) -> None:
        n_cells, l_c = 2, 1e-10
        for e_j in np.linspace(0.5e-22, 2e-22, 20):
            threshold = PHI0**2 / e_j - l_c
            for l_r in np.linspace(0.2e-9, 1.5e-9, 20):
                n_l_r = n_cells * l_r
                if abs(n_l_r - threshold) <= 1e-6 * threshold:
                    continue
                p = EffectivePotential(n_cells=n_cells, l_c=l_c, e_j=float(e_j), l_r=float(l_r))
                expected = Phase.SUPERRADIANT if n_l_r > threshold else Phase.NORMAL
                assert minimize_potential(p).phase is expected, (e_j, l_r)


class TestBias:
    def test_bias_selects_the_branch(self) -> None:
        p = potential(ratio=1.5)
        plus, minus = order_parameter_vs_bias(p, [1e-9, -1e-9])
        assert plus.phi0 > 0
        assert minus.phi0 < 0
        assert plus.phi0 == pytest.approx(-minus.phi0, rel=1e-9)

    def test_normal_response_is_linear(self) -> None:
        p = potential(ratio=0.5)
        points = order_parameter_vs_bias(p, [1e-10, 2e-10, -1e-10])
        assert points[0].phi0 > 0
        assert points[1].phi0 == pytest.approx(2 * points[0].phi0, rel=1e-3)
        assert points[2].phi0 == pytest.approx(-points[0].phi0, rel=1e-9)

    def test_continuous_in_the_normal_phase(self) -> None:
        p = potential(ratio=0.5)
        points = order_parameter_vs_bias(p, np.linspace(-1e-9, 1e-9, 41))
        phis = np.array([pt.phi0 for pt in points])
        assert np.all(np.diff(phis) > 0)
        assert np.max(np.abs(np.diff(phis, 2))) < 1e-3 * np.max(np.abs(phis))

    def test_bias_lowers_the_minimum(self) -> None:
        p = potential(ratio=1.5)
        zero = minimize_potential(p).u_min
        tilted = order_parameter_vs_bias(p, [1e-9])[0]
        assert tilted.u_min < zero


class TestBarrier:
    def test_matches_minimum(self) -> None:
        p = potential(ratio=1.5)
        assert barrier_height(p) == pytest.approx(minimize_potential(p).barrier, rel=1e-12)

    def test_linear_in_cells(self) -> None:
        p = potential(ratio=1.5)
        ns = np.array([1, 2, 4, 8, 16, 32])
        barriers = np.array([barrier_height(p, int(n)) for n in ns])
        slope, intercept = np.polyfit(ns, barriers, 1)
        fitted = slope * ns + intercept
        r2 = 1 - np.sum((barriers - fitted) ** 2) / np.sum((barriers - barriers.mean()) ** 2)
        assert r2 > 0.999
        assert barriers[-1] == pytest.approx(32 * barriers[0], rel=1e-9)

    def test_zero_in_the_normal_phase(self) -> None:
        assert barrier_height(potential(ratio=0.5), 8) == pytest.approx(0.0, abs=1e-36)


class TestCompetitionReport:
    def test_superradiant_energies_add_up(self) -> None:
        p = potential(n_cells=2, ratio=1.5)
        report = competition_report(p, n_scan=(1, 2, 4))
        result = minimize_potential(p)
        assert report.phase is Phase.SUPERRADIANT
        assert report.photonic > 0
        assert report.coupling > 0
        assert report.photonic + report.coupling + report.atomic == pytest.approx(report.total)
        assert report.total == pytest.approx(result.u_min, rel=1e-12)
        assert report.barrier == pytest.approx(result.barrier, rel=1e-12)
        assert [n for n, _ in report.barrier_scan] == [1, 2, 4]

    def test_normal_phase_is_all_junction(self) -> None:
        report = competition_report(potential(n_cells=3, ratio=0.5))
        assert report.phase is Phase.NORMAL
        assert report.photonic == 0.0
        assert report.coupling == 0.0
        assert report.atomic == pytest.approx(3e-22)
        assert len(report.barrier_scan) == 6

    def test_needs_resonator_inductor(self) -> None:
        with pytest.raises(TopologyMismatch):
            competition_report(EffectivePotential(n_cells=1, l_c=1e-10, e_j=1e-22))


class TestFiniteTemperature:
    @pytest.mark.parametrize("temperature", [0.0, 0.1, 0.2, 0.5])
    @pytest.mark.parametrize("n_cells", [1, 2])
    def test_harmonic_cells(self, temperature: float, n_cells: int) -> None:
        spec = soft_bamba(n_cells, e_j=0.0)
        model = build_flux_hamiltonian(spec, concrete=True)
        basis = TruncatedBasis(8, 8)
        omega_r = 1 / math.sqrt(1e-9 * 1e-12)
        omega_c = 1 / math.sqrt(1e-8 * 1e-13)
        if temperature == 0:
            cell = HBAR * omega_c / 2
        else:
            kt = K_B * temperature
            cell = kt * math.log(2 * math.sinh(HBAR * omega_c / (2 * kt)))
        origin = HBAR * omega_r / 2 + n_cells * cell

        zero = finite_T_free_energy(c_number_substitute(model, 0.0), temperature, basis)
        shifted = finite_T_free_energy(c_number_substitute(model, 1.5), temperature, basis)
        assert zero.phi_c == 0.0
        assert zero.free_energy == pytest.approx(origin, rel=1e-6)
        assert shifted.free_energy - zero.free_energy == pytest.approx(
            shifted.phi_c**2 / (2 * 1e-9), rel=1e-6
        )
        assert zero.change < 1e-8 * n_cells

    @pytest.mark.slow
    def test_order_parameter_melts(self) -> None:
        model = build_flux_hamiltonian(bamba(ratio=1.5), concrete=True)
        basis = TruncatedBasis(16, 16)
        t_c = critical_temperature(model, basis).t_c
        temperatures = [0.0, 0.25 * t_c, 0.5 * t_c, 0.75 * t_c, 2.0 * t_c]
        phis = [thermal_order_parameter(model, t, basis).phi0 for t in temperatures]
        assert phis[0] > 0
        for a, b in zip(phis, phis[1:]):
            assert b <= a + 1e-3 * phis[0]
        assert phis[-1] < 1e-2 * phis[0]

    @pytest.mark.slow
    def test_critical_temperature_falls_towards_threshold(self) -> None:
        basis = TruncatedBasis(16, 16)
        ratios = [2.0, 1.6, 1.3, 1.1, 0.9]
        t_cs: list[float] = []
        for ratio in ratios:
            model = build_flux_hamiltonian(bamba(ratio=ratio), concrete=True)
            try:
                result = critical_temperature(model, basis)
            except NotSuperradiantAtZeroT:
                t_cs.append(0.0)
                continue
            assert result.t_low <= result.t_c <= result.t_high
            assert result.zero_t_curvature < 0
            t_cs.append(result.t_c)
        assert t_cs[0] > 0
        assert t_cs[-1] == 0.0
        for a, b in zip(t_cs, t_cs[1:]):
            assert b < a or a == b == 0.0

    def test_normal_phase_has_no_critical_temperature(self) -> None:
        model = build_flux_hamiltonian(bamba(ratio=0.5), concrete=True)
        with pytest.raises(NotSuperradiantAtZeroT):
            critical_temperature(model, TruncatedBasis(16, 16))


class TestPhaseDiagram:
    def test_ratio_grid(self) -> None:
        spec = bamba(n_cells=2)
        threshold = PHI0**2 / 1e-22 - 1e-10
        points = ratio_grid(spec, [0.5, 1.5], [0.0, 1.0])
        assert [p.index for p in points] == [0, 1, 2, 3]
        assert [(p.ratio, p.temperature) for p in points] == [
            (0.5, 0.0),
            (0.5, 1.0),
            (1.5, 0.0),
            (1.5, 1.0),
        ]
        resonator = points[2].spec.resonator
        assert resonator is not None and resonator.l_r is not None
        assert resonator.l_r == pytest.approx(1.5 * threshold / 2, rel=1e-12)

    def test_ratio_grid_needs_a_threshold(self) -> None:
        with pytest.raises(ZeroJosephsonEnergy):
            ratio_grid(bamba(e_j=0.0), [1.0])

    def test_empty_grid(self) -> None:
        assert phase_diagram([]) == []

    def test_single_point(self) -> None:
        rows = phase_diagram(ratio_grid(bamba(), [1.5]))
        assert len(rows) == 1
        assert rows[0].phase == "Superradiant"
        assert rows[0].error is None
        assert rows[0].t_c is None

    def test_phase_flips_at_threshold(self) -> None:
        rows = phase_diagram(ratio_grid(bamba(n_cells=3), [0.9, 0.99, 1.01, 1.1]))
        assert [r.phase for r in rows] == ["Normal", "Normal", "Superradiant", "Superradiant"]
        assert rows[0].phi0 == 0.0

    def test_failed_point_keeps_its_row(self) -> None:
        good = ratio_grid(bamba(), [1.5])[0]
        bad = GridPoint(1, replace(good.spec, n_cells=0), 1.5)
        rows = phase_diagram([good, bad])
        assert rows[0].error is None
        assert rows[1].error == "non_positive_element"
        assert rows[1].phase is None

    def test_workers_keep_input_order(self) -> None:
        points = ratio_grid(bamba(n_cells=2), np.linspace(0.5, 1.5, 7))
        serial = phase_diagram(points)
        parallel = phase_diagram(points, workers=2)
        assert [r.index for r in parallel] == list(range(7))
        assert parallel == serial

    def test_critical_temperature_of_a_normal_point(self) -> None:
        point = ratio_grid(bamba(), [0.5])[0]
        row = evaluate_point(point, TruncatedBasis(16, 16), with_tc=True)
        assert row.phase == "Normal"
        assert row.t_c == 0.0
