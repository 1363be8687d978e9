import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circuit_srpt.hamiltonian import (
    AffineExpr,
    Boundary,
    HamiltonianModel,
    NonSymplecticGenerator,
    NoPhotonSector,
    PhotonMode,
    Sector,
    ShiftSpec,
    TopologyMismatch,
    UnsupportedTopology,
    apply_unitary_shift,
    build_charge_hamiltonian,
    build_flux_hamiltonian,
    build_hamiltonian,
    c_number_substitute,
    model_to_dict,
    resonator_mode,
    split_cells,
    term_breakdown,
    tline_charge_matrix,
)
from circuit_srpt.models import TopologyFieldMismatch

from .conftest import bamba, make_spec


def si_flux_matrix(model: HamiltonianModel) -> np.ndarray:
    return np.asarray(model.quad.flux_matrix) / model.units.inductance


class TestAffineExpr:
    def test_substitute(self) -> None:
        expr = AffineExpr.of({"rho": 1})
        out = expr.substitute({"rho": AffineExpr.of({"rho": 1, "q": -1}, 0.5)})
        assert out.coefficient("rho") == 1
        assert out.coefficient("q") == -1
        assert out.constant == 0.5

    def test_zero_terms_dropped(self) -> None:
        expr = AffineExpr.of({"psi": 1, "phi": 0})
        assert expr.variables == ("psi",)

    def test_render(self) -> None:
        expr = AffineExpr.of({"psi_1": 1, "phi": -1})
        assert expr.render({"psi_1": "ψ_1", "phi": "φ"}) == "ψ_1 - φ"

    def test_evaluate(self) -> None:
        expr = AffineExpr.of({"rho": 1, "q": -1}).evaluate({"q": 0.25})
        assert expr.variables == ("rho",)
        assert expr.constant == -0.25


class TestBuildFluxHamiltonian:
    def test_bamba_two_cells(self) -> None:
        spec = bamba(n_cells=2)
        model = build_flux_hamiltonian(spec)
        l_r, l_c = 1e-9, 1e-10
        expected = np.array(
            [
                [1 / l_r + 2 / l_c, -1 / l_c, -1 / l_c],
                [-1 / l_c, 1 / l_c, 0.0],
                [-1 / l_c, 0.0, 1 / l_c],
            ]
        )
        np.testing.assert_allclose(si_flux_matrix(model), expected, rtol=1e-12, atol=1e-3)
        assert [v.id for v in model.fluxes] == ["phi", "psi_1", "psi_2"]
        assert model.concrete
        assert model.blackbox.is_empty

    def test_half_flux_bias_flips_cosine_sign(self) -> None:
        model = build_flux_hamiltonian(bamba())
        (term,) = model.cosines
        assert term.amplitude * model.units.energy == pytest.approx(1e-22)
        assert term.phase_offset == 0.0
        assert term.support == (1,)
        assert model.parity_symmetric

    def test_zero_bias(self) -> None:
        model = build_flux_hamiltonian(bamba(phi_ext_over_phi_q=0.0))
        (term,) = model.cosines
        assert term.amplitude < 0
        assert model.parity_symmetric

    def test_generic_bias_breaks_parity(self) -> None:
        model = build_flux_hamiltonian(bamba(phi_ext_over_phi_q=0.25))
        (term,) = model.cosines
        assert term.phase_offset == pytest.approx(-math.pi / 2)
        assert not model.parity_symmetric

    def test_zero_josephson_energy(self) -> None:
        model = build_flux_hamiltonian(bamba(e_j=0.0))
        assert model.cosines == ()
        assert model.quad.is_psd()

    def test_fig2_abstract_black_box(self) -> None:
        model = build_flux_hamiltonian(make_spec("Fig2_InductiveLC"))
        assert not model.concrete
        assert [a.variables for a in model.blackbox.flux_args] == [("psi",)]
        assert [a.variables for a in model.blackbox.charge_args] == [("rho",)]
        k = 1 / 1e-9
        np.testing.assert_allclose(si_flux_matrix(model), [[k, -k], [-k, k]], rtol=1e-12)

    def test_fig2_concrete_single_cell(self) -> None:
        spec = make_spec(
            "Fig2_InductiveLC",
            n_cells=3,
            cell={"l_c": 1e-10, "e_j": 1e-22, "c_j": 1e-15, "phi_ext_over_phi_q": 0.5},
        )
        model = build_flux_hamiltonian(spec)
        assert model.concrete
        assert model.pair_count == 2
        assert len(model.cosines) == 1

    def test_fig5d_drops_resonator_inductor_only(self) -> None:
        c = model_to_dict(build_flux_hamiltonian(bamba(n_cells=2)))
        d = model_to_dict(
            build_flux_hamiltonian(make_spec("Fig5d_NoResonatorInductor", n_cells=2))
        )
        expected = np.array(c["flux_matrix"])
        expected[0, 0] -= 1 / 1e-9
        np.testing.assert_allclose(d["flux_matrix"], expected, rtol=1e-12)
        np.testing.assert_allclose(d["charge_matrix"], c["charge_matrix"], rtol=1e-12)
        assert [t["amplitude"] for t in d["cosines"]] == pytest.approx(
            [t["amplitude"] for t in c["cosines"]]
        )

    def test_fig6_structure(self) -> None:
        spec = make_spec("Fig6_InductiveTline")
        model = build_flux_hamiltonian(spec)
        m = spec.segments
        assert m is not None
        assert model.pair_count == 3 * m
        assert len(model.pairs_in(Sector.PHOTON)) == m
        assert len(model.blackbox.flux_args) == 2 * m
        assert model.quad.is_psd()

    def test_fig6_rejects_concrete(self) -> None:
        with pytest.raises(TopologyFieldMismatch):
            build_hamiltonian(make_spec("Fig6_InductiveTline"), concrete=True)

    def test_charge_topology_rejected(self) -> None:
        with pytest.raises(TopologyMismatch):
            build_flux_hamiltonian(make_spec("Fig3_CapacitiveLC"))

    def test_fig5a_unsupported(self) -> None:
        with pytest.raises(UnsupportedTopology):
            build_hamiltonian(make_spec("Fig5a_GeneralCoupling"))

    @given(
        n=st.integers(1, 4),
        l_r=st.floats(1e-10, 1e-8),
        l_c=st.floats(1e-11, 1e-9),
        c_j=st.floats(1e-16, 1e-14),
    )
    @settings(max_examples=25)
    def test_positive_elements_give_psd_form(
        self, n: int, l_r: float, l_c: float, c_j: float
    ) -> None:
        spec = make_spec(
            "Fig5c_BambaCircuit",
            n_cells=n,
            resonator__l_r=l_r,
            cell__l_c=l_c,
            cell__c_j=c_j,
        )
        assert build_flux_hamiltonian(spec).quad.is_psd()


class TestBuildChargeHamiltonian:
    def test_fig3_arguments(self) -> None:
        model = build_charge_hamiltonian(make_spec("Fig3_CapacitiveLC", n_cells=3))
        rendered = [a.render(model.labels) for a in model.blackbox.flux_args]
        assert rendered == ["ψ_1 - φ", "ψ_2 - φ", "ψ_3 - φ"]
        assert model.modes[0].convention == "charge"

    def test_fig4_periodic_charge_matrix(self) -> None:
        spec = make_spec("Fig4_CapacitiveTline", tline__length=4e-3)
        model = build_charge_hamiltonian(spec)
        t = spec.tline
        assert t is not None
        g = np.asarray(model.quad.charge_matrix)[:4, :4] / model.units.capacitance
        circulant = np.array(
            [[2, -1, 0, -1], [-1, 2, -1, 0], [0, -1, 2, -1], [-1, 0, -1, 2]], dtype=float
        )
        np.testing.assert_allclose(g, circulant / (t.c_t * t.dx), rtol=1e-12)
        assert model.quad.is_psd()

    def test_open_boundary(self) -> None:
        g = tline_charge_matrix(4, Boundary.OPEN)
        np.testing.assert_array_equal(np.diag(g), [1, 2, 2, 1])
        assert g[0, 3] == 0

    def test_single_segment_is_one_capacitor(self) -> None:
        np.testing.assert_array_equal(tline_charge_matrix(1), [[1.0]])

    def test_flux_topology_rejected(self) -> None:
        with pytest.raises(TopologyMismatch):
            build_charge_hamiltonian(bamba())


class TestResonatorMode:
    def test_example(self) -> None:
        mode = resonator_mode(bamba())
        assert mode is not None
        assert mode.omega == pytest.approx(3.1623e10, rel=1e-4)
        assert mode.impedance == pytest.approx(31.623, rel=1e-4)

    def test_symmetric_normalization(self) -> None:
        mode = PhotonMode(0, 1.0, 1.0)
        assert mode.flux_scale == pytest.approx(1 / math.sqrt(2))
        assert mode.charge_scale == pytest.approx(1 / math.sqrt(2))

    def test_tline_has_none(self) -> None:
        assert resonator_mode(make_spec("Fig4_CapacitiveTline")) is None


class TestApplyUnitaryShift:
    def test_fig2_point_shift(self) -> None:
        model = build_flux_hamiltonian(make_spec("Fig2_InductiveLC"))
        shifted = apply_unitary_shift(model, ShiftSpec.point("phi", {"psi": 1.0}))
        k = 1 / 1e-9
        np.testing.assert_allclose(si_flux_matrix(shifted), [[k, 0], [0, 0]], rtol=1e-12)
        np.testing.assert_allclose(shifted.quad.charge_matrix, model.quad.charge_matrix)
        (charge_arg,) = shifted.blackbox.charge_args
        assert charge_arg.coefficient("rho") == 1
        assert charge_arg.coefficient("q") == -1
        (flux_arg,) = shifted.blackbox.flux_args
        assert flux_arg.variables == ("psi",)

    def test_identity(self) -> None:
        model = build_flux_hamiltonian(bamba())
        assert apply_unitary_shift(model, ShiftSpec()) is model

    def test_mixed_generator_rejected(self) -> None:
        model = build_flux_hamiltonian(bamba())
        generator = ShiftSpec(flux_shift={"phi": {"psi_1": 1.0}}, charge_shift={"q": {"rho_1": 1}})
        with pytest.raises(NonSymplecticGenerator):
            apply_unitary_shift(model, generator)

    def test_singular_generator_rejected(self) -> None:
        model = build_flux_hamiltonian(bamba())
        with pytest.raises(NonSymplecticGenerator, match="singular"):
            apply_unitary_shift(model, ShiftSpec.point("phi", {"phi": -1.0}))

    def test_kind_mismatch_rejected(self) -> None:
        model = build_flux_hamiltonian(bamba())
        with pytest.raises(NonSymplecticGenerator, match="expected flux"):
            apply_unitary_shift(model, ShiftSpec.point("phi", {"q": 1.0}))

    def test_displacement_moves_cosine_phase(self) -> None:
        model = build_flux_hamiltonian(bamba())
        shifted = apply_unitary_shift(model, ShiftSpec(displacement={"psi_1": 0.3}))
        assert shifted.cosines[0].phase_offset == pytest.approx(0.3)
        assert not shifted.parity_symmetric

    @given(
        c=st.floats(-2.0, 2.0),
        d=st.floats(-1.0, 1.0),
        e=st.floats(-1.0, 1.0),
    )
    @settings(max_examples=30)
    def test_inverse_restores_coefficients(self, c: float, d: float, e: float) -> None:
        model = build_flux_hamiltonian(bamba(n_cells=2))
        generator = ShiftSpec(
            flux_shift={"phi": {"psi_1": c, "psi_2": 0.5 * c}},
            displacement={"psi_1": d, "rho_2": e},
        )
        there = apply_unitary_shift(model, generator)
        back = apply_unitary_shift(there, generator.inverse(model))
        scale = float(np.max(np.abs(model.quad.flux_matrix)))
        q0, q1 = model.quad, back.quad
        np.testing.assert_allclose(q1.flux_matrix, q0.flux_matrix, atol=1e-12 * scale)
        np.testing.assert_allclose(q1.charge_matrix, q0.charge_matrix, atol=1e-12 * scale)
        np.testing.assert_allclose(q1.linear_flux, 0.0, atol=1e-12 * scale)
        np.testing.assert_allclose(q1.linear_charge, 0.0, atol=1e-12 * scale)
        assert q1.constant == pytest.approx(0.0, abs=1e-12 * scale)
        for a, b in zip(model.cosines, back.cosines):
            np.testing.assert_allclose(b.coefficients, a.coefficients, atol=1e-12)
            assert math.remainder(b.phase_offset - a.phase_offset, 2 * math.pi) == pytest.approx(
                0.0, abs=1e-12
            )


class TestCNumberSubstitute:
    def test_vacuum(self) -> None:
        model = build_flux_hamiltonian(bamba())
        cm = c_number_substitute(model, 0)
        assert cm.phi_c == 0.0
        assert cm.photon_energy == pytest.approx(0.5 * model.modes[0].omega)
        assert cm.matter.pairs_in(Sector.PHOTON) == []
        np.testing.assert_array_equal(cm.matter.quad.linear_flux, [0.0])

    def test_real_alpha_decouples_cells(self) -> None:
        model = build_flux_hamiltonian(bamba(n_cells=3))
        cm = c_number_substitute(model, 0.7)
        assert cm.phi_c == pytest.approx(2 * model.modes[0].flux_scale * 0.7)
        parts = split_cells(cm.matter)
        assert len(parts.cells) == 3
        first = parts.cells[0]
        for cell in parts.cells[1:]:
            np.testing.assert_allclose(cell.quad.flux_matrix, first.quad.flux_matrix)
            np.testing.assert_allclose(cell.quad.linear_flux, first.quad.linear_flux)
            assert cell.cosines[0].amplitude == first.cosines[0].amplitude

    def test_fig2_charge_displacement(self) -> None:
        model = build_flux_hamiltonian(make_spec("Fig2_InductiveLC"))
        shifted = apply_unitary_shift(model, ShiftSpec.point("phi", {"psi": 1.0}))
        cm = c_number_substitute(shifted, 0.3j)
        q_c = cm.photon_values["q"]
        assert q_c == pytest.approx(2 * model.modes[0].charge_scale * 0.3)
        (charge_arg,) = cm.matter.blackbox.charge_args
        assert charge_arg.variables == ("rho",)
        assert charge_arg.constant == pytest.approx(-q_c)
        (flux_arg,) = cm.matter.blackbox.flux_args
        assert flux_arg.constant == 0.0

    def test_no_photon_sector(self) -> None:
        matter = c_number_substitute(build_flux_hamiltonian(bamba()), 0).matter
        with pytest.raises(NoPhotonSector):
            c_number_substitute(matter, 0)

    def test_amplitude_count_checked(self) -> None:
        with pytest.raises(ValueError, match="coherent amplitudes"):
            c_number_substitute(build_flux_hamiltonian(bamba()), [0.1, 0.2])


class TestReporting:
    def test_term_breakdown(self) -> None:
        terms = term_breakdown(build_flux_hamiltonian(bamba()))
        by_name = {(t["term"], t["kind"]): t for t in terms}
        coupling = by_name[("φ*ψ_1", "flux")]
        assert coupling["role"] == "interaction"
        assert coupling["coefficient"] == pytest.approx(-1 / 1e-10, rel=1e-12)
        photon = by_name[("φ^2", "flux")]
        assert photon["coefficient"] == pytest.approx(0.5 * (1 / 1e-9 + 1 / 1e-10), rel=1e-12)
        assert by_name[("ρ_1^2", "charge")]["role"] == "matter"

    def test_model_to_dict(self) -> None:
        data = model_to_dict(build_flux_hamiltonian(make_spec("Fig2_InductiveLC")))
        assert data["topology"] == "Fig2_InductiveLC"
        assert data["concrete"] is False
        blackbox = data["blackbox"]
        assert isinstance(blackbox, dict)
        assert [a["expression"] for a in blackbox["flux_args"]] == ["ψ"]
        variables = data["variables"]
        assert isinstance(variables, list)
        assert {v["id"] for v in variables} == {"phi", "q", "psi", "rho"}
