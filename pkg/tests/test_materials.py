import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wfsmkit.exceptions import DomainError, ValidationError
from wfsmkit.materials import (MU0, MaterialKind, bh_lookup, bh_slope, effective_stack_properties, hb_lookup,
                               iron_loss_components, iron_loss_density, linear_material, load_material,
                               save_material)


def test_shipped_library_has_five_valid_grades(library):
    assert sorted(library.grades) == ["NO25", "NO35", "SMC_A", "SMC_B", "SMC_C"]
    for m in library.grades.values():
        if m.kind is MaterialKind.SMC:
            assert m.stacking_factor == 1.0
            assert m.thickness is None
        else:
            assert m.thickness > 0


def test_zero_flux_gives_zero_loss(library):
    for m in library.grades.values():
        assert iron_loss_density(m, 0.0, 400.0) == 0.0
        assert iron_loss_density(m, 1.2, 0.0) == 0.0


def test_eddy_thickness_law(library):
    thin = library["NO25"]
    thick = thin.with_(name="NO35_like", thickness=0.35e-3)
    e_thin = iron_loss_components(thin, 1.3, 400.0)[1]
    e_thick = iron_loss_components(thick, 1.3, 400.0)[1]
    assert abs(e_thick / e_thin - 1.96) <= 1e-9


def test_no35_hand_evaluation(library):
    # 0.017*50 + 4.5e-5*(0.35/0.25)^2*50^2 + 3.5e-4*50^1.5
    assert iron_loss_density(library["NO35"], 1.0, 50.0) == pytest.approx(1.1942436867076, rel=1e-12)


def test_stack_properties(library):
    assert effective_stack_properties(library["SMC_C"], 0.133)[0] == 0.133
    assert effective_stack_properties(library["NO25"], 0.133)[0] == pytest.approx(0.12635, rel=1e-12)
    sf94 = library["NO25"].with_(stacking_factor=0.94)
    length, mass = effective_stack_properties(sf94, 0.128)
    assert length == pytest.approx(0.12032, rel=1e-12)
    assert mass == pytest.approx(0.12032 * sf94.density, rel=1e-12)
    with pytest.raises(DomainError):
        effective_stack_properties(sf94, 0.0)


@settings(max_examples=200, deadline=None)
@given(h1=st.floats(0, 3e5), h2=st.floats(0, 3e5))
def test_bh_monotone(library, h1, h2):
    lo, hi = sorted((h1, h2))
    for m in library.grades.values():
        assert bh_lookup(m, lo) <= bh_lookup(m, hi)


def test_slope_at_least_mu0_and_exactly_mu0_beyond_last_knot(library):
    for m in library.grades.values():
        h = np.linspace(0, m.bh_h[-1] * 0.999, 500)
        assert np.all(bh_slope(m, h) >= MU0 * (1 - 1e-9))
        beyond = np.array([m.bh_h[-1] * 1.5, m.bh_h[-1] * 10])
        assert np.all(bh_slope(m, beyond) == MU0)
        b0 = bh_lookup(m, beyond[0])
        assert bh_lookup(m, beyond[1]) - b0 == pytest.approx(MU0 * (beyond[1] - beyond[0]), rel=1e-12)


def test_hb_is_inverse_of_bh(library):
    m = library["NO35"]
    h = np.array([0.0, 10.0, 77.0, 950.0, 3e4, 2e5])
    assert np.allclose(hb_lookup(m, bh_lookup(m, h)), h, rtol=1e-12, atol=1e-9)


def test_negative_field_rejected(library):
    with pytest.raises(DomainError):
        bh_lookup(library["NO25"], -1.0)
    with pytest.raises(DomainError):
        iron_loss_density(library["NO25"], -0.1, 50.0)


@settings(max_examples=150, deadline=None)
@given(b1=st.floats(0, 2.2), b2=st.floats(0, 2.2), f1=st.floats(0, 2000), f2=st.floats(0, 2000))
def test_iron_loss_monotone(library, b1, b2, f1, f2):
    (blo, bhi), (flo, fhi) = sorted((b1, b2)), sorted((f1, f2))
    for m in library.grades.values():
        assert iron_loss_density(m, blo, flo) <= iron_loss_density(m, bhi, flo)
        assert iron_loss_density(m, blo, flo) <= iron_loss_density(m, blo, fhi)


def test_smc_with_stacking_below_one_rejected(library):
    with pytest.raises(ValidationError) as err:
        library["SMC_A"].with_(stacking_factor=0.95)
    assert err.value.invariant == "smc_stacking_factor"


def test_non_monotone_curve_names_knot(library):
    m = library["NO25"]
    b = list(m.bh_b)
    b[4] = b[3] - 0.01
    with pytest.raises(ValidationError) as err:
        m.with_(bh_b=tuple(b))
    assert err.value.invariant == "bh_curve_monotone"
    assert "index 4" in str(err.value)


def test_material_file_round_trip(library, tmp_path):
    for m in library.grades.values():
        path = tmp_path / f"{m.name}.yaml"
        save_material(m, path)
        assert load_material(path) == m


def test_linear_material_is_linear():
    m = linear_material(mu_r=800.0)
    h = np.array([1.0, 10.0, 1e4])
    assert np.allclose(bh_lookup(m, h) / h, MU0 * 800.0, rtol=1e-12)
    assert math.isclose(m.initial_permeability, MU0 * 800.0, rel_tol=1e-12)
