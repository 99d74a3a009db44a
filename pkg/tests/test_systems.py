import math

import pytest
from hypothesis import given, strategies as st

from coulomblab.errors import ValidationError
from coulomblab.systems import (
    INFINITE,
    PROTON_MASS,
    build_system,
    hydrogen_molecular_ion,
    kappa,
    parse_system,
)


def test_build_homonuclear():
    s = build_system([(PROTON_MASS, 1.0), (PROTON_MASS, 1.0)], 1)
    assert s.nucleus_count == 2
    assert s.electron_count == 1
    assert s.reference_mass == pytest.approx(PROTON_MASS)
    assert s.homonuclear


def test_build_rejects_nonpositive_mass():
    with pytest.raises(ValidationError, match="non-positive mass"):
        build_system([(-1.0, 1.0)], 1)


def test_build_rejects_zero_nuclei():
    with pytest.raises(ValidationError, match="zero nuclei"):
        build_system([], 1)


def test_build_rejects_nonpositive_charge():
    with pytest.raises(ValidationError):
        build_system([(1.0, -2.0)], 1)


def test_heteronuclear_reference_mass_is_mean():
    s = build_system([(1836.15267, 1.0), (3670.48, 1.0)], 1)
    assert s.reference_mass == pytest.approx((1836.15267 + 3670.48) / 2)
    assert not s.homonuclear


def test_kappa_reference_values():
    assert kappa(build_system([(1.0, 1.0)], 1)) == 1.0
    assert kappa(build_system([(16.0, 1.0)], 1)) == pytest.approx(0.5)
    assert kappa(hydrogen_molecular_ion()) == pytest.approx(0.15276, abs=1e-5)


def test_kappa_infinite_reference_mass_is_zero_with_warning():
    s = build_system([(INFINITE, 1.0)], 1)
    with pytest.warns(UserWarning):
        assert kappa(s) == 0.0


@given(st.floats(min_value=1.0, max_value=1e8), st.floats(min_value=1.001, max_value=10.0))
def test_kappa_strictly_decreasing_in_reference_mass(m0, factor):
    lighter = build_system([(m0, 1.0)], 1)
    heavier = build_system([(m0 * factor, 1.0)], 1)
    assert kappa(heavier) < kappa(lighter)


def test_scaled_masses():
    s = hydrogen_molecular_ion()
    doubled = s.with_scaled_nuclear_masses(2.0)
    assert doubled.nuclear_masses == (2 * PROTON_MASS, 2 * PROTON_MASS)
    one_side = s.with_scaled_nuclear_masses(INFINITE, which=[1])
    assert one_side.nuclear_masses[0] == PROTON_MASS
    assert math.isinf(one_side.nuclear_masses[1])
    # reference mass stays finite: mean over finite masses only
    assert one_side.reference_mass == PROTON_MASS


def test_parse_system_roundtrip():
    text = """
    # two heavy centers, one electron
    nucleus = 1836.15267, 1
    nucleus = INFINITE, 1
    electrons = 1
    """
    s = parse_system(text)
    assert s.nuclear_masses[0] == pytest.approx(1836.15267)
    assert math.isinf(s.nuclear_masses[1])
    assert s.electron_count == 1


def test_parse_system_missing_electrons():
    with pytest.raises(ValidationError, match="electrons"):
        parse_system("nucleus = 1.0, 1.0\n")


def test_parse_system_unknown_key():
    with pytest.raises(ValidationError, match="unknown system key"):
        parse_system("nucleus = 1.0, 1.0\nelectrons = 1\nwidget = 3\n")
