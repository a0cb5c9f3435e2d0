import numpy as np
import pytest

from tangent_harmonic.analysis import (
    Defect,
    DefectList,
    DensityProfile,
    ExtendedField,
    degree_on_sphere,
    density,
    density_map,
    density_profile,
    detect_defects,
    extended_field3,
    fit_monotone_constants,
    node_energy,
    radial_derivative_control,
    weighted_density,
)
from tangent_harmonic.energy import dirichlet_energy
from tangent_harmonic.fields import BallGrid3, field_from_closed_form
from tangent_harmonic.geometry import DomainError

from conftest import constant_e3, hedgehog

# frozen Theta(0, r) / 4 pi of x/|x| on BallGrid3(128)
HEDGEHOG_THETA_128 = {0.25: 0.9751, 0.5: 0.9877, 0.75: 0.9918, 0.9: 0.9932}


@pytest.fixture(scope="module")
def hedgehog128():
    return field_from_closed_form(hedgehog, BallGrid3(128))


def test_extended_field():
    u = ExtendedField(hedgehog)
    x = np.array([[0.3, 0.1, 0.2]])
    np.testing.assert_allclose(u(x), hedgehog(x))
    # A(x) x/|x| = -x/|x|
    np.testing.assert_allclose(u(4 * x), -hedgehog(x), atol=1e-15)
    f = extended_field3(constant_e3, 16, 1.3)
    assert f.grid.R == 1.3 and f.grid.n == 16
    with pytest.raises(ValueError):
        extended_field3(constant_e3, 16, 2.5)


def test_node_energy_sums_to_dirichlet_energy(hedgehog128):
    g = BallGrid3(24)
    from tangent_harmonic.bounds import competitor_u0

    f = field_from_closed_form(competitor_u0, g)
    assert node_energy(f).sum() == pytest.approx(dirichlet_energy(f), rel=0.05)
    assert np.all(node_energy(hedgehog128) >= 0)


def test_hedgehog_density(hedgehog128):
    for r, val in HEDGEHOG_THETA_128.items():
        theta = density(hedgehog128, (0, 0, 0), r)
        assert theta / (4 * np.pi) == pytest.approx(val, abs=1e-4)
        assert abs(theta / (4 * np.pi) - 1) < 0.03
    # the weight is 1 inside the unit ball
    assert weighted_density(hedgehog128, (0, 0, 0), 0.5) == pytest.approx(density(hedgehog128, (0, 0, 0), 0.5))


def test_density_domain_errors(hedgehog128):
    h = hedgehog128.grid.h
    with pytest.raises(DomainError):
        density(hedgehog128, (0, 0, 0), 2 * h)
    with pytest.raises(DomainError):
        density(hedgehog128, (0.8, 0, 0), 0.5)
    with pytest.raises(DomainError):
        density_map(hedgehog128, 2 * h)


def test_constant_field_has_zero_density():
    f = field_from_closed_form(constant_e3, BallGrid3(32))
    assert density(f, (0, 0, 0), 0.5) == 0.0
    assert np.nanmax(density_map(f, 0.3)) == 0.0


def test_density_map_matches_pointwise(hedgehog128):
    g = hedgehog128.grid
    theta = density_map(hedgehog128, 0.25)
    i = np.argmin(np.abs(g.axis))
    node = (g.axis[i], g.axis[i], g.axis[i])
    assert theta[i, i, i] == pytest.approx(density(hedgehog128, node, 0.25), rel=1e-9)
    assert np.isnan(theta[0, 0, 0])


def test_degree_examples():
    assert degree_on_sphere(hedgehog) == pytest.approx(1.0, abs=1e-10)
    assert degree_on_sphere(constant_e3) == pytest.approx(0.0, abs=1e-10)
    assert degree_on_sphere(lambda x: hedgehog(x) * [1, 1, -1]) == pytest.approx(-1.0, abs=1e-10)
    assert degree_on_sphere(hedgehog, center=(0.1, 0.0, 0.0), r=0.3) == pytest.approx(1.0, abs=1e-10)
    # the singularity lies outside this sphere
    assert degree_on_sphere(hedgehog, center=(0.5, 0.0, 0.0), r=0.3) == pytest.approx(0.0, abs=1e-10)
    f = field_from_closed_form(hedgehog, BallGrid3(48))
    assert degree_on_sphere(f, r=0.5) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError):
        degree_on_sphere(f, center=(0.5, 0, 0), r=0.5)


def test_fit_monotone_constants():
    assert fit_monotone_constants([1, 2, 3], [1, 2, 3]) == (0.0, 0.0, 0.0)
    assert fit_monotone_constants([1, 2, 3], [1, 0.9, 1.2])[:2] == (0.0, 0.5)
    assert fit_monotone_constants([1, 2, 3], [3, 2, 1], grid=[0, 1]) == (0.0, 1.0, 0.0)
    c1, c2, v = fit_monotone_constants([1, 2, 3], [3, 2, 1], grid=[0.0])
    assert np.isnan(c1) and np.isnan(c2) and v == 1.0


def test_density_profile_for_hedgehog(hedgehog128):
    prof = density_profile(hedgehog128, (0, 0, 0), [0.25, 0.5, 0.75])
    assert prof.monotone
    lines = prof.to_csv().splitlines()
    assert lines[0] == "r,theta,f,corrected" and len(lines) == 4
    assert "monotone: True" in prof.to_text()
    with pytest.raises(ValueError):
        density_profile(hedgehog128, (0, 0, 0), [0.5, 0.25])
    bad = DensityProfile((0, 0, 0), np.array([0.1, 0.2]), np.zeros(2), np.zeros(2), np.nan, np.nan, 1.0)
    assert not bad.monotone
    assert bad.to_csv().splitlines()[1].endswith(",0")


def test_detect_hedgehog_defect():
    f = field_from_closed_form(hedgehog, BallGrid3(96))
    d = detect_defects(f)
    assert len(d) == 1
    (defect,) = d
    assert defect.kind == "interior"
    assert np.linalg.norm(defect.location) <= np.sqrt(3) * f.grid.h
    assert defect.degree == pytest.approx(1.0, abs=1e-6)
    assert defect.density > np.pi
    assert d.to_csv().splitlines()[0] == "x,y,z,kind,density,degree"
    assert "interior" in d.to_text()
    assert len(detect_defects(field_from_closed_form(constant_e3, BallGrid3(96)))) == 0


def test_defect_list_formats():
    d = DefectList([Defect((0.0, 0.0, 1.0), "boundary", 11.0)], np.pi, 0.1)
    assert d.to_csv().splitlines()[1] == "0,0,1,boundary,11,"
    assert "count: 1" in d.to_text()


def test_minimizer_has_two_boundary_defects(extended_minimizer):
    d = detect_defects(extended_minimizer, np.pi, 0.1)
    assert [x.kind for x in d] == ["boundary", "boundary"]
    h = extended_minimizer.grid.h
    for x, pole in zip(d, (1.0, -1.0)):
        np.testing.assert_allclose(x.location, (0, 0, pole), atol=1.5 * h)


def test_radial_derivative_control_on_minimizer(extended_minimizer):
    rows = radial_derivative_control(extended_minimizer)
    assert len(rows) == 4
    for row in rows:
        assert row["R"] > 0 and 0 <= row["ratio"] < 1
