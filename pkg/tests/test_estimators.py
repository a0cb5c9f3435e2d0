import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tangent_harmonic.estimators import (
    DefectDetector,
    DyadicSymmetrizer,
    ReducedHarmonicMapSolver,
    TangentialHarmonicMap3D,
)
from tangent_harmonic.fields import CylGrid
from tangent_harmonic.symmetrization import ExampleFixture

POINTS = np.array([[0.1, 0.2, 0.3], [-0.4, 0.1, -0.2], [0.0, 0.5, 0.1]])


@pytest.fixture(scope="module")
def reduced():
    return ReducedHarmonicMapSolver(m=64).fit()


def test_params_and_clone():
    est = ReducedHarmonicMapSolver(m=64, branch=1)
    assert est.get_params()["m"] == 64 and est.get_params()["branch"] == 1
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    est.set_params(m=32)
    assert est.m == 32
    for cls in (TangentialHarmonicMap3D, DyadicSymmetrizer, DefectDetector):
        assert clone(cls()).get_params() == cls().get_params()


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ReducedHarmonicMapSolver().transform(POINTS)
    with pytest.raises(NotFittedError):
        TangentialHarmonicMap3D().score()
    with pytest.raises(NotFittedError):
        DefectDetector().predict(POINTS)


def test_reduced_solver(reduced):
    assert reduced.energy_ == pytest.approx(7.878475042975371, rel=1e-9)
    assert reduced.score() == -reduced.energy_
    U = reduced.transform(POINTS)
    np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-12)
    psi = reduced.predict(POINTS)
    assert psi.shape == (3,)
    rho = np.hypot(POINTS[:, 0], POINTS[:, 1])
    # u_rho = sin(psi), u_z = cos(psi)
    np.testing.assert_allclose(U[:, 2], np.cos(psi), atol=1e-12)
    np.testing.assert_allclose(np.einsum("ij,ij->i", U[:, :2], POINTS[:, :2]) / rho, np.sin(psi), atol=1e-12)
    with pytest.raises(ValueError):
        reduced.transform(POINTS[:, :2])
    with pytest.raises(ValueError):
        reduced.transform([[np.nan, 0, 0]])
    f = reduced.to_field3(16)
    assert f.grid.n == 16


def test_full3d_estimator():
    est = TangentialHarmonicMap3D(n=16, max_iters=20).fit()
    assert est.trace_.is_monotone()
    assert est.score() == -est.energy_
    assert est.transform(POINTS).shape == (3, 3)
    with pytest.raises(TypeError):
        TangentialHarmonicMap3D(n=16).fit(3.0)


def test_symmetrizer():
    est = DyadicSymmetrizer().fit(ExampleFixture(0.1))
    assert est.report_.E_output <= est.report_.E_input
    U = est.transform(POINTS)
    np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-6)
    with pytest.raises(TypeError):
        DyadicSymmetrizer().fit(CylGrid(4, 4, 4))


def test_defect_detector_on_reduced_minimizer(reduced):
    det = DefectDetector(n=96).fit(reduced.lift_)
    assert [d.kind for d in det.defects_] == ["boundary", "boundary"]
    pred = det.predict([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(pred, [1, 1, 0])
    theta = det.transform([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    assert theta[0] > np.pi > theta[1]
    with pytest.raises(TypeError):
        DefectDetector().fit(np.zeros((3, 3)))
