import warnings

import numpy as np
import pytest

from tangent_harmonic.energy import cylindrical_dirichlet_energy
from tangent_harmonic.fields import (
    BallGrid3,
    CylField,
    CylGrid,
    Field3,
    HalfDiskMesh,
    ProjectionError,
    PsiField,
    field_from_closed_form,
    lift_equivariant,
    load_checkpoint,
    project_tangential,
    project_unit,
    sample,
    save_checkpoint,
    tangency_residual,
    theta_average,
)
from tangent_harmonic.geometry import DomainError, frame_at, to_cylindrical
from tangent_harmonic.solvers import psi_u0

from conftest import constant_e3, hedgehog


def unit_field(grid, fn):
    v = np.zeros(grid.shape + (3,))
    v[grid.active] = fn(grid.points(grid.active))
    return v


def test_ball_grid_layout():
    g = BallGrid3(16)
    assert g.h == pytest.approx(2 / 16)
    assert g.h * g.n == pytest.approx(2 * g.R)
    assert np.all(np.abs(g.axis) > 0)  # no node on a coordinate plane
    lab = g.labels()
    assert set(np.unique(lab)) == {0, 1, 2}
    assert np.all(g.radius[lab == 1] <= 1 - 0.5 * g.h)
    assert np.all(g.radius[lab == 2] > 1 - 0.5 * g.h)
    np.testing.assert_allclose(g.cell_fraction.sum() * g.h**3, 4 / 3 * np.pi, rtol=5e-3)
    with pytest.raises(ValueError):
        BallGrid3(1)


def test_field3_rejects_non_unit_values():
    g = BallGrid3(8)
    v = unit_field(g, constant_e3) * 2
    with pytest.raises(ValueError):
        Field3(g, v)
    f = Field3(g, v, check=False)
    assert not f.values.flags.writeable


def test_project_unit_examples():
    g = BallGrid3(8)
    v = unit_field(g, constant_e3) * 2.0
    f = project_unit(Field3(g, v, check=False))
    np.testing.assert_array_equal(f.values[g.active], np.broadcast_to([0, 0, 1.0], (g.active.sum(), 3)))
    again = project_unit(f)
    assert np.abs(again.values - f.values).max() <= 1e-15
    rng = np.random.default_rng(0)
    r = rng.normal(size=g.shape + (3,))
    out = project_unit(Field3(g, r, check=False))
    assert np.abs(np.linalg.norm(out.values[g.active], axis=-1) - 1).max() < 1e-14
    z = np.array(v)
    z[g.active.nonzero()[0][0], g.active.nonzero()[1][0], g.active.nonzero()[2][0]] = 0.0
    with pytest.raises(ProjectionError, match="node"):
        project_unit(Field3(g, z, check=False))


def test_project_tangential_examples():
    g = BallGrid3(16)
    f = field_from_closed_form(constant_e3, g)
    # e3 is tangent on the equator only; after projection every boundary node is tangent
    out, res = project_tangential(f, return_residual=True)
    assert res < 1e-12
    mask = g.boundary_adjacent
    nu = g.points(mask) / g.radius[mask][:, None]
    eq = np.abs(nu[:, 2]) < 1e-12
    np.testing.assert_allclose(out.values[mask][eq], f.values[mask][eq])
    # (nu + e_t)/sqrt(2) -> e_t
    et = np.cross(nu, [0.0, 0.0, 1.0])
    ok = np.linalg.norm(et, axis=1) > 0.5
    et[ok] /= np.linalg.norm(et[ok], axis=1, keepdims=True)
    v = np.array(f.values)
    vals = v[mask]
    vals[ok] = (nu[ok] + et[ok]) / np.sqrt(2)
    v[mask] = vals
    out = project_tangential(Field3(g, v))
    np.testing.assert_allclose(out.values[mask][ok], et[ok], atol=1e-14)
    with pytest.raises(ProjectionError):
        project_tangential(field_from_closed_form(hedgehog, g))


def test_projection_invariant_on_random_field():
    g = BallGrid3(24)
    rng = np.random.default_rng(1)
    f = project_unit(project_tangential(project_unit(Field3(g, rng.normal(size=g.shape + (3,)), check=False))))
    assert np.abs(np.linalg.norm(f.values[g.active], axis=-1) - 1).max() < 1e-9
    assert tangency_residual(f) < 1e-6


def test_sample_contract():
    g = BallGrid3(12)
    f = field_from_closed_form(constant_e3, g)
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.7, 0.7, (50, 3))
    np.testing.assert_allclose(sample(f, x), np.broadcast_to([0, 0, 1.0], (50, 3)), atol=1e-15)
    idx = (3, 5, 7)
    node = np.array([g.axis[i] for i in idx])
    f2 = field_from_closed_form(hedgehog, g)
    np.testing.assert_allclose(sample(f2, node), f2.values[idx], atol=1e-15)
    with pytest.raises(DomainError):
        sample(f, [5.0, 0, 0])


def test_sample_exact_on_multilinear():
    g = BallGrid3(12)
    v = np.zeros(g.shape + (3,))
    X = g.points()
    v[..., 0] = 0.1 * X[..., 2]
    v[..., 2] = 1.0
    f = Field3(g, v, check=False)
    x = np.array([[0.11, -0.23, 0.37], [-0.5, 0.2, -0.05]])
    np.testing.assert_allclose(sample(f, x)[:, 0], 0.1 * x[:, 2], atol=1e-15)


def test_half_disk_mesh():
    mesh = HalfDiskMesh(32)
    assert mesh.n_phi == round(np.pi * 32)
    assert np.all(mesh.rho > 0)
    assert np.all(mesh.rho**2 + mesh.z**2 < 1)
    np.testing.assert_allclose(mesh.boundary_values(-1), mesh.phi - np.pi / 2)
    with pytest.raises(ValueError):
        mesh.boundary_values(0)


def test_psi_field_constraint_check():
    mesh = HalfDiskMesh(16)
    con = mesh.boundary
    psi = np.zeros(mesh.shape)
    with pytest.raises(ValueError):
        PsiField(mesh, psi, constrained=con)
    psi[-1] = mesh.boundary_values(-1)
    PsiField(mesh, psi, constrained=con)
    with pytest.raises(ValueError):
        PsiField(mesh, np.full(mesh.shape, np.nan))


def test_lift_examples():
    mesh = HalfDiskMesh(32)
    g = BallGrid3(16)
    # constant psi; the arc data only enters beyond the last ring
    inner = g.active & (g.radius < 1 - 1 / 32)
    f = lift_equivariant(PsiField(mesh, np.zeros(mesh.shape)), g)
    np.testing.assert_allclose(f.values[inner], np.broadcast_to([0, 0, 1.0], (inner.sum(), 3)), atol=1e-15)
    f = lift_equivariant(PsiField(mesh, np.full(mesh.shape, np.pi / 2)), g)
    pts = g.points(inner)
    e_rho = pts.copy()
    e_rho[:, 2] = 0
    e_rho /= np.linalg.norm(e_rho, axis=1, keepdims=True)
    np.testing.assert_allclose(f.values[inner], e_rho, atol=1e-14)
    p = PsiField.from_function(mesh, psi_u0)
    f = lift_equivariant(p, g)
    c = to_cylindrical(g.points(g.active))
    _, e_theta, _ = frame_at(c.theta)
    assert np.abs(np.einsum("ij,ij->i", f.values[g.active], e_theta)).max() < 1e-12
    with pytest.raises(DomainError):
        lift_equivariant(p, BallGrid3(16, R=1.3))


def test_lift_is_equivariant():
    mesh = HalfDiskMesh(64)
    p = PsiField.from_function(mesh, psi_u0)
    g = BallGrid3(24)
    f = lift_equivariant(p, g)
    rng = np.random.default_rng(3)
    x = g.points(g.active & (g.radius < 0.9))
    base = f(x)
    for a in rng.uniform(0, 2 * np.pi, 8):
        R = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1.0]])
        # interpolation error of the trilinear sampler on this grid
        assert np.abs(f(x @ R.T) - base @ R.T).max() < 2 * 0.25


def test_theta_average_fixed_point_and_energy():
    g = CylGrid(16, 32, 32)
    eq = CylField.from_function(lambda x: np.broadcast_to([0, 0, 1.0], x.shape).copy(), g)
    out = theta_average(eq)
    for a, b in zip(out.components, eq.components):
        np.testing.assert_allclose(a, b, atol=1e-15)
    R, T, Z = np.meshgrid(g.rho, g.theta, g.z, indexing="ij")
    ur = 0.3 * np.sin(T) * np.clip(1 - R**2 - Z**2, 0, None) + 0.2 * R
    fix = CylField(g, ur, np.zeros(g.shape), np.sqrt(1 - ur**2))
    avg = theta_average(fix)
    assert np.abs(avg.u_theta).max() == 0.0
    assert np.ptp(avg.u_rho, axis=1).max() < 1e-15
    np.testing.assert_allclose(avg.u_rho[:, 0, :], fix.u_rho.mean(axis=1), atol=1e-15)
    assert cylindrical_dirichlet_energy(avg) <= cylindrical_dirichlet_energy(fix) + 1e-6
    # idempotent
    again = theta_average(avg)
    np.testing.assert_allclose(again.u_rho, avg.u_rho, atol=1e-15)


def test_theta_average_field3_and_errors():
    g = BallGrid3(16)
    mesh = HalfDiskMesh(32)
    f = lift_equivariant(PsiField.from_function(mesh, psi_u0), g)
    avg = theta_average(f)
    inner = g.active & (g.radius < 0.8)
    assert np.abs(avg.values[inner] - f.values[inner]).max() < 0.05
    swirl = lambda x: np.stack([-x[..., 1], x[..., 0], np.full(x.shape[:-1], 0.1)], -1)  # noqa: E731
    with pytest.raises(ValueError, match="u_theta"):
        theta_average(field_from_closed_form(swirl, g))
    with pytest.raises(TypeError):
        theta_average(object())


def test_theta_average_clamp_semantics():
    g = CylGrid(8, 8, 8)
    ones = np.ones(g.shape)
    f = CylField(g, ones, 0 * ones, 0 * ones)
    f.u_rho = f.u_rho * (1 + 5e-7)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        out = theta_average(f, boundary_tol=1.0)
    assert any("clamping" in str(w.message) for w in rec)
    assert np.abs(out.u_rho).max() <= 1.0
    f.u_rho = ones * (1 + 1e-3)
    with pytest.raises(ValueError):
        theta_average(f, boundary_tol=1.0)


def test_checkpoint_round_trip(tmp_path):
    g = BallGrid3(10)
    f = field_from_closed_form(hedgehog, g)
    path = save_checkpoint(f, tmp_path / "f.txt")
    back = load_checkpoint(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
    text = path.read_text()
    assert "version = 1" in text and "kind = field3" in text and "columns = i j k u1 u2 u3" in text
    mesh = HalfDiskMesh(8)
    p = PsiField.from_function(mesh, psi_u0)
    back = load_checkpoint(save_checkpoint(p, tmp_path / "p.txt"))
    np.testing.assert_array_equal(back.psi, p.psi)
    assert back.branch == -1
    bad = tmp_path / "bad.txt"
    bad.write_text("version = 7\nkind = psi\n")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    with pytest.raises(TypeError):
        save_checkpoint(object(), tmp_path / "x.txt")
