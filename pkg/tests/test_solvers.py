import numpy as np
import pytest

from tangent_harmonic.bounds import E_LOWER, E_UPPER, competitor_u0
from tangent_harmonic.energy import dirichlet_energy, reduced_energy
from tangent_harmonic.fields import (
    BallGrid3,
    EquivariantLift,
    Field3,
    HalfDiskMesh,
    PsiField,
    field_from_closed_form,
    project_tangential,
    project_unit,
    tangency_residual,
)
from tangent_harmonic.solvers import (
    SolveParams,
    SolveTrace,
    clamp_competitors,
    psi_initial,
    psi_u0,
    solve_full3d,
    solve_reduced,
    solve_reduced_multilevel,
)

# frozen reduced minimizer energies
REDUCED = {128: 7.903908315033515, 512: 7.922956949764103}


def test_psi_u0_matches_arc_data():
    mesh = HalfDiskMesh(32)
    phi = mesh.phi
    np.testing.assert_allclose(psi_u0(np.sin(phi), np.cos(phi)), mesh.boundary_values(-1), atol=1e-14)
    assert np.all(psi_u0(0.0, np.linspace(-0.9, 0.9, 7)) == 0.0)


def test_solve_params_validation():
    for bad in ({"step": 0}, {"backtrack": 1.0}, {"grad_tol": 0}, {"max_iters": -1}, {"metric": "l2"}):
        with pytest.raises(ValueError):
            SolveParams(**bad)
    assert SolveParams().as_dict()["metric"] == "sobolev"


def test_psi_initial_kinds():
    mesh = HalfDiskMesh(16)
    for kind in ("u0", "random", "zero"):
        p = psi_initial(mesh, kind)
        np.testing.assert_array_equal(p.psi[-1], mesh.boundary_values(-1))
    with pytest.raises(ValueError):
        psi_initial(mesh, "bogus")
    a = psi_initial(mesh, "random", seed=4).psi
    b = psi_initial(mesh, "random", seed=4).psi
    np.testing.assert_array_equal(a, b)


def test_clamp_competitors_do_not_raise_energy():
    mesh = HalfDiskMesh(32)
    psi = psi_u0(mesh.rho, mesh.z) * 4.0
    psi[-1] = mesh.boundary_values(-1)
    p = PsiField(mesh, psi)
    lo, hi = clamp_competitors(p)
    assert lo.psi.min() >= -np.pi and hi.psi.max() <= np.pi
    assert reduced_energy(lo) <= reduced_energy(p) + 1e-12
    assert reduced_energy(hi) <= reduced_energy(p) + 1e-12


def test_reduced_minimizers(reduced_minimizers):
    for m, val in REDUCED.items():
        p, traces = reduced_minimizers[m]
        assert reduced_energy(p) == pytest.approx(val, rel=1e-9)
        assert E_LOWER <= reduced_energy(p) <= E_UPPER
        assert all(t.is_monotone() for t in traces)
        assert traces[-1].reason in ("gradient", "energy")
        assert not traces[-1].notes["clamp_active"]
    assert all(t.iterations > 0 for t in reduced_minimizers[128][1])
    assert len(reduced_minimizers[128][1]) == 3  # meshes 32, 64, 128


def test_reduced_minimizer_is_independent_of_start():
    e = [reduced_energy(solve_reduced_multilevel(128, init=k, seed=3)[0]) for k in ("u0", "random", "zero")]
    assert max(e) - min(e) < 1e-9 * e[0]


def test_branches_are_mirror_images():
    a, _ = solve_reduced_multilevel(64, branch=-1)
    b, _ = solve_reduced_multilevel(64, branch=1)
    assert reduced_energy(a) == pytest.approx(reduced_energy(b), rel=1e-9)


def test_solve_reduced_respects_max_iters():
    mesh = HalfDiskMesh(32)
    p, tr = solve_reduced(psi_initial(mesh), SolveParams(max_iters=3))
    assert tr.reason == "max_iters" and tr.iterations == 3
    assert tr.is_monotone()


def test_trace_csv():
    tr = SolveTrace()
    tr.record(2.0, 1.0)
    tr.record(1.5, 0.5, 1e-9)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "iter,energy,grad_norm,tangency_residual"
    assert lines[2] == "1,1.5,0.5,1.0000000000000001e-09"
    assert tr.iterations == 1 and tr.is_monotone()


def test_full3d_from_reduced_lift(minimizer512):
    g = BallGrid3(32)
    init = project_unit(project_tangential(field_from_closed_form(EquivariantLift(minimizer512), g)))
    f, tr = solve_full3d(init)
    assert tr.is_monotone()
    assert tr.energy[-1] <= REDUCED[512] * 1.01
    assert dirichlet_energy(f) == pytest.approx(tr.energy[-1], rel=1e-12)
    assert tangency_residual(f) < 1e-6


def test_full3d_from_u0():
    f, tr = solve_full3d(field_from_closed_form(competitor_u0, BallGrid3(32)))
    assert tr.energy[-1] < tr.energy[0]
    assert tr.energy[-1] <= REDUCED[512] * 1.01


def test_full3d_from_random_start_keeps_constraints():
    g = BallGrid3(48)
    rng = np.random.default_rng(5)
    init = project_unit(project_tangential(project_unit(Field3(g, rng.normal(size=g.shape + (3,)), check=False))))
    f, tr = solve_full3d(init, SolveParams(max_iters=50))
    assert tr.is_monotone()
    assert max(tr.tangency_residual) < 1e-6
    assert np.abs(np.linalg.norm(f.values[g.active], axis=-1) - 1).max() < 1e-12
