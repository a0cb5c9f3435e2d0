import numpy as np
import pytest

from tangent_harmonic.geometry import (
    BoundaryChart,
    DomainError,
    extend_field_value,
    frame_at,
    from_cylindrical,
    inversion,
    inversion_jacobian,
    reflection_identity_checks,
    reflection_matrix,
    reflection_matrix_partial,
    rotation_to,
    to_cylindrical,
)


def random_points(n, r_lo, r_hi, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(r_lo, r_hi, n)[:, None]


def test_cylindrical_examples():
    c = to_cylindrical([0.0, 1.0, 0.0])
    assert (c.rho, c.theta, c.z) == pytest.approx((1.0, np.pi / 2, 0.0))
    c = to_cylindrical([1.0, 0.0, 0.0])
    assert (c.rho, c.theta, c.z) == (1.0, 0.0, 0.0)
    c = to_cylindrical([0.0, 0.0, 0.5])
    assert c.rho == 0.0 and c.theta == 0.0 and c.z == 0.5 and bool(c.on_axis)


def test_cylindrical_round_trip_and_range():
    p = random_points(500, 0.0, 2.0, seed=1)
    c = to_cylindrical(p)
    assert np.all((c.theta >= 0) & (c.theta < 2 * np.pi))
    np.testing.assert_allclose(from_cylindrical(c.rho, c.theta, c.z), p, atol=1e-14)


def test_frame_examples():
    er, et, ez = frame_at(0.0)
    np.testing.assert_allclose(np.stack([er, et, ez]), np.eye(3))
    er, et, ez = frame_at(np.pi / 2)
    np.testing.assert_allclose(er, [0, 1, 0], atol=1e-16)
    np.testing.assert_allclose(et, [-1, 0, 0], atol=1e-16)
    th = np.linspace(0, 2 * np.pi, 17)
    er, et, ez = frame_at(th)
    np.testing.assert_allclose(np.cross(er, et), ez, atol=1e-15)
    np.testing.assert_allclose(np.einsum("ij,ij->i", er, et), 0.0, atol=1e-15)


def test_inversion_examples():
    np.testing.assert_allclose(inversion([2.0, 0, 0]), [0.5, 0, 0])
    u = np.array([0.6, 0.0, 0.8])
    np.testing.assert_allclose(inversion(u), u, atol=1e-15)
    with pytest.raises(DomainError):
        inversion([0.0, 0.0, 0.0])


def test_inversion_involution():
    x = random_points(1000, 0.5, 2.0, seed=2)
    assert np.abs(inversion(inversion(x)) - x).max() < 1e-12


def test_inversion_jacobian_determinant():
    h = 1e-5
    x = np.array([1.5, 0.0, 0.0])
    J = np.stack([(inversion(x + h * e) - inversion(x - h * e)) / (2 * h) for e in np.eye(3)], -1)
    assert np.linalg.det(J) == pytest.approx(-1 / 1.5**6, rel=1e-6)
    assert np.linalg.det(inversion_jacobian(x)) == pytest.approx(-1 / 1.5**6, rel=1e-12)


def test_reflection_matrix():
    np.testing.assert_allclose(reflection_matrix([0, 0, 1.0]), np.diag([1, 1, -1.0]))
    x = random_points(1000, 0.1, 3.0, seed=3)
    A = reflection_matrix(x)
    assert np.abs(A @ A - np.eye(3)).max() < 1e-13
    assert np.abs(np.einsum("...ij,...ij->...", A, A) - 3).max() < 1e-13
    np.testing.assert_allclose(A, np.swapaxes(A, -1, -2))


def test_reflection_matrix_partial_fd():
    x = np.array([0.3, 0.7, -0.2])
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (reflection_matrix(x + e) - reflection_matrix(x - e)) / (2 * h)
        exact = reflection_matrix_partial(x, i)
        assert np.abs(fd - exact).max() / np.abs(exact).max() < 1e-6


def test_reflection_matrix_partial_structure():
    d = reflection_matrix_partial([0.7, 0.0, 0.0], 1)
    mask = np.ones((3, 3), bool)
    mask[0, 1] = mask[1, 0] = False
    assert np.all(d[mask] == 0.0) and d[0, 1] != 0.0
    x = random_points(50, 1.0, 1.0, seed=4)
    for i in range(3):
        assert np.abs(np.trace(reflection_matrix_partial(x, i), axis1=-2, axis2=-1)).max() < 1e-13
    with pytest.raises(ValueError):
        reflection_matrix_partial(x, 3)


def test_extend_field_value_examples():
    e1 = lambda y: np.broadcast_to([1.0, 0, 0], np.shape(y)).copy()  # noqa: E731
    e3 = lambda y: np.broadcast_to([0, 0, 1.0], np.shape(y)).copy()  # noqa: E731
    np.testing.assert_allclose(extend_field_value(e1, [0, 0, 2.0]), [1, 0, 0])
    np.testing.assert_allclose(extend_field_value(e3, [0, 0, 2.0]), [0, 0, -1])
    with pytest.raises(DomainError):
        extend_field_value(e3, [0, 0, 1.0])


def test_extend_field_value_keeps_unit_norm():
    def u(y):
        v = np.stack([np.sin(3 * y[..., 1]), np.cos(2 * y[..., 2]), y[..., 0] + 0.3], -1)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    x = random_points(500, 1.01, 2.0, seed=5)
    np.testing.assert_allclose(np.linalg.norm(extend_field_value(u, x), axis=-1), 1.0, atol=1e-14)


def test_reflection_identity_checks():
    res = reflection_identity_checks()
    assert set(res) == {"involution", "norm_sq", "det_inversion", "gradient_transport"}
    assert max(res.values()) < 1e-5


def test_rotation_to():
    for t in ([0, 0, 1.0], [0, 0, -1.0], [1.0, 0, 0], [0.6, 0.0, 0.8]):
        R = rotation_to(t)
        np.testing.assert_allclose(R @ [0, 0, 1.0], t, atol=1e-15)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-15)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_chart_examples():
    c = BoundaryChart((0.0, 0.0, 1.0), 0.2)
    np.testing.assert_allclose(c.forward([0, 0, 0.0]), [0, 0, 1.0])
    np.testing.assert_allclose(c.forward([0, 0, -0.1]), [0, 0, 0.9])
    np.testing.assert_allclose(c.jacobian_forward([0, 0, 0.0]), np.eye(3), atol=1e-15)
    with pytest.raises(DomainError):
        c.forward([0, 0, 0.3])
    with pytest.raises(DomainError):
        BoundaryChart((0.0, 0.0, 0.5))
    with pytest.raises(DomainError):
        BoundaryChart((0.0, 0.0, 1.0), 0.3)


@pytest.mark.parametrize("x0", [(0, 0, 1.0), (0, 0, -1.0), (0.6, 0, 0.8), (0, 1.0, 0)])
def test_chart_consistency(x0):
    c = BoundaryChart(x0, 0.2)
    rng = np.random.default_rng(6)
    d = rng.normal(size=(200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    y = d * (0.19 * rng.random(200) ** (1 / 3))[:, None]
    x = c.forward(y)
    np.testing.assert_allclose(c.inverse(x), y, atol=1e-12)
    # lower half-space maps inside, upper half-space outside, plane onto the sphere
    r = np.linalg.norm(x, axis=1)
    assert np.all((r < 1) == (y[:, 2] < 0))
    yp = y.copy()
    yp[:, 2] = 0.0
    np.testing.assert_allclose(np.linalg.norm(c.forward(yp), axis=1), 1.0, atol=1e-14)
    prod = c.jacobian_forward_at_inverse(x) @ c.jacobian_inverse(x)
    assert np.abs(prod - np.eye(3)).max() < 1e-10
    np.testing.assert_allclose(c.jacobian_forward_at_inverse(x), c.jacobian_forward(y), atol=1e-12)
    assert np.all(c.contains(x))


def test_chart_inverse_jacobian_fd():
    c = BoundaryChart((0.0, 0.0, 1.0), 0.2)
    y = np.array([[0.05, -0.03, 0.04], [-0.1, 0.02, -0.08]])
    x = c.forward(y)
    h = 1e-6
    fd = np.stack([(c.inverse(x + h * e) - c.inverse(x - h * e)) / (2 * h) for e in np.eye(3)], -1)
    exact = c.jacobian_inverse(x)
    assert np.abs(fd - exact).max() / np.abs(exact).max() < 1e-6


def test_chart_leading_order_is_linear_in_radius():
    ks = [BoundaryChart((0, 0, 1.0), r0).leading_order_constant() for r0 in (0.2, 0.1, 0.05)]
    # K stays bounded as r0 shrinks, so the deviation itself decays linearly
    assert max(ks) < 3.0
    assert max(ks) / min(ks) < 1.5
