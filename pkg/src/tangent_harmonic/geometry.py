"""Closed-form geometric operators on the unit ball.

Cylindrical coordinates and frames, the inversion about the unit sphere,
the reflection matrix ``A(x) = I - 2 x x^T / |x|^2``, the extension of an
interior field across the sphere, and the boundary chart that flattens a
neighbourhood of a boundary point.

All functions accept a single point of shape ``(3,)`` or a stack of points
of shape ``(..., 3)`` and broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "DomainError",
    "CylCoords",
    "to_cylindrical",
    "from_cylindrical",
    "frame_at",
    "inversion",
    "inversion_jacobian",
    "reflection_matrix",
    "reflection_matrix_partial",
    "extend_field_value",
    "rotation_to",
    "BoundaryChart",
    "reflection_identity_checks",
]

_EPS_ORIGIN = 1e-12


class DomainError(ValueError):
    """Raised when an operator is evaluated outside its domain."""


class CylCoords(NamedTuple):
    """Cylindrical coordinates ``(rho, theta, z)``.

    ``on_axis`` is True where ``rho == 0``; ``theta`` is set to 0 there and
    carries no information.
    """

    rho: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    on_axis: np.ndarray


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("points must be finite")
    return x


def _norm_sq(x: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", x, x)


def _check_nonzero(x: np.ndarray) -> np.ndarray:
    r2 = _norm_sq(x)
    if np.any(r2 < _EPS_ORIGIN**2):
        raise DomainError("operator undefined at the origin")
    return r2


def to_cylindrical(p) -> CylCoords:
    """Cylindrical coordinates of ``p``.

    ``theta`` is the two-argument arctangent mapped into ``[0, 2*pi)``.

    Parameters
    ----------
    p : array_like, shape (..., 3)

    Returns
    -------
    CylCoords
    """
    p = _as_points(p)
    rho = np.hypot(p[..., 0], p[..., 1])
    theta = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2.0 * np.pi)
    # mod can round tiny negative angles up to exactly 2*pi
    theta = np.where(theta >= 2.0 * np.pi, 0.0, theta)
    on_axis = rho == 0.0
    theta = np.where(on_axis, 0.0, theta)
    return CylCoords(rho, theta, p[..., 2].copy(), on_axis)


def from_cylindrical(rho, theta, z) -> np.ndarray:
    """Cartesian point ``(rho cos theta, rho sin theta, z)``."""
    rho, theta, z = np.broadcast_arrays(
        np.asarray(rho, float), np.asarray(theta, float), np.asarray(z, float)
    )
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=-1)


def frame_at(theta):
    """Orthonormal cylindrical frame at angle ``theta``.

    Returns
    -------
    e_rho, e_theta, e_z : ndarray, shape (..., 3)
    """
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    zero, one = np.zeros_like(theta), np.ones_like(theta)
    e_rho = np.stack([c, s, zero], axis=-1)
    e_theta = np.stack([-s, c, zero], axis=-1)
    e_z = np.stack([zero, zero, one], axis=-1)
    return e_rho, e_theta, e_z


def inversion(x) -> np.ndarray:
    """Inversion about the unit sphere, ``x / |x|^2``."""
    x = _as_points(x)
    r2 = _check_nonzero(x)
    return x / r2[..., None]


def reflection_matrix(x) -> np.ndarray:
    """Reflection matrix ``A(x) = I - 2 x x^T / |x|^2``.

    Parameters
    ----------
    x : array_like, shape (..., 3)

    Returns
    -------
    ndarray, shape (..., 3, 3)
    """
    x = _as_points(x)
    r2 = _check_nonzero(x)
    outer = x[..., :, None] * x[..., None, :]
    return np.eye(3) - 2.0 * outer / r2[..., None, None]


def inversion_jacobian(x) -> np.ndarray:
    """Jacobian of the inversion, ``A(x) / |x|^2``.

    Its determinant is ``-1 / |x|^6``.
    """
    x = _as_points(x)
    r2 = _check_nonzero(x)
    return reflection_matrix(x) / r2[..., None, None]


def reflection_matrix_partial(x, i: int) -> np.ndarray:
    """Partial derivative of ``A`` with respect to ``x_i``.

    ``-(2/|x|^2)(e_i x^T + x e_i^T) + (4 x_i / |x|^4) x x^T``.

    Parameters
    ----------
    x : array_like, shape (..., 3)
    i : int
        Axis index in ``{0, 1, 2}``.
    """
    if i not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {i}")
    x = _as_points(x)
    r2 = _check_nonzero(x)
    ei = np.zeros(3)
    ei[i] = 1.0
    ei = np.broadcast_to(ei, x.shape)
    sym = ei[..., :, None] * x[..., None, :] + x[..., :, None] * ei[..., None, :]
    outer = x[..., :, None] * x[..., None, :]
    return (
        -2.0 / r2[..., None, None] * sym
        + 4.0 * x[..., i, None, None] / r2[..., None, None] ** 2 * outer
    )


def extend_field_value(u_at: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
    """Value of the spherical-inversion extension ``A(x) u(x / |x|^2)``.

    Parameters
    ----------
    u_at : callable
        Interior field, maps points of shape ``(..., 3)`` to unit vectors.
    x : array_like, shape (..., 3)
        Points with ``|x| > 1``.
    """
    x = _as_points(x)
    r2 = _norm_sq(x)
    if np.any(r2 <= 1.0):
        raise DomainError("extension is only defined outside the closed unit ball")
    v = np.asarray(u_at(x / r2[..., None]), dtype=float)
    xv = np.einsum("...i,...i->...", x, v)
    return v - 2.0 * (xv / r2)[..., None] * x


def rotation_to(target) -> np.ndarray:
    """Smallest-angle rotation taking ``e_3`` to the unit vector ``target``.

    For ``target = -e_3`` the rotation by ``pi`` about ``e_1`` is used.
    """
    t = np.asarray(target, dtype=float)
    t = t / np.linalg.norm(t)
    c = t[2]
    if c < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.array([-t[1], t[0], 0.0])  # e_3 x t
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


@dataclass(frozen=True)
class BoundaryChart:
    """Chart flattening the unit sphere near ``base_point``.

    For the north pole the forward map is
    ``Phi(y) = (1 + y_3) (y_1, y_2, sqrt(1 - y_1^2 - y_2^2))``; other base
    points are handled by conjugating with :func:`rotation_to`.

    Parameters
    ----------
    base_point : array_like, shape (3,)
        Point on the unit sphere.
    r0 : float
        Chart radius in ``(0, 1/4)``.
    """

    base_point: tuple
    r0: float = 0.2
    rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x0 = np.asarray(self.base_point, dtype=float)
        if x0.shape != (3,) or abs(np.linalg.norm(x0) - 1.0) > 1e-12:
            raise DomainError("base point must lie on the unit sphere")
        if not 0.0 < self.r0 < 0.25:
            raise DomainError("chart radius must lie in (0, 1/4)")
        object.__setattr__(self, "base_point", tuple(x0))
        object.__setattr__(self, "rotation", rotation_to(x0))

    # north-pole formulas --------------------------------------------------
    @staticmethod
    def _phi(y):
        s = np.sqrt(1.0 - y[..., 0] ** 2 - y[..., 1] ** 2)
        return (1.0 + y[..., 2])[..., None] * np.stack([y[..., 0], y[..., 1], s], -1)

    @staticmethod
    def _phi_inv(x):
        r = np.linalg.norm(x, axis=-1)
        return np.stack([x[..., 0] / r, x[..., 1] / r, r - 1.0], -1)

    @staticmethod
    def _grad_phi(y):
        y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
        s = np.sqrt(1.0 - y1**2 - y2**2)
        a = 1.0 + y3
        zero = np.zeros_like(y1)
        return np.stack(
            [
                np.stack([a, zero, y1], -1),
                np.stack([zero, a, y2], -1),
                np.stack([-y1 * a / s, -y2 * a / s, s], -1),
            ],
            -2,
        )

    @staticmethod
    def _grad_phi_at_inv(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        r = np.linalg.norm(x, axis=-1)
        zero = np.zeros_like(x1)
        return np.stack(
            [
                np.stack([r, zero, x1 / r], -1),
                np.stack([zero, r, x2 / r], -1),
                np.stack([-x1 * r / x3, -x2 * r / x3, x3 / r], -1),
            ],
            -2,
        )

    @staticmethod
    def _grad_phi_inv(x):
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        e3 = np.array([0.0, 0.0, 1.0])
        x3e3 = x[..., 2, None] * e3
        term2 = (x3e3 - x)[..., :, None] * x[..., None, :] / r**3
        term3 = e3[:, None] * (x - e3)[..., None, :] / r
        return np.eye(3) / r + term2 + term3

    # domain checks --------------------------------------------------------
    def _check_y(self, y):
        if np.any(np.linalg.norm(y, axis=-1) >= self.r0):
            raise DomainError("chart coordinate outside the ball of radius r0")

    def _local(self, x):
        x = _as_points(x)
        xl = x @ self.rotation  # rotation^T x, row-vector form
        if np.any(xl[..., 2] <= 0.0):
            raise DomainError("point outside the chart neighbourhood")
        self._check_y(self._phi_inv(xl))
        return xl

    # public interface -----------------------------------------------------
    def forward(self, y) -> np.ndarray:
        """Chart map ``Phi(y)``."""
        y = _as_points(y)
        self._check_y(y)
        return self._phi(y) @ self.rotation.T

    def inverse(self, x) -> np.ndarray:
        """Inverse chart ``Phi^{-1}(x)``."""
        return self._phi_inv(self._local(x))

    def jacobian_forward(self, y) -> np.ndarray:
        """``grad Phi(y)``."""
        y = _as_points(y)
        self._check_y(y)
        return self.rotation @ self._grad_phi(y)

    def jacobian_forward_at_inverse(self, x) -> np.ndarray:
        """``grad Phi(Phi^{-1}(x))`` from its closed form in ``x``."""
        return self.rotation @ self._grad_phi_at_inv(self._local(x))

    def jacobian_inverse(self, x) -> np.ndarray:
        """``grad Phi^{-1}(x)``."""
        return self._grad_phi_inv(self._local(x)) @ self.rotation.T

    def contains(self, x) -> np.ndarray:
        """Boolean mask of points inside the chart neighbourhood."""
        x = _as_points(x)
        xl = x @ self.rotation
        ok = xl[..., 2] > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            y = self._phi_inv(np.where(ok[..., None], xl, 1.0))
        return ok & (np.linalg.norm(y, axis=-1) < self.r0)

    def leading_order_constant(self, n_samples: int = 2000, seed: int = 0) -> float:
        """Estimate ``K`` in ``|grad Phi^{-1}(x) - I| <= K r0`` on the chart.

        Samples chart coordinates uniformly in the ball of radius ``r0`` and
        returns the largest observed ratio of the spectral-norm deviation
        to ``r0``.
        """
        rng = np.random.default_rng(seed)
        d = rng.normal(size=(n_samples, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        y = d * (0.999 * self.r0 * rng.random(n_samples) ** (1 / 3))[:, None]
        x = self.forward(y)
        # deviation is measured in the local (north-pole) frame
        J = self._grad_phi_inv(x @ self.rotation)
        dev = np.linalg.norm(J - np.eye(3), ord=2, axis=(-2, -1))
        return float(dev.max() / self.r0)


def _test_field(x):
    # smooth analytic test field, not unit-valued
    return np.stack([np.sin(x[..., 0] + 2 * x[..., 1]), np.cos(x[..., 2]) * x[..., 0], np.exp(0.5 * x[..., 1] - x[..., 2])], -1)


def reflection_identity_checks(n_points: int = 1000, seed: int = 0, fd_step: float = 1e-4, r_range=(1.05, 2.0)) -> dict:
    """Largest relative errors of the reflection identities at random points.

    Points are drawn with radii uniform in ``r_range``. The checks are
    ``A A = I``, ``|A|^2 = 3``, ``det grad iota = -1/|x|^6`` (central
    differences of :func:`inversion`) and the transport of the gradient
    norm ``|grad (v o iota)|^2 = |grad v|^2 o iota / |x|^4`` for a smooth
    test field ``v``.

    Returns
    -------
    dict
        Check name to maximal relative error.
    """
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n_points, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = d * rng.uniform(*r_range, n_points)[:, None]
    A = reflection_matrix(x)
    r2 = _norm_sq(x)
    out = {"involution": float(np.abs(A @ A - np.eye(3)).max())}
    out["norm_sq"] = float(np.abs(np.einsum("...ij,...ij->...", A, A) - 3.0).max() / 3.0)

    def fd_jac(fn, pts):
        cols = []
        for i in range(3):
            e = np.zeros(3)
            e[i] = fd_step
            cols.append((fn(pts + e) - fn(pts - e)) / (2 * fd_step))
        return np.stack(cols, -1)

    det = np.linalg.det(fd_jac(inversion, x))
    exact = -1.0 / r2**3
    out["det_inversion"] = float(np.max(np.abs(det - exact) / np.abs(exact)))
    lhs = np.einsum("...ij,...ij->...", *(fd_jac(lambda p: _test_field(inversion(p)), x),) * 2)
    Gv = fd_jac(_test_field, inversion(x))
    rhs = np.einsum("...ij,...ij->...", Gv, Gv) / r2**2
    out["gradient_transport"] = float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))
    return out
