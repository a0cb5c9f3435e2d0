"""Energy bounds for minimizers: the competitor ``u0`` and the level-set machinery.

Upper bound
    ``u0 = (-2 z rho e_rho + (rho^2 - z^2 + 1) e_z) / |...|`` is admissible
    and has energy ``5 pi - pi^3 / 4``.
Lower bound
    ``(4/3) pi (2 sqrt 2 - 1)``, from the one-dimensional integral
    ``int_{-1}^{1} sqrt(c^2 (2 - c^2)) dc = (2/3)(2 sqrt 2 - 1)``.
Level-set coordinates
    Level curves ``lambda(t)`` of ``u_rho = c`` solve an autonomous ODE with
    an implicit cubic solution; coordinates ``(t, c)`` have Jacobian
    determinant ``-1``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "E_UPPER",
    "E_LOWER",
    "LOWER_INTEGRAL",
    "competitor_u0",
    "grad_norm_sq_u0",
    "upper_bound",
    "lower_bound",
    "LevelSetParams",
    "LevelSetTrajectory",
    "level_set_ode_solve",
    "lambda_rho_explicit",
    "levelset_jacobian_check",
    "level_set_csv",
]

E_UPPER = 5 * np.pi - np.pi**3 / 4
LOWER_INTEGRAL = (2.0 / 3.0) * (2 * np.sqrt(2.0) - 1)
E_LOWER = (4.0 / 3.0) * np.pi * (2 * np.sqrt(2.0) - 1)


def competitor_u0(x) -> np.ndarray:
    """The competitor ``u0`` at points ``x`` of shape ``(..., 3)``.

    The origin maps to ``e_3``.
    """
    x = np.asarray(x, float)
    z = x[..., 2]
    rho2 = x[..., 0] ** 2 + x[..., 1] ** 2
    v = np.stack([-2 * z * x[..., 0], -2 * z * x[..., 1], rho2 - z**2 + 1], axis=-1)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def grad_norm_sq_u0(rho, z) -> np.ndarray:
    """``|grad u0|^2 = 4 (rho^2 + 2 z^2) / ((rho^2 + (z-1)^2)(rho^2 + (z+1)^2))``.

    Returns ``+inf`` at the poles ``(0, +-1)``.
    """
    rho, z = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
    den = (rho**2 + (z - 1) ** 2) * (rho**2 + (z + 1) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 4 * (rho**2 + 2 * z**2) / den
    return np.where(den == 0, np.inf, out)


def _upper_quadrature(eps: float, rtol: float) -> float:
    """``pi int int |grad u0|^2 rho d rho d z`` with the pole disks of radius ``eps`` removed.

    Polar coordinates about the origin; the integrand is even in ``z`` so
    only the upper quarter disk is integrated.
    """
    phi_eps = np.arcsin(eps)

    def r_max(phi):
        if phi < phi_eps:
            return np.cos(phi) - np.sqrt(eps**2 - np.sin(phi) ** 2)
        return 1.0

    def inner(phi):
        s, c = np.sin(phi), np.cos(phi)
        f = lambda r: grad_norm_sq_u0(r * s, r * c) * r * s * r
        return integrate.quad(f, 0.0, r_max(phi), epsabs=0, epsrel=rtol, limit=200)[0]

    parts = [
        integrate.quad(inner, 0.0, phi_eps, epsabs=0, epsrel=rtol, limit=200),
        integrate.quad(inner, phi_eps, 4 * phi_eps, epsabs=0, epsrel=rtol, limit=200),
        integrate.quad(inner, 4 * phi_eps, np.pi / 2, epsabs=0, epsrel=rtol, limit=200),
    ]
    return 2 * np.pi * sum(p[0] for p in parts)


def upper_bound(eps=(1e-2, 5e-3, 2.5e-3), rtol: float = 1e-11, return_details: bool = False, quadrature: bool = True):
    """Exact energy of ``u0`` and its quadrature.

    The quadrature excludes disks of radius ``eps`` around the poles and
    removes the ``O(eps)`` and ``O(eps^2)`` terms of the truncation error by
    Richardson extrapolation over halving radii.

    Returns
    -------
    exact, quadrature : float
        Plus a dict with the truncated values and ``int |grad u0|^2`` when
        ``return_details`` is set. The quadrature is None when
        ``quadrature`` is false, which skips the integration.

    Raises
    ------
    RuntimeError
        If the extrapolated estimates disagree by more than ``1e-6``
        relative, meaning the quadrature did not converge.
    """
    if not quadrature:
        return (E_UPPER, None, {}) if return_details else (E_UPPER, None)
    eps = tuple(sorted(eps, reverse=True))
    if len(eps) != 3 or not np.allclose([eps[1] / eps[0], eps[2] / eps[1]], 0.5):
        raise ValueError("eps must be three radii, each half the previous")
    vals = [_upper_quadrature(e, rtol) for e in eps]
    r1 = [2 * vals[1] - vals[0], 2 * vals[2] - vals[1]]
    quad = (4 * r1[1] - r1[0]) / 3
    if abs(r1[1] - quad) > 1e-3 * abs(quad):
        raise RuntimeError(f"pole extrapolation did not converge: {r1[1]!r} vs {quad!r}")
    if not return_details:
        return E_UPPER, quad
    return E_UPPER, quad, {
        "truncated": dict(zip(eps, vals)),
        "first_order": r1,
        "dirichlet_integral": 2 * quad,
        "dirichlet_integral_exact": 10 * np.pi - np.pi**3 / 2,
    }


def lower_bound(return_integral: bool = False):
    """Exact lower bound and its quadrature ``2 pi int sqrt(c^2 (2 - c^2)) dc``.

    Returns
    -------
    exact, quadrature : float
        Plus the one-dimensional integral when ``return_integral`` is set.
    """
    f = lambda c: np.sqrt(c**2 * (2 - c**2))
    # even integrand with a kink at c = 0
    I = 2 * integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]
    if return_integral:
        return E_LOWER, 2 * np.pi * I, I
    return E_LOWER, 2 * np.pi * I


# ---------------------------------------------------------------------------
# level sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelSetParams:
    """Constants of the level curve ``u_rho = c``.

    ``alpha = c (1 - c^2)``, ``b = (3/4) alpha c^3`` and
    ``c2 = -sqrt(108 b^3 / c1^4)``.
    """

    c: float
    c1: float = 1.0

    def __post_init__(self):
        if not 0 < abs(self.c) < 1:
            raise ValueError("c must satisfy 0 < |c| < 1")
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")

    @property
    def alpha(self) -> float:
        return self.c * (1 - self.c**2)

    @property
    def gamma(self) -> float:
        return np.sqrt(1 - self.c**2)

    @property
    def b(self) -> float:
        return 0.75 * self.alpha * self.c**3

    @property
    def c2(self) -> float:
        return -np.sqrt(108 * self.b**3 / self.c1**4)

    @property
    def ode_coefficient(self) -> float:
        """``(1 - gamma^2) c^2 (1 - c^2)``."""
        return (1 - self.gamma**2) * self.c**2 * (1 - self.c**2)

    @property
    def t_max(self) -> float:
        """End ``-2 c2`` of the interval where the explicit solution is real."""
        return -2 * self.c2

    def implicit_residual(self, t, lam):
        """``(c2 + t)^2 - (lam + 3b/c1)(lam - 6b/c1)^2 / c1``."""
        b, c1, c2 = self.b, self.c1, self.c2
        return (c2 + t) ** 2 - (lam + 3 * b / c1) * (lam - 6 * b / c1) ** 2 / c1


def lambda_rho_explicit(p: LevelSetParams, t) -> np.ndarray:
    """Closed-form ``lambda_rho(t)`` on ``0 <= t <= -2 c2``.

    The angle uses the two-argument arctangent so that the branch stays
    continuous where ``(c2 + t)^2 = c2^2 / 2``.
    """
    t = np.asarray(t, float)
    c2 = p.c2
    if np.any(t < 0) or np.any(t > p.t_max * (1 + 1e-12)):
        raise ValueError("t outside [0, -2 c2]")
    num = -(c2 + t) * np.sqrt(np.clip(t * (-2 * c2 - t), 0, None))
    A = np.mod(np.arctan2(num, (c2 + t) ** 2 - 0.5 * c2**2), 2 * np.pi)
    return 3 * p.b / p.c1 * (1 - np.cos(A / 3) + np.sqrt(3) * np.sin(A / 3))


@dataclass
class LevelSetTrajectory:
    """Integrated level curve."""

    params: LevelSetParams
    t: np.ndarray
    lam_rho: np.ndarray
    dlam_rho: np.ndarray
    lam_z: np.ndarray

    @property
    def implicit_residual(self) -> np.ndarray:
        return self.params.implicit_residual(self.t, self.lam_rho)

    @property
    def relative_implicit_residual(self) -> np.ndarray:
        return self.implicit_residual / self.params.c2**2

    @property
    def explicit_deviation(self) -> np.ndarray:
        return self.lam_rho - lambda_rho_explicit(self.params, self.t)

    def departure_angle(self, index: int = 1) -> float:
        """``atan(dlam_rho / dlam_z)`` near ``t = 0``."""
        dz = self.params.alpha / self.lam_rho[index]
        return float(np.arctan2(self.dlam_rho[index], dz))


def _rhs(p: LevelSetParams):
    K = p.ode_coefficient
    a = p.alpha

    def f(y):
        lam, dlam, _ = y
        return np.array([dlam, -dlam**2 / (2 * lam) - K / (2 * lam**3), a / lam])

    return f


def level_set_ode_solve(p: LevelSetParams, t_end: float | None = None, steps: int = 20000, t_series: float | None = None, z0: float = 0.0) -> LevelSetTrajectory:
    """Integrate ``lam'' = -lam'^2 / (2 lam) - K / (2 lam^3)`` with ``lam lam_z' = alpha``.

    The start at ``lam_rho(0) = 0`` is singular, so the trajectory begins
    at ``t_series`` from the expansion
    ``lam_rho ~ (2 sqrt 6 b) / (c1 sqrt|c2|) sqrt t``. Classical RK4 is then
    used on a mesh that is geometric near both ends of ``[0, -2 c2]``.

    Parameters
    ----------
    t_end : float, optional
        Defaults to ``0.9 (-2 c2)``; must lie below ``-2 c2``.
    steps : int
        Number of RK4 steps.
    t_series : float, optional
        Bootstrap time, default ``1e-8 (-2 c2)``.

    Raises
    ------
    RuntimeError
        If ``lam_rho`` becomes non-positive.
    """
    T = p.t_max
    t_end = 0.9 * T if t_end is None else float(t_end)
    if not 0 < t_end < T:
        raise ValueError("t_end must lie in (0, -2 c2)")
    ts = 1e-8 * T if t_series is None else float(t_series)
    k = 2 * np.sqrt(6) * p.b / (p.c1 * np.sqrt(abs(p.c2)))
    beta = 3 * p.b / p.c1
    lam0 = k * np.sqrt(ts)
    # polish the leading-order value on the cubic
    cubic = lambda l: l**2 * (l - 3 * beta) - p.c1 * (ts**2 + 2 * p.c2 * ts)
    lam0 = optimize.newton(cubic, lam0, tol=1e-15 * max(lam0, 1e-300), maxiter=50)
    dlam0 = 2 * p.c1**2 * (p.c2 + ts) / (3 * lam0 * (p.c1 * lam0 - 6 * p.b))
    half = 0.5 * T
    n1 = steps // 2
    left = np.geomspace(ts, half, n1 + 1)
    if t_end <= half:
        mesh = left[left <= t_end]
        mesh = np.append(mesh, t_end) if mesh[-1] < t_end else mesh
    else:
        right = T - np.geomspace(half, T - t_end, steps - n1 + 1)
        mesh = np.concatenate([left, right[1:]])
    f = _rhs(p)
    y = np.array([lam0, dlam0, z0])
    out = np.empty((len(mesh), 3))
    out[0] = y
    for i in range(len(mesh) - 1):
        h = mesh[i + 1] - mesh[i]
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if y[0] <= 0 or not np.all(np.isfinite(y)):
            raise RuntimeError(f"lambda_rho became non-positive at t = {mesh[i + 1]:.3g}")
        out[i + 1] = y
    return LevelSetTrajectory(p, mesh, out[:, 0], out[:, 1], out[:, 2])


def level_set_csv(cs=(0.25, 0.5, 0.75), **kw) -> str:
    """CSV rows ``c, alpha, b, departure_angle, target_angle, implicit_residual``."""
    buf = io.StringIO()
    buf.write("c,alpha,b,departure_angle,target_angle,implicit_residual,relative_implicit_residual\n")
    for c in cs:
        p = LevelSetParams(c)
        tr = level_set_ode_solve(p, **kw)
        ang = tr.departure_angle()
        tgt = np.arctan(c / np.sqrt(1 - c**2))
        res = np.abs(tr.implicit_residual).max()
        rel = np.abs(tr.relative_implicit_residual).max()
        buf.write(f"{c:.17g},{p.alpha:.17g},{p.b:.17g},{ang:.17g},{tgt:.17g},{res:.17g},{rel:.17g}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Jacobian of level-set coordinates
# ---------------------------------------------------------------------------

FIXTURES = {
    "rho": (
        lambda r, z: r,
        lambda r, z: (np.ones_like(r), np.zeros_like(r)),
    ),
    "rho_1mz2": (
        lambda r, z: 0.5 * r * (1 - z**2),
        lambda r, z: (0.5 * (1 - z**2), -r * z),
    ),
}


def _rk4_flow(grad, x0, t, n_steps):
    """Flow of the field ``(-d_z u, d_rho u)`` from ``x0`` for time ``t``."""
    def V(x):
        gr, gz = grad(x[0], x[1])
        return np.array([-gz, gr])

    x = np.array(x0, float)
    h = t / n_steps
    for _ in range(n_steps):
        k1 = V(x)
        k2 = V(x + 0.5 * h * k1)
        k3 = V(x + 0.5 * h * k2)
        k4 = V(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def levelset_jacobian_check(
    fixture="rho",
    c_values=(0.1, 0.2, 0.3),
    t_values=(0.1, 0.25, 0.5),
    z_start: float = 0.0,
    n_steps: int = 200,
    fd_step: float = 1e-4,
    rho_bracket=(1e-6, 1.0),
) -> float:
    """Largest ``|det(d Phi / d(t, c)) + 1|`` for level-set coordinates.

    ``Phi(t, c)`` flows the point of the line ``z = z_start`` where
    ``u_rho = c`` along ``(-d_z u_rho, d_rho u_rho)`` for time ``t``. The
    Jacobian is formed by central differences.

    Parameters
    ----------
    fixture : str or (callable, callable)
        Name in ``FIXTURES`` or a pair ``(u_rho, grad u_rho)``.
    n_steps : int
        RK4 steps of the flow for the largest ``t``.

    Raises
    ------
    ValueError
        If ``grad u_rho`` vanishes along a computed curve.
    """
    u, grad = FIXTURES[fixture] if isinstance(fixture, str) else fixture

    def start(c):
        return optimize.brentq(lambda r: u(r, z_start) - c, *rho_bracket, xtol=1e-15, rtol=1e-15)

    t_top = max(t_values)

    def Phi(t, c):
        x0 = (start(c), z_start)
        steps = max(1, int(np.ceil(n_steps * abs(t) / t_top)))
        x = _rk4_flow(grad, x0, t, steps)
        gr, gz = grad(x[0], x[1])
        if np.hypot(gr, gz) < 1e-8:
            raise ValueError("degenerate gradient of u_rho along the level curve")
        return x

    worst = 0.0
    d = fd_step
    for c in c_values:
        for t in t_values:
            dt = (Phi(t + d, c) - Phi(t - d, c)) / (2 * d)
            dc = (Phi(t, c + d) - Phi(t, c - d)) / (2 * d)
            det = dt[0] * dc[1] - dc[0] * dt[1]
            worst = max(worst, abs(det + 1.0))
    return worst
