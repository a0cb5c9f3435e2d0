"""Energy functionals and Euler-Lagrange residuals.

Discrete schemes
----------------
Cartesian grids (:class:`~tangent_harmonic.fields.Field3`)
    Edge-lumped Dirichlet energy ``(h/2) sum_e w_e |u_i - u_j|^2`` where the
    edge weight ``w_e`` is the mean volume fraction of the four cells that
    share the edge.
Cylindrical grids (:class:`~tangent_harmonic.fields.CylField`)
    The energy split into radial/axial gradient, theta-derivative,
    zeroth-order and cross (``T``) terms, each summed over links of the
    tensor grid so that the algebraic relations between the split energies
    hold exactly at the discrete level.
Polar half-disk (:class:`~tangent_harmonic.fields.PsiField`)
    A symmetric graph Laplacian in ``(r, phi)`` with exact metric weights and
    a half-link Dirichlet condition on the arc.
Callables
    Tensor Gauss quadrature on spherical shells, geometrically graded toward
    the shell boundaries and the poles, with central finite differences for
    derivatives.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fields import CylField, CylGrid, Field3, HalfDiskMesh, PsiField
from .geometry import DomainError, frame_at, to_cylindrical

__all__ = [
    "dirichlet_energy",
    "energy_gradient",
    "shell_quadrature",
    "dirichlet_energy_quadrature",
    "exterior_energy",
    "to_cylfield",
    "cylindrical_energy_terms",
    "t_functional",
    "symmetrization_energy",
    "theta_derivative_energy",
    "ReducedOperator",
    "reduced_energy",
    "harmonic_residual",
    "residual_decomposition",
    "reflected_el_rhs",
    "reflected_el_residual",
    "EnergyReport",
]


# ---------------------------------------------------------------------------
# Cartesian grid energy
# ---------------------------------------------------------------------------


def _slab_energy(v, w_axis, axis, lo, hi):
    # edges lo..hi-1 along ``axis`` (edge i joins node i and i+1)
    a = np.take(v, np.arange(lo, hi), axis=axis)
    b = np.take(v, np.arange(lo + 1, hi + 1), axis=axis)
    d = a - b
    w = np.take(w_axis, np.arange(lo, hi), axis=axis)
    return float(np.sum(w * np.einsum("...i,...i->...", d, d)))


def _chunks(n_edges, n_chunks):
    bounds = np.linspace(0, n_edges, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def dirichlet_energy(f: Field3, threads: int = 1, deterministic: bool = True) -> float:
    """Discrete Dirichlet energy ``(1/2) int |grad u|^2`` of a grid field.

    Parameters
    ----------
    f : Field3
    threads : int
        Worker threads for the slab sums.
    deterministic : bool
        Sum a fixed partition of slabs in a fixed order, so the result does
        not depend on ``threads``. When False the partition follows
        ``threads`` and partial sums are added in completion order.

    Raises
    ------
    ValueError
        If the grid has no active nodes.
    """
    g = f.grid
    if not np.any(g.active):
        raise ValueError("empty domain mask")
    n_edges = g.N - 1
    n_chunks = 8 if deterministic else max(1, threads)
    tasks = [(ax, lo, hi) for ax in range(3) for lo, hi in _chunks(n_edges, n_chunks)]
    weights = [g.edge_weights(ax) for ax in range(3)]

    def run(t):
        ax, lo, hi = t
        return _slab_energy(f.values, weights[ax], ax, lo, hi)

    if threads <= 1:
        parts = [run(t) for t in tasks]
        total = math.fsum(parts) if deterministic else float(np.sum(parts))
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            if deterministic:
                parts = list(ex.map(run, tasks))
                total = math.fsum(parts)
            else:
                total = 0.0
                for fut in as_completed([ex.submit(run, t) for t in tasks]):
                    total += fut.result()
    return 0.5 * g.h * total


def energy_gradient(f: Field3) -> np.ndarray:
    """Gradient of :func:`dirichlet_energy` with respect to the node values.

    Returns
    -------
    ndarray, shape (N, N, N, 3)
        Zero at inactive nodes.
    """
    g = f.grid
    v = f.values
    out = np.zeros_like(v)
    for ax in range(3):
        w = g.edge_weights(ax)[..., None]
        n = g.N - 1
        a = np.take(v, np.arange(n), axis=ax)
        b = np.take(v, np.arange(1, n + 1), axis=ax)
        flux = w * (a - b)
        lo = [slice(None)] * 4
        hi = [slice(None)] * 4
        lo[ax] = slice(0, n)
        hi[ax] = slice(1, n + 1)
        out[tuple(lo)] += flux
        out[tuple(hi)] -= flux
    out *= g.h
    out[~g.active] = 0.0
    return out


# ---------------------------------------------------------------------------
# Quadrature for callables
# ---------------------------------------------------------------------------


def _graded_gauss(a, b, levels, order, grade_lo=True, grade_hi=True):
    """Composite Gauss-Legendre rule on [a, b] with panels halving toward the ends."""
    s = [0.0, 0.5, 1.0]
    lo = [0.5**k for k in range(2, levels + 2)] if grade_lo else []
    hi = [1.0 - 0.5**k for k in range(2, levels + 2)] if grade_hi else []
    s = np.unique(np.array(s + lo + hi))
    x, w = np.polynomial.legendre.leggauss(order)
    brk = a + (b - a) * s
    pts, wts = [], []
    for p, q in zip(brk[:-1], brk[1:]):
        pts.append(0.5 * (q - p) * x + 0.5 * (q + p))
        wts.append(0.5 * (q - p) * w)
    return np.concatenate(pts), np.concatenate(wts)


@lru_cache(maxsize=16)
def shell_quadrature(r0: float, r1: float, levels: int = 10, order: int = 8, n_azimuth: int = 16):
    """Points and weights integrating over ``r0 < |x| < r1``.

    Gauss panels in ``r`` and in the polar angle are refined
    geometrically toward both ends, which resolves point singularities on
    the shell boundaries at the poles. The azimuth uses the periodic
    midpoint rule.

    Returns
    -------
    points : ndarray, shape (k, 3)
    weights : ndarray, shape (k,)
    """
    r, wr = _graded_gauss(r0, r1, levels, order, grade_lo=r0 > 0)
    th, wt = _graded_gauss(0.0, np.pi, levels, order)
    wt = wt * np.sin(th)
    ph = (np.arange(n_azimuth) + 0.5) * 2 * np.pi / n_azimuth
    wp = np.full(n_azimuth, 2 * np.pi / n_azimuth)
    R, T, P = np.meshgrid(r, th, ph, indexing="ij")
    S = np.sin(T)
    pts = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * np.cos(T)], -1).reshape(-1, 3)
    W = (wr[:, None, None] * r[:, None, None] ** 2) * wt[None, :, None] * wp[None, None, :]
    pts.setflags(write=False)
    W = W.ravel()
    W.setflags(write=False)
    return pts, W


def _fd_jacobian(u: Callable, x: np.ndarray, h: float):
    """Value and central-difference Jacobian ``G[..., i, j] = d_j u_i``."""
    val = u(x)
    G = np.empty(x.shape[:-1] + (3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        G[..., :, j] = (u(x + e) - u(x - e)) / (2 * h)
    return val, G


def _fd_step(u):
    return 0.25 * u.grid.h if isinstance(u, Field3) else 1e-6


def _integrate(fn, pts, wts, chunk=100_000):
    total = 0.0
    for s in range(0, len(pts), chunk):
        total += float(np.dot(fn(pts[s : s + chunk]), wts[s : s + chunk]))
    return total


def dirichlet_energy_quadrature(u: Callable, r0: float = 0.0, r1: float = 1.0, **rule) -> float:
    """``(1/2) int_{r0<|x|<r1} |grad u|^2`` for a callable field."""
    pts, wts = shell_quadrature(r0, r1, **rule)
    h = _fd_step(u)

    def dens(x):
        _, G = _fd_jacobian(u, x, h)
        return 0.5 * np.einsum("...ij,...ij->...", G, G)

    return _integrate(dens, pts, wts)


def exterior_energy(w: Callable, return_breakdown: bool = False, **rule):
    """Exterior energy of a field ``w`` on the annulus ``1 < |x| < 2``.

    ``4 pi + (1/2) int (1/|x|^2) [ |grad w|^2 + (4/|x|^4)(w.x)^2
    + (4/|x|^2) x.((w.grad) w) - (4/|x|^2)(w.x) div w ]``.

    Parameters
    ----------
    w : callable or Field3
        Field on the annulus, typically the extension of an interior field.
    return_breakdown : bool
        Also return the four integral terms and the constant.
    **rule
        Options forwarded to :func:`shell_quadrature`.
    """
    pts, wts = shell_quadrature(1.0, 2.0, **rule)
    h = _fd_step(w)
    terms = np.zeros(4)
    for s in range(0, len(pts), 100_000):
        x = pts[s : s + 100_000]
        ww = wts[s : s + 100_000]
        v, G = _fd_jacobian(w, x, h)
        r2 = np.einsum("...i,...i->...", x, x)
        wx = np.einsum("...i,...i->...", v, x)
        grad2 = np.einsum("...ij,...ij->...", G, G)
        conv = np.einsum("...i,...ij,...j->...", x, G, v)
        div = np.trace(G, axis1=-2, axis2=-1)
        pref = 0.5 / r2
        terms += [
            np.dot(pref * grad2, ww),
            np.dot(pref * 4 * wx**2 / r2**2, ww),
            np.dot(pref * 4 * conv / r2, ww),
            np.dot(-pref * 4 * wx * div / r2, ww),
        ]
    total = 4 * np.pi + float(terms.sum())
    if return_breakdown:
        names = ("gradient", "normal_sq", "convective", "divergence")
        bd = {"constant": 4 * np.pi, **{k: float(t) for k, t in zip(names, terms)}}
        return total, bd
    return total


# ---------------------------------------------------------------------------
# Cylindrical energies
# ---------------------------------------------------------------------------


def to_cylfield(u, n_rho: int = 32, n_theta: int = 64, n_z: int = 64) -> CylField:
    """Sample a callable or :class:`Field3` onto a cylindrical tensor grid."""
    if isinstance(u, CylField):
        return u
    return CylField.from_function(u, CylGrid(n_rho, n_theta, n_z))


def _sector_mask(g: CylGrid, sector):
    if sector is None:
        return np.ones(g.n_theta, bool), True
    t1, t2 = sector
    if not t1 < t2:
        raise ValueError("degenerate sector: need theta1 < theta2")
    full = t2 - t1 >= 2 * np.pi - 1e-12
    return (g.theta >= t1) & (g.theta < t2), full


def cylindrical_energy_terms(f: CylField, sector=None, axis_cut: float = 0.0) -> dict:
    """Split energy terms of a :class:`CylField` over an optional theta-sector.

    Returns a dict with

    ``grad_rz``  ``int (rho/2)(|d_rho u|^2 + |d_z u|^2)``
    ``theta_sq`` ``int (1/(2 rho)) sum_a (d_theta u_a)^2``
    ``zero``     ``int (1/(2 rho))(u_rho^2 + u_theta^2)``
    ``cross``    ``int (1/rho)(u_rho d_theta u_theta - u_theta d_theta u_rho)``

    all with respect to ``d rho d theta d z``, the components being the
    cylindrical coefficients. Only links with both ends inside the ball and
    inside the sector are counted. Nodes with ``rho < axis_cut`` are
    dropped.
    """
    g = f.grid
    tmask, full = _sector_mask(g, sector)
    inside = g.inside & (g.rho[:, None] >= axis_cut)
    ins3 = inside[:, None, :] & tmask[None, :, None]
    U = np.stack(f.components, axis=-1)
    vol = g.h_rho * g.h_z * g.dtheta
    rho = g.rho[:, None, None]

    # rho links
    d = U[1:] - U[:-1]
    m = ins3[1:] & ins3[:-1]
    rf = 0.5 * (g.rho[1:] + g.rho[:-1])[:, None, None]
    grad_rz = np.sum(m * rf / 2 * np.sum(d**2, -1)) / g.h_rho**2
    # z links
    d = U[:, :, 1:] - U[:, :, :-1]
    m = ins3[:, :, 1:] & ins3[:, :, :-1]
    grad_rz += np.sum(m * rho / 2 * np.sum(d**2, -1)) / g.h_z**2
    # theta links, periodic unless the sector is a proper arc
    Un = np.roll(U, -1, axis=1)
    m = ins3 & np.roll(ins3, -1, axis=1)
    if not full:
        m[:, -1, :] = False
    d = Un - U
    theta_sq = np.sum(m / (2 * rho) * np.sum(d**2, -1)) / g.dtheta**2
    cross = np.sum(m / rho * (U[..., 0] * Un[..., 1] - U[..., 1] * Un[..., 0])) / g.dtheta
    zero = np.sum(ins3 / (2 * rho) * (U[..., 0] ** 2 + U[..., 1] ** 2))
    return {
        "grad_rz": float(grad_rz * vol),
        "theta_sq": float(theta_sq * vol),
        "zero": float(zero * vol),
        "cross": float(cross * vol),
    }


def _as_cyl(u, cyl_grid):
    if isinstance(u, CylField):
        return u, 0.0
    if cyl_grid is None:
        if isinstance(u, Field3):
            n = u.grid.n
            cyl_grid = CylGrid(max(n // 2, 2), 4 * n, n)
        else:
            cyl_grid = CylGrid(32, 64, 64)
    cut = 2 * u.grid.h if isinstance(u, Field3) else 0.0
    return CylField.from_function(u, cyl_grid), cut


def t_functional(u, cyl_grid: CylGrid | None = None) -> float:
    """``T(u) = int rho^-2 (u_rho d_theta u_theta - u_theta d_theta u_rho) dx``.

    Theta-derivatives are differences along sampled circles. For a
    :class:`Field3` input the circles have ``4 n`` samples and the shell
    ``rho < 2 h`` around the axis is excluded.
    """
    f, cut = _as_cyl(u, cyl_grid)
    return cylindrical_energy_terms(f, axis_cut=cut)["cross"]


def symmetrization_energy(u, sector=None, cyl_grid: CylGrid | None = None) -> float:
    """Modified energy with halved theta-derivative weight and no ``T`` term.

    ``int [(rho/2)(|d_rho u|^2 + |d_z u|^2) + (1/(4 rho)) sum_a (d_theta u_a)^2
    + (1/(2 rho))(u_rho^2 + u_theta^2)] d rho d theta d z`` over the sector
    ``theta1 <= theta < theta2`` (full circle when ``sector`` is None).
    """
    f, cut = _as_cyl(u, cyl_grid)
    t = cylindrical_energy_terms(f, sector=sector, axis_cut=cut)
    return t["grad_rz"] + 0.5 * t["theta_sq"] + t["zero"]


def theta_derivative_energy(u, cyl_grid: CylGrid | None = None) -> float:
    """``sum_a int (d_theta u_a)^2 / rho^2 dx`` over cylindrical coefficients."""
    f, cut = _as_cyl(u, cyl_grid)
    return 2.0 * cylindrical_energy_terms(f, axis_cut=cut)["theta_sq"]


def cylindrical_dirichlet_energy(u, cyl_grid: CylGrid | None = None) -> float:
    """Dirichlet energy on a cylindrical grid, the sum of all split terms."""
    f, cut = _as_cyl(u, cyl_grid)
    return float(sum(cylindrical_energy_terms(f, axis_cut=cut).values()))


__all__.append("cylindrical_dirichlet_energy")


# ---------------------------------------------------------------------------
# Reduced energy
# ---------------------------------------------------------------------------


class ReducedOperator:
    """Discrete reduced energy on a polar half-disk mesh.

    ``E(psi) = pi int (|grad psi|^2 + sin^2(psi) / rho^2) rho d rho d z``,
    written in polar coordinates as ``(1/2) q^T L q - b.q + c
    + pi sum_k sin^2(q_k) pw_k`` where ``L`` is a weighted graph Laplacian
    (radial links, angular links, and half-links to the arc carrying the
    boundary data) and ``pw = dr dphi / sin(phi)`` is the potential weight.
    No condition is imposed along the axis.
    """

    def __init__(self, mesh: HalfDiskMesh, branch: int = -1):
        self.mesh = mesh
        self.branch = branch
        m, n_phi = mesh.shape
        dr, dp = mesh.dr, mesh.dphi
        r, p = mesh.r, mesh.phi
        idx = np.arange(m * n_phi).reshape(m, n_phi)
        rf = 0.5 * (r[:-1] + r[1:])
        w_r = (rf[:, None] ** 2 * np.sin(p)[None, :] * dp / dr).ravel()
        w_p = np.broadcast_to(np.sin(0.5 * (p[:-1] + p[1:]))[None, :] * dr / dp, (m, n_phi - 1)).ravel()
        I = np.concatenate([idx[:-1].ravel(), idx[:, :-1].ravel()])
        J = np.concatenate([idx[1:].ravel(), idx[:, 1:].ravel()])
        W = np.concatenate([w_r, w_p])
        n = m * n_phi
        L = sp.coo_matrix(
            (np.concatenate([W, W, -W, -W]), (np.concatenate([I, J, I, J]), np.concatenate([I, J, J, I]))),
            shape=(n, n),
        ).tocsr()
        # half-link from the outer ring to the arc r = 1
        ring = idx[-1]
        bw = np.sin(p) * dp / (dr / 2)
        bg = mesh.boundary_values(branch)
        L = L + sp.diags(np.bincount(ring, bw, minlength=n))
        self.L = (2 * np.pi * L).tocsr()
        self.bvec = 2 * np.pi * np.bincount(ring, bw * bg, minlength=n)
        self.const = np.pi * float(np.sum(bw * bg**2))
        self.pw = (dr * dp / np.sin(mesh.phi))[None, :].repeat(m, 0).ravel()

    def energy(self, psi) -> float:
        q = np.asarray(psi, float).ravel()
        s = np.sin(q)
        return float(0.5 * q @ (self.L @ q) - self.bvec @ q + self.const + np.pi * np.sum(s * s * self.pw))

    def gradient(self, psi) -> np.ndarray:
        q = np.asarray(psi, float).ravel()
        return self.L @ q - self.bvec + np.pi * np.sin(2 * q) * self.pw

    def metric(self, psi=None, floor: float = 0.05):
        """Positive-definite metric ``L + diag(2 pi max(cos 2 psi, floor) pw)``.

        It bounds the convex part of the Hessian and serves as the
        preconditioner of the reduced gradient flow.
        """
        c = np.ones_like(self.pw) if psi is None else np.maximum(np.cos(2 * np.ravel(psi)), floor)
        return (self.L + sp.diags(2 * np.pi * c * self.pw)).tocsc()


@lru_cache(maxsize=8)
def _operator(m, n_phi, branch):
    return ReducedOperator(HalfDiskMesh(m, n_phi), branch)


def reduced_energy(p: PsiField) -> float:
    """Dirichlet energy of the equivariant lift of ``p``.

    ``pi int_D (|d_rho psi|^2 + |d_z psi|^2 + sin^2(psi)/rho^2) rho d rho d z``
    including the boundary data on the arc.
    """
    return _operator(p.mesh.m, p.mesh.n_phi, p.branch).energy(p.psi)


# ---------------------------------------------------------------------------
# Euler-Lagrange residuals
# ---------------------------------------------------------------------------


def _fd_second(u, x, h):
    """Value, Jacobian and Laplacian by central differences."""
    val = u(x)
    G = np.empty(x.shape[:-1] + (3, 3))
    lap = np.zeros_like(val)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        up, um = u(x + e), u(x - e)
        G[..., :, j] = (up - um) / (2 * h)
        lap += (up - 2 * val + um) / h**2
    return val, G, lap


def _field_and_step(u, h):
    if isinstance(u, Field3):
        return u, u.grid.h, u.grid
    if h is None:
        raise ValueError("a step h is required for callable fields")
    return u, float(h), None


def harmonic_residual(u, x, h: float | None = None) -> np.ndarray:
    """``r = -Lap u - |grad u|^2 u`` by central second differences.

    Parameters
    ----------
    u : Field3 or callable
        For a :class:`Field3` the step is the grid spacing and ``x`` should
        be a node.
    x : array_like, shape (..., 3)
    h : float, optional
        Difference step for callables.

    Raises
    ------
    DomainError
        If a point is closer than ``2 h`` to the boundary of the ball.
    """
    u, h, grid = _field_and_step(u, h)
    x = np.asarray(x, float)
    R = grid.R if grid is not None else 1.0
    if np.any(np.linalg.norm(x, axis=-1) > R - 2 * h):
        raise DomainError("residual point closer than 2h to the boundary")
    val, G, lap = _fd_second(u, x, h)
    g2 = np.einsum("...ij,...ij->...", G, G)
    return -lap - g2[..., None] * val


def residual_decomposition(u, x, h: float | None = None) -> dict:
    """Components of the harmonic residual in the frame ``(e_theta, u, w)``.

    ``w = u_z e_rho - u_rho e_z``. For an equivariant field with
    ``u_theta = 0`` the first two components are discretization error,
    while the ``w`` component is the residual of the reduced equation.
    """
    x = np.asarray(x, float)
    r = harmonic_residual(u, x, h)
    val = u(x)
    cyl = to_cylindrical(x)
    e_rho, e_theta, e_z = frame_at(cyl.theta)
    ur = np.einsum("...i,...i->...", val, e_rho)
    uz = val[..., 2]
    w = uz[..., None] * e_rho - ur[..., None] * e_z
    dot = lambda a, b: np.einsum("...i,...i->...", a, b)
    return {"e_theta": dot(r, e_theta), "u": dot(r, val), "w": dot(r, w)}


def reflected_el_rhs(x, w, G, lap=None) -> np.ndarray:
    """Right-hand side ``F`` of ``-Lap w = F`` for the exterior energy.

    Parameters
    ----------
    x : ndarray, shape (..., 3)
    w : ndarray, shape (..., 3)
        Field values.
    G : ndarray, shape (..., 3, 3)
        Jacobian ``G[..., i, j] = d_j w_i``.
    """
    r2 = np.einsum("...i,...i->...", x, x)[..., None]
    wx = np.einsum("...i,...i->...", w, x)[..., None]
    div = np.trace(G, axis1=-2, axis2=-1)[..., None]
    g2 = np.einsum("...ij,...ij->...", G, G)[..., None]
    Gx = np.einsum("...ij,...j->...i", G, x)
    GTx = np.einsum("...ji,...j->...i", G, x)
    xGw = np.einsum("...i,...ij,...j->...", x, G, w)[..., None]
    lin = -2 / r2 * Gx - 4 / r2**2 * wx * x - 4 / r2 * GTx + 4 / r2 * div * x
    lam = g2 + 4 / r2**2 * wx**2 - 4 / r2 * wx * div + 4 / r2 * xGw
    return lin + lam * w


def reflected_el_residual(w, x, h: float | None = None) -> np.ndarray:
    """Residual ``F - (-Lap w)`` of the exterior Euler-Lagrange system.

    Vanishes, up to discretization error, when ``w`` is the extension of an
    interior harmonic map.

    Raises
    ------
    DomainError
        If a point is closer than ``2 h`` to either sphere of the annulus.
    """
    w, h, _ = _field_and_step(w, h)
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < 1 + 2 * h) or np.any(r > 2 - 2 * h):
        raise DomainError("residual point closer than 2h to the annulus boundary")
    val, G, lap = _fd_second(w, x, h)
    return reflected_el_rhs(x, val, G) + lap


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

_REPORT_KEYS = ("E", "E_ext", "E_bar", "T", "E_red")


@dataclass
class EnergyReport:
    """Collected energy values for one field.

    ``E_bar`` defaults to ``E + E_ext`` when both are present.
    """

    E: float | None = None
    E_ext: float | None = None
    E_bar: float | None = None
    T: float | None = None
    E_red: float | None = None
    breakdown: dict = field(default_factory=dict)
    resolution: str = ""
    scheme: str = ""

    def __post_init__(self):
        if self.E_bar is None and self.E is not None and self.E_ext is not None:
            self.E_bar = self.E + self.E_ext
        for k in _REPORT_KEYS:
            v = getattr(self, k)
            if v is not None and not np.isfinite(v):
                raise ValueError(f"{k} is not finite")

    def _items(self):
        items = [(k, getattr(self, k)) for k in _REPORT_KEYS]
        items += [(f"breakdown.{k}", v) for k, v in sorted(self.breakdown.items())]
        items += [("resolution", self.resolution), ("scheme", self.scheme)]
        return items

    @staticmethod
    def _fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.12g}"
        return str(v)

    def to_text(self) -> str:
        return "".join(f"{k}: {self._fmt(v)}\n" for k, v in self._items())

    def csv_header(self) -> str:
        return ",".join(k for k, _ in self._items())

    def to_csv_row(self) -> str:
        return ",".join(self._fmt(v) for _, v in self._items())
