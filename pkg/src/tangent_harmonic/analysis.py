"""Energy densities, monotonicity diagnostics and defect detection.

Densities are computed for grid fields that extend across the unit sphere
by inversion (see :func:`extended_field3`), so that balls centred on the
boundary are fully covered. The energy of each grid edge is split between
its two end nodes; the energy in a ball is the sum over the nodes it
contains.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .fields import BallGrid3, Field3, field_from_closed_form
from .geometry import BoundaryChart, DomainError, extend_field_value

__all__ = [
    "ExtendedField",
    "extended_field3",
    "node_energy",
    "density",
    "weighted_density",
    "DensityProfile",
    "fit_monotone_constants",
    "density_profile",
    "degree_on_sphere",
    "Defect",
    "DefectList",
    "density_map",
    "detect_defects",
    "radial_derivative_control",
]


class ExtendedField:
    """``u`` inside the unit ball and ``A(x) u(x / |x|^2)`` outside."""

    def __init__(self, u: Callable):
        self.u = u

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        r2 = np.einsum("...i,...i->...", x, x)
        out = np.empty(x.shape)
        inside = r2 <= 1.0
        if np.any(inside):
            out[inside] = self.u(x[inside])
        if np.any(~inside):
            out[~inside] = extend_field_value(self.u, x[~inside])
        return out


def extended_field3(u: Callable, n: int, R: float = 1.3) -> Field3:
    """Grid field of the extension of ``u`` on the ball of radius ``R``.

    ``n`` counts cells across the diameter ``2 R``.
    """
    if not 1.0 < R <= 2.0:
        raise ValueError("extension radius must lie in (1, 2]")
    return field_from_closed_form(ExtendedField(u), BallGrid3(n, R=R))


def node_energy(f: Field3) -> np.ndarray:
    """Edge energies ``(h/2) w d(u_i, u_j)^2`` split equally between end nodes.

    ``d`` is the great-circle distance on the sphere, which resolves the
    large jumps next to point defects better than the chord length.
    """
    g = f.grid
    e = np.zeros(g.shape)
    v = f.values
    n = g.N - 1
    for ax in range(3):
        a = np.take(v, np.arange(n), axis=ax)
        b = np.take(v, np.arange(1, n + 1), axis=ax)
        ang = 2.0 * np.arcsin(np.clip(0.5 * np.linalg.norm(a - b, axis=-1), 0.0, 1.0))
        ee = 0.25 * g.h * g.edge_weights(ax) * ang**2
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, n)
        hi[ax] = slice(1, n + 1)
        e[tuple(lo)] += ee
        e[tuple(hi)] += ee
    return e


def _energy_cache(f: Field3):
    cache = f.__dict__.setdefault("_node_energy", None)
    if cache is None:
        cache = node_energy(f)
        f.__dict__["_node_energy"] = cache
    return cache


def _ball_indicator(dist, r, h):
    # node share of the ball, ramped linearly across one cell at the rim
    return np.clip((r - dist) / h + 0.5, 0.0, 1.0)


def _check_ball(g: BallGrid3, x0, r):
    if r < 3 * g.h:
        raise DomainError(f"radius {r:.3g} below 3h = {3 * g.h:.3g}")
    if np.linalg.norm(x0) + r > g.R + 1e-12:
        raise DomainError("ball leaves the grid domain")


def density(f: Field3, x0, r: float, weight_power: float | None = None) -> float:
    """Energy density ``Theta = (1 / 2r) int_{B_r(x0)} |grad u|^2``.

    Parameters
    ----------
    f : Field3
        Usually the extended field from :func:`extended_field3`.
    weight_power : float, optional
        Multiply the integrand by ``min(1, 1/|x|^p)``.

    Raises
    ------
    DomainError
        If ``r < 3 h`` or the ball is not covered by the grid.
    """
    g = f.grid
    x0 = np.asarray(x0, float)
    _check_ball(g, x0, r)
    e = _energy_cache(f)
    a = g.axis
    lo = np.searchsorted(a, x0 - r - g.h)
    hi = np.searchsorted(a, x0 + r + g.h, side="right")
    sl = tuple(slice(max(l, 0), min(h_, g.N)) for l, h_ in zip(lo, hi))
    X = np.stack(np.meshgrid(a[sl[0]], a[sl[1]], a[sl[2]], indexing="ij"), -1)
    w = e[sl] * _ball_indicator(np.linalg.norm(X - x0, axis=-1), r, g.h)
    if weight_power is not None:
        rr = np.linalg.norm(X, axis=-1)
        w = w * np.minimum(1.0, rr ** (-float(weight_power)))
    return float(np.sum(w) / r)


def weighted_density(f: Field3, x0, r: float, power: float = 2.0) -> float:
    """Weighted density with weight ``min(1, 1/|x|^power)``."""
    return density(f, x0, r, weight_power=power)


# ---------------------------------------------------------------------------
# monotonicity
# ---------------------------------------------------------------------------


def _violation(r, f, c1, c2):
    g = np.exp(c1 * r) * f + c2 * r
    return float(np.max(np.maximum(g[:-1] - g[1:], 0.0), initial=0.0))


def fit_monotone_constants(radii, values, grid=None, tol: float = 1e-3):
    """Smallest ``(C1, C2)`` making ``exp(C1 r) f(r) + C2 r`` non-decreasing.

    Pairs are scanned in lexicographic order over ``grid`` (default
    ``0, 0.5, ..., 50`` for both constants); the first pair whose largest
    decrease is at most ``tol`` is returned.

    Returns
    -------
    C1, C2, violation : float
        ``C1`` and ``C2`` are NaN when no pair qualifies, in which case the
        violation is the smallest one found.
    """
    r = np.asarray(radii, float)
    f = np.asarray(values, float)
    grid = np.arange(0.0, 50.0 + 1e-9, 0.5) if grid is None else np.asarray(grid, float)
    best = np.inf
    for c1 in grid:
        g1 = np.exp(c1 * r) * f
        for c2 in grid:
            g = g1 + c2 * r
            v = float(np.max(np.maximum(g[:-1] - g[1:], 0.0), initial=0.0))
            if v <= tol:
                return float(c1), float(c2), v
            best = min(best, v)
    return float("nan"), float("nan"), best


@dataclass
class DensityProfile:
    """Densities along increasing radii about ``center`` with fitted constants."""

    center: tuple
    radii: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    C1: float
    C2: float
    violation: float
    tol: float = 1e-3

    @property
    def monotone(self) -> bool:
        return bool(np.isfinite(self.C1) and self.violation <= self.tol)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,theta,f,corrected\n")
        corr = np.exp((self.C1 if np.isfinite(self.C1) else 0) * self.radii) * self.f + (
            self.C2 if np.isfinite(self.C2) else 0
        ) * self.radii
        for row in zip(self.radii, self.theta, self.f, corr):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def to_text(self) -> str:
        return (
            f"center: {tuple(float(c) for c in self.center)}\n"
            f"n_radii: {len(self.radii)}\n"
            f"r_min: {self.radii[0]:.6g}\nr_max: {self.radii[-1]:.6g}\n"
            f"C1: {self.C1:.6g}\nC2: {self.C2:.6g}\n"
            f"violation: {self.violation:.6g}\nmonotone: {self.monotone}\n"
        )


def density_profile(f: Field3, x0, radii, weight_power: float = 2.0, tol: float = 1e-3, grid=None) -> DensityProfile:
    """Densities and weighted densities at ``radii`` with fitted constants.

    Parameters
    ----------
    weight_power : float
        Exponent of the weight ``min(1, 1/|x|^p)``; 2 by default, 1 as
        the alternative.
    """
    r = np.asarray(radii, float)
    if np.any(np.diff(r) <= 0):
        raise ValueError("radii must be strictly increasing")
    th = np.array([density(f, x0, ri) for ri in r])
    fv = np.array([density(f, x0, ri, weight_power=weight_power) for ri in r])
    c1, c2, v = fit_monotone_constants(r, fv, grid=grid, tol=tol)
    return DensityProfile(tuple(np.asarray(x0, float)), r, th, fv, c1, c2, v, tol)


# ---------------------------------------------------------------------------
# degree
# ---------------------------------------------------------------------------


def _solid_angles(a, b, c):
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = 1 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c) + np.einsum("...i,...i->...", c, a)
    return 2 * np.arctan2(num, den)


def degree_on_sphere(u, center=(0.0, 0.0, 0.0), r: float = 0.5, n_lat: int = 64, n_lon: int = 128) -> float:
    """Degree of ``u`` restricted to the sphere ``|x - center| = r``.

    The sphere is triangulated on a latitude/longitude grid; the degree is
    the total signed solid angle of the image triangles divided by ``4 pi``.

    Raises
    ------
    DomainError
        For a grid field, if the sphere comes within ``2 h`` of the edge of
        the grid domain.
    """
    c = np.asarray(center, float)
    if isinstance(u, Field3):
        g = u.grid
        if np.linalg.norm(c) + r > g.R - 2 * g.h:
            raise DomainError("sphere is clipped by the grid domain")
    th = np.linspace(0, np.pi, n_lat + 1)
    ph = np.linspace(0, 2 * np.pi, n_lon + 1)
    T, P = np.meshgrid(th, ph, indexing="ij")
    X = c + r * np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
    V = np.asarray(u(X.reshape(-1, 3))).reshape(X.shape)
    V = V / np.linalg.norm(V, axis=-1, keepdims=True)
    a, b = V[:-1, :-1], V[1:, :-1]
    cc, d = V[1:, 1:], V[:-1, 1:]
    # outward orientation: (theta, phi) increasing is outward-positive
    total = _solid_angles(a, b, cc).sum() + _solid_angles(a, cc, d).sum()
    return float(total / (4 * np.pi))


# ---------------------------------------------------------------------------
# defects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Defect:
    location: tuple
    kind: str
    density: float
    degree: float | None = None


@dataclass
class DefectList:
    entries: list = field(default_factory=list)
    threshold: float = 0.0
    scan_radius: float = 0.0

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,y,z,kind,density,degree\n")
        for d in self.entries:
            deg = "" if d.degree is None else f"{d.degree:.17g}"
            buf.write(",".join(f"{v:.17g}" for v in d.location) + f",{d.kind},{d.density:.17g},{deg}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"count: {len(self)}", f"threshold: {self.threshold:.6g}", f"scan_radius: {self.scan_radius:.6g}"]
        for i, d in enumerate(self.entries):
            loc = ", ".join(f"{v:.6f}" for v in d.location)
            deg = "" if d.degree is None else f" degree={d.degree:.4f}"
            lines.append(f"defect {i}: ({loc}) {d.kind} density={d.density:.6g}{deg}")
        return "\n".join(lines) + "\n"


def density_map(f: Field3, r: float) -> np.ndarray:
    """``Theta(., r)`` at every node, NaN where the ball leaves the grid domain."""
    g = f.grid
    if r < 3 * g.h:
        raise DomainError(f"radius {r:.3g} below 3h = {3 * g.h:.3g}")
    e = _energy_cache(f)
    k = int(np.floor(r / g.h + 0.5))
    off = np.arange(-k, k + 1) * g.h
    O = np.stack(np.meshgrid(off, off, off, indexing="ij"), -1)
    kernel = _ball_indicator(np.linalg.norm(O, axis=-1), r, g.h)
    theta = fftconvolve(e, kernel, mode="same") / r
    valid = g.radius + r <= g.R - g.h
    theta[~valid] = np.nan
    return theta


def detect_defects(
    f: Field3,
    threshold: float = np.pi,
    scan_radius: float = 0.1,
    boundary_tol: float | None = None,
) -> DefectList:
    """Cluster nodes whose density exceeds ``threshold``.

    Hits closer than ``2 scan_radius`` belong to one cluster. Each cluster
    is reported at its density maximum and classified as a boundary defect
    when that point lies within ``boundary_tol`` (default
    ``max(scan_radius / 2, 2 h)``) of the unit sphere. Interior defects
    carry the degree on the sphere of radius ``scan_radius`` around them.
    """
    g = f.grid
    theta = density_map(f, scan_radius)
    hits = np.argwhere(np.nan_to_num(theta, nan=-np.inf) > threshold)
    out = DefectList(threshold=threshold, scan_radius=scan_radius)
    if len(hits) == 0:
        return out
    pts = g.axis[hits]
    pairs = cKDTree(pts).query_pairs(2 * scan_radius, output_type="ndarray")
    n = len(pts)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
    n_comp, labels = connected_components(adj, directed=False)
    btol = max(scan_radius / 2, 2 * g.h) if boundary_tol is None else boundary_tol
    vals = theta[tuple(hits.T)]
    entries = []
    for c in range(n_comp):
        idx = np.nonzero(labels == c)[0]
        j = idx[np.argmax(vals[idx])]
        loc = pts[j]
        kind = "boundary" if abs(np.linalg.norm(loc) - 1.0) <= btol else "interior"
        deg = None
        if kind == "interior":
            try:
                deg = degree_on_sphere(f, loc, scan_radius)
            except DomainError:
                deg = None
        entries.append(Defect(tuple(float(v) for v in loc), kind, float(vals[j]), deg))
    entries.sort(key=lambda d: (-d.location[2], d.location[0], d.location[1]))
    out.entries = entries
    return out


# ---------------------------------------------------------------------------
# radial derivative
# ---------------------------------------------------------------------------


def radial_derivative_control(f: Field3, x0=(0.0, 0.0, 1.0), radii=None, r0: float = 0.2, weight_power: float = 2.0):
    """Compare the chart-radial derivative energy with density increments.

    For consecutive radii ``r1 < r2`` in chart coordinates ``y`` around
    ``x0`` this computes

    ``L = int_{r1 < |y| < r2} |d_r u|^2 / |x - x0| dx`` with
    ``d_r u = grad u . (grad Phi(y) y / |y|)``, and
    ``R = (f(r2) - f(r1)) + E(annulus)``.

    Returns
    -------
    list of dict
        One entry per annulus with ``L``, ``R`` and their ratio; the largest
        ratio is the fitted constant.
    """
    g = f.grid
    if radii is None:
        radii = np.linspace(3 * g.h, 0.12, 5)
    chart = BoundaryChart(tuple(np.asarray(x0, float)), r0)
    e = _energy_cache(f)
    V = f.values
    grads = np.stack(np.gradient(V, g.h, axis=(0, 1, 2)), axis=-1)  # [..., i, j] = d_j u_i
    X = g.points()
    mask = chart.contains(X)
    xs = X[mask]
    y = chart.inverse(xs)
    ry = np.linalg.norm(y, axis=-1)
    J = chart.jacobian_forward(np.where(ry[:, None] > 0, y, 1e-3))
    dirn = np.einsum("...ij,...j->...i", J, y / np.maximum(ry, 1e-300)[:, None])
    dru = np.einsum("...ij,...j->...i", grads[mask], dirn)
    dist = np.linalg.norm(xs - np.asarray(x0), axis=-1)
    integrand = np.einsum("...i,...i->...", dru, dru) / np.maximum(dist, 1e-300) * g.h**3
    en = e[mask]
    out = []
    for r1, r2 in zip(radii[:-1], radii[1:]):
        sel = (ry > r1) & (ry < r2)
        L = float(integrand[sel].sum())
        E_ann = float(en[sel].sum())
        df = density(f, x0, r2, weight_power) - density(f, x0, r1, weight_power)
        Rv = df + E_ann
        out.append({"r1": r1, "r2": r2, "L": L, "R": Rv, "ratio": L / Rv if Rv > 0 else np.inf})
    return out
