"""Constrained minimization of the Dirichlet energy.

Two solvers are provided.

:func:`solve_reduced`
    Descent on the reduced energy of an angle field ``psi``. The default
    metric is the Sobolev-type matrix of :meth:`ReducedOperator.metric`,
    factored once per refresh; the plain option uses its diagonal.
:func:`solve_full3d`
    Projected gradient flow for unit fields on a Cartesian grid: a diagonally
    scaled gradient step, then tangential and unit projections.

Both use Armijo backtracking on the discrete energy and record a
:class:`SolveTrace`.
"""

from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from ._io import atomic_write_text
from .energy import ReducedOperator, dirichlet_energy, energy_gradient, reduced_energy
from .fields import (
    Field3,
    HalfDiskMesh,
    PsiField,
    project_tangential,
    project_unit,
    tangency_residual,
)

__all__ = [
    "SolverDivergence",
    "SolveParams",
    "SolveTrace",
    "psi_u0",
    "psi_initial",
    "solve_reduced",
    "solve_reduced_multilevel",
    "clamp_competitors",
    "solve_full3d",
]

log = logging.getLogger(__name__)


class SolverDivergence(RuntimeError):
    """Raised when an iteration produces a non-finite energy.

    The partial trace is attached as ``trace``.
    """

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass
class SolveParams:
    """Iteration controls.

    Parameters
    ----------
    max_iters : int
    step : float
        Initial step ``tau``; every iteration starts from it.
    backtrack : float
        Step reduction factor in ``(0, 1)``.
    armijo : float
        Sufficient-decrease constant.
    grad_tol : float
        Stop when the metric norm of the gradient falls below ``grad_tol``
        times its initial value.
    energy_tol : float
        Stop when an accepted step lowers the energy by less than
        ``energy_tol`` relative.
    projection_tol : float
        Largest admissible tangency residual after projection.
    min_step : float
        Steps below this end the run with reason ``stagnation``.
    metric : {"sobolev", "diagonal"}
        Preconditioner of the reduced solver.
    metric_refresh : int
        Iterations between refactorizations of the reduced metric.
    seed : int
        Seed for random initializations.
    """

    max_iters: int = 500
    step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    grad_tol: float = 1e-7
    energy_tol: float = 1e-15
    projection_tol: float = 1e-6
    min_step: float = 1e-12
    metric: str = "sobolev"
    metric_refresh: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        for k in ("armijo", "grad_tol", "energy_tol", "projection_tol", "min_step"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if self.max_iters < 0 or self.metric_refresh < 1:
            raise ValueError("max_iters must be >= 0 and metric_refresh >= 1")
        if self.metric not in ("sobolev", "diagonal"):
            raise ValueError("metric must be 'sobolev' or 'diagonal'")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveTrace:
    """Per-iteration record of a solve."""

    energy: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    tangency_residual: list = field(default_factory=list)
    reason: str = ""
    notes: dict = field(default_factory=dict)

    def record(self, e, g, t=0.0):
        self.energy.append(float(e))
        self.grad_norm.append(float(g))
        self.tangency_residual.append(float(t))

    @property
    def iterations(self) -> int:
        return max(len(self.energy) - 1, 0)

    def is_monotone(self, slack: float = 1e-14) -> bool:
        e = np.asarray(self.energy)
        return bool(np.all(np.diff(e) <= slack * np.maximum(1.0, np.abs(e[:-1]))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,energy,grad_norm,tangency_residual\n")
        for i, (e, g, t) in enumerate(zip(self.energy, self.grad_norm, self.tangency_residual)):
            buf.write(f"{i},{e:.17g},{g:.17g},{t:.17g}\n")
        return buf.getvalue()

    def write_csv(self, path):
        return atomic_write_text(path, self.to_csv())


# ---------------------------------------------------------------------------
# Reduced problem
# ---------------------------------------------------------------------------


def psi_u0(rho, z):
    """Angle of the competitor ``u0``, ``atan2(-2 z rho, rho^2 - z^2 + 1)``."""
    return np.arctan2(-2.0 * z * rho, rho**2 - z**2 + 1.0)


def psi_initial(mesh: HalfDiskMesh, kind: str = "u0", branch: int = -1, amplitude: float = 0.3, seed: int = 0) -> PsiField:
    """Initial angle field with the outer ring preset to the boundary data.

    Parameters
    ----------
    kind : {"u0", "random", "zero"}
        ``"random"`` adds a smooth random perturbation of size ``amplitude``
        to the ``u0`` angle.
    """
    if kind == "zero":
        psi = np.zeros(mesh.shape)
    else:
        psi = psi_u0(mesh.rho, mesh.z)
        if branch == 1:
            # -u0 carries the other boundary branch
            psi = psi + np.pi
        if kind == "random":
            rng = np.random.default_rng(seed)
            a = rng.normal(size=(4, 4))
            R, P = np.meshgrid(np.pi * mesh.r, mesh.phi, indexing="ij")
            pert = sum(a[i, j] * np.sin((i + 1) * R) * np.sin((j + 1) * P) for i in range(4) for j in range(4))
            psi = psi + amplitude * pert / max(np.abs(pert).max(), 1e-300)
        elif kind != "u0":
            raise ValueError(f"unknown initialization {kind!r}")
    psi[-1] = mesh.boundary_values(branch)
    return PsiField(mesh, psi, branch=branch)


def clamp_competitors(p: PsiField):
    """Truncations ``max(psi, c - pi)`` and ``min(psi, c + pi)``.

    ``c`` is 0 on the ``-1`` branch and ``pi`` on the ``+1`` branch, so the
    window contains the boundary data of the field's branch.
    """
    c = 0.0 if p.branch == -1 else np.pi
    return p.replace(np.maximum(p.psi, c - np.pi)), p.replace(np.minimum(p.psi, c + np.pi))


def solve_reduced(init: PsiField, params: SolveParams | None = None):
    """Minimize the reduced energy starting from ``init``.

    The arc carries the boundary data ``psi = phi -/+ pi/2`` through the
    discrete operator; no condition is imposed on the axis. Nodes flagged
    as constrained in ``init`` are held fixed.

    Returns
    -------
    PsiField, SolveTrace
        The trace ``notes`` record whether post-hoc clamping to
        the branch window of :func:`clamp_competitors` changed the field.

    Raises
    ------
    SolverDivergence
        If the energy becomes non-finite.
    """
    params = params or SolveParams()
    op = ReducedOperator(init.mesh, init.branch)
    free = ~init.constrained.ravel()
    q = init.psi.ravel().copy()
    e = op.energy(q)
    trace = SolveTrace()
    lu = None
    dn0 = None
    for k in range(params.max_iters + 1):
        g = op.gradient(q)
        g[~free] = 0.0
        if params.metric == "diagonal":
            diag = op.metric(q).diagonal()
            d = np.where(free, -g / diag, 0.0)
        else:
            if lu is None or k % params.metric_refresh == 0:
                M = op.metric(q)[free][:, free]
                lu = spla.splu(M.tocsc())
            d = np.zeros_like(q)
            d[free] = -lu.solve(g[free])
        gd = float(g @ d)
        dn = np.sqrt(max(-gd, 0.0))
        trace.record(e, dn)
        dn0 = dn if dn0 is None else dn0
        if dn <= params.grad_tol * max(dn0, 1.0):
            trace.reason = "gradient"
            break
        if k == params.max_iters:
            trace.reason = "max_iters"
            break
        t = params.step
        while True:
            qn = q + t * d
            en = op.energy(qn)
            if not np.isfinite(en):
                raise SolverDivergence("non-finite reduced energy", trace)
            if en <= e + params.armijo * t * gd:
                break
            t *= params.backtrack
            if t < params.min_step:
                break
        if t < params.min_step:
            trace.reason = "stagnation"
            break
        drop = e - en
        q, e = qn, en
        if drop <= params.energy_tol * abs(e):
            trace.record(e, dn)
            trace.reason = "energy"
            break
    out = init.replace(q.reshape(init.mesh.shape))
    lo, _ = clamp_competitors(out)
    _, clamped = clamp_competitors(lo)
    active = bool(np.any(clamped.psi != out.psi))
    trace.notes["clamp_active"] = active
    if active:
        e_cl = reduced_energy(clamped)
        trace.notes["clamp_energy_change"] = e_cl - e
        log.info("clamping to the branch window changed the energy by %.3g", e_cl - e)
        out = clamped
    return out, trace


def _resample(p: PsiField, mesh: HalfDiskMesh) -> np.ndarray:
    return p.psi_at(mesh.rho, mesh.z)


def solve_reduced_multilevel(m: int, params: SolveParams | None = None, branch: int = -1, coarsest: int = 32, init: str = "u0", seed: int = 0):
    """Solve on meshes ``coarsest, 2 coarsest, ..., m``, warm-starting each level.

    Returns
    -------
    PsiField, list of SolveTrace
        The field on the finest mesh and one trace per level.
    """
    levels = []
    k = m
    while k > coarsest and k % 2 == 0:
        levels.append(k)
        k //= 2
    levels.append(k)
    levels = levels[::-1]
    traces = []
    p = None
    for lev in levels:
        mesh = HalfDiskMesh(lev)
        if p is None:
            start = psi_initial(mesh, init, branch=branch, seed=seed)
        else:
            psi = _resample(p, mesh)
            psi[-1] = mesh.boundary_values(branch)
            start = PsiField(mesh, psi, branch=branch)
        p, tr = solve_reduced(start, params)
        traces.append(tr)
    return p, traces


# ---------------------------------------------------------------------------
# Full 3D problem
# ---------------------------------------------------------------------------


def _node_diagonal(grid) -> np.ndarray:
    d = np.zeros(grid.shape)
    n = grid.N - 1
    for ax in range(3):
        w = grid.edge_weights(ax)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, n)
        hi[ax] = slice(1, n + 1)
        d[tuple(lo)] += w
        d[tuple(hi)] += w
    return grid.h * d


def solve_full3d(init: Field3, params: SolveParams | None = None, threads: int = 1):
    """Projected gradient flow for tangential unit fields.

    Each trial step is ``v - tau D^-1 g_t`` with ``g_t`` the gradient
    component orthogonal to ``v`` (at boundary-adjacent nodes, along
    ``nu x v``, the only direction that keeps tangency) and ``D`` the
    diagonal of the discrete
    Laplacian, followed by :func:`project_tangential` and
    :func:`project_unit`. Steps are accepted under the Armijo condition.

    Returns
    -------
    Field3, SolveTrace
    """
    params = params or SolveParams(step=1.0, max_iters=200, grad_tol=1e-4)
    g3 = init.grid
    act = g3.active
    diag = _node_diagonal(g3)
    diag[~act] = 1.0
    bmask = g3.boundary_adjacent
    nu = g3.points(bmask) / g3.radius[bmask][:, None]
    v = project_unit(project_tangential(init))
    e = dirichlet_energy(v, threads=threads)
    trace = SolveTrace()
    gn0 = None
    for k in range(params.max_iters + 1):
        g = energy_gradient(v)
        gt = g - np.einsum("...i,...i->...", g, v.values)[..., None] * v.values
        # boundary-adjacent values may only turn about nu
        tb = np.cross(nu, v.values[bmask])
        gt[bmask] = np.einsum("ij,ij->i", gt[bmask], tb)[:, None] * tb
        d = -gt / diag[..., None]
        gd = float(np.sum(gt * d))
        gn = np.sqrt(max(-gd, 0.0))
        trace.record(e, gn, tangency_residual(v))
        gn0 = gn if gn0 is None else gn0
        if gn <= params.grad_tol * max(gn0, 1e-300):
            trace.reason = "gradient"
            break
        if k == params.max_iters:
            trace.reason = "max_iters"
            break
        t = params.step
        while True:
            trial = Field3(g3, v.values + t * d, check=False)
            trial = project_unit(project_tangential(Field3(g3, project_unit(trial).values)))
            en = dirichlet_energy(trial, threads=threads)
            if not np.isfinite(en):
                raise SolverDivergence("non-finite energy", trace)
            if en <= e + params.armijo * t * gd:
                break
            t *= params.backtrack
            if t < params.min_step:
                break
        if t < params.min_step:
            trace.reason = "stagnation"
            break
        drop = e - en
        v, e = trial, en
        if drop <= params.energy_tol * abs(e):
            trace.record(e, gn, tangency_residual(v))
            trace.reason = "energy"
            break
    res = tangency_residual(v)
    if res > params.projection_tol:
        raise SolverDivergence(f"tangency residual {res:.3g} above tolerance", trace)
    return v, trace
