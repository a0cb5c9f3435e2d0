"""Dyadic sector symmetrization of cylindrical fields.

At level ``k`` the first period ``[0, 2 pi / 2^(k-1))`` is split into two
half-sectors. The half with the smaller modified energy (see
:func:`~tangent_harmonic.energy.symmetrization_energy`) is kept, mirrored
across the dividing plane, and the resulting period is repeated around the
circle. The coefficient functions ``(u_rho, u_theta, u_z)`` are mirrored as
they are, without a sign change of ``u_theta``. After ``log2(n_theta)``
levels the coefficients no longer depend on ``theta``.

Fields are handled as :class:`~tangent_harmonic.fields.CylField`; other
inputs are sampled onto a cylindrical grid first.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    cylindrical_energy_terms,
    symmetrization_energy,
    theta_derivative_energy,
    to_cylfield,
)
from .fields import CylField, CylGrid, DomainError

__all__ = [
    "ExampleFixture",
    "make_example_fixture",
    "dyadic_symmetrize_step",
    "symmetrize",
    "SymmetrizationReport",
]


# ---------------------------------------------------------------------------
# fixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExampleFixture:
    """Non-equivariant admissible field with vanishing ``T``.

    The base field is equivariant. On the unit sphere it equals
    ``sin(phi) e_theta + cos(phi) e_phi`` (``phi`` the polar angle), and it
    blends linearly in ``s = rho / sqrt(1 - z^2)`` to ``e_3`` on the axis
    before normalization. A compactly supported bump ``eta`` is then added
    to ``u_theta``, with ``u_z`` adjusted to keep ``|u| = 1``. Since
    ``u_rho`` does not depend on ``theta``, ``T`` vanishes.

    Parameters
    ----------
    amplitude : float
        Peak of ``eta``.
    center : (float, float)
        Bump centre ``(rho, z)``.
    radii : (float, float)
        Bump semi-axes in ``rho`` and ``z``.
    """

    amplitude: float = 0.1
    center: tuple = (0.175, 0.0)
    radii: tuple = (0.075, 0.2)

    def __post_init__(self):
        rc, zc = self.center
        a, b = self.radii
        if rc - a <= 0 or rc + a >= 1 or min(a, b) <= 0:
            raise ValueError("bump must stay away from the axis and inside the ball")
        self.check_feasible()

    @staticmethod
    def base(rho, z):
        """Cylindrical coefficients of the equivariant base field."""
        rho, z = np.broadcast_arrays(np.asarray(rho, float), np.asarray(z, float))
        den = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
        s = np.where(den > 0, rho / np.where(den > 0, den, 1.0), 1.0)
        s = np.clip(s, 0.0, 1.0)
        ur, ut, uz = s * z**2, rho, 1.0 - s - z * rho
        n = np.sqrt(ur**2 + ut**2 + uz**2)
        return ur / n, ut / n, uz / n

    def bump(self, rho, z):
        rc, zc = self.center
        a, b = self.radii
        d2 = ((np.asarray(rho) - rc) / a) ** 2 + ((np.asarray(z) - zc) / b) ** 2
        inside = d2 < 1.0
        out = np.zeros(np.broadcast(rho, z).shape)
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - d2[inside]))
        return out

    def eta(self, rho, theta, z):
        return self.amplitude * self.bump(rho, z) * 0.5 * (1.0 + np.cos(theta))

    def check_feasible(self, n: int = 201):
        """Verify ``u_z^2 - eta^2 - 2 u_theta eta >= 0`` on the bump support."""
        rc, zc = self.center
        a, b = self.radii
        R, Z = np.meshgrid(np.linspace(rc - a, rc + a, n), np.linspace(zc - b, zc + b, n), indexing="ij")
        _, ut, uz = self.base(R, Z)
        eta = self.amplitude * self.bump(R, Z)
        disc = uz**2 - eta**2 - 2 * ut * eta
        if disc.min() < 0 or np.any((eta > 0) & (uz <= 0)):
            raise DomainError(f"amplitude {self.amplitude} too large: square-root argument {disc.min():.3g}")

    def cylindrical(self, rho, theta, z):
        ur, ut, uz = self.base(rho, z)
        eta = self.eta(rho, theta, z)
        disc = uz**2 - eta**2 - 2 * ut * eta
        if np.any(disc < -1e-15):
            raise DomainError("square-root argument negative")
        uz_new = np.where(eta != 0, np.sqrt(np.clip(disc, 0, None)), uz)
        return ur, ut + eta, uz_new

    def __call__(self, points):
        p = np.asarray(points, float)
        rho = np.hypot(p[..., 0], p[..., 1])
        theta = np.arctan2(p[..., 1], p[..., 0])
        ur, ut, uz = self.cylindrical(rho, theta, p[..., 2])
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([ur * c - ut * s, ur * s + ut * c, uz], axis=-1)


def make_example_fixture(grid: CylGrid, amplitude: float = 0.1) -> CylField:
    """Sample :class:`ExampleFixture` on ``grid``."""
    return CylField.from_function(ExampleFixture(amplitude), grid)


# ---------------------------------------------------------------------------
# symmetrization
# ---------------------------------------------------------------------------


def _periodicity_defect(f: CylField, period: int) -> float:
    U = np.stack(f.components, -1)
    return float(np.abs(U - np.roll(U, period, axis=1)).max())


def dyadic_symmetrize_step(f: CylField, k: int, tol: float = 1e-12, return_info: bool = False):
    """One symmetrization level.

    Parameters
    ----------
    f : CylField
        For ``k >= 2`` the coefficients must be ``2 pi / 2^(k-2)``-periodic
        in ``theta``, which is what level ``k - 1`` produces.
    k : int
        Level, ``1 <= k <= log2(n_theta)``.
    tol : float
        Tolerance of the periodicity check.

    Returns
    -------
    CylField, or (CylField, dict) when ``return_info`` is set.

    Raises
    ------
    ValueError
        If ``n_theta`` is not divisible by ``2^k`` or the periodicity
        check fails.
    """
    g = f.grid
    nt = g.n_theta
    if k < 1 or nt % (2**k) != 0:
        raise ValueError(f"level {k} needs n_theta divisible by 2^{k}")
    period = nt // 2 ** (k - 1)
    half = period // 2
    if k >= 2:
        dev = _periodicity_defect(f, 2 * period)
        if dev > tol:
            raise ValueError(f"input is not periodic at level {k}: max deviation {dev:.3g}")
    dth = 2 * np.pi / nt
    e_first = symmetrization_energy(f, sector=(0.0, half * dth))
    e_second = symmetrization_energy(f, sector=(half * dth, period * dth))
    keep_first = e_first <= e_second
    comps = []
    for c in f.components:
        blk = c[:, :half] if keep_first else c[:, half:period]
        per = np.concatenate([blk, blk[:, ::-1]] if keep_first else [blk[:, ::-1], blk], axis=1)
        comps.append(np.tile(per, (1, 2 ** (k - 1), 1)))
    out = CylField(g, *comps, check=False)
    if not return_info:
        return out
    changed = any(not np.array_equal(a, b) for a, b in zip(comps, f.components))
    info = {
        "level": k,
        "sector": "first" if keep_first else "second",
        "sector_energies": (e_first, e_second),
        "changed": changed,
    }
    return out, info


@dataclass
class SymmetrizationReport:
    """Per-level record of :func:`symmetrize`."""

    T_input: float
    E_input: float
    E_output: float
    levels: list = field(default_factory=list)
    energy_inequality_asserted: bool = True

    @property
    def effective_changes(self) -> int:
        return sum(1 for lv in self.levels if lv["changed"])

    def esym_sequence(self):
        if not self.levels:
            return []
        return [self.levels[0]["esym_before"]] + [lv["esym_after"] for lv in self.levels]

    def to_text(self) -> str:
        lines = [
            f"T_input: {self.T_input:.12g}",
            f"E_input: {self.E_input:.12g}",
            f"E_output: {self.E_output:.12g}",
            f"energy_inequality_asserted: {self.energy_inequality_asserted}",
            f"effective_changes: {self.effective_changes}",
        ]
        for lv in self.levels:
            lines.append(
                f"level {lv['level']}: sector={lv['sector']} esym_before={lv['esym_before']:.12g} "
                f"esym_after={lv['esym_after']:.12g} theta_energy={lv['theta_energy']:.6g} changed={lv['changed']}"
            )
        return "\n".join(lines) + "\n"


def symmetrize(f, max_levels: int | None = None, tol: float = 1e-6, grid: CylGrid | None = None):
    """Apply dyadic levels ``1, 2, ...`` until the field is equivariant.

    Parameters
    ----------
    f : CylField, Field3 or callable
    max_levels : int, optional
        Defaults to ``log2(n_theta)``.
    tol : float
        Stop once the theta-derivative energy is below ``tol``; also the
        slack of the ``T >= 0`` hypothesis.
    grid : CylGrid, optional
        Sampling grid for non-cylindrical inputs.

    Returns
    -------
    CylField, SymmetrizationReport
    """
    if not isinstance(f, CylField):
        f = to_cylfield(f) if grid is None else CylField.from_function(f, grid)
    nt = f.grid.n_theta
    L = int(np.log2(nt))
    if 2**L != nt:
        raise ValueError("n_theta must be a power of two")
    max_levels = L if max_levels is None else min(max_levels, L)
    terms = cylindrical_energy_terms(f)
    T = terms["cross"]
    E_in = sum(terms.values())
    asserted = T >= -tol
    if not asserted:
        warnings.warn(f"T = {T:.3g} < 0: the energy comparison is not asserted", RuntimeWarning)
    report = SymmetrizationReport(T, E_in, E_in, energy_inequality_asserted=asserted)
    cur = f
    for k in range(1, max_levels + 1):
        if theta_derivative_energy(cur) < tol:
            break
        before = symmetrization_energy(cur)
        cur, info = dyadic_symmetrize_step(cur, k, return_info=True)
        info["esym_before"] = before
        info["esym_after"] = symmetrization_energy(cur)
        info["theta_energy"] = theta_derivative_energy(cur)
        report.levels.append(info)
    report.E_output = float(sum(cylindrical_energy_terms(cur).values()))
    return cur, report
