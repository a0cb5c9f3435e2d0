"""scikit-learn style wrappers around the solvers and diagnostics.

The estimators follow the usual conventions: hyper-parameters are set in
``__init__`` and exposed through ``get_params``; ``fit`` computes the
learned state (attributes with a trailing underscore); ``transform`` and
``predict`` take point arrays of shape ``(n_samples, 3)``, validated with
:func:`sklearn.utils.validation.check_array`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import density_map, detect_defects, extended_field3
from .energy import reduced_energy
from .fields import BallGrid3, CylField, EquivariantLift, Field3, field_from_closed_form, lift_equivariant
from .geometry import to_cylindrical
from .solvers import SolveParams, solve_full3d, solve_reduced_multilevel
from .symmetrization import symmetrize

__all__ = [
    "ReducedHarmonicMapSolver",
    "TangentialHarmonicMap3D",
    "DyadicSymmetrizer",
    "DefectDetector",
]


def _points(X):
    return check_array(X, dtype=np.float64, ensure_min_features=3, ensure_all_finite=True)


def _check_three(X):
    X = _points(X)
    if X.shape[1] != 3:
        raise ValueError(f"expected 3 features, got {X.shape[1]}")
    return X


class ReducedHarmonicMapSolver(TransformerMixin, BaseEstimator):
    """Minimizer of the reduced equivariant energy.

    ``fit`` ignores its input; the problem is fixed by the boundary data.

    Parameters
    ----------
    m : int
        Radial resolution of the finest polar mesh.
    branch : {-1, 1}
    init : {"u0", "random", "zero"}
    max_iters, grad_tol : see :class:`~tangent_harmonic.solvers.SolveParams`
    seed : int
    """

    def __init__(self, m=128, branch=-1, init="u0", max_iters=500, grad_tol=1e-7, seed=0):
        self.m = m
        self.branch = branch
        self.init = init
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.seed = seed

    def fit(self, X=None, y=None):
        params = SolveParams(max_iters=self.max_iters, grad_tol=self.grad_tol, seed=self.seed)
        p, traces = solve_reduced_multilevel(self.m, params, branch=self.branch, init=self.init, seed=self.seed)
        self.psi_field_ = p
        self.traces_ = traces
        self.energy_ = reduced_energy(p)
        self.lift_ = EquivariantLift(p)
        return self

    def transform(self, X):
        """Director values of the lifted minimizer at points ``X``."""
        check_is_fitted(self, "psi_field_")
        return self.lift_(_check_three(X))

    def predict(self, X):
        """Angle ``psi`` at points ``X``."""
        check_is_fitted(self, "psi_field_")
        c = to_cylindrical(_check_three(X))
        return self.psi_field_.psi_at(c.rho, c.z)

    def score(self, X=None, y=None):
        """Negative reduced energy."""
        check_is_fitted(self, "energy_")
        return -self.energy_

    def to_field3(self, n):
        check_is_fitted(self, "psi_field_")
        return lift_equivariant(self.psi_field_, BallGrid3(n))


class TangentialHarmonicMap3D(TransformerMixin, BaseEstimator):
    """Full 3D projected gradient flow on a :class:`BallGrid3`.

    ``fit`` takes the initial field: a :class:`Field3`, a callable, or
    ``None`` for the competitor ``u0``.
    """

    def __init__(self, n=32, max_iters=200, step=1.0, grad_tol=1e-4, projection_tol=1e-6, threads=1):
        self.n = n
        self.max_iters = max_iters
        self.step = step
        self.grad_tol = grad_tol
        self.projection_tol = projection_tol
        self.threads = threads

    def fit(self, X=None, y=None):
        if isinstance(X, Field3):
            init = X
        else:
            if X is None:
                from .bounds import competitor_u0

                X = competitor_u0
            if not callable(X):
                raise TypeError("fit expects a Field3, a callable or None")
            init = field_from_closed_form(X, BallGrid3(self.n))
        params = SolveParams(
            max_iters=self.max_iters, step=self.step, grad_tol=self.grad_tol, projection_tol=self.projection_tol
        )
        self.field_, self.trace_ = solve_full3d(init, params, threads=self.threads)
        self.energy_ = self.trace_.energy[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "field_")
        return self.field_(_check_three(X))

    def score(self, X=None, y=None):
        check_is_fitted(self, "energy_")
        return -self.energy_


class DyadicSymmetrizer(TransformerMixin, BaseEstimator):
    """Dyadic sector symmetrization of a field given to ``fit``."""

    def __init__(self, max_levels=None, tol=1e-6):
        self.max_levels = max_levels
        self.tol = tol

    def fit(self, X, y=None):
        if not (isinstance(X, CylField) or callable(X)):
            raise TypeError("fit expects a CylField, Field3 or callable")
        self.field_, self.report_ = symmetrize(X, max_levels=self.max_levels, tol=self.tol)
        return self

    def transform(self, X):
        """Values of the symmetrized field at points ``X``."""
        check_is_fitted(self, "field_")
        return self.field_(_check_three(X))


class DefectDetector(BaseEstimator):
    """High-density point detector on the inversion-extended field.

    Parameters
    ----------
    n : int
        Cells across the diameter of the extension ball of radius ``R``.
    threshold : float
        Density threshold.
    scan_radius : float
    R : float
    """

    def __init__(self, n=96, threshold=np.pi, scan_radius=0.1, R=1.3):
        self.n = n
        self.threshold = threshold
        self.scan_radius = scan_radius
        self.R = R

    def fit(self, X, y=None):
        """Detect defects of ``X``, a callable field on the unit ball."""
        if not callable(X):
            raise TypeError("fit expects a callable field on the unit ball")
        self.field_ = extended_field3(X, self.n, self.R)
        self.defects_ = detect_defects(self.field_, self.threshold, self.scan_radius)
        self.locations_ = np.array([d.location for d in self.defects_], float).reshape(-1, 3)
        return self

    def transform(self, X):
        """Density ``Theta(., scan_radius)`` at the grid nodes nearest to ``X``."""
        check_is_fitted(self, "field_")
        X = _check_three(X)
        theta = density_map(self.field_, self.scan_radius)
        g = self.field_.grid
        idx = np.clip(np.rint((X - g.axis[0]) / g.h).astype(int), 0, g.N - 1)
        return theta[idx[:, 0], idx[:, 1], idx[:, 2]]

    def predict(self, X):
        """1 for points within ``scan_radius`` of a detected defect, else 0."""
        check_is_fitted(self, "defects_")
        X = _check_three(X)
        if len(self.locations_) == 0:
            return np.zeros(len(X), int)
        d = np.linalg.norm(X[:, None, :] - self.locations_[None], axis=-1).min(axis=1)
        return (d <= self.scan_radius).astype(int)
