"""scikit-learn style wrappers around the integration solvers.

Both estimators take a problem object as ``X`` (a :class:`DbiniProblem` or
anything with a ``problem()`` method, such as a generated scene) and return
depth rasters from ``transform``. Hyperparameters are plain constructor
arguments, so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .assembly import Hyperparameters
from .errors import ShapeMismatch
from .field import DomainMask, rasterize
from .meshing import stacked_metrics
from .solver import Anchor, DbiniProblem, bini_optimize, dbini_optimize


def check_problem(X):
    """Coerce ``X`` to a :class:`DbiniProblem`."""
    if isinstance(X, DbiniProblem):
        return X
    if hasattr(X, "problem"):
        return X.problem()
    raise TypeError(f"expected a DbiniProblem or an object with .problem(), got {type(X).__name__}")


def _check_same_domain(problem, domain):
    _check_same_domain_raw(problem.domain, domain)


def _check_same_domain_raw(domain, fitted):
    if domain is not fitted and not np.array_equal(domain.omega_n, fitted.omega_n):
        raise ShapeMismatch("transform() called on a problem with a different domain than fit()")


class DBiNI(TransformerMixin, BaseEstimator):
    """Joint front/back bilateral normal integration with depth prior and silhouette terms.

    Parameters
    ----------
    lambda_d, lambda_s : float
        Weights of the depth-prior and silhouette-consistency terms.
    k : float
        Stiffness of the bilateral weights.
    max_iter : int
        Cap on outer (reweighting) iterations.
    tol : float
        Relative energy change that ends the outer loop.
    cg_tol, cg_max_iter : float, int
        Inner conjugate-gradient stopping rule.

    Attributes
    ----------
    depth_front_, depth_back_ : ndarray of shape (H, W)
        Recovered sheets, NaN outside the integration domain.
    n_iter_ : int
    converged_ : bool
    energy_trace_ : list of float
    solution_ : DbiniSolution
    """

    def __init__(self, lambda_d=1e-4, lambda_s=1e-6, k=2.0, max_iter=150, tol=1e-6,
                 cg_tol=1e-9, cg_max_iter=5000):
        self.lambda_d = lambda_d
        self.lambda_s = lambda_s
        self.k = k
        self.max_iter = max_iter
        self.tol = tol
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter

    def hyperparameters(self):
        return Hyperparameters(
            lambda_d=self.lambda_d, lambda_s=self.lambda_s, k=self.k,
            max_outer_iters=self.max_iter, energy_rel_tol=self.tol,
            cg_tol=self.cg_tol, cg_max_iters=self.cg_max_iter,
        )

    def fit(self, X, y=None):
        problem = check_problem(X)
        sol = dbini_optimize(problem, self.hyperparameters())
        self.domain_ = problem.domain
        self.solution_ = sol
        self.depth_front_ = sol.front_raster(problem.domain)
        self.depth_back_ = sol.back_raster(problem.domain)
        self.n_iter_ = sol.outer_iterations
        self.converged_ = sol.converged
        self.energy_trace_ = list(sol.energy_trace)
        return self

    def transform(self, X):
        """Stacked ``(2, H, W)`` array of the fitted front and back depth."""
        check_is_fitted(self, "solution_")
        _check_same_domain(check_problem(X), self.domain_)
        return np.stack([self.depth_front_, self.depth_back_])

    def score(self, X, y):
        """Negative unaligned RMSE against ``y = (depth_front, depth_back)``."""
        check_is_fitted(self, "solution_")
        problem = check_problem(X)
        _check_same_domain(problem, self.domain_)
        truth_f, truth_b = y
        m = stacked_metrics([self.depth_front_, self.depth_back_], [truth_f, truth_b],
                            self.domain_)
        return -m.rmse


class BiNI(TransformerMixin, BaseEstimator):
    """Single-sheet bilateral normal integration.

    ``X`` is either ``(normals, domain)`` or a problem, in which case
    ``sheet`` picks the front or back normal map. The result is defined up
    to an offset per connected component; ``gauge`` fixes it (``"mean"`` or
    an :class:`Anchor`). With ``anchor_to_prior`` the gauged result is then
    shifted so that its mean over the prior domain equals the prior's mean.
    """

    def __init__(self, k=2.0, max_iter=150, tol=1e-6, gauge="mean", sheet="front",
                 anchor_to_prior=False, cg_tol=1e-9, cg_max_iter=5000):
        self.k = k
        self.max_iter = max_iter
        self.tol = tol
        self.gauge = gauge
        self.sheet = sheet
        self.anchor_to_prior = anchor_to_prior
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter

    def _inputs(self, X):
        if isinstance(X, tuple) and len(X) == 2 and isinstance(X[1], DomainMask):
            return np.asarray(X[0], dtype=np.float64), X[1], None
        problem = check_problem(X)
        if self.sheet not in ("front", "back"):
            raise ValueError(f"sheet must be 'front' or 'back', got {self.sheet!r}")
        if self.sheet == "front":
            return problem.normals_front, problem.domain, problem.prior_front
        return problem.normals_back, problem.domain, problem.prior_back

    def fit(self, X, y=None):
        normals, domain, prior = self._inputs(X)
        gauge = self.gauge
        if isinstance(gauge, (tuple, list)):
            gauge = Anchor(*gauge)
        sol = bini_optimize(normals, domain, k=self.k, tol=self.tol, iters=self.max_iter,
                            gauge=gauge, cg_tol=self.cg_tol, cg_max_iters=self.cg_max_iter,
                            return_details=True)
        depth = rasterize(sol.z, domain)
        if self.anchor_to_prior:
            depth = shift_to_prior(depth, prior, domain)
        self.domain_ = domain
        self.solution_ = sol
        self.depth_ = depth
        self.n_iter_ = sol.outer_iterations
        self.converged_ = sol.converged
        self.energy_trace_ = list(sol.energy_trace)
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_")
        _check_same_domain_raw(self._inputs(X)[1], self.domain_)
        return self.depth_

    def score(self, X, y):
        """Negative unaligned RMSE against the depth raster ``y``."""
        check_is_fitted(self, "solution_")
        return -stacked_metrics([self.depth_], [y], self.domain_).rmse


def shift_to_prior(depth, prior, domain):
    """Add the constant that makes ``depth`` match ``prior`` in mean over the prior domain."""
    if prior is None:
        raise ValueError("anchoring to the prior needs a prior raster")
    prior = np.asarray(prior, dtype=np.float64)
    m = domain.omega_z & domain.omega_n & np.isfinite(prior)
    if not m.any():
        raise ValueError("prior domain is empty; cannot anchor to the prior")
    return depth + float(np.mean(prior[m] - depth[m]))
