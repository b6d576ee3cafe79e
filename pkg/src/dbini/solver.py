"""Outer IRLS loops for joint front/back integration and the single-surface baseline."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .assembly import (
    BilateralWeights,
    Hyperparameters,
    assemble_bini,
    assemble_joint_system,
    bilateral_weights,
    build_prior_mask,
    build_silhouette_coupling,
    energy,
    weighted_normal_matrix,
)
from .errors import GaugeDeficient, GaugeDeficientWarning, ShapeMismatch
from .field import DomainMask, rasterize
from .sparse import CgReport, SparseSpd, pcg_solve

logger = logging.getLogger(__name__)

ENERGY_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class DbiniProblem:
    """Inputs of a joint front/back integration.

    Priors are rasters with ``NaN`` outside the prior domain; ``None`` means
    no prior for that sheet.
    """

    domain: DomainMask
    normals_front: np.ndarray
    normals_back: np.ndarray
    prior_front: np.ndarray | None = None
    prior_back: np.ndarray | None = None


@dataclass(eq=False)
class DbiniSolution:
    z_front: np.ndarray
    z_back: np.ndarray
    outer_iterations: int
    energy_trace: list
    per_iteration_cg: list
    converged: bool
    energy_before: list = field(default_factory=list)
    iterates: list | None = None

    def front_raster(self, domain):
        return rasterize(self.z_front, domain)

    def back_raster(self, domain):
        return rasterize(self.z_back, domain)

    def trace_rows(self):
        """Rows ``(outer_iter, energy, cg_iters, cg_residual)`` for CSV export."""
        return [
            (t + 1, e, rep.iterations, rep.final_residual_norm)
            for t, (e, rep) in enumerate(zip(self.energy_trace, self.per_iteration_cg))
        ]


def _prior_entries(prior, domain):
    if prior is None:
        return np.full(domain.size, np.nan)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != domain.shape.raster_shape:
        raise ShapeMismatch(f"prior shape {prior.shape} does not match grid")
    return prior[domain.omega_n]


def _sheet_prior_domain(prior, domain):
    """omega_z restricted to pixels where the prior raster is actually defined."""
    if prior is None:
        return np.zeros_like(domain.omega_z)
    return domain.omega_z & np.isfinite(np.asarray(prior, dtype=np.float64))


def initial_depth(prior, domain, has_prior):
    """Warm start: the prior where present, nearest prior value elsewhere, else 0."""
    values = _prior_entries(prior, domain)
    if not has_prior.any():
        return np.zeros(domain.size)
    raster = np.zeros(domain.shape.raster_shape)
    known = np.zeros(domain.shape.raster_shape, dtype=bool)
    known[domain.omega_n] = has_prior
    raster[domain.omega_n] = np.where(has_prior, values, 0.0)
    _, (iv, iu) = ndimage.distance_transform_edt(~known, return_indices=True)
    filled = raster[iv, iu]
    return filled[domain.omega_n]


class _Prepared:
    """Operators and masks that stay fixed across outer iterations."""

    def __init__(self, problem: DbiniProblem):
        domain = problem.domain
        self.domain = domain
        self.op_front = assemble_bini(problem.normals_front, domain)
        self.op_back = assemble_bini(problem.normals_back, domain)
        front_dom = domain.with_prior_domain(_sheet_prior_domain(problem.prior_front, domain))
        back_dom = domain.with_prior_domain(_sheet_prior_domain(problem.prior_back, domain))
        self.prior_mask = build_prior_mask(front_dom, back_dom)
        self.coupling = build_silhouette_coupling(domain)
        n = domain.size
        self.prior_front = np.nan_to_num(_prior_entries(problem.prior_front, domain))
        self.prior_back = np.nan_to_num(_prior_entries(problem.prior_back, domain))
        self.x0 = np.concatenate([
            initial_depth(problem.prior_front, domain, self.prior_mask[:n] > 0),
            initial_depth(problem.prior_back, domain, self.prior_mask[n:] > 0),
        ])

    def system(self, w_front, w_back, hyper):
        return assemble_joint_system(
            self.op_front, self.op_back, w_front, w_back, self.prior_front,
            self.prior_back, self.prior_mask, self.coupling, hyper,
        )

    def energy(self, w_front, w_back, hyper, z):
        n = self.domain.size
        return energy(
            self.op_front, self.op_back, w_front, w_back, self.prior_mask, self.coupling,
            self.prior_front, self.prior_back, hyper, z[:n], z[n:],
        )


def check_gauge(prepared: _Prepared, hyper: Hyperparameters):
    """Raise GaugeDeficient unless every connected component has its offset pinned."""
    if hyper.lambda_d <= 0:
        raise GaugeDeficient("lambda_d = 0 leaves the global depth offset unpinned")
    domain = prepared.domain
    n = domain.size
    labels, count = domain.components()
    has_f = np.bincount(labels, weights=prepared.prior_mask[:n], minlength=count) > 0
    has_b = np.bincount(labels, weights=prepared.prior_mask[n:], minlength=count) > 0
    if hyper.lambda_s > 0:
        # the silhouette term carries one sheet's offset over to the other
        pinned = has_f | has_b
    else:
        pinned = has_f & has_b
    if not pinned.all():
        bad = int(np.flatnonzero(~pinned)[0])
        raise GaugeDeficient(
            f"{int((~pinned).sum())} of {count} domain components have no prior pixel "
            f"(first: component {bad}); their depth offset is unpinned"
        )


def _pcg_step(system, x0, hyper):
    return pcg_solve(system.lhs, system.rhs, x0=x0, tol=hyper.cg_tol, max_iters=hyper.cg_max_iters)


def run_irls(problem, hyper, linear_solve, record_iterates=False):
    """Shared outer loop; ``linear_solve(system, x0, hyper) -> (x, CgReport)``."""
    prep = _Prepared(problem)
    check_gauge(prep, hyper)
    n = prep.domain.size
    w_front = BilateralWeights.initial(prep.op_front, hyper.k)
    w_back = BilateralWeights.initial(prep.op_back, hyper.k)
    z = prep.x0
    energies, before, reports = [], [], []
    iterates = [] if record_iterates else None
    converged = False
    for t in range(hyper.max_outer_iters):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GaugeDeficientWarning)
            system = prep.system(w_front, w_back, hyper)
        before.append(prep.energy(w_front, w_back, hyper, z))
        z, report = linear_solve(system, z, hyper)
        energies.append(prep.energy(w_front, w_back, hyper, z))
        reports.append(report)
        if record_iterates:
            iterates.append(z.copy())
        logger.debug("outer %d: energy %.6e, cg %d its (res %.2e)", t + 1, energies[-1],
                     report.iterations, report.final_residual_norm)
        if t > 0:
            change = abs(energies[-1] - energies[-2]) / max(energies[-2], ENERGY_EPS)
            if change < hyper.energy_rel_tol:
                converged = True
                break
        w_front = bilateral_weights(z[:n], prep.op_front, hyper.k)
        w_back = bilateral_weights(z[n:], prep.op_back, hyper.k)
    return DbiniSolution(
        z_front=z[:n].copy(), z_back=z[n:].copy(), outer_iterations=len(energies),
        energy_trace=energies, per_iteration_cg=reports, converged=converged,
        energy_before=before, iterates=iterates,
    )


def dbini_optimize(problem: DbiniProblem, hyper: Hyperparameters | None = None,
                   record_iterates=False):
    """Jointly integrate front and back normal maps with prior and silhouette terms."""
    hyper = Hyperparameters() if hyper is None else hyper
    return run_irls(problem, hyper, _pcg_step, record_iterates=record_iterates)


@dataclass(frozen=True)
class Anchor:
    """Pins the depth of pixel ``(u, v)`` to ``depth`` (single-component domains)."""

    u: int
    v: int
    depth: float = 0.0


@dataclass(eq=False)
class BiniSolution:
    z: np.ndarray
    outer_iterations: int
    energy_trace: list
    per_iteration_cg: list
    converged: bool


def _apply_gauge(z, domain, labels, count, gauge):
    sums = np.bincount(labels, weights=z, minlength=count)
    sizes = np.bincount(labels, minlength=count)
    z = z - (sums / sizes)[labels]
    if isinstance(gauge, Anchor):
        i = domain.index_map[gauge.v, gauge.u]
        z = z + (gauge.depth - z[i])
    return z


def bini_optimize(normals, domain: DomainMask, k=2.0, tol=1e-6, iters=150, gauge=None,
                  cg_tol=1e-9, cg_max_iters=5000, return_details=False):
    """Single-surface bilateral normal integration.

    The normal equations of the pure integration problem are singular along
    the constant vector of each connected component, so a gauge is required:
    ``"mean"`` (zero mean per component) or an :class:`Anchor`.
    """
    if gauge is None:
        raise GaugeDeficient("pure normal integration needs a gauge anchor ('mean' or Anchor)")
    labels, count = domain.components()
    if isinstance(gauge, Anchor):
        if count != 1:
            raise GaugeDeficient(f"a single anchor cannot pin {count} domain components")
        if not domain.omega_n[gauge.v, gauge.u]:
            raise GaugeDeficient(f"anchor pixel {(gauge.u, gauge.v)} is outside the domain")
    elif gauge != "mean":
        raise ValueError(f"unknown gauge {gauge!r}")

    op = assemble_bini(normals, domain)
    weights = BilateralWeights.initial(op, k)
    z = np.zeros(domain.size)
    energies, reports = [], []
    converged = False
    for t in range(iters):
        L, r = weighted_normal_matrix(op, weights)
        active = L.diagonal() > 0
        x = z.copy()
        if active.any():
            sub = SparseSpd.from_scipy(L[active][:, active])
            x[active], report = pcg_solve(sub, r[active], x0=z[active], tol=cg_tol,
                                          max_iters=cg_max_iters)
        else:
            report = CgReport(0, 0.0, True)
        z = _apply_gauge(x, domain, labels, count, gauge)
        res = op.residual(z)
        energies.append(float(res @ (weights.w * res)))
        reports.append(report)
        if t > 0:
            change = abs(energies[-1] - energies[-2]) / max(energies[-2], ENERGY_EPS)
            if change < tol:
                converged = True
                break
        weights = bilateral_weights(z, op, k)
    if return_details:
        return BiniSolution(z, len(energies), energies, reports, converged)
    return z
