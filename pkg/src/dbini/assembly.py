"""Linear operators, bilateral weights and the joint front/back normal equations.

For a pixel ``p = (u, v)`` with normal ``(n_x, n_y, n_z)`` four residual rows
are built, in the order ``[u+, u-, v+, v-]``::

    u+ : n_z * (z[u+1, v] - z[u, v]) / pitch + n_x
    u- : n_z * (z[u, v] - z[u-1, v]) / pitch + n_x
    v+ : n_z * (z[u, v+1] - z[u, v]) / pitch + n_y
    v- : n_z * (z[u, v] - z[u, v-1]) / pitch + n_y

A row whose neighbour falls outside the integration domain is invalid: its
coefficients and right-hand side are zero and its weight is pinned to 0.

The joint system stacks the front and back depth vectors ``[z_F; z_B]`` and
solves ``(A^T W A + lambda_d M + lambda_s S) z = A^T W b + lambda_d M z_prior``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import GaugeDeficientWarning, ShapeMismatch
from .field import DomainMask
from .sparse import SparseSpd
from .validation import check_normal_map

# (du, dv, sign of the neighbour coefficient, normal component feeding b)
_DIRECTIONS = (
    (1, 0, +1.0, 0),
    (-1, 0, -1.0, 0),
    (0, 1, +1.0, 1),
    (0, -1, -1.0, 1),
)


@dataclass(frozen=True)
class Hyperparameters:
    lambda_d: float = 1e-4
    lambda_s: float = 1e-6
    k: float = 2.0
    max_outer_iters: int = 150
    energy_rel_tol: float = 1e-6
    cg_tol: float = 1e-9
    cg_max_iters: int = 5000

    def __post_init__(self):
        if self.lambda_d < 0 or self.lambda_s < 0:
            raise ValueError("lambda_d and lambda_s must be non-negative")
        if not self.k > 0:
            raise ValueError(f"stiffness k must be positive, got {self.k}")
        if self.max_outer_iters < 1 or self.cg_max_iters < 1:
            raise ValueError("iteration caps must be at least 1")
        if not (self.energy_rel_tol > 0 and self.cg_tol > 0):
            raise ValueError("tolerances must be positive")


PAPER_HYPERPARAMETERS = Hyperparameters(lambda_d=1e-4, lambda_s=1e-6, k=2.0, max_outer_iters=150)


@dataclass(frozen=True, eq=False)
class BiniOperator:
    """Residual operator ``A z - b`` with ``4 |omega_n|`` rows.

    ``neighbor[r]`` is the vector index of the pixel row ``r`` differences
    against (``-1`` for invalid rows).
    """

    A: sp.csr_matrix
    b: np.ndarray
    row_valid: np.ndarray
    neighbor: np.ndarray

    @property
    def n_pixels(self):
        return self.A.shape[1]

    def residual(self, z):
        return self.A @ z - self.b


@dataclass(frozen=True, eq=False)
class BilateralWeights:
    w: np.ndarray
    k: float

    @classmethod
    def initial(cls, op, k):
        """Neutral starting weights: 0.5 on paired rows, 1 on unpaired, 0 on invalid."""
        valid = op.row_valid.reshape(-1, 2, 2)
        partner = valid[:, :, ::-1]
        w = np.where(valid, np.where(partner, 0.5, 1.0), 0.0)
        return cls(w.reshape(-1), float(k))


def assemble_bini(normals, domain: DomainMask, pitch=None):
    pitch = domain.shape.pitch if pitch is None else float(pitch)
    normals = check_normal_map(normals, domain)
    n = domain.size
    vs, us = np.nonzero(domain.omega_n)
    h, w = domain.shape.raster_shape
    nvec = normals[vs, us]
    coef = nvec[:, 2] / pitch
    self_idx = np.arange(n)

    neighbor = np.full((n, 4), -1, dtype=np.int64)
    b = np.zeros((n, 4))
    for d, (du, dv, _, comp) in enumerate(_DIRECTIONS):
        uu, vv = us + du, vs + dv
        on_grid = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        nb = np.full(n, -1, dtype=np.int64)
        nb[on_grid] = domain.index_map[vv[on_grid], uu[on_grid]]
        neighbor[:, d] = nb
        b[:, d] = np.where(nb >= 0, -nvec[:, comp], 0.0)

    valid = neighbor >= 0
    signs = np.array([s for _, _, s, _ in _DIRECTIONS])
    rows = np.arange(4 * n).reshape(n, 4)
    # Neighbour coefficient is +sign*coef, self coefficient -sign*coef.
    r_idx = np.concatenate([rows[valid], rows[valid]])
    c_idx = np.concatenate([neighbor[valid], np.broadcast_to(self_idx[:, None], (n, 4))[valid]])
    vals_nb = (signs[None, :] * coef[:, None])[valid]
    data = np.concatenate([vals_nb, -vals_nb])
    A = sp.csr_matrix((data, (r_idx, c_idx)), shape=(4 * n, n))
    A.sort_indices()
    return BiniOperator(A=A, b=b.reshape(-1), row_valid=valid.reshape(-1), neighbor=neighbor.reshape(-1))


def bilateral_weights(z, op: BiniOperator, k):
    """Recompute the bilateral weights from the current depth vector ``z``.

    With ``d+`` and ``d-`` the forward and backward depth differences of a
    directional pair, ``w+ = sigmoid(k (d-^2 - d+^2))`` and ``w- = 1 - w+``.
    """
    z = np.asarray(z, dtype=np.float64)
    n = op.n_pixels
    if z.shape != (n,):
        raise ShapeMismatch(f"depth vector of length {z.shape} for operator on {n} pixels")
    nb = op.neighbor.reshape(n, 4)
    valid = op.row_valid.reshape(n, 4)
    z_nb = np.where(valid, z[np.where(valid, nb, 0)], 0.0)
    # forward difference for +, backward for -; sign is irrelevant once squared
    diff = np.where(valid, z_nb - z[:, None], 0.0)
    sq = diff * diff
    w = np.zeros((n, 4))
    for plus, minus in ((0, 1), (2, 3)):
        both = valid[:, plus] & valid[:, minus]
        w_plus = expit(k * (sq[:, minus] - sq[:, plus]))
        w[:, plus] = np.where(both, w_plus, valid[:, plus].astype(float))
        w[:, minus] = np.where(both, 1.0 - w_plus, valid[:, minus].astype(float))
    return BilateralWeights(w.reshape(-1), float(k))


def build_prior_mask(domain_front: DomainMask, domain_back: DomainMask | None = None):
    """Diagonal of the stacked prior mask, length ``2 |omega_n|``.

    Entry ``i`` is 1 when pixel ``i`` lies in omega_n and omega_z of its sheet.
    """
    domain_back = domain_front if domain_back is None else domain_back
    if not np.array_equal(domain_front.omega_n, domain_back.omega_n):
        raise ShapeMismatch("front and back must share one integration domain")
    return np.concatenate(
        [domain_front.prior_indicator, domain_back.prior_indicator]
    ).astype(np.float64)


@dataclass(frozen=True, eq=False)
class SilhouetteCoupling:
    """Block matrix ``[[S, -S], [-S, S]]`` with ``S`` the silhouette indicator."""

    n_pixels: int
    boundary_index: np.ndarray

    def matrix(self):
        n = self.n_pixels
        s = np.zeros(n)
        s[self.boundary_index] = 1.0
        S = sp.diags(s)
        return sp.bmat([[S, -S], [-S, S]], format="csr")

    def quadratic(self, z_stacked):
        n = self.n_pixels
        gap = z_stacked[:n][self.boundary_index] - z_stacked[n:][self.boundary_index]
        return float(gap @ gap)


def build_silhouette_coupling(domain: DomainMask):
    return SilhouetteCoupling(domain.size, np.flatnonzero(domain.boundary_indicator))


@dataclass(frozen=True, eq=False)
class JointSystem:
    lhs: SparseSpd
    rhs: np.ndarray
    n_pixels: int
    gauge_deficient: bool = False

    def to_triplets(self, path):
        """Write ``lhs`` as ``row col value`` lines, then ``rhs`` as ``rhs i value`` lines."""
        coo = self.lhs.csr.tocoo()
        with open(path, "w") as f:
            f.write(f"# n {self.lhs.n} n_pixels {self.n_pixels}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                f.write(f"{r} {c} {float(v)!r}\n")
            for i, v in enumerate(self.rhs):
                f.write(f"rhs {i} {float(v)!r}\n")

    @classmethod
    def from_triplets(cls, path):
        rows, cols, vals = [], [], []
        with open(path) as f:
            header = f.readline().split()
            n, n_pixels = int(header[2]), int(header[4])
            rhs = np.zeros(n)
            for line in f:
                a, b, c = line.split()
                if a == "rhs":
                    rhs[int(b)] = float(c)
                else:
                    rows.append(int(a))
                    cols.append(int(b))
                    vals.append(float(c))
        lhs = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return cls(SparseSpd.from_scipy(lhs), rhs, n_pixels)


def weighted_normal_matrix(op: BiniOperator, weights: BilateralWeights):
    WA = sp.diags(weights.w) @ op.A
    return (op.A.T @ WA).tocsr(), op.A.T @ (weights.w * op.b)


def _symmetrize(m):
    m = sp.csr_matrix(m)
    return ((m + m.T) * 0.5).tocsr()


def gauge_is_pinned(prior_mask, lambda_d):
    return lambda_d > 0 and bool(np.any(prior_mask[: len(prior_mask) // 2] > 0)) and bool(
        np.any(prior_mask[len(prior_mask) // 2 :] > 0)
    )


def assemble_joint_system(op_front, op_back, w_front, w_back, prior_front, prior_back,
                          prior_mask, coupling, hyper: Hyperparameters):
    n = op_front.n_pixels
    if op_back.n_pixels != n or len(prior_mask) != 2 * n or coupling.n_pixels != n:
        raise ShapeMismatch("front/back operators, prior mask and coupling disagree in size")
    nf, rf = weighted_normal_matrix(op_front, w_front)
    nb, rb = weighted_normal_matrix(op_back, w_back)
    lhs = sp.block_diag([nf, nb], format="csr")
    if hyper.lambda_d:
        lhs = lhs + hyper.lambda_d * sp.diags(prior_mask)
    if hyper.lambda_s:
        lhs = lhs + hyper.lambda_s * coupling.matrix()
    prior = _prior_vector(prior_front, prior_back, prior_mask)
    rhs = np.concatenate([rf, rb]) + hyper.lambda_d * prior_mask * prior

    deficient = not gauge_is_pinned(prior_mask, hyper.lambda_d)
    if deficient:
        warnings.warn(
            "joint system has an unpinned global offset (lambda_d = 0 or no pixel in "
            "omega_n and omega_z)",
            GaugeDeficientWarning,
            stacklevel=2,
        )
    return JointSystem(SparseSpd.from_scipy(_symmetrize(lhs)), rhs, n, deficient)


def _prior_vector(prior_front, prior_back, prior_mask):
    prior = np.concatenate([np.asarray(prior_front, float), np.asarray(prior_back, float)])
    return np.where(prior_mask > 0, prior, 0.0)


def energy_terms(op_front, op_back, w_front, w_back, prior_mask, coupling, prior_front,
                 prior_back, hyper, z_front, z_back):
    """The five terms of the frozen-weight objective, keyed by name."""
    n = op_front.n_pixels
    rf = op_front.residual(z_front)
    rb = op_back.residual(z_back)
    prior = _prior_vector(prior_front, prior_back, prior_mask)
    dev = np.concatenate([z_front, z_back]) - prior
    m = prior_mask
    return {
        "normal_front": float(rf @ (w_front.w * rf)),
        "normal_back": float(rb @ (w_back.w * rb)),
        "prior_front": hyper.lambda_d * float(dev[:n] @ (m[:n] * dev[:n])),
        "prior_back": hyper.lambda_d * float(dev[n:] @ (m[n:] * dev[n:])),
        "silhouette": hyper.lambda_s * coupling.quadratic(np.concatenate([z_front, z_back])),
    }


def energy(op_front, op_back, w_front, w_back, prior_mask, coupling, prior_front, prior_back,
           hyper, z_front, z_back):
    terms = energy_terms(op_front, op_back, w_front, w_back, prior_mask, coupling,
                         prior_front, prior_back, hyper, z_front, z_back)
    return float(sum(terms.values()))
