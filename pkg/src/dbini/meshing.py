"""Depth maps to triangle meshes, front/back zippering, and depth error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDomain, ShapeMismatch
from .field import DomainMask


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    # Only set by zipper().
    watertight: bool | None = None
    inversion_count: int = 0
    n_loops: int = 0

    @property
    def n_vertices(self):
        return len(self.vertices)

    def face_normals(self):
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return np.cross(b - a, c - a)

    def signed_volume(self):
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def edge_face_counts(self):
        """Undirected edge -> number of incident faces, as (edges, counts)."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def is_closed(self):
        if len(self.faces) == 0:
            return False
        _, counts = self.edge_face_counts()
        if not np.all(counts == 2):
            return False
        # consistent orientation: each directed edge used once
        d = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return len(np.unique(d, axis=0)) == len(d)

    def euler_characteristic(self):
        """V - E + F over vertices referenced by at least one face."""
        edges, _ = self.edge_face_counts()
        used = np.unique(self.faces)
        return int(len(used) - len(edges) + len(self.faces))


def _quad_corners(domain: DomainMask):
    om = domain.omega_n
    quad = om[:-1, :-1] & om[:-1, 1:] & om[1:, :-1] & om[1:, 1:]
    v, u = np.nonzero(quad)
    idx = domain.index_map
    return idx[v, u], idx[v, u + 1], idx[v + 1, u], idx[v + 1, u + 1]


def depth_to_mesh(depth, domain: DomainMask, pitch=None, orientation="front"):
    """One vertex per domain pixel, two triangles per fully in-domain 2x2 quad.

    Quads are split along the top-left to bottom-right diagonal. Front meshes
    face the camera (-z); back meshes face away from it.
    """
    if orientation not in ("front", "back"):
        raise ValueError(f"orientation must be 'front' or 'back', got {orientation!r}")
    pitch = domain.shape.pitch if pitch is None else float(pitch)
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != domain.shape.raster_shape:
        raise ShapeMismatch(f"depth shape {depth.shape} does not match grid")
    vs, us = np.nonzero(domain.omega_n)
    vertices = np.column_stack([us * pitch, vs * pitch, depth[vs, us]]).astype(np.float64)

    tl, tr, bl, br = _quad_corners(domain)
    if orientation == "front":
        tris = [np.column_stack([tl, br, tr]), np.column_stack([tl, bl, br])]
    else:
        tris = [np.column_stack([tl, tr, br]), np.column_stack([tl, br, bl])]
    faces = np.stack(tris, axis=1).reshape(-1, 3).astype(np.int64)
    return TriangleMesh(vertices, faces)


def _boundary_half_edges(faces):
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inverse.ravel()] == 1]


def _chain_loops(half_edges):
    """Order boundary half-edges into loops; deterministic, smallest vertex first."""
    outgoing = {}
    for a, b in sorted(map(tuple, half_edges.tolist())):
        outgoing.setdefault(a, []).append(b)
    loops = []
    for start in sorted(outgoing):
        while outgoing.get(start):
            loop, a = [], start
            while outgoing.get(a):
                b = outgoing[a].pop(0)
                loop.append((a, b))
                a = b
                if a == start:
                    break
            loops.append(loop)
    return loops


def zipper(front: TriangleMesh, back: TriangleMesh, domain: DomainMask):
    """Join front and back meshes along their common boundary loops.

    Each boundary edge ``a -> b`` of the front mesh is bridged to the matching
    back edge by two triangles. The result reports whether it is closed, how
    many boundary loops were bridged, and how many bridged pixels have the
    front sheet behind the back sheet (``inversion_count``).
    """
    n = domain.size
    if front.n_vertices != n or back.n_vertices != n:
        raise ShapeMismatch("front and back meshes must come from the same domain")
    vertices = np.vstack([front.vertices, back.vertices])
    loops = _chain_loops(_boundary_half_edges(front.faces)) if len(front.faces) else []
    bridge = []
    rim = set()
    for loop in loops:
        for a, b in loop:
            bridge.append((b, a, a + n))
            bridge.append((b, a + n, b + n))
            rim.add(a)
            rim.add(b)
    bridge = np.array(bridge, dtype=np.int64).reshape(-1, 3)
    if len(bridge):
        p = vertices
        area2 = np.linalg.norm(
            np.cross(p[bridge[:, 1]] - p[bridge[:, 0]], p[bridge[:, 2]] - p[bridge[:, 0]]), axis=1)
        bridge = bridge[area2 > 0]
    faces = np.vstack([front.faces, back.faces + n, bridge]).astype(np.int64)
    rim = np.array(sorted(rim), dtype=np.int64)
    inversions = int(np.count_nonzero(vertices[rim, 2] > vertices[rim + n, 2])) if len(rim) else 0
    mesh = TriangleMesh(vertices, faces, inversion_count=inversions, n_loops=len(loops))
    mesh.watertight = mesh.is_closed()
    return mesh


@dataclass(frozen=True)
class DepthMetrics:
    rmse: float
    mae: float
    aligned: bool


def _residuals(estimate, truth, domain):
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != domain.shape.raster_shape or truth.shape != domain.shape.raster_shape:
        raise ShapeMismatch("estimate and truth must match the domain grid")
    if domain.size == 0:
        raise EmptyDomain("no pixels to compare")
    return estimate[domain.omega_n] - truth[domain.omega_n]


def _summarize(res, aligned):
    return DepthMetrics(float(np.sqrt(np.mean(res * res))), float(np.mean(np.abs(res))), aligned)


def depth_metrics(estimate, truth, domain: DomainMask, align_offset=False):
    res = _residuals(estimate, truth, domain)
    if align_offset:
        res = res - res.mean()
    return _summarize(res, align_offset)


def stacked_metrics(estimates, truths, domain: DomainMask, align_offset=False):
    """Metrics over several sheets at once; alignment removes one offset per sheet."""
    parts = []
    for est, gt in zip(estimates, truths):
        res = _residuals(est, gt, domain)
        parts.append(res - res.mean() if align_offset else res)
    return _summarize(np.concatenate(parts), align_offset)


def max_gradient(depth, domain: DomainMask, pitch=None):
    """Largest |forward difference| / pitch between 4-neighbours inside the domain."""
    pitch = domain.shape.pitch if pitch is None else float(pitch)
    z = np.asarray(depth, dtype=np.float64)
    om = domain.omega_n
    dx = np.abs(z[:, 1:] - z[:, :-1])[om[:, 1:] & om[:, :-1]]
    dy = np.abs(z[1:] - z[:-1])[om[1:] & om[:-1]]
    both = np.concatenate([dx, dy])
    return float(both.max() / pitch) if both.size else 0.0


def boundary_gap(depth_front, depth_back, domain: DomainMask):
    """max |z_front - z_back| over silhouette pixels."""
    b = domain.boundary
    return float(np.max(np.abs(np.asarray(depth_front)[b] - np.asarray(depth_back)[b])))


def boundary_inversions(depth_front, depth_back, domain: DomainMask):
    b = domain.boundary
    return int(np.count_nonzero(np.asarray(depth_front)[b] > np.asarray(depth_back)[b]))
