"""Pixel grids, integration domains and the pixel <-> vector index map.

Conventions used throughout the package:

* rasters are numpy arrays indexed ``[v, u]`` (row ``v`` grows downward,
  column ``u`` grows rightward); normal maps have a trailing axis of 3;
* depth grows away from the camera and is stored in scene length units,
  a pixel step being ``pitch`` scene units;
* pixels outside a domain carry ``NaN`` and are never read.
"""

from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

from .errors import EmptyDomain, ShapeMismatch

#: Normals with ``|n_z|`` below this are rejected (grazing pixels).
N_Z_MIN = 1e-4


@dataclass(frozen=True)
class GridShape:
    width: int
    height: int
    pitch: float = 1.0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.width}x{self.height}")
        if not self.pitch > 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")

    @property
    def raster_shape(self):
        return (self.height, self.width)

    @classmethod
    def like(cls, array, pitch=1.0):
        h, w = np.shape(array)[:2]
        return cls(width=int(w), height=int(h), pitch=float(pitch))


def boundary_of(mask):
    """Pixels of ``mask`` with at least one 4-neighbour outside it (or off-grid)."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return mask & ~interior


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Integration domain, prior domain, silhouette and index map on one grid.

    ``index_map`` holds the vector index of every pixel in ``omega_n``
    (row-major enumeration) and ``-1`` elsewhere.
    """

    shape: GridShape
    omega_n: np.ndarray
    omega_z: np.ndarray
    boundary: np.ndarray = dc_field(repr=False)
    index_map: np.ndarray = dc_field(repr=False)

    @property
    def size(self):
        return int(np.count_nonzero(self.omega_n))

    @property
    def pixels_v(self):
        return np.nonzero(self.omega_n)[0]

    @property
    def pixels_u(self):
        return np.nonzero(self.omega_n)[1]

    @property
    def prior_indicator(self):
        """Per-vector-entry flag: pixel lies in omega_n and omega_z."""
        return self.omega_z[self.omega_n]

    @property
    def boundary_indicator(self):
        """Per-vector-entry flag: pixel lies on the silhouette of omega_n."""
        return self.boundary[self.omega_n]

    def components(self):
        """Label 4-connected components of omega_n; returns (labels per entry, count)."""
        from scipy import ndimage

        labels, count = ndimage.label(self.omega_n)
        return labels[self.omega_n] - 1, int(count)

    def with_prior_domain(self, omega_z):
        return build_domain(self.omega_n, omega_z, self.shape)

    def mirrored(self):
        """Left-right mirror of every raster."""
        return build_domain(self.omega_n[:, ::-1], self.omega_z[:, ::-1], self.shape)


def build_domain(omega_n_raster, omega_z_raster, shape=None):
    omega_n = np.array(omega_n_raster, dtype=bool)
    if omega_z_raster is None:
        omega_z = np.zeros_like(omega_n)
    else:
        omega_z = np.array(omega_z_raster, dtype=bool)
    if shape is None:
        shape = GridShape.like(omega_n)
    if omega_n.shape != shape.raster_shape or omega_z.shape != shape.raster_shape:
        raise ShapeMismatch(
            f"mask shapes {omega_n.shape}/{omega_z.shape} do not match grid "
            f"{shape.raster_shape}"
        )
    if not omega_n.any():
        raise EmptyDomain("integration domain has no pixels")

    index_map = np.full(omega_n.shape, -1, dtype=np.int64)
    index_map[omega_n] = np.arange(int(omega_n.sum()))

    for arr in (omega_n, omega_z, index_map):
        arr.setflags(write=False)
    boundary = boundary_of(omega_n)
    boundary.setflags(write=False)
    return DomainMask(shape, omega_n, omega_z, boundary, index_map)


def vectorize(field, domain):
    field = np.asarray(field, dtype=np.float64)
    if field.shape[:2] != domain.shape.raster_shape:
        raise ShapeMismatch(
            f"field shape {field.shape} does not match grid {domain.shape.raster_shape}"
        )
    return field[domain.omega_n].copy()


def rasterize(vec, domain, fill=np.nan):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[:1] != (domain.size,):
        raise ShapeMismatch(f"vector of length {len(vec)} for domain of size {domain.size}")
    out = np.full(domain.shape.raster_shape + vec.shape[1:], fill, dtype=np.float64)
    out[domain.omega_n] = vec
    return out
