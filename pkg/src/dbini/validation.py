"""Input validation helpers shared by the estimators, the CLI and the I/O layer."""

import numpy as np

from .errors import DegenerateNormal, ShapeMismatch
from .field import N_Z_MIN

UNIT_NORM_TOL = 1e-6


def normalize_normals(normals):
    normals = np.asarray(normals, dtype=np.float64)
    norm = np.linalg.norm(normals, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return normals / norm


def check_normal_map(normals, domain, n_z_min=N_Z_MIN):
    """Return ``normals`` as float64 after checking it is usable on ``domain``.

    Every in-domain normal must be unit length (to 1e-6) and have
    ``|n_z| >= n_z_min``; the first offending pixel is reported as ``(u, v)``.
    """
    normals = np.asarray(normals, dtype=np.float64)
    if normals.shape != domain.shape.raster_shape + (3,):
        raise ShapeMismatch(
            f"normal map shape {normals.shape} does not match grid "
            f"{domain.shape.raster_shape + (3,)}"
        )
    inside = normals[domain.omega_n]
    bad = ~np.isfinite(inside).all(axis=1)
    bad |= np.abs(np.linalg.norm(inside, axis=1) - 1.0) > UNIT_NORM_TOL
    bad |= ~(np.abs(inside[:, 2]) >= n_z_min)
    if bad.any():
        i = int(np.argmax(bad))
        pixel = (int(domain.pixels_u[i]), int(domain.pixels_v[i]))
        raise DegenerateNormal(
            f"normal {inside[i].tolist()} at pixel (u, v)={pixel} is not unit length "
            f"or has |n_z| < {n_z_min:g}",
            pixel=pixel,
        )
    return normals


def check_depth_map(depth, domain, where=None, name="depth"):
    """Check that ``depth`` matches the grid and is finite on ``where`` (default omega_n)."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != domain.shape.raster_shape:
        raise ShapeMismatch(
            f"{name} shape {depth.shape} does not match grid {domain.shape.raster_shape}"
        )
    where = domain.omega_n if where is None else where
    if not np.isfinite(depth[where]).all():
        raise ValueError(f"{name} is not finite everywhere it is required")
    return depth


def check_mask(mask, shape=None, name="mask"):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {mask.shape}")
    if shape is not None and mask.shape != shape:
        raise ShapeMismatch(f"{name} shape {mask.shape} does not match {shape}")
    return mask.astype(bool)
