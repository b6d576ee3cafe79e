"""Readers and writers for PFM rasters, PNG masks/normal maps, PLY/OBJ meshes and CSV tables."""

from __future__ import annotations

import csv
import hashlib
import re
from pathlib import Path

import cv2
import numpy as np

from .validation import normalize_normals


def write_pfm(path, image):
    """Write a little-endian PFM ('Pf' for 2-D arrays, 'PF' for HxWx3)."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        header = "Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        header = "PF"
    else:
        raise ValueError(f"PFM needs HxW or HxWx3 data, got {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"{header}\n{w} {h}\n-1.0\n".encode("ascii"))
        # PFM stores rows bottom-up.
        f.write(np.ascontiguousarray(image[::-1]).astype("<f4").tobytes())


_PFM_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")


def read_pfm(path):
    data = Path(path).read_bytes()
    m = _PFM_HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=m.end())
    shape = (h, w, 3) if channels == 3 else (h, w)
    return arr.reshape(shape)[::-1].astype(np.float64)


def write_mask_png(path, mask):
    ok = cv2.imwrite(str(path), np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8))
    if not ok:
        raise OSError(f"could not write {path}")


def read_mask_png(path):
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise OSError(f"could not read {path}")
    if img.ndim == 3:
        img = img[..., 0]
    if img.dtype != np.uint8:
        raise ValueError(f"{path}: masks must be 8-bit grayscale PNG")
    return img > 127


def write_normal_png(path, normals):
    """16-bit RGB PNG with channel = round((n + 1) / 2 * 65535); NaN becomes 0."""
    n = np.nan_to_num(np.asarray(normals, dtype=np.float64), nan=-1.0)
    q = np.clip(np.rint((n + 1.0) * 0.5 * 65535.0), 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(path), q[..., ::-1]):
        raise OSError(f"could not write {path}")


def read_normal_png(path):
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise OSError(f"could not read {path}")
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint16:
        raise ValueError(f"{path}: normal maps must be 16-bit RGB PNG")
    n = 2.0 * img[..., ::-1].astype(np.float64) / 65535.0 - 1.0
    return normalize_normals(n)


def read_normals(path):
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_normal_png(path)
    n = read_pfm(path)
    if n.ndim != 3:
        raise ValueError(f"{path}: normal map PFM must have 3 channels")
    return normalize_normals(n)


def write_ply(path, vertices, faces):
    """Binary little-endian PLY with float64 vertices and int32 triangle faces."""
    vertices = np.asarray(vertices, dtype="<f8").reshape(-1, 3)
    faces = np.asarray(faces, dtype="<i4").reshape(-1, 3)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(vertices)}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {len(faces)}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    face_rec = np.empty(len(faces), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
    face_rec["n"] = 3
    face_rec["idx"] = faces
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(vertices.tobytes())
        f.write(face_rec.tobytes())


def read_ply(path):
    """Read the binary PLY layout produced by :func:`write_ply`."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii")
    if "binary_little_endian" not in header:
        raise ValueError(f"{path}: only binary little-endian PLY is supported")
    nv = int(re.search(r"element vertex (\d+)", header).group(1))
    nf = int(re.search(r"element face (\d+)", header).group(1))
    vertices = np.frombuffer(data, dtype="<f8", count=3 * nv, offset=end).reshape(nv, 3)
    rec = np.frombuffer(data, dtype=[("n", "u1"), ("idx", "<i4", (3,))], count=nf,
                        offset=end + 24 * nv)
    if nf and np.any(rec["n"] != 3):
        raise ValueError(f"{path}: only triangle faces are supported")
    return vertices.copy(), rec["idx"].astype(np.int64)


def write_obj(path, vertices, faces):
    with open(path, "w") as f:
        for x, y, z in np.asarray(vertices, dtype=np.float64).tolist():
            f.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (np.asarray(faces, dtype=np.int64) + 1).tolist():
            f.write(f"f {a} {b} {c}\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
