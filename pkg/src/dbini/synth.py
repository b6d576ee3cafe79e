"""Analytic test scenes: exact front/back depth, normals, masks and coarse priors.

Scenes are ray-cast orthographically along +z through pixel centres
``(u * pitch, v * pitch)``. The front sheet is the nearest hit and the back
sheet the farthest one. Both normal maps are the inward unit normals of the
surface, so front normals have ``n_z > 0`` and back normals ``n_z < 0``;
integration only depends on the ratios ``n_x / n_z`` and ``n_y / n_z``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy import ndimage

from . import io
from .assembly import Hyperparameters
from .errors import OracleTooLarge, SceneOutOfBounds
from .field import N_Z_MIN, GridShape, build_domain
from .solver import DbiniProblem, run_irls
from .sparse import CgReport

SCENE_FORMAT_VERSION = 1

KINDS = (
    "tilted_plane",
    "sphere",
    "ellipsoid",
    "capsule",
    "torus",
    "two_spheres_occluding",
    "step_relief",
)
PRIOR_KINDS = ("exact", "eroded_offset", "inscribed_primitive")

#: Shapes whose front and back sheets meet along the whole silhouette.
SMOOTH_CLOSED = ("sphere", "ellipsoid", "capsule", "torus")

#: The benchmark suite: every closed or discontinuous kind except the plane.
DEFAULT_SUITE = ("sphere", "ellipsoid", "capsule", "torus", "two_spheres_occluding", "step_relief")

ERODE_PIXELS = 2
# Generated normals keep a small margin above the loader's |n_z| floor so that
# float32 PFM round trips never push a pixel below it.
NZ_SAFE = 1.01 * N_Z_MIN
INSCRIBE_SCALE = 0.85


def _defaults(kind, s):
    """Geometric defaults as fractions of the grid extent ``s`` (scene units)."""
    table = {
        "tilted_plane": {"radius": 0.38 * s, "tilt": (0.3, -0.2), "gap": 0.0},
        "sphere": {"radius": 0.38 * s},
        "ellipsoid": {"radii": (0.42 * s, 0.28 * s, 0.22 * s), "angle_deg": 25.0},
        "capsule": {"half_length": 0.22 * s, "radius": 0.16 * s, "angle_deg": 20.0},
        "torus": {"major_radius": 0.28 * s, "radius": 0.12 * s},
        "two_spheres_occluding": {
            "radius": 0.22 * s, "radius_far": 0.26 * s,
            "offset": (-0.12 * s, -0.07 * s), "offset_far": (0.12 * s, 0.08 * s),
            "depth_gap": 0.35 * s,
        },
        "step_relief": {
            "half_size": (0.38 * s, 0.32 * s), "slab_half_size": (0.16 * s, 0.13 * s),
            "step": 0.15 * s, "edge_radius": 0.08 * s, "thickness": 0.2 * s,
        },
    }
    return table[kind]


@dataclass(frozen=True, eq=False)
class SceneSpec:
    kind: str = "sphere"
    width: int = 128
    height: int = 128
    pitch: float = 1.0
    params: dict = field(default_factory=dict)
    center: tuple | None = None
    depth: float | None = None
    prior: str = "exact"
    prior_delta: float = 0.0
    noise_deg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {KINDS}")
        if self.prior not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.prior!r}; expected one of {PRIOR_KINDS}")
        if self.noise_deg < 0:
            raise ValueError("noise_deg must be >= 0")
        unknown = set(self.params) - set(_defaults(self.kind, 1.0))
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")

    @property
    def grid(self):
        return GridShape(self.width, self.height, self.pitch)

    @property
    def extent(self):
        return min(self.width, self.height) * self.pitch

    def resolved(self):
        """Geometric parameters with defaults filled in, plus centre and depth."""
        out = dict(_defaults(self.kind, self.extent))
        out.update(self.params)
        cx = (self.width - 1) * self.pitch / 2 if self.center is None else self.center[0]
        cy = (self.height - 1) * self.pitch / 2 if self.center is None else self.center[1]
        out["center"] = (float(cx), float(cy))
        out["depth"] = float(2.0 * self.extent if self.depth is None else self.depth)
        return out

    def to_json(self):
        d = asdict(self)
        d["params"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}
        d["resolved"] = {
            k: list(v) if isinstance(v, tuple) else v for k, v in self.resolved().items()
        }
        d["version"] = SCENE_FORMAT_VERSION
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d.pop("resolved", None)
        version = d.pop("version", SCENE_FORMAT_VERSION)
        if version != SCENE_FORMAT_VERSION:
            raise ValueError(f"unsupported scene format version {version}")
        d["params"] = {k: tuple(v) if isinstance(v, list) else v for k, v in d["params"].items()}
        if d.get("center") is not None:
            d["center"] = tuple(d["center"])
        return cls(**d)

    def replace(self, **changes):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SceneSpec(**d)


@dataclass(frozen=True, eq=False)
class SceneBundle:
    spec: SceneSpec
    normals_front: np.ndarray
    normals_back: np.ndarray
    depth_front: np.ndarray
    depth_back: np.ndarray
    prior_front: np.ndarray
    prior_back: np.ndarray
    domain: object

    def problem(self):
        return DbiniProblem(self.domain, self.normals_front, self.normals_back,
                            self.prior_front, self.prior_back)


# --- ray casting ----------------------------------------------------------------
# Each tracer returns (hit, z_front, z_back, grad_front, grad_back) with the
# gradients being outward normal directions (unnormalised, shape (..., 3)).


def _rot(angle_deg):
    a = np.deg2rad(angle_deg)
    return np.cos(a), np.sin(a)


def _trace_ellipsoid(x, y, cx, cy, zc, a, b, c, angle_deg=0.0):
    ca, sa = _rot(angle_deg)
    dx, dy = x - cx, y - cy
    p1 = ca * dx + sa * dy
    p2 = -sa * dx + ca * dy
    t = 1.0 - (p1 / a) ** 2 - (p2 / b) ** 2
    hit = t > 0
    dz = c * np.sqrt(np.where(hit, t, 0.0))
    g1, g2 = p1 / a**2, p2 / b**2
    gx = ca * g1 - sa * g2
    gy = sa * g1 + ca * g2
    gz = dz / c**2
    grad_f = np.stack([gx, gy, -gz], axis=-1)
    grad_b = np.stack([gx, gy, gz], axis=-1)
    return hit, zc - dz, zc + dz, grad_f, grad_b


def _trace_tube(x, y, qx, qy, zc, r):
    """Surfaces whose cross-section normal to a planar spine is a circle of radius r."""
    ex, ey = x - qx, y - qy
    d2 = ex**2 + ey**2
    hit = d2 < r * r
    dz = np.sqrt(np.where(hit, r * r - d2, 0.0))
    grad_f = np.stack([ex, ey, -dz], axis=-1)
    grad_b = np.stack([ex, ey, dz], axis=-1)
    return hit, zc - dz, zc + dz, grad_f, grad_b


def _trace(kind, P, x, y):
    cx, cy = P["center"]
    zc = P["depth"]
    if kind == "sphere":
        r = P["radius"]
        return _trace_ellipsoid(x, y, cx, cy, zc, r, r, r)
    if kind == "ellipsoid":
        a, b, c = P["radii"]
        return _trace_ellipsoid(x, y, cx, cy, zc, a, b, c, P["angle_deg"])
    if kind == "capsule":
        ca, sa = _rot(P["angle_deg"])
        L = P["half_length"]
        tau = np.clip((x - cx) * ca + (y - cy) * sa, -L, L)
        return _trace_tube(x, y, cx + tau * ca, cy + tau * sa, zc, P["radius"])
    if kind == "torus":
        R = P["major_radius"]
        rho = np.hypot(x - cx, y - cy)
        # on the axis every ring point is equally close; any direction will do
        on_axis = rho == 0
        safe = np.where(on_axis, 1.0, rho)
        qx = cx + R * np.where(on_axis, 1.0, (x - cx) / safe)
        qy = cy + R * np.where(on_axis, 0.0, (y - cy) / safe)
        return _trace_tube(x, y, qx, qy, zc, P["radius"])
    if kind == "two_spheres_occluding":
        r1, r2 = P["radius"], P["radius_far"]
        o1, o2 = P["offset"], P["offset_far"]
        h1, f1, b1, gf1, gb1 = _trace_ellipsoid(x, y, cx + o1[0], cy + o1[1], zc, r1, r1, r1)
        h2, f2, b2, gf2, gb2 = _trace_ellipsoid(
            x, y, cx + o2[0], cy + o2[1], zc + P["depth_gap"], r2, r2, r2)
        f1 = np.where(h1, f1, np.inf)
        f2 = np.where(h2, f2, np.inf)
        b1 = np.where(h1, b1, -np.inf)
        b2 = np.where(h2, b2, -np.inf)
        near1 = f1 <= f2
        far1 = b1 >= b2
        zf = np.where(near1, f1, f2)
        zb = np.where(far1, b1, b2)
        gf = np.where(near1[..., None], gf1, gf2)
        gb = np.where(far1[..., None], gb1, gb2)
        return h1 | h2, zf, zb, gf, gb
    if kind == "tilted_plane":
        gx_, gy_ = P["tilt"]
        hit = np.hypot(x - cx, y - cy) < P["radius"]
        zf = zc + gx_ * (x - cx) + gy_ * (y - cy)
        g = np.broadcast_to(np.array([gx_, gy_, -1.0]), x.shape + (3,))
        return hit, zf, zf + P["gap"], g, -g
    if kind == "step_relief":
        hx, hy = P["half_size"]
        sx, sy = P["slab_half_size"]
        rho = min(P["edge_radius"], P["step"])
        ax, ay = np.abs(x - cx), np.abs(y - cy)
        hit = (ax < hx) & (ay < hy)
        # inset from the slab outline; the top face rolls off over a
        # quarter circle of radius rho before the vertical wall
        din_x, din_y = sx - ax, sy - ay
        inset = np.minimum(din_x, din_y)
        slab = inset > 0
        q = np.clip(rho - inset, 0.0, rho)
        s_ = np.sqrt(np.maximum(rho * rho - q * q, 0.0))
        zf = np.where(slab, zc - P["step"] + rho - s_, zc)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(slab & (q > 0), q / s_, 0.0)
        along_x = din_x < din_y
        gx_ = np.where(along_x, slope * np.sign(x - cx), 0.0)
        gy_ = np.where(along_x, 0.0, slope * np.sign(y - cy))
        g = np.stack([gx_, gy_, -np.ones_like(x)], axis=-1)
        back = np.broadcast_to(np.array([0.0, 0.0, 1.0]), x.shape + (3,))
        return hit, zf, np.full_like(zf, zc + P["thickness"]), g, back
    raise ValueError(kind)


def _inscribed_params(kind, P):
    """A coarser primitive strictly inside the shape, standing in for a body model."""
    P = dict(P)
    s = INSCRIBE_SCALE
    if kind in ("sphere", "capsule", "torus"):
        P["radius"] = P["radius"] * s
    elif kind == "ellipsoid":
        P["radii"] = tuple(v * s for v in P["radii"])
    elif kind == "two_spheres_occluding":
        P["radius"] *= s
        P["radius_far"] *= s
    elif kind == "tilted_plane":
        P["radius"] *= s
    elif kind == "step_relief":
        P["half_size"] = tuple(v * s for v in P["half_size"])
        P["slab_half_size"] = (0.0, 0.0)
    return P


def rim_gap_bound(spec: SceneSpec):
    """Upper bound on |z_front - z_back| at silhouette pixels of smooth closed shapes.

    A silhouette pixel has a 4-neighbour outside the footprint, so its centre
    lies within one pitch of the occluding contour.
    """
    P = spec.resolved()
    p = spec.pitch
    if spec.kind == "sphere":
        r = P["radius"]
        return 2.0 * np.sqrt(max(2 * r * p - p * p, 0.0))
    if spec.kind == "ellipsoid":
        a, b, c = P["radii"]
        return 2.0 * c * np.sqrt(2.0 * p / min(a, b))
    if spec.kind in ("capsule", "torus"):
        r = P["radius"]
        return 2.0 * np.sqrt(max(2 * r * p - p * p, 0.0))
    raise ValueError(f"{spec.kind} is not a smooth closed shape")


def _normals_from_grad(grad, hit):
    n = -grad / np.linalg.norm(grad, axis=-1, keepdims=True).clip(min=1e-300)
    n[~hit] = np.nan
    return n


def _render(kind, P, grid):
    h, w = grid.raster_shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    x, y = u * grid.pitch, v * grid.pitch
    hit, zf, zb, gf, gb = _trace(kind, P, x, y)
    nf = _normals_from_grad(np.array(gf, dtype=np.float64), hit)
    nb = _normals_from_grad(np.array(gb, dtype=np.float64), hit)
    return hit, zf, zb, nf, nb


def generate(spec: SceneSpec) -> SceneBundle:
    grid = spec.grid
    P = spec.resolved()
    hit, zf, zb, nf, nb = _render(spec.kind, P, grid)
    if not hit.any():
        raise SceneOutOfBounds(f"{spec.kind} does not intersect the {grid.width}x{grid.height} grid")
    if hit[0].any() or hit[-1].any() or hit[:, 0].any() or hit[:, -1].any():
        raise SceneOutOfBounds(
            f"{spec.kind} footprint touches the border of the {grid.width}x{grid.height} grid "
            f"(pitch {grid.pitch}); a one-pixel margin is required"
        )
    omega_n = hit & (np.abs(nf[..., 2]) >= NZ_SAFE) & (np.abs(nb[..., 2]) >= NZ_SAFE)

    if spec.prior == "exact":
        omega_z = omega_n.copy()
        prior_f, prior_b = zf, zb
    elif spec.prior == "eroded_offset":
        omega_z = ndimage.binary_erosion(omega_n, iterations=ERODE_PIXELS)
        prior_f, prior_b = zf + spec.prior_delta, zb + spec.prior_delta
    else:
        ihit, izf, izb, _, _ = _render(spec.kind, _inscribed_params(spec.kind, P), grid)
        omega_z = ihit & omega_n
        prior_f, prior_b = izf, izb

    domain = build_domain(omega_n, omega_z, grid)
    nan = np.full(grid.raster_shape, np.nan)
    depth_f = np.where(omega_n, zf, nan)
    depth_b = np.where(omega_n, zb, nan)
    prior_f = np.where(omega_z, prior_f, nan)
    prior_b = np.where(omega_z, prior_b, nan)
    nf[~omega_n] = np.nan
    nb[~omega_n] = np.nan

    if spec.noise_deg > 0:
        seeds = np.random.SeedSequence(spec.seed).spawn(2)
        nf = perturb_normals(nf, spec.noise_deg, seeds[0], n_z_min=NZ_SAFE)
        nb = perturb_normals(nb, spec.noise_deg, seeds[1], n_z_min=NZ_SAFE)

    bundle = SceneBundle(spec, nf, nb, depth_f, depth_b, prior_f, prior_b, domain)
    _check_bundle(bundle)
    return bundle


def _check_bundle(bundle):
    dom = bundle.domain
    zf = bundle.depth_front[dom.omega_n]
    zb = bundle.depth_back[dom.omega_n]
    if np.any(zf > zb):
        raise AssertionError("generated scene has front sheet behind back sheet")
    if bundle.spec.kind in SMOOTH_CLOSED:
        gap = (bundle.depth_back - bundle.depth_front)[dom.boundary]
        bound = rim_gap_bound(bundle.spec)
        if np.any(gap > bound * (1 + 1e-9)):
            raise AssertionError(f"silhouette gap {gap.max():.4g} exceeds bound {bound:.4g}")


def _rng(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def perturb_normals(normals, stddev_deg, seed, n_z_min=N_Z_MIN):
    """Rotate every normal by a random angle about a random tangent axis.

    Angles are folded-normal with the given standard deviation (degrees).
    Random numbers are drawn for every grid pixel in row-major order from a
    counter-based generator, so the result only depends on ``seed``. A
    rotation that would bring ``|n_z|`` below ``n_z_min`` or flip the sign of
    ``n_z`` is halved until it does not.
    """
    normals = np.asarray(normals, dtype=np.float64)
    if stddev_deg < 0:
        raise ValueError("stddev_deg must be >= 0")
    if stddev_deg == 0:
        return normals.copy()
    rng = _rng(seed)
    shape = normals.shape[:-1]
    theta = np.abs(rng.normal(0.0, np.deg2rad(stddev_deg), size=shape))
    phi = rng.uniform(0.0, 2 * np.pi, size=shape)

    n = normals
    helper = np.zeros_like(n)
    use_x = np.abs(n[..., 0]) < 0.9
    helper[..., 0] = use_x
    helper[..., 1] = ~use_x
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True).clip(min=1e-300)
    t2 = np.cross(n, t1)
    axis_dir = np.cos(phi)[..., None] * t1 + np.sin(phi)[..., None] * t2

    finite = np.isfinite(n).all(axis=-1)
    for _ in range(64):
        out = np.cos(theta)[..., None] * n + np.sin(theta)[..., None] * axis_dir
        bad = finite & (
            (np.abs(out[..., 2]) < n_z_min) | (np.sign(out[..., 2]) != np.sign(n[..., 2]))
        )
        if not bad.any():
            break
        theta = np.where(bad, theta * 0.5, theta)
    else:
        theta = np.where(bad, 0.0, theta)
        out = np.cos(theta)[..., None] * n + np.sin(theta)[..., None] * axis_dir
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


# --- dense oracle ---------------------------------------------------------------

ORACLE_MAX_UNKNOWNS = 2048


def _dense_step(system, x0, hyper):
    L = system.lhs.to_dense()
    x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(L, lower=True), system.rhs)
    denom = np.linalg.norm(system.rhs)
    res = np.linalg.norm(L @ x - system.rhs) / denom if denom > 0 else 0.0
    return x, CgReport(0, float(res), True)


def dense_oracle_solve(problem: DbiniProblem, hyper, record_iterates=False):
    """Same outer schedule as :func:`dbini_optimize`, inner solves by dense Cholesky."""
    if 2 * problem.domain.size > ORACLE_MAX_UNKNOWNS:
        raise OracleTooLarge(
            f"{2 * problem.domain.size} unknowns exceeds the dense oracle cap "
            f"of {ORACLE_MAX_UNKNOWNS}"
        )
    return run_irls(problem, hyper, _dense_step, record_iterates=record_iterates)


def write_scene(bundle: SceneBundle, directory):
    """Write a scene directory readable by :func:`read_scene`."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    io.write_pfm(out / "normals_f.pfm", bundle.normals_front)
    io.write_pfm(out / "normals_b.pfm", bundle.normals_back)
    io.write_pfm(out / "depth_f_gt.pfm", bundle.depth_front)
    io.write_pfm(out / "depth_b_gt.pfm", bundle.depth_back)
    io.write_pfm(out / "prior_f.pfm", bundle.prior_front)
    io.write_pfm(out / "prior_b.pfm", bundle.prior_back)
    io.write_mask_png(out / "mask_n.png", bundle.domain.omega_n)
    io.write_mask_png(out / "mask_z.png", bundle.domain.omega_z)
    (out / "scene.json").write_text(json.dumps(bundle.spec.to_json(), indent=2, sort_keys=True) + "\n")
    return out


SCENE_FILES = (
    "normals_f.pfm", "normals_b.pfm", "depth_f_gt.pfm", "depth_b_gt.pfm",
    "prior_f.pfm", "prior_b.pfm", "mask_n.png", "mask_z.png", "scene.json",
)

def step_sharpness(depth, spec: SceneSpec, domain):
    """Mean absolute depth jump across the slab walls of a step_relief scene.

    Only 4-neighbour pairs that straddle the slab outline and lie inside the
    domain count. Larger means a sharper recovered step.
    """
    if spec.kind != "step_relief":
        raise ValueError("step sharpness is only defined for step_relief scenes")
    P = spec.resolved()
    (cx, cy), (sx, sy) = P["center"], P["slab_half_size"]
    h, w = domain.shape.raster_shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64) * spec.pitch
    inside = (np.abs(u - cx) < sx) & (np.abs(v - cy) < sy)
    om = domain.omega_n
    pairs_x = (inside[:, 1:] != inside[:, :-1]) & om[:, 1:] & om[:, :-1]
    pairs_y = (inside[1:] != inside[:-1]) & om[1:] & om[:-1]
    z = np.asarray(depth, dtype=np.float64)
    jumps = np.concatenate([np.abs(z[:, 1:] - z[:, :-1])[pairs_x],
                            np.abs(z[1:] - z[:-1])[pairs_y]])
    return float(jumps.mean())


#: Files without which a scene directory cannot be integrated.
REQUIRED_SCENE_FILES = ("normals_f.pfm", "normals_b.pfm", "mask_n.png")


def read_scene(directory, pitch=None):
    """Load a scene directory written by :func:`write_scene` (or by hand).

    Only the normal maps and ``mask_n.png`` are required. Missing priors are
    ``None``; a missing ``mask_z.png`` defaults to where both priors are
    finite; missing ground truth leaves ``depth_front``/``depth_back`` as
    ``None``. Pitch comes from ``scene.json`` unless given explicitly.
    """
    d = Path(directory)
    missing = [name for name in REQUIRED_SCENE_FILES if not (d / name).is_file()]
    if missing:
        raise FileNotFoundError(f"scene directory {d} is missing: {', '.join(missing)}")

    spec = None
    if (d / "scene.json").is_file():
        spec = SceneSpec.from_json(json.loads((d / "scene.json").read_text()))
    if pitch is None:
        pitch = spec.pitch if spec is not None else 1.0

    def optional(name):
        return io.read_pfm(d / name) if (d / name).is_file() else None

    omega_n = io.read_mask_png(d / "mask_n.png")
    nf = io.read_normals(d / "normals_f.pfm")
    nb = io.read_normals(d / "normals_b.pfm")
    prior_f, prior_b = optional("prior_f.pfm"), optional("prior_b.pfm")
    if (d / "mask_z.png").is_file():
        omega_z = io.read_mask_png(d / "mask_z.png")
    else:
        omega_z = np.ones_like(omega_n)
        for prior in (prior_f, prior_b):
            omega_z &= np.isfinite(prior) if prior is not None else False
    h, w = omega_n.shape
    domain = build_domain(omega_n, omega_z & omega_n, GridShape(w, h, pitch))
    return SceneBundle(spec, nf, nb, optional("depth_f_gt.pfm"), optional("depth_b_gt.pfm"),
                       prior_f, prior_b, domain)


# --- stored error bounds ----------------------------------------------------------

ORACLE_RES = 32
ORACLE_SAFETY = 4.0
ORACLE_FLOOR = 1e-6
ORACLE_BOUNDS_FILE = "oracle_bounds.json"


def oracle_reference_errors(res=ORACLE_RES, hyper=None):
    """Per-kind depth RMSE of the dense oracle at ``res``, in pixel units.

    Each kind uses its default geometry with an exact prior and clean
    normals; the error is what the discretisation alone costs.
    """
    from .meshing import stacked_metrics

    hyper = Hyperparameters() if hyper is None else hyper
    out = {}
    for kind in KINDS:
        b = generate(SceneSpec(kind, res, res))
        sol = dense_oracle_solve(b.problem(), hyper)
        m = stacked_metrics([sol.front_raster(b.domain), sol.back_raster(b.domain)],
                            [b.depth_front, b.depth_back], b.domain)
        out[kind] = m.rmse / b.spec.pitch
    return out


def load_oracle_bounds():
    text = resources.files(__package__).joinpath(ORACLE_BOUNDS_FILE).read_text()
    return json.loads(text)


def oracle_bound(spec: SceneSpec, table=None):
    """Upper bound on the depth RMSE of the default solver for a clean, exact-prior scene.

    Error in pixel units is modelled as resolution independent (first order
    in pitch relative to the shape size), so the bound is the stored
    low-resolution oracle error times a safety factor, converted to scene
    units. Returns ``None`` for scenes outside that model (noisy normals,
    inexact priors, non-default geometry).
    """
    if spec is None or spec.prior != "exact" or spec.noise_deg > 0 or spec.params:
        return None
    table = load_oracle_bounds() if table is None else table
    ref = table["errors"].get(spec.kind)
    if ref is None:
        return None
    return float(table["safety"] * max(ref, ORACLE_FLOOR) * spec.pitch)


def main():  # pragma: no cover - maintenance entry point
    """Regenerate the stored oracle error table next to this module."""
    table = {"res": ORACLE_RES, "safety": ORACLE_SAFETY, "errors": oracle_reference_errors()}
    path = Path(__file__).with_name(ORACLE_BOUNDS_FILE)
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    main()
