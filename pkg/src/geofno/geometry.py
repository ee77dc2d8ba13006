"""Physical domains and the coordinate maps into the computational torus.

A Geometry is either a point cloud (N, d) or a structured mesh
(s_1, ..., s_d, d), optionally carrying a design-parameter vector and a
per-point validity mask.  Coordinate maps send physical points into
[0, 1)^d: analytic variants (identity, canonical indexing, radial R-mesh
stretch, body-fitted O-mesh) or a learned residual network that starts as
the exact identity.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from . import tensor as T
from .errors import ConditioningError, DimensionError, GeometryError, KindError
from .tensor import Tensor, apply_op, as_tensor

POINT_CLOUD = "point_cloud"
STRUCTURED = "structured_mesh"


class Geometry:
    """A sampled physical domain."""

    def __init__(self, kind, points, design_params=None, mask=None):
        if kind not in (POINT_CLOUD, STRUCTURED):
            raise KindError(f"unknown geometry kind {kind!r}")
        points = as_tensor(points)
        if kind == POINT_CLOUD and points.ndim != 2:
            raise DimensionError(f"point cloud must be (N, d), got {points.shape}")
        if kind == STRUCTURED and points.ndim < 3:
            raise DimensionError(
                f"structured mesh must be (s_1..s_d, d), got {points.shape}")
        d = points.shape[-1]
        if d not in (1, 2, 3):
            raise DimensionError(f"spatial dimension must be 1, 2 or 3, got {d}")
        if not np.isfinite(points.data).all():
            raise GeometryError("geometry coordinates must be finite")
        self.kind = kind
        self.points = points
        self.design_params = None if design_params is None else as_tensor(design_params)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.size != points.data[..., 0].size:
                raise DimensionError("mask size does not match point count")
        self.mask = mask

    @property
    def dim(self):
        return self.points.shape[-1]

    @property
    def num_points(self):
        return int(np.prod(self.points.shape[:-1]))

    @property
    def mesh_shape(self):
        if self.kind != STRUCTURED:
            raise KindError("mesh_shape is defined for structured meshes only")
        return self.points.shape[:-1]

    def cloud_view(self):
        """Points flattened to (N, d) regardless of kind."""
        return T.reshape(self.points, (self.num_points, self.dim))


def canonical_map(mesh):
    """Index-induced coordinates (i_1/s_1, ..., i_d/s_d) of a structured mesh.

    Depends only on the index grid, never on the stored physical points.
    """
    if not isinstance(mesh, Geometry) or mesh.kind != STRUCTURED:
        raise KindError("canonical_map requires a structured mesh")
    shape = mesh.mesh_shape
    axes = [np.arange(s) / s for s in shape]
    grids = np.meshgrid(*axes, indexing="ij")
    return Tensor(np.stack(grids, axis=-1))


def wrap_torus(x):
    """Wrap coordinates periodically into [0, 1); gradient is the identity."""
    x = as_tensor(x)
    shift = np.floor(x.data)
    return apply_op(x.data - shift, (x,), lambda g: (g,))


def sinusoidal_features(x, m):
    """Concatenate raw coordinates with sin(2^i * 2*pi * x_j), i = 0..m-1.

    Fixed (coordinate-major, octave-minor) ordering; output (N, d + d*m).
    """
    if m < 1:
        raise DimensionError("feature count m must be >= 1")
    x = as_tensor(x)
    parts = [x]
    for j in range(x.shape[-1]):
        xj = x[..., j:j + 1]
        for i in range(m):
            parts.append(T.sin(T.mul(xj, float(2 ** i) * 2.0 * np.pi)))
    return T.concat(parts, axis=-1)


class DeformNet:
    """Residual coordinate network xi = x + f(sin-features(x), a).

    The final layer starts at zero, so a fresh network is exactly the
    identity map.
    """

    def __init__(self, dim, freq_count=8, hidden=32, cond_dim=0, seed=0):
        self.dim = dim
        self.freq_count = freq_count
        self.hidden = hidden
        self.cond_dim = cond_dim
        rng = np.random.default_rng(seed)
        d_in = dim + dim * freq_count + cond_dim
        self.params = {
            "w0": _kaiming(rng, d_in, hidden),
            "b0": Tensor(np.zeros(hidden), requires_grad=True),
            "w1": _kaiming(rng, hidden, hidden),
            "b1": Tensor(np.zeros(hidden), requires_grad=True),
            "w2": Tensor(np.zeros((hidden, dim)), requires_grad=True),
            "b2": Tensor(np.zeros(dim), requires_grad=True),
        }

    def param_list(self):
        return [self.params[k] for k in sorted(self.params)]

    def load(self, tensors):
        for k, t in zip(sorted(self.params), tensors):
            self.params[k] = t

    def residual(self, x, a=None):
        """f(x, a) for x of shape (..., N, d); a is one vector (p,) shared by
        all points or a per-batch stack (B, p) broadcast over points."""
        feats = sinusoidal_features(x, self.freq_count)
        if self.cond_dim:
            if a is None:
                raise ConditioningError(
                    "this deformation network was built with design-parameter "
                    "conditioning; pass the parameter vector")
            a = as_tensor(a)
            if a.ndim == 1:
                view = (1,) * (feats.ndim - 1) + (a.shape[0],)
            elif a.ndim == feats.ndim - 1:
                view = a.shape[:-1] + (1,) * (feats.ndim - 1 - (a.ndim - 1)) + (a.shape[-1],)
            else:
                raise DimensionError(f"conditioning shape {a.shape} does not broadcast")
            tile = np.ones(feats.shape[:-1] + (1,))
            feats = T.concat([feats, T.mul(T.reshape(a, view), Tensor(tile))], axis=-1)
        p = self.params
        h = T.gelu(T.add(T.matmul(feats, p["w0"]), p["b0"]))
        h = T.gelu(T.add(T.matmul(h, p["w1"]), p["b1"]))
        return T.add(T.matmul(h, p["w2"]), p["b2"])

    def __call__(self, x, a=None):
        return wrap_torus(T.add(x, self.residual(x, a)))


def _kaiming(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                  requires_grad=True)


class CoordinateMap:
    """The inverse deformation phi^{-1} from physical space to the torus."""

    VARIANTS = ("identity", "canonical_structured", "r_mesh", "o_mesh", "learned")

    def __init__(self, variant, net=None, center=(0.5, 0.5),
                 r_s=None, r_e=None, alpha=0.2):
        if variant not in self.VARIANTS:
            raise KindError(f"unknown coordinate map variant {variant!r}")
        self.variant = variant
        self.net = net
        self.center = np.asarray(center, dtype=float)
        self.r_s = None if r_s is None else np.atleast_1d(np.asarray(r_s, dtype=float))
        self.r_e = None if r_e is None else np.atleast_1d(np.asarray(r_e, dtype=float))
        self.alpha = float(alpha)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def learned(cls, dim, freq_count=8, hidden=32, cond_dim=0, seed=0):
        return cls("learned", net=DeformNet(dim, freq_count, hidden, cond_dim, seed))


def deform_inverse(cmap, x, a=None):
    """Map physical points (N, d) to computational coordinates in [0, 1)^d."""
    x = as_tensor(x)
    if cmap.variant == "identity":
        return wrap_torus(x)
    if cmap.variant == "learned":
        return cmap.net(x, a)
    if cmap.variant == "canonical_structured":
        raise KindError("the canonical map acts on mesh indices; use canonical_map")
    if cmap.variant == "o_mesh":
        return Tensor(_polar_normalize(x.data, cmap))
    # r_mesh: invert the radial stretch ray by ray
    return Tensor(_r_mesh_inverse_points(x.data, cmap))


def r_mesh_deform(r, r_s, r_e, alpha):
    """Radial stretch of the adaptive R-mesh; fixes r=0, r=r_s and r=r_e.

    Piecewise quadratic: alpha near the refined interface at r_s, quadratic
    growth toward the cell boundary r_e (outer) or the origin (inner).
    """
    r = np.asarray(r, dtype=float)
    if (r < 0).any():
        raise GeometryError("radial distance must be non-negative")
    if not (0 <= r_s < r_e):
        raise GeometryError("need 0 <= r_s < r_e")
    if not (0 < alpha <= 1):
        raise GeometryError("stretching factor must lie in (0, 1]")
    outer = r_s + alpha * (r - r_s) + (1 - alpha) * (r - r_s) ** 2 / (r_e - r_s)
    if r_s > 0:
        inner = r_s - alpha * (r_s - r) - (1 - alpha) * (r_s - r) ** 2 / r_s
    else:
        inner = outer
    return np.where(r >= r_s, outer, inner)


def r_mesh_inverse(rp, r_s, r_e, alpha):
    """Closed-form inverse of r_mesh_deform (quadratic root per branch)."""
    rp = np.asarray(rp, dtype=float)
    if alpha == 1.0:
        return rp
    beta = 1.0 - alpha
    # outer branch: beta/(re-rs) u^2 + alpha u - (rp - rs) = 0, u = r - rs;
    # root in the stable form 2q/(alpha + sqrt(alpha^2 + 4cq)) (no cancellation
    # as alpha -> 1)
    co = beta / (r_e - r_s)
    q_o = np.maximum(rp - r_s, 0.0)
    u_o = 2.0 * q_o / (alpha + np.sqrt(alpha ** 2 + 4.0 * co * q_o))
    if r_s > 0:
        ci = beta / r_s
        q_i = np.maximum(r_s - rp, 0.0)
        u_i = 2.0 * q_i / (alpha + np.sqrt(alpha ** 2 + 4.0 * ci * q_i))
    else:
        u_i = 0.0 * rp
    return np.where(rp >= r_s, r_s + u_o, r_s - u_i)


def _per_ray(values, theta):
    """Periodic linear interpolation of per-ray radii over azimuth."""
    n = len(values)
    if n == 1:
        return np.full_like(theta, values[0])
    pos = np.mod(theta, 2 * np.pi) / (2 * np.pi) * n
    i0 = np.floor(pos).astype(int) % n
    i1 = (i0 + 1) % n
    frac = pos - np.floor(pos)
    return values[i0] * (1 - frac) + values[i1] * frac


def _polar_normalize(pts, cmap):
    rel = pts - cmap.center
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    r = np.hypot(rel[:, 0], rel[:, 1])
    rs = _per_ray(cmap.r_s, theta)
    re = _per_ray(cmap.r_e, theta)
    xi1 = np.mod(theta / (2 * np.pi), 1.0)
    xi2 = np.clip((r - rs) / (re - rs), 0.0, 1.0)
    return np.stack([xi1, xi2], axis=-1)


def _r_mesh_inverse_points(pts, cmap):
    rel = pts - cmap.center
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    r = np.hypot(rel[:, 0], rel[:, 1])
    rs = _per_ray(cmap.r_s, theta)
    re = _per_ray(cmap.r_e, theta)
    r0 = np.empty_like(r)
    for i in range(len(r)):
        r0[i] = r_mesh_inverse(r[i], rs[i], re[i], cmap.alpha)
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return np.mod(cmap.center + r0[:, None] * unit, 1.0)


def o_mesh_generate(r_s, r_e, n_azimuth, n_radial, center=(0.5, 0.5)):
    """Body-fitted O-type structured mesh between two star-shaped boundaries.

    Azimuth-major (n_azimuth, n_radial, 2); angles uniform on [0, 2*pi),
    radii uniform between r_s(theta) and r_e(theta) on every ray.
    """
    if n_azimuth < 4:
        raise GeometryError("need at least 4 azimuthal points")
    if n_radial < 2:
        raise GeometryError("need at least 2 radial points")
    r_s = np.broadcast_to(np.asarray(r_s, dtype=float), (n_azimuth,))
    r_e = np.broadcast_to(np.asarray(r_e, dtype=float), (n_azimuth,))
    if (r_s >= r_e).any():
        raise GeometryError("inner radius must stay below outer radius on every ray")
    theta = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    rho = np.arange(n_radial) / (n_radial - 1)
    r = r_s[:, None] + rho[None, :] * (r_e - r_s)[:, None]
    x = center[0] + r * np.cos(theta)[:, None]
    y = center[1] + r * np.sin(theta)[:, None]
    return Geometry(STRUCTURED, np.stack([x, y], axis=-1))


def interp_to_uniform(cloud, values, grid_size, k=4, power=2.0):
    """Inverse-distance interpolation of a 2-d cloud onto a uniform grid.

    Returns (grid values (s, s, c), occupancy mask (s, s)); cells with no
    cloud point within 3/s are masked out.  Exact where a cloud point
    coincides with a grid node.
    """
    if not isinstance(cloud, Geometry):
        raise KindError("interp_to_uniform expects a Geometry")
    pts = np.asarray(cloud.points.data, dtype=float).reshape(-1, cloud.dim)
    if pts.shape[0] == 0:
        raise GeometryError("empty point cloud")
    if cloud.dim != 2:
        raise DimensionError("interp_to_uniform is 2-d only")
    if pts.min() < -1e-12 or pts.max() > 1 + 1e-12:
        raise GeometryError("cloud must lie inside the unit square")
    vals = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=float)
    vals = vals.reshape(pts.shape[0], -1)
    s = int(grid_size)
    ax = np.arange(s) / s
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    targets = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    tree = cKDTree(pts)
    kk = min(k, pts.shape[0])
    dist, idx = tree.query(targets, k=kk)
    dist = np.atleast_2d(dist.reshape(len(targets), kk))
    idx = idx.reshape(len(targets), kk)
    mask = dist[:, 0] <= 3.0 / s
    exact = dist[:, 0] < 1e-12
    w = 1.0 / np.maximum(dist, 1e-150) ** power
    w /= w.sum(axis=1, keepdims=True)
    out = np.einsum("nk,nkc->nc", w, vals[idx])
    out[exact] = vals[idx[exact, 0]]
    out[~mask] = 0.0
    return out.reshape(s, s, -1), mask.reshape(s, s)


def grid_sample_bilinear(grid_values, pts):
    """Sample (s1, s2, c) lattice values at (N, 2) points via bilinear
    interpolation on the i/s lattice (periodic extension at the top edge)."""
    g = np.asarray(grid_values, dtype=float)
    s1, s2 = g.shape[:2]
    p = np.asarray(pts, dtype=float)
    fx = np.clip(p[:, 0] * s1, 0, s1 - 1 - 1e-9)
    fy = np.clip(p[:, 1] * s2, 0, s2 - 1 - 1e-9)
    i0, j0 = np.floor(fx).astype(int), np.floor(fy).astype(int)
    i1, j1 = np.minimum(i0 + 1, s1 - 1), np.minimum(j0 + 1, s2 - 1)
    tx, ty = (fx - i0)[:, None], (fy - j0)[:, None]
    return (g[i0, j0] * (1 - tx) * (1 - ty) + g[i1, j0] * tx * (1 - ty)
            + g[i0, j1] * (1 - tx) * ty + g[i1, j1] * tx * ty)
