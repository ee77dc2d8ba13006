"""Synthetic deformed-annulus Poisson benchmark with a finite-difference
reference solver.

Domains are star-shaped annuli: inner and outer boundaries are truncated
Fourier series in the azimuth.  -laplace(u) = f is solved with zero
Dirichlet data on a body-fitted polar mesh by second-order conservative
finite differences in mapped coordinates, with metric terms taken from the
mesh itself.  Point clouds for learning are strided subsets of the solver
mesh, rescaled into the unit square.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as G
from .data import DatasetBundle, SampleRecord, config_hash
from .errors import GenerationError, SolverError
from .geometry import Geometry, interp_to_uniform


@dataclass
class SyntheticConfig:
    family: str = "deformed_annulus_poisson"
    n_theta: int = 100          # solver mesh resolution (azimuthal)
    n_radial: int = 43          # solver mesh resolution (radial, both boundaries)
    cloud_stride_theta: int = 5
    cloud_stride_radial: int = 6
    boundary_modes: int = 2
    outer_base: float = 1.0
    inner_base: float = 0.4
    outer_const_amp: float = 0.10
    outer_mode_amp: float = 0.08
    inner_const_amp: float = 0.25
    inner_mode_amp: float = 0.10
    min_gap: float = 0.08       # native-scale clearance between the boundaries
    source: str = "constant"
    train_count: int = 200
    test_count: int = 50
    seed: int = 0

    def entries(self):
        return {k: str(v) for k, v in asdict(self).items()}

    def hash(self):
        return config_hash(self.entries())

    def unit_scale(self):
        """Native-to-unit-square scale shared by every sample of the family."""
        worst = self.outer_base * (1.0 + self.outer_const_amp
                                   + sum(self.outer_mode_amp / k
                                         for k in range(1, self.boundary_modes + 1)))
        return 0.48 / worst


def source_field(cfg, pts):
    if cfg.source == "constant":
        return np.ones(pts.shape[:-1] + (1,))
    raise GenerationError(f"unknown source spec {cfg.source!r}")


# --------------------------------------------------------------- boundary draw

def _radius(theta, base, coeffs):
    """base * (1 + c0 + sum_k a_k cos(k theta) + b_k sin(k theta))."""
    r = 1.0 + coeffs[0]
    modes = (len(coeffs) - 1) // 2
    for k in range(1, modes + 1):
        r = r + coeffs[2 * k - 1] * np.cos(k * theta) + coeffs[2 * k] * np.sin(k * theta)
    return base * r


def draw_boundaries(cfg, rng, max_tries=20):
    """Sample (outer_coeffs, inner_coeffs) subject to positivity and clearance."""
    m = cfg.boundary_modes
    for _ in range(max_tries):
        outer = np.empty(1 + 2 * m)
        inner = np.empty(1 + 2 * m)
        outer[0] = rng.uniform(-cfg.outer_const_amp, cfg.outer_const_amp)
        inner[0] = rng.uniform(-cfg.inner_const_amp, cfg.inner_const_amp)
        for k in range(1, m + 1):
            outer[2 * k - 1:2 * k + 1] = rng.uniform(
                -cfg.outer_mode_amp / k, cfg.outer_mode_amp / k, size=2)
            inner[2 * k - 1:2 * k + 1] = rng.uniform(
                -cfg.inner_mode_amp / k, cfg.inner_mode_amp / k, size=2)
        theta = np.linspace(0, 2 * np.pi, 512, endpoint=False)
        r_out = _radius(theta, cfg.outer_base, outer)
        r_in = _radius(theta, cfg.inner_base, inner)
        if (r_in > 0.05).all() and (r_out - r_in > cfg.min_gap).all():
            return outer, inner
    raise GenerationError("could not draw a valid boundary pair")


def polar_mesh(cfg, outer, inner, n_theta=None, n_radial=None):
    """Body-fitted native-scale mesh (n_theta, n_radial, 2), azimuth-major."""
    nt = cfg.n_theta if n_theta is None else n_theta
    nr = cfg.n_radial if n_radial is None else n_radial
    theta = 2 * np.pi * np.arange(nt) / nt
    rho = np.arange(nr) / (nr - 1)
    r_out = _radius(theta, cfg.outer_base, outer)
    r_in = _radius(theta, cfg.inner_base, inner)
    r = r_in[:, None] + rho[None, :] * (r_out - r_in)[:, None]
    return np.stack([r * np.cos(theta)[:, None], r * np.sin(theta)[:, None]], axis=-1)


# ------------------------------------------------------------ reference solver

def solve_reference(mesh, f, return_residual=False):
    """Solve -laplace(u) = f, u = 0 on both radial boundaries.

    mesh: (nt, nr, 2) body-fitted points, periodic in the first axis.
    Conservative second-order finite differences in mapped coordinates;
    metric terms are finite differences of the mesh coordinates.  Direct
    sparse solve.
    """
    nt, nr = mesh.shape[:2]
    f = np.asarray(f, dtype=float).reshape(nt, nr)
    ha = 1.0 / nt
    hb = 1.0 / (nr - 1)
    x_a = (np.roll(mesh, -1, axis=0) - np.roll(mesh, 1, axis=0)) / (2 * ha)
    x_b = np.empty_like(mesh)
    x_b[:, 1:-1] = (mesh[:, 2:] - mesh[:, :-2]) / (2 * hb)
    x_b[:, 0] = (-3 * mesh[:, 0] + 4 * mesh[:, 1] - mesh[:, 2]) / (2 * hb)
    x_b[:, -1] = (3 * mesh[:, -1] - 4 * mesh[:, -2] + mesh[:, -3]) / (2 * hb)
    jac = x_a[..., 0] * x_b[..., 1] - x_a[..., 1] * x_b[..., 0]
    if (np.abs(jac) < 1e-14).any():
        raise SolverError("degenerate mesh: vanishing Jacobian")
    g11 = (x_a * x_a).sum(-1)
    g12 = (x_a * x_b).sum(-1)
    g22 = (x_b * x_b).sum(-1)
    a = g22 / jac          # J * g^{aa}
    b = -g12 / jac         # J * g^{ab}
    c = g11 / jac          # J * g^{bb}

    def idx(i, j):
        return (i % nt) * nr + j

    rows, cols, vals = [], [], []
    rhs = np.zeros(nt * nr)

    def add(r, c_, v):
        rows.append(r)
        cols.append(c_)
        vals.append(v)

    for i in range(nt):
        ip, im = (i + 1) % nt, (i - 1) % nt
        for j in range(1, nr - 1):
            row = idx(i, j)
            rhs[row] = jac[i, j] * f[i, j]
            # -d_a(a u_a): flux form with averaged coefficients
            a_p = 0.5 * (a[i, j] + a[ip, j])
            a_m = 0.5 * (a[i, j] + a[im, j])
            add(row, idx(ip, j), -a_p / ha ** 2)
            add(row, idx(im, j), -a_m / ha ** 2)
            add(row, row, (a_p + a_m) / ha ** 2)
            # -d_b(c u_b)
            c_p = 0.5 * (c[i, j] + c[i, j + 1])
            c_m = 0.5 * (c[i, j] + c[i, j - 1])
            add(row, idx(i, j + 1), -c_p / hb ** 2)
            add(row, idx(i, j - 1), -c_m / hb ** 2)
            add(row, row, (c_p + c_m) / hb ** 2)
            # -d_a(b u_b): centered cross term
            coef = 1.0 / (4 * ha * hb)
            for s_i, ii in ((1, ip), (-1, im)):
                add(row, idx(ii, j + 1), -s_i * b[ii, j] * coef)
                add(row, idx(ii, j - 1), s_i * b[ii, j] * coef)
            # -d_b(b u_a)
            for s_j, jj in ((1, j + 1), (-1, j - 1)):
                add(row, idx(ip, jj), -s_j * b[i, jj] * coef)
                add(row, idx(im, jj), s_j * b[i, jj] * coef)
        for j in (0, nr - 1):
            row = idx(i, j)
            add(row, row, 1.0)
            rhs[row] = 0.0

    mat = sp.csr_matrix((vals, (rows, cols)), shape=(nt * nr, nt * nr))
    u = spla.spsolve(mat, rhs)
    if not np.isfinite(u).all():
        raise SolverError("direct solve produced non-finite values")
    residual = float(np.abs(mat @ u - rhs).max())
    u = u.reshape(nt, nr)
    if return_residual:
        return u, residual
    return u


def annulus_exact(r, r_in=0.4, r_out=1.0):
    """Closed-form radial solution of -laplace(u)=1 with zero Dirichlet data."""
    a = (r_out ** 2 - r_in ** 2) / (4 * np.log(r_out / r_in))
    b = r_out ** 2 / 4 - a * np.log(r_out)
    return -r ** 2 / 4 + a * np.log(r) + b


# ------------------------------------------------------------------- generator

def _cloud_indices(cfg):
    ti = np.arange(0, cfg.n_theta, cfg.cloud_stride_theta)
    ri = np.arange(0, cfg.n_radial, cfg.cloud_stride_radial)
    if ri[-1] != cfg.n_radial - 1:
        ri = np.append(ri, cfg.n_radial - 1)
    return ti, ri


def make_sample(cfg, outer, inner):
    """Solve one domain and restrict to the training cloud."""
    mesh = polar_mesh(cfg, outer, inner)
    f = source_field(cfg, mesh)
    u = solve_reference(mesh, f[..., 0])
    ti, ri = _cloud_indices(cfg)
    scale = cfg.unit_scale()
    pts = 0.5 + scale * mesh[np.ix_(ti, ri)].reshape(-1, 2)
    fin = f[np.ix_(ti, ri)].reshape(-1, 1)
    uout = u[np.ix_(ti, ri)].reshape(-1, 1)
    design = np.concatenate([outer, inner])
    geo = Geometry(G.POINT_CLOUD, pts, design_params=design)
    return SampleRecord(geo, fin, uout)


def gen_synthetic(cfg):
    """Deterministic train+test bundle; per-sample RNG streams are disjoint."""
    records = []
    for split, count in ((0, cfg.train_count), (1, cfg.test_count)):
        for i in range(count):
            rng = np.random.default_rng([cfg.seed, split, i])
            outer, inner = draw_boundaries(cfg, rng)
            records.append(make_sample(cfg, outer, inner))
    ti, ri = _cloud_indices(cfg)
    manifest = {
        "problem": cfg.family,
        "io_mode": "point_cloud",
        "dim": "2",
        "in_channels": "1",
        "out_channels": "1",
        "channels_in": "source_term:1",
        "channels_out": "poisson_solution:1",
        "train_count": str(cfg.train_count),
        "test_count": str(cfg.test_count),
        "cloud_points": str(len(ti) * len(ri)),
        "unit_scale": repr(cfg.unit_scale()),
        "config_hash": cfg.hash(),
    }
    for k, v in cfg.entries().items():
        manifest[f"gen.{k}"] = v
    return DatasetBundle(manifest, records)


def split_bundle(bundle):
    """(train, test) views of a generated bundle."""
    n_train = int(bundle.manifest["train_count"])
    train = DatasetBundle(bundle.manifest, bundle.records[:n_train])
    test = DatasetBundle(bundle.manifest, bundle.records[n_train:])
    return train, test


def interpolate_bundle(bundle, grid_size):
    """Derive the uniform-grid twin of a point-cloud bundle.

    Input channels become (interpolated source, occupancy); the target is the
    interpolated solution with the occupancy mask driving the loss.
    """
    s = int(grid_size)
    ax = np.arange(s) / s
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    lattice = np.stack([gx, gy], axis=-1)
    records = []
    for rec in bundle.records:
        both = np.concatenate([rec.inputs, rec.outputs], axis=-1)
        grid, mask = interp_to_uniform(rec.geometry, both, s)
        ci = rec.inputs.shape[-1]
        fin = np.concatenate([grid[..., :ci], mask[..., None].astype(float)], axis=-1)
        geo = Geometry(G.STRUCTURED, lattice,
                       design_params=None if rec.geometry.design_params is None
                       else rec.geometry.design_params.data)
        records.append(SampleRecord(geo, fin, grid[..., ci:], mask))
    manifest = dict(bundle.manifest)
    manifest["io_mode"] = "structured"
    manifest["in_channels"] = str(int(bundle.manifest.get("in_channels", "1")) + 1)
    manifest["channels_in"] = bundle.manifest.get("channels_in", "") + ",occupancy:1"
    manifest["grid_size"] = str(s)
    return DatasetBundle(manifest, records)
