"""Invariant batteries behind `geofno verify` and the acceptance suite.

Each suite returns a list of (check_name, measured, threshold, passed)
rows; a suite passes when every row does.
"""

from __future__ import annotations

import numpy as np

from . import geometry as G
from . import model as M
from . import spectral as S
from . import synthetic as SY
from . import tensor as T
from .geometry import Geometry
from .model import GeoFnoModel, ModelConfig
from .spectral import ModeSet
from .tensor import Tensor


def suite_transforms(seed=0, cases=50):
    """Round-trip identity F_a(F_a^-1) = I on random Nyquist-valid setups."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_case = None
    for i in range(cases):
        d = int(rng.integers(1, 3))
        k = int(rng.integers(0, 9))
        shape = tuple(int(2 * k + 1 + rng.integers(1, 6)) for _ in range(d))
        err = S.roundtrip_identity_check(ModeSet(d, k), shape,
                                         seed=int(rng.integers(2 ** 31)),
                                         channels=int(rng.integers(1, 4)))
        if err > worst:
            worst, worst_case = err, (d, k, shape)
    return [(f"roundtrip_identity[{cases} cases, worst {worst_case}]",
             worst, 1e-10, worst < 1e-10)]


def suite_reduction(seed=0):
    """The uniform-lattice NUDFT equals the FFT per mode, and the point-cloud
    forward equals the structured forward on grid-aligned clouds."""
    rng = np.random.default_rng(seed)
    rows = []
    ms = ModeSet(2, 3)
    s = 10
    v = rng.standard_normal((s * s, 2))
    xi = S.uniform_grid((s, s))
    nud = S.nudft_forward(Tensor(v), Tensor(xi), ms).data
    vhat = np.fft.fftn(v.reshape(s, s, 2), axes=(0, 1), norm="forward")
    gathered = np.stack([vhat[k[0] % s, k[1] % s] for k in ms.freqs])
    err = float(np.abs(nud - gathered).max())
    rows.append(("nudft_equals_fft_per_mode", err, 1e-10, err < 1e-10))

    grid_model = GeoFnoModel(ModelConfig(
        dim=2, io_mode="structured", in_channels=2, out_channels=1,
        layers=4, width=5, k_max=2, latent_shape=(8, 8), deform=False, seed=seed))
    cloud_model = GeoFnoModel(ModelConfig(
        dim=2, io_mode="point_cloud", in_channels=2, out_channels=1,
        layers=4, width=5, k_max=2, latent_shape=(8, 8), deform=False, seed=seed))
    lattice = S.uniform_grid((8, 8))
    mesh = Geometry(G.STRUCTURED, lattice.reshape(8, 8, 2))
    fields = rng.standard_normal((8, 8, 2))
    out_g = M.forward_structured(grid_model, mesh, Tensor(fields)).data
    cloud = Geometry(G.POINT_CLOUD, lattice)
    out_c = M.forward_pointcloud(cloud_model, cloud,
                                 Tensor(fields.reshape(-1, 2))).data
    err = float(np.abs(out_c.reshape(out_g.shape) - out_g).max())
    rows.append(("pointcloud_equals_structured_on_lattice", err, 1e-10, err < 1e-10))
    return rows


def tiny_model_gradcheck(seed):
    """grad_check on a full tiny model including the deformation network."""
    cfg = ModelConfig(dim=2, io_mode="point_cloud", in_channels=1, out_channels=1,
                      layers=3, width=3, k_max=1, latent_shape=(4, 4),
                      deform=True, deform_freqs=2, deform_hidden=4,
                      cond_dim=2, seed=seed)
    model = GeoFnoModel(cfg)
    rng = np.random.default_rng(seed)
    model.params["deform.w2"] = Tensor(
        0.05 * rng.standard_normal(model.params["deform.w2"].shape), requires_grad=True)
    model.load_params(model.param_list())
    pts = rng.random((5, 2))
    fields = rng.standard_normal((5, 1))
    design = rng.standard_normal(2)
    truth = rng.standard_normal((5, 1))

    def f(*ps):
        model.load_params(list(ps))
        cloud = Geometry(G.POINT_CLOUD, pts, design_params=design)
        pred = M.forward_pointcloud(model, cloud, Tensor(fields))
        diff = T.sub(pred, Tensor(truth))
        return T.sum_(T.mul(diff, diff))

    return T.grad_check(f, model.param_list(), eps=1e-5)


def suite_gradients(seed=0, seeds=3):
    rows = []
    rng = np.random.default_rng(seed)
    ms = ModeSet(2, 1)
    worst = 0.0
    for _ in range(seeds):
        s = int(rng.integers(2 ** 31))
        r2 = np.random.default_rng(s)
        v = Tensor(r2.standard_normal((5, 2)), requires_grad=True)
        xi = Tensor(r2.random((5, 2)), requires_grad=True)
        w = r2.standard_normal((ms.size, 2)) + 1j * r2.standard_normal((ms.size, 2))

        def f(vv, xx):
            out = S.nudft_forward(vv, xx, ms)
            return T.sum_(T.real(T.mul(T.conj(Tensor(w)), out)))

        worst = max(worst, T.grad_check(f, [v, xi], eps=1e-5))
    rows.append((f"nudft_gradients[{seeds} seeds]", worst, 1e-4, worst < 1e-4))

    worst_model = 0.0
    for _ in range(seeds):
        worst_model = max(worst_model, tiny_model_gradcheck(int(rng.integers(2 ** 31))))
    rows.append((f"full_model_gradients[{seeds} seeds]",
                 worst_model, 1e-4, worst_model < 1e-4))
    return rows


def suite_solver():
    cfg = SY.SyntheticConfig()
    errs = []
    residual = 0.0
    for nt, nr in ((32, 17), (64, 33)):
        mesh = SY.polar_mesh(cfg, np.zeros(5), np.zeros(5), n_theta=nt, n_radial=nr)
        u, res = SY.solve_reference(mesh, np.ones((nt, nr)), return_residual=True)
        residual = max(residual, res)
        r = np.hypot(mesh[..., 0], mesh[..., 1])
        errs.append(np.abs(u - SY.annulus_exact(r)).max())
    order = float(np.log2(errs[0] / errs[1]))
    return [
        ("solver_residual", residual, 1e-10, residual < 1e-10),
        ("solver_convergence_order", order, (1.8, 2.2), 1.8 <= order <= 2.2),
    ]


SUITES = {
    "transforms": suite_transforms,
    "gradients": suite_gradients,
    "reduction": suite_reduction,
    "solver": suite_solver,
}


def run_suite(name, **kw):
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](**kw)
