import numpy as np
import pytest

from geofno import design as DS
from geofno import tensor as T
from geofno.design import DesignProblem
from geofno.errors import GeometryError
from geofno.geometry import Geometry, POINT_CLOUD
from geofno.model import GeoFnoModel, ModelConfig
from geofno.tensor import Tensor


# ------------------------------------------------------------------ boundary

def test_constant_field_closed_polygon_is_zero():
    ang = 2 * np.pi * np.arange(7) / 7
    poly = np.stack([0.3 * np.cos(ang) + 0.1, 0.4 * np.sin(ang)], axis=-1)
    normals, ds = DS.polyline_normals(poly)
    f = Tensor(np.full((7, 1), 2.5))
    for comp in (0, 1):
        assert abs(DS.boundary_functional(f, normals, ds, comp).item()) < 1e-12


def test_nx_on_unit_circle_gives_pi():
    ang = 2 * np.pi * np.arange(256) / 256
    circle = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    normals, ds = DS.polyline_normals(circle)
    f = Tensor(normals[:, :1].copy())
    val = DS.boundary_functional(f, normals, ds, 0).item()
    assert abs(val - np.pi) < 0.01 * np.pi


def test_orientation_flip_changes_sign():
    ang = 2 * np.pi * np.arange(64) / 64
    circle = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    n1, d1 = DS.polyline_normals(circle)
    n2, d2 = DS.polyline_normals(circle[::-1])
    f = np.cos(ang)[:, None]
    v1 = DS.boundary_functional(Tensor(f), n1, d1, 0).item()
    v2 = DS.boundary_functional(Tensor(f[::-1].copy()), n2, d2, 0).item()
    assert v1 == pytest.approx(-v2, rel=1e-12)


def test_degenerate_boundary_rejected():
    with pytest.raises(GeometryError):
        DS.polyline_normals(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(GeometryError):
        DS.boundary_functional(Tensor(np.ones((3, 1))), np.ones((3, 2)),
                               np.array([1.0, -1.0, 1.0]), 0)


# ---------------------------------------------------------------- optimization

def quadratic_problem(target, lo=-1.0, hi=1.0, weight=1.0):
    pts = np.linspace(0.1, 0.9, 4)[:, None] * np.ones((1, 2))
    tgt = np.asarray(target)

    def builder(theta):
        return Geometry(POINT_CLOUD, pts, design_params=theta)

    def predictor(geo):
        d = T.sub(geo.design_params, Tensor(tgt))
        return T.reshape(T.sum_(T.mul(d, d)), (1, 1))

    def objective(field, geo):
        return T.mul(T.mean(field), weight)

    return DesignProblem(np.zeros_like(tgt), lo, hi, builder, predictor, objective)


def test_zero_weight_objective_keeps_parameters():
    prob = quadratic_problem([0.4, -0.3], weight=0.0)
    trace, theta = DS.optimize_design(prob, steps=20, lr=0.05)
    assert np.array_equal(theta, prob.initial)
    assert all(v == 0.0 for v in trace.objective)


def test_quadratic_converges_to_analytic_optimum():
    prob = quadratic_problem([0.37, -0.21])
    trace, theta = DS.optimize_design(prob, steps=1500, lr=0.02)
    assert np.abs(theta - np.array([0.37, -0.21])).max() < 1e-6
    assert trace.objective[-1] < 1e-10


def test_objective_monotone_for_small_lr():
    prob = quadratic_problem([0.3])
    trace, _ = DS.optimize_design(prob, steps=200, lr=1e-3)
    diffs = np.diff(trace.objective)
    assert trace.objective[-1] < trace.objective[0]
    assert diffs.max() <= 1e-10


def test_bound_projection_active():
    prob = quadratic_problem([0.9], lo=-0.5, hi=0.5)
    _, theta = DS.optimize_design(prob, steps=400, lr=0.02)
    assert theta[0] == pytest.approx(0.5, abs=1e-9)


def test_verify_design_gap_zero_for_analytic_map():
    prob = quadratic_problem([0.25])
    _, theta = DS.optimize_design(prob, steps=300, lr=0.02)
    report = DS.verify_design(prob, theta,
                              lambda th: float(((th - 0.25) ** 2).sum()))
    assert report["gap"] < 1e-9


def test_model_parameters_bit_identical_after_design():
    model = GeoFnoModel(ModelConfig(
        dim=2, io_mode="point_cloud", in_channels=1, out_channels=1,
        layers=3, width=4, k_max=2, latent_shape=(8, 8),
        deform=True, deform_freqs=2, deform_hidden=4, cond_dim=2, seed=21))
    before = {k: t.data.tobytes() for k, t in model.params.items()}
    rng = np.random.default_rng(22)
    pts0 = rng.random((10, 2))
    fields = Tensor(np.ones((10, 1)))

    def builder(theta):
        shift = T.reshape(theta, (1, 2))
        pts = T.add(Tensor(pts0), T.mul(shift, 0.1))
        return Geometry(POINT_CLOUD, pts, design_params=theta)

    def predictor(geo):
        from geofno import model as M
        return M.forward_pointcloud(model, geo, fields)

    def objective(field, geo):
        return T.mul(T.mean(field), -1.0)

    DS.freeze_model(model)
    prob = DesignProblem(np.zeros(2), -0.3, 0.3, builder, predictor, objective)
    trace, theta = DS.optimize_design(prob, steps=5, lr=0.05)
    after = {k: t.data.tobytes() for k, t in model.params.items()}
    assert before == after
    assert len(trace) == 5


def test_brute_force_scan_matches_direct_evaluation():
    prob = quadratic_problem([0.3])
    grid, vals, best = DS.brute_force_scan(prob, 0, num=101)
    assert len(grid) == 101
    assert abs(grid[best] - 0.3) <= (grid[1] - grid[0])
    assert vals[best] == pytest.approx(prob.evaluate([grid[best]]))
