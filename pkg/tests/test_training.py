import numpy as np
import pytest

from geofno import data as D
from geofno import model as M
from geofno import tensor as T
from geofno import training as TR
from geofno.data import DatasetBundle, SampleRecord
from geofno.errors import ConfigurationError, DegenerateTargetError, DimensionError
from geofno.geometry import Geometry, POINT_CLOUD
from geofno.model import GeoFnoModel, ModelConfig
from geofno.tensor import Tensor, Tape
from geofno.training import TrainConfig, relative_l2, masked_loss


# -------------------------------------------------------------------- losses

def test_relative_l2_values():
    t = np.array([[1.0], [2.0]])
    assert relative_l2(Tensor(t), Tensor(t)).item() == 0.0
    assert relative_l2(Tensor(np.zeros((2, 1))), Tensor(t)).item() == pytest.approx(1.0)
    # pred=[1,0], truth=[0,1]: ||(1,-1)||/||(0,1)|| = sqrt(2)
    got = relative_l2(Tensor(np.array([[1.0], [0.0]])),
                      Tensor(np.array([[0.0], [1.0]]))).item()
    assert got == pytest.approx(np.sqrt(2.0), abs=1e-14)


def test_relative_l2_shape_and_degenerate_errors():
    with pytest.raises(DimensionError):
        relative_l2(Tensor(np.zeros((3, 1))), Tensor(np.zeros((4, 1))))
    with pytest.raises(DegenerateTargetError):
        relative_l2(Tensor(np.ones((3, 1))), Tensor(np.zeros((3, 1))))


def test_masked_loss_restriction():
    rng = np.random.default_rng(0)
    truth = rng.standard_normal((8, 1))
    pred = truth + 0.1 * rng.standard_normal((8, 1))
    mask = np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=bool)
    base = masked_loss(Tensor(pred), Tensor(truth), mask).item()
    garbage = pred.copy()
    garbage[4:] = 1e6
    assert masked_loss(Tensor(garbage), Tensor(truth), mask).item() == pytest.approx(base)
    full = masked_loss(Tensor(pred), Tensor(truth), np.ones(8, bool)).item()
    assert full == pytest.approx(relative_l2(Tensor(pred), Tensor(truth)).item())


def test_masked_loss_gradient_support():
    rng = np.random.default_rng(1)
    truth = rng.standard_normal((6, 1))
    mask = np.array([1, 0, 1, 0, 1, 0], dtype=bool)
    pred = Tensor(rng.standard_normal((6, 1)), requires_grad=True)
    with Tape() as tape:
        loss = masked_loss(pred, Tensor(truth), mask)
    tape.backward(loss)
    g = pred.grad[:, 0]
    assert np.all(g[~mask] == 0.0)
    assert np.all(g[mask] != 0.0)


def test_masked_loss_empty_mask():
    with pytest.raises(DegenerateTargetError):
        masked_loss(Tensor(np.ones((3, 1))), Tensor(np.ones((3, 1))),
                    np.zeros(3, bool))


# ------------------------------------------------------------------- schedule

def test_lr_schedule_spot_values():
    cfg = TrainConfig()
    for epoch, want in ((0, 1e-3), (99, 1e-3), (100, 5e-4), (199, 5e-4),
                        (200, 2.5e-4), (250, 2.5e-4), (499, 6.25e-5)):
        assert cfg.lr_at(epoch) == pytest.approx(want, rel=1e-12)


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)


# ---------------------------------------------------------------- train loops

def toy_bundle(n, seed, num_points=12, grid=False):
    """Band-limited random fields on the unit square; target = smoothed input."""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        if grid:
            s = num_points
            ax = np.arange(s) / s
            gx, gy = np.meshgrid(ax, ax, indexing="ij")
            pts = np.stack([gx, gy], axis=-1)
        else:
            pts = rng.random((num_points, 2))
        a = rng.standard_normal(3) * 0.5
        base = (a[0] * np.sin(2 * np.pi * pts[..., 0])
                + a[1] * np.cos(2 * np.pi * pts[..., 1]) + a[2])
        fin = base[..., None]
        fout = (0.5 * base + 0.25 * base ** 2)[..., None]
        geo = Geometry("structured_mesh" if grid else POINT_CLOUD, pts)
        records.append(SampleRecord(geo, fin, fout))
    mode = "structured" if grid else "point_cloud"
    return DatasetBundle({"problem": "toy", "io_mode": mode, "dim": "2",
                          "in_channels": "1", "out_channels": "1"}, records)


def tiny_cloud_model(seed=0):
    return GeoFnoModel(ModelConfig(
        dim=2, io_mode="point_cloud", in_channels=1, out_channels=1,
        layers=3, width=6, k_max=2, latent_shape=(8, 8),
        deform=True, deform_freqs=2, deform_hidden=6, cond_dim=0, seed=seed))


def test_overfit_smoke_and_loss_decreases():
    train_set = toy_bundle(5, 7)
    cfg = TrainConfig(epochs=30, initial_lr=2e-3, lr_halving_period=100,
                      batch_size=5, seed=1)
    model, report = TR.train(tiny_cloud_model(1), train_set, train_set, cfg)
    assert report.train_err[-1] < 0.5 * report.train_err[0]
    assert len(report.train_err) == cfg.epochs


def test_training_bit_reproducible():
    train_set = toy_bundle(6, 8)
    test_set = toy_bundle(3, 9)
    cfg = TrainConfig(epochs=4, batch_size=3, seed=5)
    _, r1 = TR.train(tiny_cloud_model(2), train_set, test_set, cfg)
    _, r2 = TR.train(tiny_cloud_model(2), train_set, test_set, cfg)
    assert r1.train_err == r2.train_err
    assert r1.test_err == r2.test_err
    assert r1.lr == r2.lr


def test_resume_equals_uninterrupted(tmp_path):
    train_set = toy_bundle(6, 10)
    test_set = toy_bundle(2, 11)
    cfg = TrainConfig(epochs=6, batch_size=3, seed=6)
    _, full = TR.train(tiny_cloud_model(3), train_set, test_set, cfg)

    ck = tmp_path / "mid.ckpt"
    TR.train(tiny_cloud_model(3), train_set, test_set,
             TrainConfig(epochs=3, batch_size=3, seed=6),
             checkpoint_path=str(ck))
    model, extras = D.load_checkpoint(str(ck))
    _, resumed = TR.train(model, train_set, test_set, cfg, resume=extras)
    assert resumed.train_err == full.train_err
    assert resumed.test_err == full.test_err


def test_structured_training_with_masks():
    bundle = toy_bundle(4, 12, num_points=8, grid=True)
    rng = np.random.default_rng(13)
    for rec in bundle.records:
        rec.mask = rng.random((8, 8)) > 0.2
    model = GeoFnoModel(ModelConfig(
        dim=2, io_mode="structured", in_channels=1, out_channels=1,
        layers=3, width=4, k_max=2, latent_shape=(8, 8), deform=False, seed=3))
    cfg = TrainConfig(epochs=3, batch_size=2, seed=2)
    model, report = TR.train(model, bundle, bundle, cfg)
    assert np.isfinite(report.train_err).all()


def test_io_mode_mismatch_rejected():
    bundle = toy_bundle(3, 14)
    model = GeoFnoModel(ModelConfig(
        dim=2, io_mode="structured", in_channels=1, out_channels=1,
        layers=2, width=4, k_max=2, latent_shape=(8, 8), deform=False))
    with pytest.raises(ConfigurationError):
        TR.train(model, bundle, bundle, TrainConfig(epochs=1))


def test_evaluate_contract():
    bundle = toy_bundle(5, 15)
    model = tiny_cloud_model(4)
    before = [p.data.copy() for p in model.param_list()]
    res1 = TR.evaluate(model, bundle)
    res2 = TR.evaluate(model, bundle)
    assert res1.per_sample.shape == (5,)
    assert np.array_equal(res1.per_sample, res2.per_sample)
    assert res1.seconds_per_instance > 0
    for p, b in zip(model.param_list(), before):
        assert np.array_equal(p.data, b)
    one = TR.evaluate(model, DatasetBundle(bundle.manifest, bundle.records[:1]))
    assert one.mean == pytest.approx(one.per_sample[0])


def test_report_text_format():
    bundle = toy_bundle(3, 16)
    cfg = TrainConfig(epochs=2, batch_size=3, seed=0)
    _, report = TR.train(tiny_cloud_model(5), bundle, bundle, cfg)
    text = report.to_text()
    lines = text.strip().splitlines()
    assert lines[0].startswith("# epoch")
    assert len([l for l in lines if not l.startswith("#") and "=" not in l]) == 2
    assert any(l.startswith("final_test=") for l in lines)
