import shutil

import numpy as np
import pytest

from spatialfuse import cli
from spatialfuse.fusion import FusionConfig
from spatialfuse.model import ModelConfig, init_model, predict
from spatialfuse.params import Params
from spatialfuse.tensor import Tensor
from spatialfuse.train import Adam, Dataset, batch_order, dataset_loss, load_dataset, train

CFG = ModelConfig(fusion=FusionConfig(c=16, heads=2, layers_per_resolution=1))


def synthetic(n=6, seed=0):
    rng = np.random.default_rng(seed)
    wps = np.cumsum(np.abs(rng.normal(2.0, 0.3, (n, 4, 2))) * [1, 0.1], axis=1)
    return Dataset(
        camera=rng.uniform(0, 1, (n, 3, 64, 128)).astype(np.float32),
        bev=(rng.integers(0, 4, (n, 3, 64, 64)) / 5).astype(np.float32),
        goal=rng.uniform(0, 30, (n, 2)).astype(np.float32),
        waypoints=wps.astype(np.float32),
        episodes=[0],
    )


def test_batch_order_covers_each_epoch():
    batches = batch_order(10, 4, 6, seed=1)
    assert len(batches) == 6 and all(len(b) == 4 for b in batches)
    first_epoch = np.concatenate(batches[:2])
    assert len(set(first_epoch)) == 8
    assert all(np.array_equal(a, b) for a, b in zip(batches, batch_order(10, 4, 6, seed=1)))
    assert len(batch_order(3, 8, 2, 0)[0]) == 3


def test_adam_first_step_moves_by_lr():
    # with bias correction the first update is lr * sign(g) up to eps
    p = Params({"w": Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)})
    p["w"].grad = np.array([0.5, -4.0, 1e-3], dtype=np.float32)
    Adam(p, lr=0.1).step()
    np.testing.assert_allclose(p["w"].data, [0.9, -1.9, 2.9], rtol=0, atol=1e-5)


def test_adam_matches_reference():
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=5)
    p = Params({"w": Tensor(w0.copy(), requires_grad=True)})
    opt = Adam(p, lr=0.01)
    w, m, v = w0.astype(np.float32).astype(np.float64), np.zeros(5), np.zeros(5)
    for t in range(1, 6):
        g = rng.normal(size=5).astype(np.float32)
        p["w"].grad = g
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"].data, w, rtol=1e-5, atol=1e-6)


def test_zero_lr_keeps_loss():
    data = synthetic()
    res = train(data, CFG, steps=4, lr=0.0, batch_size=len(data))
    assert max(res.losses) - min(res.losses) <= 1e-7
    ref = init_model(CFG, 0)
    for k, t in res.params.items():
        np.testing.assert_array_equal(t.data, ref[k].data)


def test_training_reduces_loss():
    data = synthetic()
    res = train(data, CFG, steps=25, lr=3e-3, batch_size=len(data))
    assert res.losses[-1] < 0.5 * res.losses[0]
    assert res.best_loss == min(res.losses)


def test_same_seed_same_losses():
    data = synthetic()
    a = train(data, CFG, steps=5, seed=3, batch_size=4)
    b = train(data, CFG, steps=5, seed=3, batch_size=4)
    assert a.losses == b.losses
    c = train(data, CFG, steps=5, seed=4, batch_size=4)
    assert a.losses != c.losses


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_stops_and_keeps_best():
    data = synthetic()
    res = train(data, CFG, steps=50, lr=1e30, batch_size=len(data))
    assert res.nan_step is not None and res.nan_step > 1
    assert np.isfinite(res.best_loss)
    assert all(np.isfinite(v).all() for v in res.best_params.values())


def test_dataset_loss_is_mean_per_sample():
    data = synthetic(n=5)
    params = init_model(CFG, 0)
    pred = predict(params, data.camera, data.bev, data.goal, CFG)
    ref = np.abs(pred - data.waypoints).sum(axis=(1, 2)).mean()
    assert dataset_loss(params, data, CFG, batch_size=2) == pytest.approx(ref, rel=1e-6)


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert cli.main(["gen-data", "--seeds", "0:1", "--out", str(root), "--set", "world=clean"]) == 0
    return root


def test_load_dataset_checks_manifest(tiny_data, tmp_path):
    data = load_dataset(tiny_data)
    assert data.episodes == [0] and data.camera.shape[1:] == (3, 64, 128)
    bad = tmp_path / "bad"
    shutil.copytree(tiny_data, bad)
    m = bad / "episode_000000" / "manifest.txt"
    m.write_text("\n".join(m.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(ValueError, match="manifest"):
        load_dataset(bad)


def test_cli_train_deterministic(tiny_data, tmp_path):
    small = ["--set", "c=16", "--set", "heads=2", "--set", "layers=1", "--set", "steps=3", "--set", "log_every=1"]
    for name in ("a", "b"):
        assert cli.main(["train", "--set", f"data_dir={tiny_data}", "--out", str(tmp_path / name)] + small) == 0
    for f in ("loss.log", "best.sfse", "final.sfse"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_train_nan_exit_3(tiny_data, tmp_path):
    args = ["train", "--set", f"data_dir={tiny_data}", "--out", str(tmp_path), "--set", "lr=1e30",
            "--set", "steps=50", "--set", "c=16", "--set", "heads=2", "--set", "layers=1"]
    assert cli.main(args) == 3
    assert (tmp_path / "best.sfse").exists() and not (tmp_path / "final.sfse").exists()
