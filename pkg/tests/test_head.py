import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialfuse import ops
from spatialfuse.errors import ContractError, DimensionError
from spatialfuse.gradcheck import finite_diff_check
from spatialfuse.head import batch_loss, init_head, l1_waypoint_loss, predict_waypoints, reduce_mlp
from spatialfuse.params import Initializer, Params
from spatialfuse.tensor import Tensor, backward, precision


def head(seed=0, dim=64):
    p = Params()
    init_head(Initializer(p, seed), "h", 512, 128, dim)
    return p.sub("h")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def recurrence_oracle(feat, goal, p, T):
    """Step-by-step numpy evaluation of the head recurrence."""
    P = {k: v.data.astype(np.float64) for k, v in p.items()}
    h, w, out = feat.astype(np.float64), np.zeros(2), []
    for _ in range(T):
        x = np.concatenate([w, goal]) @ P["gru_in.w"] + P["gru_in.b"]
        r = sigmoid(x @ P["gru.W_r"] + h @ P["gru.U_r"] + P["gru.b_r"])
        u = sigmoid(x @ P["gru.W_u"] + h @ P["gru.U_u"] + P["gru.b_u"])
        n = np.tanh(x @ P["gru.W_n"] + r * (h @ P["gru.U_n"]) + P["gru.b_n"])
        h = (1 - u) * n + u * h
        w = w + h @ P["delta.w"] + P["delta.b"]
        out.append(w.copy())
    return np.array(out)


# -- reduce_mlp ---------------------------------------------------------------

def test_reduce_zero():
    p = head()
    for k in ("mlp1.b", "mlp2.b"):
        p[k].data[...] = 0
    out = reduce_mlp(np.zeros(512), p)
    assert out.shape == (64,) and not out.data.any()


def test_reduce_shape_mismatch():
    with pytest.raises(DimensionError):
        reduce_mlp(np.zeros(256), head())


def test_reduce_gradient():
    with precision("float64"):
        p = head(1)
        g = Tensor(np.random.default_rng(0).uniform(0, 1, 512))
        r = Tensor(np.random.default_rng(1).normal(size=64))
        f = lambda: ops.sum(reduce_mlp(g, p) * r)
        assert finite_diff_check(f, [p["mlp1.w"], p["mlp1.b"], p["mlp2.w"], p["mlp2.b"]], eps=1e-5, max_coords=30) <= 1e-3


# -- predict_waypoints -----------------------------------------------------------

def test_zero_head_gives_origin():
    p = head()
    for t in p.values():
        t.data[...] = 0
    w = predict_waypoints(np.random.default_rng(0).normal(size=64), np.array([10.0, 2.0]), p, 4)
    assert w.shape == (4, 2)
    np.testing.assert_array_equal(w.data, 0.0)


def test_cumulative_structure():
    with precision("float64"):
        p = head(2)
        feat, goal = np.random.default_rng(0).normal(size=64), np.array([12.0, -3.0])
        w = predict_waypoints(feat, goal, p, 4).data
        ref = recurrence_oracle(feat, goal, p, 4)
    deltas = np.diff(np.vstack([np.zeros(2), ref]), axis=0)
    np.testing.assert_allclose(np.diff(np.vstack([np.zeros(2), w]), axis=0), deltas, rtol=1e-10, atol=1e-12)


def test_hand_trace_T2():
    # tiny hand-set weights, dimension 3
    p = Params()
    rng = np.random.default_rng(9)
    with precision("float64"):
        p["gru_in.w"] = Tensor(rng.uniform(-0.1, 0.1, (4, 3)))
        p["gru_in.b"] = Tensor(np.array([0.01, -0.02, 0.03]))
        for g in "run":
            p[f"gru.W_{g}"] = Tensor(rng.uniform(-0.1, 0.1, (3, 3)))
            p[f"gru.U_{g}"] = Tensor(rng.uniform(-0.1, 0.1, (3, 3)))
            p[f"gru.b_{g}"] = Tensor(rng.uniform(-0.1, 0.1, 3))
        p["delta.w"] = Tensor(rng.uniform(-0.1, 0.1, (3, 2)))
        p["delta.b"] = Tensor(np.array([0.5, 0.0]))
        feat, goal = np.array([0.2, -0.1, 0.4]), np.array([5.0, 1.0])
        w = predict_waypoints(feat, goal, p, 2).data
    np.testing.assert_allclose(w, recurrence_oracle(feat, goal, p, 2), rtol=1e-12, atol=1e-14)


def test_predict_contract_errors():
    with pytest.raises(ContractError):
        predict_waypoints(np.zeros(64), np.zeros(2), head(), 0)
    with pytest.raises(DimensionError):
        predict_waypoints(np.zeros(32), np.zeros(2), head(), 4)


def test_predict_deterministic_and_batched():
    p = head(4)
    feat = np.random.default_rng(0).normal(size=(3, 64))
    goal = np.random.default_rng(1).normal(size=(3, 2)) * 10
    a = predict_waypoints(feat, goal, p, 4).data
    np.testing.assert_array_equal(a, predict_waypoints(feat, goal, p, 4).data)
    for i in range(3):
        np.testing.assert_allclose(predict_waypoints(feat[i], goal[i], p, 4).data, a[i], rtol=1e-6, atol=1e-6)


# -- loss ----------------------------------------------------------------------------

def test_loss_examples():
    assert l1_waypoint_loss(np.ones((4, 2)), np.ones((4, 2))).item() == 0.0
    pred, gt = np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0, 2.0], [3.0, 2.0]])
    assert l1_waypoint_loss(pred, gt).item() == 3.0
    assert l1_waypoint_loss(gt, pred).item() == 3.0


def test_loss_length_mismatch():
    with pytest.raises(DimensionError):
        l1_waypoint_loss(np.zeros((4, 2)), np.zeros((3, 2)))


def test_batch_loss_is_mean_of_sums():
    pred = np.arange(16, dtype=float).reshape(2, 4, 2)
    gt = np.zeros((2, 4, 2))
    assert batch_loss(pred, gt).item() == pytest.approx((pred[0].sum() + pred[1].sum()) / 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_loss_subgradient_is_sign(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(4, 2))
    pred = gt + rng.choice([-1, 1], size=(4, 2)) * rng.uniform(0.01, 2, size=(4, 2))
    with precision("float64"):
        t = Tensor(pred, requires_grad=True)
        loss = l1_waypoint_loss(t, gt)
        assert loss.item() > 0
        backward(loss)
        np.testing.assert_array_equal(t.grad, np.sign(pred - gt))
        assert finite_diff_check(lambda: l1_waypoint_loss(t, gt), [t], eps=1e-3) <= 1e-6
