import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialfuse import ops
from spatialfuse.errors import DimensionError
from spatialfuse.gradcheck import finite_diff_check
from spatialfuse.params import Initializer, Params
from spatialfuse.sensors import (
    BevConfig,
    backbone_stage,
    bev_histogram,
    camera_backbone,
    init_backbone,
    lidar_backbone,
)
from spatialfuse.tensor import Tensor, precision

CAM_STAGES = [(16, 32, 64), (32, 16, 32), (64, 8, 16), (128, 4, 8)]
LID_STAGES = [(16, 32, 32), (32, 16, 16), (64, 8, 8), (128, 4, 4)]


def backbone(seed=0, zero_bias=False):
    p = Params()
    init_backbone(Initializer(p, seed), "bb")
    if zero_bias:
        for k in p:
            if k.endswith(".b"):
                p[k].data[...] = 0
    return p.sub("bb")


def bev_oracle(points, cfg=BevConfig()):
    """Loop-per-point reference binning."""
    counts = np.zeros((3, cfg.rows, cfg.cols))
    for x, y, z in points:
        if not (cfg.x_min <= x < cfg.x_max and cfg.y_min <= y < cfg.y_max):
            continue
        r = int((x - cfg.x_min) // ((cfg.x_max - cfg.x_min) / cfg.rows))
        c = int((y - cfg.y_min) // ((cfg.y_max - cfg.y_min) / cfg.cols))
        b = 0 if z < cfg.z_edges[0] else (1 if z < cfg.z_edges[1] else 2)
        counts[b, r, c] += 1
    return np.minimum(counts, cfg.clip) / cfg.clip


# -- BEV histogram -----------------------------------------------------------

def test_bev_empty():
    grid = bev_histogram(np.zeros((0, 3)))
    assert grid.shape == (3, 64, 64) and not grid.any()


def test_bev_single_point_center():
    grid = bev_histogram(np.array([[16.0, 0.0, 0.1]]))
    assert grid[0, 32, 32] == pytest.approx(0.2)
    assert grid.sum() == pytest.approx(0.2)


def test_bev_lower_edge_inclusive():
    grid = bev_histogram(np.array([[5.0, 1.0, 0.5], [5.0, 1.0, 2.0]]))
    assert grid[1].sum() == pytest.approx(0.2)
    assert grid[2].sum() == pytest.approx(0.2)
    assert grid[0].sum() == 0


def test_bev_clips_at_five():
    grid = bev_histogram(np.tile([[3.1, -2.2, 1.0]], (9, 1)))
    assert grid.max() == 1.0


def test_bev_ignores_out_of_extent():
    pts = np.array([[-0.1, 0, 0], [32.0, 0, 0], [5, 16.0, 0], [5, -16.01, 0]])
    assert not bev_histogram(pts).any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 400))
def test_bev_matches_oracle_and_mass(seed, n):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-5, 37, n), rng.uniform(-20, 20, n), rng.uniform(-0.5, 3.5, n)])
    grid = bev_histogram(pts)
    np.testing.assert_allclose(grid, bev_oracle(pts), atol=1e-7)
    assert 0.0 <= grid.min() and grid.max() <= 1.0
    in_extent = ((pts[:, 0] >= 0) & (pts[:, 0] < 32) & (pts[:, 1] >= -16) & (pts[:, 1] < 16)).sum()
    mass = grid.astype(np.float64).sum() * 5
    assert mass <= in_extent + 1e-4
    if grid.max() < 1.0:
        assert mass == pytest.approx(in_extent, abs=1e-4)


# -- backbones ------------------------------------------------------------------

def test_camera_pyramid_shapes():
    pyr = camera_backbone(np.zeros((3, 64, 128)), backbone())
    assert [p.shape for p in pyr] == CAM_STAGES


def test_lidar_pyramid_shapes_batched():
    pyr = lidar_backbone(np.zeros((2, 3, 64, 64)), backbone())
    assert [p.shape for p in pyr] == [(2,) + s for s in LID_STAGES]


def test_zero_input_zero_bias_gives_zero_pyramid():
    p = backbone(zero_bias=True)
    for pyr in (camera_backbone(np.zeros((3, 64, 128)), p), lidar_backbone(np.zeros((3, 64, 64)), p)):
        assert all(not s.data.any() for s in pyr)


def test_backbone_shape_mismatch():
    with pytest.raises(DimensionError):
        camera_backbone(np.zeros((3, 64, 64)), backbone())


def test_stage1_receptive_field():
    # stage-0 cell (i, j) sees input rows 2i-1..2i+1 and cols 2j-1..2j+1
    p = backbone(1)
    rng = np.random.default_rng(0)
    frame = rng.uniform(0, 1, size=(3, 64, 128)).astype(np.float32)
    base = camera_backbone(frame, p)[0].data
    frame2 = frame.copy()
    frame2[1, 21, 41] += 1.0
    diff = np.abs(camera_backbone(frame2, p)[0].data - base).sum(axis=0)
    rows, cols = np.nonzero(diff)
    assert set(rows) <= {10, 11} and set(cols) <= {20, 21}
    assert diff.any()


def test_translation_consistency_at_stride():
    p = backbone(2)
    bev = np.random.default_rng(0).uniform(0, 1, size=(3, 64, 64)).astype(np.float32)
    shifted = np.zeros_like(bev)
    shifted[:, 2:, :] = bev[:, :-2, :]
    a = lidar_backbone(bev, p)[0].data
    b = lidar_backbone(shifted, p)[0].data
    np.testing.assert_allclose(b[:, 3:-2, 2:-2], a[:, 2:-3, 2:-2], rtol=0, atol=1e-6)


@pytest.mark.parametrize("stage", range(4))
def test_backbone_weight_gradient(stage):
    # readout on the stage's own output, so a weight perturbation only moves
    # that stage's pre-activations and stays clear of relu kinks
    with precision("float64"):
        p = backbone(3)
        x = Tensor(np.random.default_rng(1).uniform(0, 1, size=(3, 64, 64)))
        for i in range(stage):
            x = Tensor(backbone_stage(x, p, i).data)
        w, b = p[f"stage{stage}.w"], p[f"stage{stage}.b"]
        r = Tensor(np.random.default_rng(2).normal(size=backbone_stage(x, p, stage).shape))
        f = lambda: ops.sum(backbone_stage(x, p, stage) * r)
        assert finite_diff_check(f, [w, b], eps=1e-5, max_coords=20) <= 1e-3
