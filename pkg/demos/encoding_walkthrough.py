"""Walk one pair of feature maps through the token encoding and a fusion stage.

    python3 demos/encoding_walkthrough.py
"""

import numpy as np

from spatialfuse.encoding import CAMERA, LIDAR, concat_tokens, encode_tokens, flatten_tokens, reduce_1x1, sinusoidal_pe_2d
from spatialfuse.fusion import FusionConfig, fuse_at_resolution, init_fusion_stage
from spatialfuse.params import Initializer, Params
from spatialfuse.tensor import precision

np.set_printoptions(precision=3, suppress=True, linewidth=110)


def main():
    rng = np.random.default_rng(0)
    with precision("float64"):
        # a camera map is twice as wide as the lidar map at every stage
        F_cam = rng.normal(size=(32, 4, 8))
        F_lid = rng.normal(size=(32, 4, 4))

        params = Params()
        init_fusion_stage(Initializer(params, 1), "s", 32, FusionConfig(c=16, heads=2), zero_out=False)
        p = params.sub("s")

        z_cam = flatten_tokens(reduce_1x1(F_cam, p["cam_in.w"], p["cam_in.b"]), CAMERA)
        z_lid = flatten_tokens(reduce_1x1(F_lid, p["lid_in.w"], p["lid_in.b"]), LIDAR)
        print("camera tokens", z_cam.tokens.shape, "lidar tokens", z_lid.tokens.shape)

        e = sinusoidal_pe_2d(16, 4, 8)
        print("positional rows for cells (0,0), (0,1), (1,0):")
        print(e[[0, 1, 8]])

        v = encode_tokens(z_cam, p["sensor"], e)
        s_back = v.tokens.data - z_cam.tokens.data - e
        print("v - z - e recovers the camera sensor row:", np.allclose(s_back, p["sensor"].data[CAMERA]))

        tokens, splits = concat_tokens([v, encode_tokens(z_lid, p["sensor"], sinusoidal_pe_2d(16, 4, 4))])
        print("joint sequence", tokens.shape, "split", splits)

        out_cam, out_lid = fuse_at_resolution(F_cam, F_lid, p, FusionConfig(c=16, heads=2))
        print("residual update norms: camera %.3f, lidar %.3f" % (
            np.linalg.norm(out_cam.data - F_cam), np.linalg.norm(out_lid.data - F_lid)))

        # zeroing the output projections turns the stage into an exact identity
        for k in ("cam_out.w", "cam_out.b", "lid_out.w", "lid_out.b"):
            p[k].data[...] = 0
        out_cam, out_lid = fuse_at_resolution(F_cam, F_lid, p, FusionConfig(c=16, heads=2))
        print("zero projections leave maps unchanged:",
              np.array_equal(out_cam.data, F_cam) and np.array_equal(out_lid.data, F_lid))


if __name__ == "__main__":
    main()
