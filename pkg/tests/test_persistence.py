import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from spatialfuse import container
from spatialfuse.cli import load_checkpoint, save_checkpoint
from spatialfuse.errors import ConfigError, FormatError
from spatialfuse.config import RunConfig, load_config, parse_pairs
from spatialfuse.model import ModelConfig, init_model, predict


# -- container ---------------------------------------------------------------------

def test_layout_bytes():
    buf = container.dumps({"b": np.array([1.0, -2.0], dtype=np.float32), "a": np.zeros((1, 1))})
    assert buf[:4] == b"SFSE"
    assert struct.unpack("<II", buf[4:12]) == (1, 2)
    # first entry is "a": name length, name, rank, dims, data
    assert struct.unpack("<H", buf[12:14]) == (1,) and buf[14:15] == b"a"
    assert buf[15] == 2 and struct.unpack("<II", buf[16:24]) == (1, 1)
    assert buf[24:28] == struct.pack("<f", 0.0)
    assert buf[28:30] == struct.pack("<H", 1) and buf[30:31] == b"b" and buf[31] == 1
    assert buf[32:36] == struct.pack("<I", 2)
    assert buf[36:] == struct.pack("<ff", 1.0, -2.0)


def test_order_independent_of_insertion():
    x = {"z": np.ones(2), "m.a": np.zeros(3), "m": np.arange(4.0)}
    y = dict(reversed(list(x.items())))
    assert container.dumps(x) == container.dumps(y)


names = st.text(st.characters(min_codepoint=33, max_codepoint=0x2FF), min_size=1, max_size=12)
arrays = hnp.arrays(np.float32, hnp.array_shapes(min_dims=0, max_dims=4, max_side=4),
                    elements=st.floats(width=32, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(names, arrays, max_size=5))
def test_round_trip_bit_exact(entries):
    back = container.loads(container.dumps(entries))
    assert list(back) == sorted(entries)
    for k, v in entries.items():
        assert back[k].shape == v.shape
        assert back[k].tobytes() == v.astype("<f4").tobytes()


def test_rejects_bad_magic_and_version():
    buf = bytearray(container.dumps({"a": np.ones(3)}))
    bad = bytes(buf[:1]) + b"X" + bytes(buf[2:])
    with pytest.raises(FormatError, match="magic"):
        container.loads(bad)
    buf[4] = 9
    with pytest.raises(FormatError, match="version"):
        container.loads(bytes(buf))


def test_truncation_reports_offset():
    buf = container.dumps({"weights": np.ones(10)})
    with pytest.raises(FormatError, match=r"offset \d+") as exc:
        container.loads(buf[:-3])
    assert "weights" in str(exc.value)
    with pytest.raises(FormatError, match="trailing"):
        container.loads(buf + b"\0")


def test_rejects_out_of_order_entries():
    good = container.dumps({"a": np.ones(1), "b": np.ones(1)})
    # swap the two (equal-size) entries
    head, ea, eb = good[:12], good[12:12 + 12], good[24:]
    with pytest.raises(FormatError, match="order"):
        container.loads(head + eb + ea)


# -- checkpoints ----------------------------------------------------------------------

def test_checkpoint_forward_bit_identical(tmp_path):
    cfg = ModelConfig()
    params = init_model(ModelConfig(zero_residual=False), 5)
    path = tmp_path / "ck.sfse"
    save_checkpoint(params, path)
    back = load_checkpoint(path)
    assert sorted(back) == sorted(params)
    rng = np.random.default_rng(0)
    x = (rng.uniform(0, 1, (3, 64, 128)), rng.uniform(0, 1, (3, 64, 64)), np.array([9.0, 1.0]))
    np.testing.assert_array_equal(predict(back, *x, cfg), predict(params, *x, cfg))
    assert not (tmp_path / "ck.sfse.tmp").exists()


def test_checkpoint_header_flip_rejected(tmp_path):
    path = tmp_path / "ck.sfse"
    save_checkpoint(init_model(ModelConfig(), 0), path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_checkpoint(path)


# -- config -----------------------------------------------------------------------------

def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nsteps = 20\nlr = 0.01  # trailing\nworld = clean\n")
    cfg = load_config(str(f), {"steps": "7"})
    assert cfg.steps == 7 and cfg.lr == 0.01 and cfg.world == "clean"


def test_config_rejects_unknown_and_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        load_config(None, {"learning_rate": "1"})
    with pytest.raises(ConfigError):
        load_config(None, {"steps": "many"})
    with pytest.raises(ConfigError):
        parse_pairs("no equals sign here")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))


def test_config_defaults_round_trip():
    cfg = RunConfig()
    again = load_config(None, parse_pairs(cfg.dumps()))
    assert again == cfg
    assert cfg.model_config() == ModelConfig()
