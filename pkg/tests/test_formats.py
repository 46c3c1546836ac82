import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatformer import ConfigurationError, FormatError
from heatformer.config import RunConfig
from heatformer.fdsolver import generate_dataset
from heatformer.formats import (
    DATASET_MAGIC,
    dump_kv,
    parse_kv,
    read_checkpoint,
    read_dataset,
    write_checkpoint,
    write_dataset,
)
from heatformer.scenario import ScenarioConfig


@pytest.fixture(scope="module")
def ch2_trajs():
    cfg = ScenarioConfig(mode="challenge2", nx=7, ny=6, segment_length=2)
    return generate_dataset(cfg, 4, fractions=(1.0, 0.0, 0.0), seq_len=5, record_stride=2).train


def test_dataset_roundtrip(tmp_path, ch2_trajs):
    p1, p2 = tmp_path / "a.htfd", tmp_path / "b.htfd"
    write_dataset(p1, ch2_trajs, "challenge2")
    back, mode = read_dataset(p1)
    assert mode == "challenge2" and len(back) == 4
    for a, b in zip(ch2_trajs, back):
        assert b.record_stride == 2 and b.frames.shape == (5, 6, 7)
        np.testing.assert_array_equal(b.frames, a.frames.astype(np.float32))
        assert b.case.boundary.segments == a.case.boundary.segments
        assert b.case.beta == np.float32(a.case.beta) and b.case.dtau == np.float32(a.case.dtau)
    write_dataset(p2, back, mode)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_header_layout(tmp_path, ch2_trajs):
    p = tmp_path / "a.htfd"
    write_dataset(p, ch2_trajs, "challenge2")
    raw = p.read_bytes()
    assert raw[:4] == DATASET_MAGIC
    assert struct.unpack("<IIIHHII", raw[4:28]) == (1, 2, 4, 6, 7, 5, 2)


def test_dataset_rejects_corruption(tmp_path, ch2_trajs):
    p = tmp_path / "a.htfd"
    write_dataset(p, ch2_trajs, "challenge2")
    raw = p.read_bytes()
    cases = [
        (b"XXXX" + raw[4:], "not a dataset"),
        (raw[:4] + struct.pack("<I", 9) + raw[8:], "version 9"),
        (raw[:-3], "truncated"),
        (raw + b"\0", "trailing"),
    ]
    for blob, msg in cases:
        p.write_bytes(blob)
        with pytest.raises(FormatError, match=msg):
            read_dataset(p)


def test_checkpoint_container_roundtrip(tmp_path):
    arrays = [("w", np.arange(6, dtype=np.float32).reshape(2, 3)), ("b", np.array([1.5, -2.0]))]
    p1, p2 = tmp_path / "a.htck", tmp_path / "b.htck"
    write_checkpoint(p1, arrays, {"k": 1, "a": "x"}, 4, 5, 6)
    back, cfg, dims = read_checkpoint(p1)
    assert dims == (4, 5, 6) and cfg == {"a": "x", "k": "1"}
    assert back["w"].dtype == np.float32 and back["b"].dtype == np.float64
    write_checkpoint(p2, back.items(), cfg, *dims)
    assert p1.read_bytes() == p2.read_bytes()
    with pytest.raises(FormatError):
        write_checkpoint(p2, [("i", np.arange(3))], {}, 1, 1, 1)


def test_kv_parsing():
    text = "# comment\n\nb = 2\na=x=y\n"
    assert parse_kv(text) == {"b": "2", "a": "x=y"}
    for bad in ("novalue\n", "a=1\na=2\n", "=3\n"):
        with pytest.raises(FormatError):
            parse_kv(bad)
    assert dump_kv({"z": (1.5, 2), "a": None, "m": True}) == "a=none\nm=true\nz=1.5,2\n"


def test_run_config_roundtrip(tmp_path):
    cfg = RunConfig(mode="challenge1", nx=10, ny=12, beta_range=(0.25, 0.75), left_segment_start=2,
                    lambda_pi=1e-3, schedule="1-2:0;3-10:1e-3", epochs=10)
    assert RunConfig.from_text(cfg.to_text()) == cfg
    path = tmp_path / "run.cfg"
    cfg.save(path)
    assert RunConfig.load(path) == cfg
    # schedule rescaled to the configured epochs
    assert cfg.lr_schedule().total_epochs == 10


@given(st.integers(3, 40), st.integers(3, 40), st.floats(0.01, 10), st.integers(1, 50))
def test_run_config_roundtrip_property(nx, ny, lam, epochs):
    cfg = RunConfig(nx=nx, ny=ny, lambda_bc=lam, epochs=max(epochs, 7), start_predicting_from=2)
    assert RunConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize(
    "text",
    ["colour=red\n", "nx=abc\n", "beta_range=1\n", "mode=turbulent\n", "embed_dim=6\n", "dtype=float16\n",
     "schedule=1-1:0;3-4:1\n", "batch_size=0\n"],
)
def test_run_config_rejects(text):
    with pytest.raises(ConfigurationError):
        RunConfig.from_text(text)
