import hashlib

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from heatformer import ConfigurationError, FormatError, NumericalError
from heatformer.fdsolver import generate_dataset
from heatformer.losses import LossWeights
from heatformer.model import ModelConfig, build_model
from heatformer.scenario import ScenarioConfig
from heatformer.training import (
    BASE_SCHEDULE,
    CH2_SCHEDULE,
    LRSchedule,
    TensorData,
    load_checkpoint,
    lr_at_epoch,
    save_checkpoint,
    scenario_from_kv,
    train,
    validate,
)


@pytest.fixture(scope="module")
def data():
    ds = generate_dataset(ScenarioConfig(nx=5, ny=5), 10, fractions=(0.6, 0.4, 0.0), seq_len=6)
    return ds.train, ds.validation


def small_model(seed=0, mask="block"):
    return build_model(ModelConfig(5, 5, 6, 8, 2, 1, 16, 2, mask), seed)


def digest(model):
    h = hashlib.sha256()
    for t in model.state_dict().values():
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def test_schedule_examples():
    assert lr_at_epoch(BASE_SCHEDULE, 1) == 0
    assert lr_at_epoch(BASE_SCHEDULE, 50) == 1e-4
    assert lr_at_epoch(CH2_SCHEDULE, 250) == 1e-5
    assert lr_at_epoch(CH2_SCHEDULE, 20) == 5e-4
    for bad in (0, 101):
        with pytest.raises(ConfigurationError):
            lr_at_epoch(BASE_SCHEDULE, bad)


def test_schedule_validation_and_parse():
    with pytest.raises(ConfigurationError):
        LRSchedule(((1, 2, 1e-3), (4, 5, 1e-4)))
    with pytest.raises(ConfigurationError):
        LRSchedule(((1, 2, -1.0),))
    s = LRSchedule.parse("1-1:0;2-30:1e-3")
    assert s.rows == ((1, 1, 0.0), (2, 30, 1e-3))
    assert LRSchedule.parse(s.to_string()) == s
    assert LRSchedule.parse("base") is BASE_SCHEDULE
    with pytest.raises(ConfigurationError):
        LRSchedule.parse("fast")


def test_rescaled_base():
    s = BASE_SCHEDULE.rescaled(500)
    assert [r[:2] for r in s.rows] == [(1, 5), (6, 10), (11, 15), (16, 20), (21, 150), (151, 200), (201, 500)]
    assert [r[2] for r in s.rows] == [r[2] for r in BASE_SCHEDULE.rows]
    assert BASE_SCHEDULE.rescaled(100) is BASE_SCHEDULE


@given(st.integers(8, 2000))
def test_rescaled_partitions(total):
    s = BASE_SCHEDULE.rescaled(total)
    assert s.total_epochs == total and len(s.rows) == len(BASE_SCHEDULE.rows)
    assert all(a <= b for a, b, _ in s.rows)


def test_batches_remainder(data):
    td = TensorData.from_trajectories(data[0] + data[1], 2)
    assert [f.shape[0] for f, _ in td.batches(4)] == [4, 4, 2]


def test_zero_lr_keeps_params(data):
    model = small_model()
    before = digest(model)
    hist = train(model, data[0], data[1], schedule=LRSchedule(((1, 3, 0.0),)), batch_size=3)
    assert digest(model) == before
    assert len(hist) == 3 and all(r.lr == 0 for r in hist.records)


def test_history_follows_schedule(data):
    sched = LRSchedule(((1, 1, 0.0), (2, 3, 1e-3), (4, 4, 0.0)))
    snapshots = []
    model = small_model()
    hist = train(model, data[0], None, schedule=sched, batch_size=4,
                 callback=lambda r: snapshots.append(digest(model)))
    assert [r.lr for r in hist.records] == [lr_at_epoch(sched, e) for e in range(1, 5)]
    assert hist.records[0].validation is None
    # parameters move iff the rate is nonzero
    assert snapshots[0] == digest(small_model())
    assert snapshots[1] != snapshots[0] and snapshots[2] != snapshots[1] and snapshots[3] == snapshots[2]


def test_validate_is_pure(data):
    model = small_model()
    before = digest(model)
    a = validate(model, data[1], LossWeights(), 3)
    b = validate(model, data[1], LossWeights(), 3)
    assert a == b and digest(model) == before


def test_validation_matches_train_loss_at_zero_rate(data):
    model = small_model()
    hist = train(model, data[0], data[0], schedule=LRSchedule(((1, 1, 0.0),)), batch_size=6)
    assert hist.records[0].train.total == pytest.approx(hist.records[0].validation.total, rel=1e-12)


def test_deterministic_training(data):
    sched = LRSchedule(((1, 3, 1e-3),))
    h1 = train(small_model(), data[0], data[1], schedule=sched, batch_size=2, seed=5)
    h2 = train(small_model(), data[0], data[1], schedule=sched, batch_size=2, seed=5)
    assert [r.train for r in h1.records] == [r.train for r in h2.records]
    assert [r.validation for r in h1.records] == [r.validation for r in h2.records]


def test_nonfinite_loss_aborts(data):
    td = TensorData.from_trajectories(data[0], 2)
    td.frames[1, 3, 2, 2] = float("nan")
    with pytest.raises(NumericalError, match="epoch 1"):
        train(small_model(), td, schedule=LRSchedule(((1, 2, 1e-3),)), batch_size=6)


def test_epochs_beyond_schedule(data):
    with pytest.raises(ConfigurationError):
        train(small_model(), data[0], schedule=LRSchedule(((1, 2, 1e-3),)), epochs=3)


def test_history_csv(tmp_path, data):
    hist = train(small_model(), data[0], data[1], schedule=LRSchedule(((1, 2, 1e-3),)), batch_size=4)
    path = tmp_path / "h.csv"
    hist.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("epoch,lr,train_mse") and len(lines) == 3
    row = lines[1].split(",")
    assert row[0] == "1" and float(row[1]) == 1e-3


def test_checkpoint_roundtrip(tmp_path, data):
    model = small_model(3, "causal")
    train(model, data[0], schedule=LRSchedule(((1, 1, 1e-3),)), batch_size=6)
    scen = ScenarioConfig(nx=5, ny=5, beta_range=(0.6, 1.1))
    path = tmp_path / "m.htck"
    save_checkpoint(path, model, scen, {"note": "x"})
    loaded, cfg = load_checkpoint(path, expect_grid=(5, 5), expect_seq_len=6)
    assert loaded.config == model.config
    for (na, a), (nb, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert na == nb and torch.equal(a, b) and a.dtype == b.dtype
    assert scenario_from_kv(cfg) == scen and cfg["note"] == "x"
    x = torch.rand(2, 6, 5, 5, dtype=torch.float64)
    beta = torch.tensor([0.8, 1.2], dtype=torch.float64)
    assert torch.equal(model(x, beta), loaded(x, beta))
    with pytest.raises(FormatError, match="grid"):
        load_checkpoint(path, expect_grid=(6, 5))
    with pytest.raises(FormatError, match="seq_len"):
        load_checkpoint(path, expect_seq_len=7)
