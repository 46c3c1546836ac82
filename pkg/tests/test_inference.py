import numpy as np
import pytest
import torch

import oracles
from heatformer import ConfigurationError
from heatformer.fdsolver import euler_step, generate_dataset
from heatformer.inference import (
    autoregressive_rollout,
    block_predict,
    evaluate_test_set,
    projection_weight_heatmap,
    rollout_model,
)
from heatformer.losses import CaseBatch, LossWeights, total_loss
from heatformer.model import ModelConfig, build_model
from heatformer.scenario import ScenarioConfig

T, N_VIS = 8, 3


@pytest.fixture(scope="module")
def trajs():
    ds = generate_dataset(ScenarioConfig(mode="challenge2", nx=7, ny=6, segment_length=2), 3,
                          fractions=(1.0, 0.0, 0.0), seq_len=T)
    return ds.train


@pytest.fixture(scope="module")
def gt(trajs):
    return torch.from_numpy(np.stack([t.frames for t in trajs]))


@pytest.fixture(scope="module")
def cases(trajs):
    return CaseBatch.from_cases([t.case for t in trajs], N_VIS)


def model_for(mask, seed=0):
    return build_model(ModelConfig(6, 7, T, 16, 2, 2, 24, N_VIS, mask), seed)


def shift_oracle(trajs):
    """Output position i holds one solver step applied to input frame i."""

    def forward(src, beta):
        out = torch.empty_like(src)
        for b, traj in enumerate(trajs):
            for i in range(src.shape[1]):
                out[b, i] = torch.from_numpy(euler_step(src[b, i].numpy(), traj.case))
        return out

    return forward


def test_block_predict(gt, cases):
    model = model_for("block")
    res = block_predict(model, gt, cases)
    assert res.prediction.shape == gt.shape
    assert res.loss == total_loss(res.prediction, gt, cases, LossWeights()).total
    want = ((res.prediction - gt) ** 2).mean(dim=(0, 2, 3)).numpy()
    np.testing.assert_array_equal(res.frame_mse, want)
    assert res.frame_mse[0] > 0  # visible frames are scored on model output, not copies
    with pytest.raises(ConfigurationError):
        rollout_model(model, gt, cases)


def test_block_independence_of_hidden_frames(gt, cases):
    model = model_for("block", 1)
    a = block_predict(model, gt, cases).prediction
    zeroed = gt.clone()
    zeroed[:, N_VIS:] = 0
    b = block_predict(model, zeroed, cases).prediction
    assert torch.equal(a[:, :N_VIS], b[:, :N_VIS])


def test_rollout_with_shift_oracle_is_exact(trajs, gt, cases):
    res = autoregressive_rollout(shift_oracle(trajs), gt, cases.beta, N_VIS, cases.boundary_mask, cases.boundary_values)
    assert torch.equal(res.prediction, gt)
    assert res.loss == 0.0
    assert np.all(np.isnan(res.frame_mse[:N_VIS])) and np.all(res.frame_mse[N_VIS:] == 0)


def test_rollout_never_reads_hidden_ground_truth(trajs, gt, cases):
    poisoned = gt.clone()
    poisoned[:, N_VIS:] = float("nan")
    model = model_for("causal")
    clean = rollout_model(model, gt, cases)
    dirty = rollout_model(model, poisoned, cases)
    assert torch.isfinite(dirty.prediction).all()
    assert torch.equal(clean.prediction, dirty.prediction)
    assert torch.equal(clean.prediction[:, :N_VIS], gt[:, :N_VIS])


def test_rollout_deterministic_and_reports_every_frame(gt, cases):
    model = model_for("causal", 2)
    a, b = rollout_model(model, gt, cases), rollout_model(model, gt, cases)
    assert torch.equal(a.prediction, b.prediction) and a.loss == b.loss
    assert np.all(np.isfinite(a.frame_mse[N_VIS:]))
    assert a.loss == pytest.approx(float(((a.prediction[:, N_VIS:] - gt[:, N_VIS:]) ** 2).mean()), rel=1e-12)
    # the boundary ring is rewritten on every inserted frame
    m = cases.boundary_mask
    assert torch.equal(a.prediction[:, :, m], gt[:, :, m])
    with pytest.raises(ConfigurationError):
        block_predict(model, gt, cases)


def test_rollout_uses_position_before_slot(gt, cases):
    # A forward that tags each output with its position reveals which one fills slot t.
    def tagger(src, beta):
        out = torch.zeros_like(src)
        for i in range(src.shape[1]):
            out[:, i] = i
        return out

    res = autoregressive_rollout(tagger, gt, cases.beta, N_VIS)
    for t in range(N_VIS, T):
        assert torch.all(res.prediction[:, t] == t - 1)


@pytest.mark.parametrize("mask", ["block", "causal"])
def test_evaluate_single_and_duplicated(trajs, mask):
    model = model_for(mask, 4)
    one = evaluate_test_set(model, trajs[:1])
    two = evaluate_test_set(model, [trajs[0], trajs[0]])
    assert one.mean_loss == one.case_losses[0]
    assert two.mean_loss == one.mean_loss
    full = evaluate_test_set(model, trajs)
    assert full.case_losses.shape == (3,) and full.mean_loss == pytest.approx(full.case_losses.mean())
    other = "causal" if mask == "block" else "block"
    with pytest.raises(ConfigurationError):
        evaluate_test_set(model, trajs, mode=other)


def test_heatmap():
    model = model_for("block")
    w = model.output_projection.weight
    np.testing.assert_allclose(projection_weight_heatmap(model), oracles.heatmap_loop(w.detach().numpy(), 6, 7),
                               rtol=1e-12)
    assert np.all(projection_weight_heatmap(model) >= 0)
    with torch.no_grad():
        w.zero_()
        assert np.all(projection_weight_heatmap(model) == 0)
        w.fill_(-2.0)
        assert np.all(projection_weight_heatmap(model) == 2.0)
    assert np.array_equal(projection_weight_heatmap(model_for("block", 9)), projection_weight_heatmap(model_for("block", 9)))
