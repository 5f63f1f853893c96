import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from opdeepdive.model import (ModelConfig, MultimodalPrediction, build_model,
                              count_parameters, decode_coords, decode_output,
                              encode_coords, select_best, split_raw)
from opdeepdive.trajectory import EgoTrajectory, comma_anchor_set, uniform_anchor_set


def tiny_config(**kw):
    return ModelConfig(backbone_variant="tiny", **kw)


class TestModelConfig:
    def test_output_dim_comma(self):
        assert ModelConfig(num_modes=5, num_points=33).raw_dim == 500

    def test_output_dim_nuscenes(self):
        assert tiny_config(num_modes=5, num_points=10).raw_dim == 155

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig(num_modes=0)
        with pytest.raises(ValueError):
            ModelConfig(gru_width=256)
        with pytest.raises(ValueError):
            ModelConfig(backbone_variant="resnet")


class TestShapes:
    @pytest.mark.parametrize("variant", ["tiny", "full"])
    def test_forward_shape_contract(self, variant):
        cfg = ModelConfig(backbone_variant=variant)
        model = build_model(cfg).eval()
        x = torch.zeros(2, 6, 128, 256)
        fmap = model.backbone(x)
        assert fmap.shape[-2:] == (4, 8)
        features = model.extract_features(x)
        assert features.shape == (2, 1024)
        raw, hidden = model(x, model.init_hidden(2))
        assert raw.shape == (2, cfg.raw_dim)
        assert hidden.shape == (2, 512)

    def test_full_backbone_channels(self):
        model = build_model(ModelConfig(backbone_variant="full")).eval()
        with torch.no_grad():
            fmap = model.backbone(torch.zeros(1, 6, 128, 256))
        assert fmap.shape == (1, 1408, 4, 8)

    def test_full_parameter_count(self):
        model = build_model(ModelConfig(backbone_variant="full"))
        backbone = sum(p.numel() for p in model.backbone.parameters())
        heads = count_parameters(model) - backbone
        target = 9.2e6 + heads
        assert abs(count_parameters(model) - target) / target < 0.15

    def test_wrong_input_shape_rejected(self):
        model = build_model(tiny_config())
        with pytest.raises(ValueError):
            model(torch.zeros(1, 6, 64, 128), model.init_hidden(1))

    def test_hidden_shape_mismatch_rejected(self):
        model = build_model(tiny_config())
        with pytest.raises(ValueError):
            model(torch.zeros(2, 6, 128, 256), model.init_hidden(3))


class TestForwardBehavior:
    def test_deterministic_at_eval(self):
        torch.manual_seed(7)
        model = build_model(tiny_config()).eval()
        x = torch.zeros(1, 6, 128, 256)
        with torch.no_grad():
            a, _ = model(x, model.init_hidden(1))
            b, _ = model(x, model.init_hidden(1))
        torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_batch_rows_independent(self):
        torch.manual_seed(8)
        model = build_model(tiny_config()).eval()
        x = torch.rand(1, 6, 128, 256)
        batch = x.repeat(2, 1, 1, 1)
        with torch.no_grad():
            raw, hidden = model(batch, model.init_hidden(2))
        torch.testing.assert_close(raw[0], raw[1], rtol=1e-5, atol=1e-5)
        torch.testing.assert_close(hidden[0], hidden[1], rtol=1e-5, atol=1e-5)

    def test_hidden_state_carries_temporal_memory(self):
        torch.manual_seed(9)
        model = build_model(tiny_config()).eval()
        frames = [torch.rand(1, 6, 128, 256) for _ in range(3)]
        with torch.no_grad():
            hidden = model.init_hidden(1)
            for f in frames:
                threaded, hidden = model(f, hidden)
            fresh, _ = model(frames[2], model.init_hidden(1))
        assert not torch.allclose(threaded, fresh)


class TestDecoding:
    def test_zero_raw_decodes_to_unit_forward_points(self):
        cfg = tiny_config()
        pred = decode_output(np.zeros(cfg.raw_dim), cfg, comma_anchor_set())
        for traj in pred.trajectories:
            np.testing.assert_allclose(traj.points[:, 0], 1.0)  # exp(0)
            np.testing.assert_allclose(traj.points[:, 1:], 0.0)  # sinh(0), identity
        np.testing.assert_allclose(pred.confidences, 0.5)

    def test_log_ten_decodes_to_ten(self):
        coords = torch.zeros(1, 1, 3, dtype=torch.float64)
        coords[..., 0] = np.log(10.0)
        np.testing.assert_allclose(decode_coords(coords)[..., 0].numpy(), 10.0)

    def test_decode_encode_roundtrip(self):
        rng = np.random.default_rng(0)
        raw = torch.from_numpy(rng.normal(0, 2, size=(5, 33, 3)))
        recovered = encode_coords(decode_coords(raw))
        torch.testing.assert_close(recovered, raw, rtol=0, atol=1e-6)

    def test_non_finite_raw_rejected(self):
        cfg = tiny_config()
        raw = np.zeros(cfg.raw_dim)
        raw[3] = np.inf
        with pytest.raises(ValueError):
            decode_output(raw, cfg, comma_anchor_set())

    def test_anchor_count_mismatch_rejected(self):
        cfg = tiny_config()
        with pytest.raises(ValueError):
            decode_output(np.zeros(cfg.raw_dim), cfg, uniform_anchor_set(10, 5.0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_decoded_x_strictly_positive(self, seed):
        cfg = tiny_config(num_modes=2, num_points=5)
        rng = np.random.default_rng(seed)
        raw = rng.normal(0, 5, size=cfg.raw_dim)
        pred = decode_output(raw, cfg, uniform_anchor_set(5, 2.0))
        for traj in pred.trajectories:
            assert np.all(traj.points[:, 0] > 0)

    def test_batched_decode(self):
        cfg = tiny_config()
        preds = decode_output(np.zeros((3, cfg.raw_dim)), cfg, comma_anchor_set())
        assert len(preds) == 3


class TestSelectBest:
    def _pred(self, confidences):
        anchors = uniform_anchor_set(2, 1.0)
        trajs = [EgoTrajectory(points=np.full((2, 3), float(i) + 1.0), anchors=anchors)
                 for i in range(len(confidences))]
        return MultimodalPrediction(trajectories=trajs, confidences=np.array(confidences))

    def test_argmax(self):
        pred = self._pred([0.1, 0.9, 0.3, 0.2, 0.1])
        assert select_best(pred).points[0, 0] == 2.0

    def test_tie_goes_to_lowest_index(self):
        pred = self._pred([0.5, 0.5, 0.5])
        assert select_best(pred).points[0, 0] == 1.0

    def test_single_mode(self):
        pred = self._pred([0.7])
        assert select_best(pred).points[0, 0] == 1.0

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=6))
    def test_invariant_under_monotone_transform(self, confs):
        pred = self._pred(confs)
        squashed = self._pred(list(np.tanh(np.array(confs)) * 0.5))
        np.testing.assert_array_equal(select_best(pred).points,
                                      select_best(squashed).points)


class TestRawLayout:
    def test_split_raw_layout(self):
        cfg = tiny_config(num_modes=2, num_points=2)
        raw = torch.arange(cfg.raw_dim, dtype=torch.float64)
        coords, logits = split_raw(raw, cfg)
        # mode 0: values 0..5 are the 2x3 coordinates, value 6 is its logit
        np.testing.assert_array_equal(coords[0].numpy(), [[0, 1, 2], [3, 4, 5]])
        np.testing.assert_array_equal(logits.numpy(), [6, 13])

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            split_raw(torch.zeros(100), tiny_config())
