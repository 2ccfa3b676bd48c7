import numpy as np
import pytest
import torch

from depthsal.attention import DepthSensitiveAttention, align_mask, init_attention

from oracles import oracle_attention_forward


def identity_transitions(module):
    """Set every 1x1 transition to the identity kernel, zero bias."""
    for conv in module.transitions:
        torch.nn.init.zeros_(conv.weight)
        torch.nn.init.zeros_(conv.bias)
        c = conv.weight.shape[0]
        with torch.no_grad():
            for i in range(c):
                conv.weight[i, i, 0, 0] = 1.0


class TestAlignMask:
    def test_single_one_max_pools(self):
        mask = torch.zeros(4, 4)
        mask[1, 2] = 1.0
        out = align_mask(mask, (2, 2))
        expected = torch.zeros(2, 2)
        expected[0, 1] = 1.0
        torch.testing.assert_close(out, expected)

    def test_all_ones(self):
        out = align_mask(torch.ones(8, 8), (2, 2))
        torch.testing.assert_close(out, torch.ones(2, 2))

    def test_identity_when_sizes_match(self):
        mask = torch.rand(4, 4)
        torch.testing.assert_close(align_mask(mask, (4, 4)), mask)

    def test_non_integer_ratio_errors(self):
        with pytest.raises(ValueError, match="integer multiple"):
            align_mask(torch.ones(6, 6), (4, 4))

    def test_values_stay_in_unit_interval(self):
        mask = torch.rand(8, 8)
        out = align_mask(mask, (4, 4))
        assert out.min() >= 0 and out.max() <= 1


class TestForward:
    def test_zero_transitions_identity(self):
        torch.manual_seed(0)
        module = DepthSensitiveAttention(channels=4, regions=3)
        for conv in module.transitions:
            torch.nn.init.zeros_(conv.weight)
            torch.nn.init.zeros_(conv.bias)
        feats = torch.randn(2, 4, 8, 8)
        masks = torch.rand(2, 3, 8, 8)
        torch.testing.assert_close(module(feats, masks), feats)

    def test_all_ones_mask_identity_kernel_doubles(self):
        module = DepthSensitiveAttention(channels=3, regions=1)
        identity_transitions(module)
        feats = torch.randn(1, 3, 4, 4)
        masks = torch.ones(1, 1, 4, 4)
        torch.testing.assert_close(module(feats, masks), 2 * feats,
                                   rtol=0, atol=1e-6)

    def test_partition_masks_identity_kernels_double(self):
        module = DepthSensitiveAttention(channels=3, regions=2)
        identity_transitions(module)
        feats = torch.randn(1, 3, 4, 4)
        half = torch.zeros(1, 1, 4, 4)
        half[..., :2] = 1.0
        masks = torch.cat([half, 1 - half], dim=1)
        torch.testing.assert_close(module(feats, masks), 2 * feats,
                                   rtol=0, atol=1e-6)

    def test_matches_scalar_oracle(self):
        torch.manual_seed(3)
        module = DepthSensitiveAttention(channels=3, regions=2)
        feats = torch.randn(1, 3, 4, 4, dtype=torch.float64)
        masks = torch.rand(1, 2, 8, 8, dtype=torch.float64)
        module = module.double()
        out = module(feats, masks)[0].detach().numpy()
        aligned = align_mask(masks, (4, 4))[0].numpy()
        weights = [c.weight.detach().numpy()[:, :, 0, 0] for c in module.transitions]
        biases = [c.bias.detach().numpy() for c in module.transitions]
        want = oracle_attention_forward(feats[0].numpy(), aligned, weights, biases)
        np.testing.assert_allclose(out, want, atol=1e-12)

    def test_shape_preserved(self):
        module = DepthSensitiveAttention(channels=5, regions=3)
        feats = torch.randn(2, 5, 8, 8)
        masks = torch.rand(2, 3, 16, 16)
        assert module(feats, masks).shape == feats.shape

    def test_region_count_mismatch_errors(self):
        module = DepthSensitiveAttention(channels=2, regions=3)
        with pytest.raises(ValueError, match="region masks"):
            module(torch.randn(1, 2, 4, 4), torch.rand(1, 2, 4, 4))

    def test_mask_scaling_is_linear(self):
        torch.manual_seed(5)
        module = DepthSensitiveAttention(channels=4, regions=2).double()
        feats = torch.randn(1, 4, 4, 4, dtype=torch.float64)
        masks = torch.rand(1, 2, 4, 4, dtype=torch.float64)
        base = module(feats, masks)
        for s in (0.0, 0.25, 0.5, 1.0):
            scaled = masks.clone()
            scaled[:, 0] *= s
            out = module(feats, scaled)
            # the first sub-branch contribution scales exactly linearly
            branch = base - module(feats, masks * torch.tensor([0.0, 1.0])[None, :, None, None])
            expected = module(feats, masks * torch.tensor([0.0, 1.0])[None, :, None, None]) + s * branch
            torch.testing.assert_close(out, expected, rtol=0, atol=1e-12)

    def test_fusion_variants_run(self):
        feats = torch.randn(1, 4, 4, 4)
        masks = torch.rand(1, 2, 4, 4)
        for fusion in ("mul", "sum", "concat"):
            module = DepthSensitiveAttention(4, 2, fusion=fusion)
            assert module(feats, masks).shape == feats.shape

    def test_unknown_fusion_errors(self):
        with pytest.raises(ValueError):
            DepthSensitiveAttention(4, 2, fusion="stack")


class TestInit:
    def test_shapes(self):
        module = init_attention(8, 3, rng_seed=0)
        assert len(module.transitions) == 3
        for conv in module.transitions:
            assert tuple(conv.weight.shape) == (8, 8, 1, 1)

    def test_seed_determinism(self):
        a = init_attention(8, 3, rng_seed=7)
        b = init_attention(8, 3, rng_seed=7)
        for pa, pb in zip(a.parameters(), b.parameters()):
            torch.testing.assert_close(pa, pb, rtol=0, atol=0)

    def test_minimal_case(self):
        module = init_attention(1, 1, rng_seed=0)
        assert tuple(module.transitions[0].weight.shape) == (1, 1, 1, 1)

    def test_bad_channels(self):
        with pytest.raises(ValueError):
            init_attention(0, 1, rng_seed=0)


class TestGradients:
    def test_gradients_match_finite_differences(self):
        torch.manual_seed(11)
        module = DepthSensitiveAttention(channels=2, regions=2).double()
        feats = torch.randn(1, 2, 4, 4, dtype=torch.float64, requires_grad=True)
        masks = torch.rand(1, 2, 4, 4, dtype=torch.float64)
        target = torch.randn(1, 2, 4, 4, dtype=torch.float64)

        def loss_fn():
            return ((module(feats, masks) - target) ** 2).mean()

        loss = loss_fn()
        params = [feats] + list(module.parameters())
        grads = torch.autograd.grad(loss, params)

        h = 1e-6
        for p, g in zip(params, grads):
            flat = p.detach().view(-1)
            for k in range(min(flat.numel(), 8)):
                orig = flat[k].item()
                flat[k] = orig + h
                up = loss_fn().item()
                flat[k] = orig - h
                down = loss_fn().item()
                flat[k] = orig
                fd = (up - down) / (2 * h)
                ref = g.view(-1)[k].item()
                assert fd == pytest.approx(ref, rel=1e-4, abs=1e-8)
