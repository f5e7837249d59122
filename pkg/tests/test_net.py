import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from mvseg3d.net import (
    ChecksumError,
    ConfigMismatchError,
    FeaturePyramid,
    ModelConfig,
    MultiViewModel,
    load_into,
    load_weights,
    save_weights,
)
from mvseg3d.net.blocks import CrossViewAttention

TINY = ModelConfig(
    embed_dim=8, depths=(1, 1), heads=(2, 2), window=2,
    num_classes=3, input_size=8, cross_attn_placement="bottleneck",
)


def tiny_model(placement="bottleneck", seed=0, num_classes=3):
    cfg = ModelConfig(
        embed_dim=8, depths=(1, 1), heads=(2, 2), window=2,
        num_classes=num_classes, input_size=8, cross_attn_placement=placement,
    )
    return MultiViewModel(cfg, init_seed=seed)


# --- config -----------------------------------------------------------------


def test_config_shapes_formula():
    cfg = ModelConfig(num_classes=4)
    assert cfg.stage_grid(0) == (16, 16, 16)
    assert cfg.stage_width(0) == 24
    assert cfg.bottleneck_grid == (2, 2, 2)
    assert cfg.bottleneck_width == 192
    assert cfg.stage_window(3) == (2, 2, 2)  # clamped to the grid


def test_config_rejects_incompatible_geometry():
    with pytest.raises(ValueError):
        ModelConfig(input_size=24)  # 24 % (2 * 2**3) != 0
    with pytest.raises(ValueError):
        ModelConfig(heads=(5, 2, 4, 4))  # 24 not divisible by 5
    with pytest.raises(ValueError):
        ModelConfig(cross_attn_placement="everywhere")


# --- encode -----------------------------------------------------------------


def test_encode_level_shapes_default_config():
    model = MultiViewModel(ModelConfig(num_classes=4))
    p = model.encode(torch.rand(1, 1, 32, 32, 32))
    shapes = [tuple(t.shape) for t in p.levels]
    assert shapes == [
        (1, 24, 16, 16, 16),
        (1, 48, 8, 8, 8),
        (1, 96, 4, 4, 4),
        (1, 192, 2, 2, 2),
    ]


def test_encode_deterministic():
    model = tiny_model()
    x = torch.rand(2, 1, 8, 8, 8)
    p1 = model.encode(x)
    p2 = model.encode(x.clone())
    for a, b in zip(p1.levels, p2.levels):
        assert torch.equal(a, b)


def test_encode_shape_error_names_expected_and_actual():
    model = tiny_model()
    with pytest.raises(ValueError, match=r"8.*16|16.*8"):
        model.encode(torch.rand(1, 1, 16, 16, 16))


def test_encode_rejects_nonfinite():
    model = tiny_model()
    x = torch.rand(1, 1, 8, 8, 8)
    x[0, 0, 0, 0, 0] = float("nan")
    with pytest.raises(ValueError):
        model.encode(x)


def test_encode_degenerate_weights_equal_embedding_plus_merging():
    # zeroing the residual branches turns every stage block into the identity,
    # so the encoder must equal a hand-rolled embed -> merge -> merge chain
    model = tiny_model()
    with torch.no_grad():
        for name, p in model.named_parameters():
            if ".attn.proj." in name or ".mlp.fc2." in name:
                p.zero_()
    x = torch.rand(1, 1, 8, 8, 8)
    p = model.encode(x)

    emb = F.conv3d(x, model.encoder.patch_embed.weight, model.encoder.patch_embed.bias,
                   stride=(2, 2, 2))
    t = emb.permute(0, 2, 3, 4, 1)
    assert torch.equal(p.levels[0], t.permute(0, 4, 1, 2, 3))

    merge = model.encoder.merges[0]
    parts = [t[:, i::2, j::2, k::2, :] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    cat = torch.cat(parts, dim=-1)
    normed = F.layer_norm(cat, cat.shape[-1:], merge.norm.weight, merge.norm.bias)
    reduced = normed @ merge.reduction.weight.T
    assert torch.allclose(p.levels[1], reduced.permute(0, 4, 1, 2, 3), atol=0, rtol=0)


def test_attention_rows_are_probability_vectors():
    model = tiny_model()
    x = torch.rand(1, 1, 8, 8, 8)
    feat = model.encoder.patch_embed(x).permute(0, 2, 3, 4, 1)
    probs = model.encoder.stages[0][0].attn.probs(feat)
    assert probs.min() >= 0
    assert torch.allclose(probs.sum(dim=-1), torch.ones_like(probs.sum(dim=-1)), atol=1e-6)


# --- cross-view attention ---------------------------------------------------


def test_cross_attention_single_token_identity_projections():
    cross = CrossViewAttention(dim=1)
    with torch.no_grad():
        for lin in (cross.wq, cross.wk, cross.wv, cross.wo):
            lin.weight.fill_(1.0)
    f_i = torch.tensor([[[2.0]]])
    f_j = torch.tensor([[[5.0]]])
    g_i, g_j = cross(f_i, f_j)
    assert (g_i - f_i).item() == pytest.approx(5.0, abs=1e-12)  # attended value = v_j
    assert (g_j - f_j).item() == pytest.approx(2.0, abs=1e-12)


def test_cross_attention_equal_inputs_match_self_attention():
    torch.manual_seed(0)
    cross = CrossViewAttention(dim=6)
    f = torch.rand(2, 5, 6)
    g_i, g_j = cross(f, f.clone())
    assert torch.equal(g_i, g_j)
    assert torch.allclose(g_i, f + cross.attend(f, f), atol=0, rtol=0)


def test_cross_attention_two_token_hand_computed():
    dim = 2
    cross = CrossViewAttention(dim)
    with torch.no_grad():
        eye = torch.eye(dim, dtype=torch.float64)
        for lin in (cross.wq, cross.wk, cross.wv):
            lin.weight.copy_(eye)
        cross.wo.weight.copy_(eye)
    cross.double()
    f_i = torch.tensor([[[1.0, 0.0], [0.0, 2.0]]], dtype=torch.float64)
    f_j = torch.tensor([[[0.5, 1.0], [2.0, -1.0]]], dtype=torch.float64)
    with torch.no_grad():
        g_i, _ = cross(f_i, f_j)

    # hand-enumerate the 2x2 attention matrix for the first query
    scale = 1.0 / math.sqrt(dim)
    for q_idx in range(2):
        q = f_i[0, q_idx].numpy()
        logits = [float(np.dot(q, f_j[0, k].numpy())) * scale for k in range(2)]
        m = max(logits)
        weights = [math.exp(l - m) for l in logits]
        z = sum(weights)
        attended = sum(w / z * f_j[0, k].numpy() for k, w in enumerate(weights))
        got = (g_i - f_i)[0, q_idx].numpy()
        assert np.allclose(got, attended, atol=1e-6)


def test_cross_attention_rows_sum_to_one():
    torch.manual_seed(1)
    cross = CrossViewAttention(dim=8)
    probs = cross.probs(torch.rand(3, 7, 8), torch.rand(3, 7, 8))
    assert torch.allclose(probs.sum(dim=-1), torch.ones(3, 7), atol=1e-6)
    assert probs.min() >= 0


def test_cross_attention_shape_mismatch():
    cross = CrossViewAttention(dim=4)
    with pytest.raises(ValueError):
        cross(torch.rand(1, 3, 4), torch.rand(1, 5, 4))


# --- decode -----------------------------------------------------------------


def test_decode_pair_none_placement_is_independent():
    model = tiny_model(placement="none")
    x_i, x_j = torch.rand(1, 1, 8, 8, 8), torch.rand(1, 1, 8, 8, 8)
    p_i, p_j = model.encode(x_i), model.encode(x_j)
    li, lj = model.decode_pair(p_i, p_j)
    assert torch.equal(li, model.decode_single(p_i))
    assert torch.equal(lj, model.decode_single(p_j))

    # perturbing the partner leaves this view's logits bit-identical
    p_j2 = model.encode(torch.rand(1, 1, 8, 8, 8))
    li2, _ = model.decode_pair(p_i, p_j2)
    assert torch.equal(li, li2)

    # swap commutes with output swap
    a, b = model.decode_pair(p_j, p_i)
    assert torch.equal(a, lj) and torch.equal(b, li)


@pytest.mark.parametrize("placement", ["bottleneck", "intermediate"])
def test_decode_pair_cross_attention_couples_views(placement):
    model = tiny_model(placement=placement)
    x_i, x_j = torch.rand(1, 1, 8, 8, 8), torch.rand(1, 1, 8, 8, 8)
    p_i = model.encode(x_i)
    p_j = model.encode(x_j)
    li, _ = model.decode_pair(p_i, p_j)

    # finite-difference sensitivity probe: nudge one bottleneck voxel of view j
    levels = list(p_j.levels)
    bumped = levels[-1].clone()
    bumped[0, 0, 0, 0, 0] += 1e-2
    levels[-1] = bumped
    li2, _ = model.decode_pair(p_i, FeaturePyramid(levels=tuple(levels)))
    assert (li - li2).abs().max().item() > 0


def test_decode_output_shape_default_config():
    model = MultiViewModel(ModelConfig(num_classes=4))
    p = model.encode(torch.rand(1, 1, 32, 32, 32))
    logits = model.decode_single(p)
    assert tuple(logits.shape) == (1, 4, 32, 32, 32)


def test_decode_pair_mismatched_pyramids():
    model = tiny_model()
    p = model.encode(torch.rand(1, 1, 8, 8, 8))
    other = MultiViewModel(
        ModelConfig(embed_dim=16, depths=(1, 1), heads=(2, 2), window=2,
                    num_classes=3, input_size=8)
    )
    q = other.encode(torch.rand(1, 1, 8, 8, 8))
    with pytest.raises(ValueError):
        model.decode_pair(p, q)


# --- heads ------------------------------------------------------------------


def test_heads_shapes():
    model = tiny_model()
    p = model.encode(torch.rand(2, 1, 8, 8, 8))
    y_rec, y_rot, y_con = model.heads(p)
    assert tuple(y_rec.shape) == (2, 1, 8, 8, 8)
    assert tuple(y_rot.shape) == (2, 4)
    assert tuple(y_con.shape) == (2, 64)


def test_rotation_head_zero_weights_gives_uniform_logits():
    model = tiny_model()
    with torch.no_grad():
        model.rot_head.weight.zero_()
        model.rot_head.bias.zero_()
    p = model.encode(torch.rand(1, 1, 8, 8, 8))
    _, y_rot, _ = model.heads(p)
    assert torch.equal(y_rot, torch.zeros(1, 4))


def test_pooled_constant_bottleneck_equals_constant():
    model = tiny_model()
    p = model.encode(torch.rand(1, 1, 8, 8, 8))
    width = model.config.bottleneck_width
    grid = model.config.bottleneck_grid
    const = torch.full((1, width, *grid), 0.37)
    levels = list(p.levels)
    levels[-1] = const
    _, _, y_con = model.heads(FeaturePyramid(levels=tuple(levels)))
    expected = model.con_head(torch.full((1, width), 0.37))
    assert torch.allclose(y_con, expected, atol=0, rtol=0)


# --- weights / checkpoints --------------------------------------------------


def test_parameter_count_regression_default_config():
    # frozen once from the architecture formulas for ModelConfig():
    # encoder 625104 + decoder 1328570 + recon 196033 + rot 772 + con 49408
    model = MultiViewModel(ModelConfig())
    assert model.param_count() == 2_199_887


def test_parameter_count_pure_function_of_config():
    assert MultiViewModel(ModelConfig(), init_seed=0).param_count() == \
        MultiViewModel(ModelConfig(), init_seed=9).param_count()
    none_model = MultiViewModel(ModelConfig(cross_attn_placement="none"))
    assert none_model.param_count() == 2_199_887 - 4 * 192 * 192


def test_init_deterministic_and_finite():
    a = tiny_model(seed=3)
    b = tiny_model(seed=3)
    for (ka, va), (kb, vb) in zip(sorted(a.state_dict().items()), sorted(b.state_dict().items())):
        assert ka == kb
        assert torch.equal(va, vb)
        assert torch.isfinite(va).all()
    c = tiny_model(seed=4)
    assert any(
        not torch.equal(v, c.state_dict()[k]) for k, v in a.state_dict().items()
    )


def test_weights_round_trip_byte_exact(tmp_path):
    model = tiny_model(seed=1)
    path = tmp_path / "weights.ckpt"
    save_weights(model, path)
    cfg, tensors = load_weights(path)
    assert cfg == model.config
    for key, arr in model.state_arrays().items():
        assert np.array_equal(tensors[key], arr.astype("<f4")), key

    clone = tiny_model(seed=2)
    n = load_into(clone, path)
    assert n == len(tensors)
    for key, value in clone.state_arrays().items():
        assert np.array_equal(value, tensors[key]), key


def test_load_with_wrong_class_count_errors(tmp_path):
    model = tiny_model(num_classes=3)
    path = tmp_path / "w.ckpt"
    save_weights(model, path)
    other = tiny_model(num_classes=4)
    with pytest.raises(ConfigMismatchError):
        load_into(other, path)


def test_corrupt_checkpoint_fails_checksum(tmp_path):
    model = tiny_model()
    path = tmp_path / "w.ckpt"
    save_weights(model, path)
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_weights(path)


def test_encoder_only_load_counts_matches(tmp_path):
    model = tiny_model(seed=5)
    path = tmp_path / "w.ckpt"
    save_weights(model, path)
    target = tiny_model(seed=6)
    encoder_keys = [k for k in model.state_arrays() if k.startswith("encoder.")]
    n = load_into(target, path, encoder_only=True)
    assert n == len(encoder_keys)
    for key in encoder_keys:
        assert np.array_equal(target.state_arrays()[key], model.state_arrays()[key])
