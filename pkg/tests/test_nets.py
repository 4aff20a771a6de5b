import numpy as np
import pytest
import torch
import torch.nn as nn

from lightexpr.checkpoint import NetworkCheckpoint, load_module, save_module
from lightexpr.core import AttributeSpec, encode_conditions
from lightexpr.errors import CheckpointError, ConfigurationError, DimensionError
from lightexpr.nets import (
    Discriminator,
    Generator,
    HourglassConfig,
    ResidualBlock,
    build_discriminator,
    build_hourglass,
    build_network,
    build_quality_net,
    class_logits,
    count_parameters,
    forward_discriminator,
    forward_generator,
    parameter_census,
    set_upsampling,
)

import oracles

PAPER_SPEC = AttributeSpec(6, 20)


def _conv_weights(module):
    return [m for m in module.modules() if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d))]


# --------------------------------------------------------------------------
# quality net


def test_quality_net_trace_at_128():
    q = build_quality_net(128)
    x = torch.zeros(1, 3, 128, 128)
    sizes = []
    for conv in q.convs:
        x = conv(x)
        sizes.append(tuple(x.shape[1:]))
    assert sizes == [(64, 64, 64), (128, 32, 32), (256, 16, 16), (512, 8, 8), (1024, 4, 4), (2048, 2, 2)]
    assert q.flat_width == 8192
    assert (q.fc0.in_features, q.fc0.out_features, q.fc1.out_features) == (8192, 256, 1)
    out = q(torch.zeros(1, 3, 128, 128))
    assert out.shape == (1,) and torch.isfinite(out).all()


def test_quality_net_census():
    q = build_quality_net(128)
    census = parameter_census(q)
    chans = [3, 64, 128, 256, 512, 1024, 2048]
    for i in range(6):
        assert census[f"convs.{i}.weight"] == (chans[i + 1], chans[i], 4, 4)
        assert q.convs[i].stride == (2, 2) and q.convs[i].padding == (1, 1)
    assert census["fc0.weight"] == (256, 8192) and census["fc1.weight"] == (1, 256)
    expected = sum(oracles.conv_params(chans[i], chans[i + 1], 4) for i in range(6)) + 8192 * 256 + 256 + 257
    assert count_parameters(q) == expected
    assert not any(isinstance(m, (nn.InstanceNorm2d, nn.BatchNorm2d)) for m in q.modules())


def test_quality_net_rejects_bad_size():
    with pytest.raises(ConfigurationError):
        build_quality_net(100)
    with pytest.raises(ConfigurationError):
        build_quality_net(32)


# --------------------------------------------------------------------------
# hourglass


HG_ROWS = [("conv0", 7, 1, 64), ("conv1", 4, 2, 128), ("conv2", 4, 2, 256), ("conv3", 4, 1, 128),
           ("conv4", 4, 1, 64), ("conv5", 7, 1, 3)]


@pytest.mark.parametrize("in_ch", [9, 23, 6])
def test_hourglass_tables(in_ch):
    hg = build_hourglass(HourglassConfig(in_ch))
    prev = {"conv0": in_ch, "conv1": 64, "conv2": 128, "conv3": 64, "conv4": 32, "conv5": 64}
    for name, k, stride, cout in HG_ROWS:
        mod = getattr(hg, name)
        conv = mod if isinstance(mod, nn.Conv2d) else [m for m in mod if isinstance(m, nn.Conv2d)][0]
        assert conv.weight.shape == (cout, prev[name], k, k), name
        assert conv.stride == (stride, stride)
        assert conv.dilation == (1, 1)
    assert len(hg.res) == 6
    for rb in hg.res:
        assert rb.conv_a.weight.shape == (256, 256, 3, 3) and rb.conv_b.weight.shape == (256, 256, 3, 3)
    x = torch.zeros(1, in_ch, 128, 128)
    feats = hg.conv2(hg.conv1(hg.conv0(x)))
    assert feats.shape == (1, 256, 32, 32)
    up0 = hg.up0(hg.res(feats))
    assert up0.shape == (1, 64, 64, 64)
    c3 = hg.conv3(up0)
    assert c3.shape == (1, 128, 64, 64)
    up1 = hg.up1(c3)
    assert up1.shape == (1, 32, 128, 128)
    assert hg(torch.randn(1, in_ch, 128, 128)).shape == (1, 3, 128, 128)


def test_hourglass_census_count():
    hg = build_hourglass(HourglassConfig(9))
    expected = (oracles.conv_params(9, 64, 7, bias=False) + oracles.conv_params(64, 128, 4, bias=False)
                + oracles.conv_params(128, 256, 4, bias=False)
                + 6 * 2 * oracles.conv_params(256, 256, 3, bias=False)
                + oracles.conv_params(64, 128, 4, bias=False) + oracles.conv_params(32, 64, 4, bias=False)
                + oracles.conv_params(64, 3, 7, bias=True))
    # affine instance norms: conv0..conv2, 2 per residual block, up0, conv3, up1, conv4
    norms = 2 * (64 + 128 + 256 + 12 * 256 + 64 + 128 + 32 + 64)
    assert count_parameters(hg) == expected + norms


def test_hourglass_instance_norm_and_activations():
    hg = build_hourglass(HourglassConfig(6, base_channels=8, n_res=1))
    norms = [m for m in hg.modules() if isinstance(m, nn.InstanceNorm2d)]
    assert len(norms) == 3 + 2 + 4
    # final conv has no normalization after it; tanh bounds the output
    out = hg(torch.randn(2, 6, 16, 16) * 100)
    assert out.abs().max() <= 1


def test_pixel_shuffle_channel_to_space():
    ps = nn.PixelShuffle(2)
    assert ps(torch.zeros(1, 256, 32, 32)).shape == (1, 64, 64, 64)


@pytest.mark.parametrize("mode", ["pixel-shuffle", "bilinear", "transposed-conv"])
def test_upsampling_modes_same_shapes(mode):
    cfg = set_upsampling(HourglassConfig(9, base_channels=8, n_res=1), mode)
    hg = build_hourglass(cfg)
    assert hg(torch.randn(1, 9, 32, 32)).shape == (1, 3, 32, 32)
    if mode == "bilinear":
        assert sum(p.numel() for p in hg.up0[0].parameters()) == 0
    kinds = {s.name: s.kind for s in cfg.layers()}
    assert kinds["up0"] == {"pixel-shuffle": "pixel-shuffle", "bilinear": "bilinear-upsample",
                            "transposed-conv": "transposed-conv"}[mode]


def test_unknown_upsampling_rejected():
    with pytest.raises(ConfigurationError):
        HourglassConfig(9, upsampling="nearest")


def test_residual_block_zero_convs_is_identity():
    rb = ResidualBlock(4)
    nn.init.zeros_(rb.conv_a.weight)
    nn.init.zeros_(rb.conv_b.weight)
    x = torch.randn(2, 4, 5, 5)
    assert torch.equal(rb(x), x)


def test_hourglass_channel_mismatch():
    hg = build_hourglass(HourglassConfig(9, base_channels=8, n_res=1))
    with pytest.raises(DimensionError):
        hg(torch.zeros(1, 7, 16, 16))


# --------------------------------------------------------------------------
# generator


def test_generator_paper_inputs():
    g = Generator(PAPER_SPEC)
    assert g.hg_expression.config.in_channels == 9
    assert g.hg_lighting.config.in_channels == 23
    assert g.hg_synthesis.config.in_channels == 6


def _small_gen(spec=PAPER_SPEC, **kw):
    torch.manual_seed(0)
    return Generator(spec, base_channels=8, n_res=1, **kw)


def test_forward_generator_ranges_and_shapes(rng):
    g = _small_gen()
    img = rng.uniform(-1, 1, (32, 32, 3)).astype(np.float32)
    out = forward_generator(img, encode_conditions(2, 5, PAPER_SPEC, 32, 32), g)
    for key in ("output", "mask_e", "mask_l"):
        assert out[key].shape == (32, 32, 3)
        assert out[key].min() >= -1 and out[key].max() <= 1


def test_mask_dataflow_separation(rng):
    g = _small_gen()
    img = rng.uniform(-1, 1, (16, 16, 3)).astype(np.float32)
    a = forward_generator(img, encode_conditions(1, 3, PAPER_SPEC, 16, 16), g)
    b = forward_generator(img, encode_conditions(1, 9, PAPER_SPEC, 16, 16), g)
    c = forward_generator(img, encode_conditions(4, 3, PAPER_SPEC, 16, 16), g)
    assert np.array_equal(a["mask_e"], b["mask_e"])
    assert not np.array_equal(a["mask_l"], b["mask_l"])
    assert np.array_equal(a["mask_l"], c["mask_l"])
    assert not np.array_equal(a["mask_e"], c["mask_e"])


def test_output_depends_on_lighting_path(rng):
    g = _small_gen()
    img = rng.uniform(-1, 1, (16, 16, 3)).astype(np.float32)
    target = encode_conditions(0, 0, PAPER_SPEC, 16, 16)
    before = forward_generator(img, target, g)["output"]
    with torch.no_grad():
        g.hg_lighting.conv5.bias.add_(0.5)
    after = forward_generator(img, target, g)
    assert not np.allclose(before, after["output"])


def test_generator_output_bounded_for_extreme_inputs():
    g = _small_gen()
    labels = torch.zeros(2, 26)
    labels[:, 0] = labels[:, 6] = 1
    out = g(torch.randn(2, 3, 16, 16) * 1e3, labels)
    assert out.output.abs().max() <= 1


def test_generator_forward_deterministic(rng):
    g = _small_gen()
    img = rng.uniform(-1, 1, (16, 16, 3)).astype(np.float32)
    t = encode_conditions(3, 3, PAPER_SPEC, 16, 16)
    a, b = forward_generator(img, t, g), forward_generator(img, t, g)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_joint_generator_without_disentangling():
    g_joint = Generator(PAPER_SPEC, disentangle=False)
    assert g_joint.hg_joint.config.in_channels == 29
    assert count_parameters(g_joint) != count_parameters(Generator(PAPER_SPEC))
    small = _small_gen(disentangle=False)
    out = small(torch.zeros(1, 3, 16, 16), torch.eye(26)[:1] + torch.eye(26)[6:7])
    assert out.mask_e is None and out.mask_l is None


# --------------------------------------------------------------------------
# discriminator


def test_discriminator_table_shapes():
    d = build_discriminator(128, 26)
    src, cls = d(torch.zeros(1, 3, 128, 128))
    assert src.shape == (1, 1, 2, 2) and cls.shape == (1, 26, 2, 2)
    census = parameter_census(d)
    chans = [3, 64, 128, 256, 512, 1024, 2048]
    for i in range(6):
        assert census[f"convs.{i}.weight"] == (chans[i + 1], chans[i], 4, 4)
    assert census["src.weight"] == (1, 2048, 3, 3) and census["cls.weight"] == (26, 2048, 1, 1)
    assert not any(isinstance(m, (nn.InstanceNorm2d, nn.BatchNorm2d, nn.LayerNorm, nn.GroupNorm))
                   for m in d.modules())
    assert class_logits(cls).shape == (1, 26)


def test_discriminator_zero_head_and_batching():
    d = Discriminator(64, 7, base_channels=4)
    nn.init.zeros_(d.src.weight)
    nn.init.zeros_(d.src.bias)
    src, logits = forward_discriminator(torch.zeros(3, 3, 64, 64), d)
    assert torch.equal(src, torch.zeros_like(src))
    x = torch.randn(4, 3, 64, 64)
    s_all, l_all = forward_discriminator(x, d)
    s_one, l_one = forward_discriminator(x[2:3], d)
    assert s_all.shape[0] == 4 and l_all.shape == (4, 7)
    assert torch.allclose(s_all[2:3], s_one, atol=1e-6) and torch.allclose(l_all[2:3], l_one, atol=1e-6)
    with pytest.raises(DimensionError):
        d(torch.zeros(1, 3, 32, 32))


def test_init_statistics():
    d = Discriminator(64, 7, base_channels=32)
    w = d.convs[3].weight.detach()
    assert abs(float(w.std()) - 0.02) < 0.002
    assert float(d.convs[3].bias.detach().abs().max()) == 0.0


# --------------------------------------------------------------------------
# checkpoints


@pytest.mark.parametrize("factory", [
    lambda: build_quality_net(64, base_channels=4, fc_width=8),
    lambda: Discriminator(64, 7, base_channels=4),
    lambda: Generator(AttributeSpec(3, 4), base_channels=8, n_res=1),
])
def test_checkpoint_roundtrip_bit_identical(tmp_path, factory):
    torch.manual_seed(5)
    net = factory().eval()
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    x = torch.randn(2, 3, 64, 64)

    def fwd(m):
        with torch.no_grad():
            if isinstance(m, Generator):
                lab = torch.zeros(2, 7)
                lab[:, 1] = lab[:, 5] = 1
                return m(x, lab).output
            out = m(x)
            return out[0] if isinstance(out, tuple) else out

    loss = fwd(net).sum() * 0 + sum(p.sum() for p in net.parameters())
    loss.backward()
    opt.step()
    ref = fwd(net)
    save_module(tmp_path / "n.ckpt", net, opt, step=3, config_hash="abc", meta={"trained": True})
    loaded, ckpt = load_module(tmp_path / "n.ckpt")
    assert torch.equal(fwd(loaded), ref)
    assert ckpt.step == 3 and ckpt.config_hash == "abc" and ckpt.meta["trained"]
    opt2 = torch.optim.Adam(loaded.parameters(), lr=1e-3)
    opt2.load_state_dict(ckpt.optimizer_state)
    s1, s2 = opt.state_dict()["state"], opt2.state_dict()["state"]
    assert s1.keys() == s2.keys()
    for k in s1:
        assert torch.equal(s1[k]["exp_avg"], s2[k]["exp_avg"])


def test_checkpoint_errors(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        NetworkCheckpoint.load(p)
    net = build_quality_net(64, base_channels=4, fc_width=8)
    save_module(tmp_path / "q.ckpt", net)
    with pytest.raises(CheckpointError, match="expected discriminator"):
        load_module(tmp_path / "q.ckpt", expected_kind="discriminator")
    ck = NetworkCheckpoint.load(tmp_path / "q.ckpt")
    ck.architecture["fc_width"] = 16
    with pytest.raises(CheckpointError):
        ck.build()


def test_build_network_from_descriptor():
    g = Generator(AttributeSpec(3, 4), base_channels=8, n_res=2, upsampling="bilinear")
    g2 = build_network(g.descriptor())
    assert parameter_census(g) == parameter_census(g2)
    with pytest.raises(ConfigurationError):
        build_network({"kind": "mystery"})
