"""Network builders: quality scorer, hourglass generator, patch discriminator.

Channel widths scale with ``base_channels`` (64 reproduces the reference
layer tables). Every network is rebuilt from its ``descriptor()`` dict, which
is what checkpoints store.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import AttributeSpec, ConditionMaps, check_image, from_tensor, to_tensor
from .errors import ConfigurationError, DimensionError

UPSAMPLING_MODES = ("pixel-shuffle", "bilinear", "transposed-conv")
LEAKY_SLOPE = 0.01
INIT_STD = 0.02


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # strided-conv | conv | residual-block | pixel-shuffle | bilinear-upsample | transposed-conv | fully-connected
    out_channels: int
    kernel: int = 0
    stride: int = 1
    dilation: int = 1
    activation: str = "linear"
    normalization: str = "none"

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ConfigurationError(f"{self.name}: stride must be 1 or 2")
        if self.kind in ("strided-conv", "conv", "residual-block", "transposed-conv") and self.kernel < 1:
            raise ConfigurationError(f"{self.name}: {self.kind} needs a kernel size")


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def init_weights(module: nn.Module) -> None:
    """N(0, 0.02) weights and zero biases; norm layers start at identity."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, INIT_STD)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


# --------------------------------------------------------------------------
# quality network


class QualityNet(nn.Module):
    """Six stride-2 convs, then two linear fully connected layers to one score."""

    def __init__(self, input_size: int = 128, base_channels: int = 64, fc_width: int = 256):
        super().__init__()
        if not _is_power_of_two(input_size) or input_size < 64:
            raise ConfigurationError(f"quality net input must be a power of two >= 64, got {input_size}")
        self.input_size = input_size
        self.base_channels = base_channels
        self.fc_width = fc_width
        chans = [3] + [base_channels * 2 ** i for i in range(6)]
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 4, 2, 1) for i in range(6))
        self.final_size = input_size // 64
        self.flat_width = chans[-1] * self.final_size ** 2
        self.fc0 = nn.Linear(self.flat_width, fc_width)
        self.fc1 = nn.Linear(fc_width, 1)
        init_weights(self)

    def descriptor(self) -> dict:
        return {"kind": "quality", "input_size": self.input_size,
                "base_channels": self.base_channels, "fc_width": self.fc_width}

    def layer_specs(self) -> list:
        specs = [LayerSpec(f"conv{i}", "strided-conv", c.out_channels, 4, 2, 1, "leaky-relu")
                 for i, c in enumerate(self.convs)]
        specs += [LayerSpec("fc0", "fully-connected", self.fc_width),
                  LayerSpec("fc1", "fully-connected", 1)]
        return specs

    def trunk(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.input_size or x.shape[-2] != self.input_size:
            raise DimensionError(f"quality net expects {self.input_size}px input, got {tuple(x.shape)}")
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
        return x

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate (fc0) activations."""
        return self.fc0(torch.flatten(self.trunk(x), 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc1(self.features(x)).squeeze(1)


def build_quality_net(input_size: int = 128, base_channels: int = 64, fc_width: int = 256) -> QualityNet:
    return QualityNet(input_size, base_channels, fc_width)


# --------------------------------------------------------------------------
# hourglass


@dataclass(frozen=True)
class HourglassConfig:
    in_channels: int
    upsampling: str = "pixel-shuffle"
    base_channels: int = 64
    n_res: int = 6
    out_channels: int = 3

    def __post_init__(self):
        if self.upsampling not in UPSAMPLING_MODES:
            raise ConfigurationError(
                f"unknown upsampling mode {self.upsampling!r}; expected one of {UPSAMPLING_MODES}")
        if self.in_channels < 1 or self.base_channels < 4 or self.base_channels % 4:
            raise ConfigurationError("in_channels >= 1 and base_channels a multiple of 4 required")
        if self.out_channels != 3:
            raise ConfigurationError("hourglass output must have 3 channels")

    def upsampled_channels(self, channels: int) -> int:
        return channels if self.upsampling == "bilinear" else channels // 4

    def layers(self) -> list:
        w = self.base_channels
        up_kind = {"pixel-shuffle": "pixel-shuffle", "bilinear": "bilinear-upsample",
                   "transposed-conv": "transposed-conv"}[self.upsampling]
        up_kernel = 4 if up_kind == "transposed-conv" else 0
        specs = [
            LayerSpec("conv0", "conv", w, 7, 1, 1, "relu", "instance"),
            LayerSpec("conv1", "strided-conv", 2 * w, 4, 2, 1, "relu", "instance"),
            LayerSpec("conv2", "strided-conv", 4 * w, 4, 2, 1, "relu", "instance"),
        ]
        specs += [LayerSpec(f"rb{i}", "residual-block", 4 * w, 3, 1, 1, "relu", "instance")
                  for i in range(self.n_res)]
        specs += [
            LayerSpec("up0", up_kind, self.upsampled_channels(4 * w), up_kernel, 2 if up_kernel else 1, 1,
                      "relu", "instance"),
            LayerSpec("conv3", "conv", 2 * w, 4, 1, 1, "relu", "instance"),
            LayerSpec("up1", up_kind, self.upsampled_channels(2 * w), up_kernel, 2 if up_kernel else 1, 1,
                      "relu", "instance"),
            LayerSpec("conv4", "conv", w, 4, 1, 1, "relu", "instance"),
            LayerSpec("conv5", "conv", 3, 7, 1, 1, "tanh", "none"),
        ]
        return specs


def set_upsampling(config: HourglassConfig, mode: str) -> HourglassConfig:
    return replace(config, upsampling=mode)


def _norm(c: int) -> nn.InstanceNorm2d:
    return nn.InstanceNorm2d(c, affine=True, track_running_stats=False)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv_a = nn.Conv2d(channels, channels, 3, 1, 1, bias=False)
        self.norm_a = _norm(channels)
        self.conv_b = nn.Conv2d(channels, channels, 3, 1, 1, bias=False)
        self.norm_b = _norm(channels)

    def forward(self, x):
        h = F.relu(self.norm_a(self.conv_a(x)))
        return x + self.norm_b(self.conv_b(h))


class _ConvNormReLU(nn.Sequential):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, pad_asym=False):
        layers = []
        if pad_asym:
            # 4x4 stride-1 conv: pad 1 leading, 2 trailing to keep the size
            layers.append(nn.ZeroPad2d((1, 2, 1, 2)))
        layers += [nn.Conv2d(cin, cout, kernel, stride, padding, bias=False), _norm(cout), nn.ReLU()]
        super().__init__(*layers)


class _Upsample(nn.Sequential):
    def __init__(self, mode: str, channels: int):
        if mode == "pixel-shuffle":
            up, out = nn.PixelShuffle(2), channels // 4
        elif mode == "bilinear":
            up, out = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False), channels
        else:
            out = channels // 4
            up = nn.ConvTranspose2d(channels, out, 4, 2, 1, bias=False)
        super().__init__(up, _norm(out), nn.ReLU())
        self.out_channels = out


class Hourglass(nn.Module):
    def __init__(self, config: HourglassConfig):
        super().__init__()
        self.config = config
        w = config.base_channels
        self.conv0 = _ConvNormReLU(config.in_channels, w, 7, 1, 3)
        self.conv1 = _ConvNormReLU(w, 2 * w, 4, 2, 1)
        self.conv2 = _ConvNormReLU(2 * w, 4 * w, 4, 2, 1)
        self.res = nn.Sequential(*[ResidualBlock(4 * w) for _ in range(config.n_res)])
        self.up0 = _Upsample(config.upsampling, 4 * w)
        self.conv3 = _ConvNormReLU(self.up0.out_channels, 2 * w, 4, pad_asym=True)
        self.up1 = _Upsample(config.upsampling, 2 * w)
        self.conv4 = _ConvNormReLU(self.up1.out_channels, w, 4, pad_asym=True)
        self.conv5 = nn.Conv2d(w, 3, 7, 1, 3)

    def forward(self, x):
        if x.shape[1] != self.config.in_channels:
            raise DimensionError(f"hourglass expects {self.config.in_channels} channels, got {x.shape[1]}")
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise DimensionError("hourglass input size must be a multiple of 4")
        x = self.conv2(self.conv1(self.conv0(x)))
        x = self.res(x)
        x = self.conv4(self.up1(self.conv3(self.up0(x))))
        return torch.tanh(self.conv5(x))


def build_hourglass(config: HourglassConfig) -> Hourglass:
    hg = Hourglass(config)
    init_weights(hg)
    return hg


# --------------------------------------------------------------------------
# generator


@dataclass
class GeneratorOutput:
    output: torch.Tensor
    mask_e: Optional[torch.Tensor] = None
    mask_l: Optional[torch.Tensor] = None


def tile_labels(labels: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """(N, C) label vectors -> (N, C, H, W) spatially constant planes."""
    return labels[:, :, None, None].expand(-1, -1, height, width)


class Generator(nn.Module):
    """Expression and lighting hourglasses feeding a synthesis hourglass.

    With ``disentangle=False`` a single hourglass maps image + all condition
    planes straight to the output and no masks are produced.
    """

    def __init__(self, spec: AttributeSpec, base_channels: int = 64, upsampling: str = "pixel-shuffle",
                 n_res: int = 6, disentangle: bool = True):
        super().__init__()
        self.spec = spec
        self.base_channels = base_channels
        self.upsampling = upsampling
        self.n_res = n_res
        self.disentangle = disentangle
        cfg = dict(upsampling=upsampling, base_channels=base_channels, n_res=n_res)
        if disentangle:
            self.hg_expression = build_hourglass(HourglassConfig(3 + spec.num_expressions, **cfg))
            self.hg_lighting = build_hourglass(HourglassConfig(3 + spec.num_lightings, **cfg))
            self.hg_synthesis = build_hourglass(HourglassConfig(6, **cfg))
        else:
            self.hg_joint = build_hourglass(HourglassConfig(3 + spec.k, **cfg))

    def descriptor(self) -> dict:
        return {"kind": "generator", "spec": self.spec.to_dict(), "base_channels": self.base_channels,
                "upsampling": self.upsampling, "n_res": self.n_res, "disentangle": self.disentangle}

    def forward(self, images: torch.Tensor, labels: torch.Tensor) -> GeneratorOutput:
        """``labels`` is (N, k): expression one-hot followed by lighting one-hot."""
        if labels.shape[-1] != self.spec.k:
            raise DimensionError(f"labels need {self.spec.k} entries, got {labels.shape[-1]}")
        h, w = images.shape[-2:]
        planes = tile_labels(labels.to(images.dtype), h, w)
        ne = self.spec.num_expressions
        if not self.disentangle:
            return GeneratorOutput(self.hg_joint(torch.cat([images, planes], 1)))
        mask_e = self.hg_expression(torch.cat([images, planes[:, :ne]], 1))
        mask_l = self.hg_lighting(torch.cat([images, planes[:, ne:]], 1))
        out = self.hg_synthesis(torch.cat([mask_e, mask_l], 1))
        return GeneratorOutput(out, mask_e, mask_l)


def forward_generator(image: np.ndarray, target: ConditionMaps, generator: Generator) -> dict:
    """Translate one (H, W, 3) image; returns numpy arrays keyed output/mask_e/mask_l."""
    check_image(image)
    if target.expression_maps.shape[:2] != image.shape[:2]:
        raise DimensionError("condition maps and image differ in size")
    labels = torch.from_numpy(target.concatenated()[0, 0][None].astype(np.float32))
    with torch.no_grad():
        out = generator(to_tensor(image), labels)
    result = {"output": from_tensor(out.output)[0]}
    if out.mask_e is not None:
        result["mask_e"] = from_tensor(out.mask_e)[0]
        result["mask_l"] = from_tensor(out.mask_l)[0]
    return result


# --------------------------------------------------------------------------
# discriminator


class Discriminator(nn.Module):
    """Patch critic with a realness head and a k-channel attribute head."""

    def __init__(self, input_size: int = 128, k: int = 26, base_channels: int = 64):
        super().__init__()
        if not _is_power_of_two(input_size) or input_size < 64:
            raise ConfigurationError(f"discriminator input must be a power of two >= 64, got {input_size}")
        self.input_size = input_size
        self.k = k
        self.base_channels = base_channels
        chans = [3] + [base_channels * 2 ** i for i in range(6)]
        self.convs = nn.ModuleList(nn.Conv2d(chans[i], chans[i + 1], 4, 2, 1) for i in range(6))
        self.src = nn.Conv2d(chans[-1], 1, 3, 1, 1)
        self.cls = nn.Conv2d(chans[-1], k, 1, 1, 0)
        init_weights(self)

    def descriptor(self) -> dict:
        return {"kind": "discriminator", "input_size": self.input_size, "k": self.k,
                "base_channels": self.base_channels}

    def layer_specs(self) -> list:
        specs = [LayerSpec(f"conv{i}", "strided-conv", c.out_channels, 4, 2, 1, "leaky-relu")
                 for i, c in enumerate(self.convs)]
        return specs + [LayerSpec("conv6", "conv", 1, 3, 1, 1),
                        LayerSpec("conv7", "conv", self.k, 1, 1, 1)]

    def forward(self, x: torch.Tensor):
        """Returns (realness map (N, 1, h, w), attribute map (N, k, h, w))."""
        if x.shape[1] != 3 or x.shape[-1] != self.input_size or x.shape[-2] != self.input_size:
            raise DimensionError(
                f"discriminator expects (N, 3, {self.input_size}, {self.input_size}), got {tuple(x.shape)}")
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
        return self.src(x), self.cls(x)

    def critic(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward(x)[0]


def build_discriminator(input_size: int = 128, k: int = 26, base_channels: int = 64) -> Discriminator:
    return Discriminator(input_size, k, base_channels)


def class_logits(cls_map: torch.Tensor) -> torch.Tensor:
    return cls_map.mean(dim=(2, 3))


def forward_discriminator(images: torch.Tensor, discriminator: Discriminator):
    src, cls = discriminator(images)
    return src, class_logits(cls)


# --------------------------------------------------------------------------
# identity embedder


class IdentityEncoder(nn.Module):
    """Small 4-conv encoder; ``embed`` is the frozen identity feature map."""

    def __init__(self, input_size: int = 64, width: int = 16, embed_dim: int = 64, num_subjects: int = 0):
        super().__init__()
        self.input_size = input_size
        self.width = width
        self.embed_dim = embed_dim
        self.num_subjects = num_subjects
        chans = [3, width, 2 * width, 4 * width, 8 * width]
        self.convs = nn.ModuleList(nn.Conv2d(chans[i], chans[i + 1], 4, 2, 1) for i in range(4))
        self.proj = nn.Linear(8 * width, embed_dim)
        self.head = nn.Linear(embed_dim, num_subjects) if num_subjects else None
        init_weights(self)

    def descriptor(self) -> dict:
        return {"kind": "identity", "input_size": self.input_size, "width": self.width,
                "embed_dim": self.embed_dim, "num_subjects": self.num_subjects}

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
        return self.proj(x.mean(dim=(2, 3)))

    def forward(self, x):
        e = self.embed(x)
        return self.head(F.relu(e)) if self.head is not None else e


def build_network(descriptor: dict) -> nn.Module:
    d = dict(descriptor)
    kind = d.pop("kind")
    if kind == "quality":
        return QualityNet(**d)
    if kind == "discriminator":
        return Discriminator(**d)
    if kind == "generator":
        d["spec"] = AttributeSpec.from_dict(d["spec"])
        return Generator(**d)
    if kind == "identity":
        return IdentityEncoder(**d)
    raise ConfigurationError(f"unknown network kind {kind!r}")


def parameter_census(module: nn.Module) -> dict:
    """Parameter name -> shape for every weight tensor."""
    return {name: tuple(p.shape) for name, p in module.named_parameters()}


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
