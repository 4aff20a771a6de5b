"""Training objectives for the translation model.

All image arguments are channels-first torch tensors (N, C, H, W).

Sign convention: the critic maximises ``critic_gap - lambda_gp * penalty``
(it minimises the negation); the generator maximises the critic's mean
score on its outputs, so its adversarial term is ``-mean D_src(fake)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import torch
import torch.nn.functional as F

from .core import AttributeSpec
from .errors import (
    BoundsError,
    ConfigurationError,
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    ValidationError,
)

ABLATION_FLAGS = (
    "disable_disentangling",
    "disable_adv",
    "disable_cls",
    "disable_rec",
    "disable_qual",
    "disable_id",
)

# flag -> LossWeights field it zeroes
_ABLATED_WEIGHT = {
    "disable_adv": "lambda_adv",
    "disable_cls": "lambda_cls",
    "disable_rec": "lambda_rec",
    "disable_qual": "lambda_qual",
    "disable_id": "lambda_id",
}


@dataclass(frozen=True)
class LossWeights:
    lambda_gp: float = 10.0
    lambda_cls: float = 20.0
    lambda_rec: float = 10.0
    lambda_id: float = 10.0
    lambda_qual: float = 0.5
    lambda_tv: float = 1e-7
    q_target: float = 8.0
    # unit weight of the adversarial term; only ablation sets it to 0
    lambda_adv: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        if not 5.0 <= self.q_target <= 10.0:
            raise ValidationError(f"q_target must lie in [5, 10], got {self.q_target}")

    def ablated(self, flags) -> "LossWeights":
        changes = {}
        for flag in flags:
            if flag not in ABLATION_FLAGS:
                raise ValidationError(f"unknown ablation flag {flag!r}; valid: {', '.join(ABLATION_FLAGS)}")
            if flag in _ABLATED_WEIGHT:
                changes[_ABLATED_WEIGHT[flag]] = 0.0
        return replace(self, **changes)


def _check_finite(value: torch.Tensor, term: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise DivergenceError(f"non-finite {term} loss", term=term)
    return value


# --------------------------------------------------------------------------
# adversarial


def gradient_penalty(critic: Callable, real: torch.Tensor, fake: torch.Tensor,
                     eps: Optional[torch.Tensor] = None, generator: Optional[torch.Generator] = None,
                     create_graph: bool = True) -> torch.Tensor:
    """Mean of (||grad critic(x_hat)||_2 - 1)^2 over x_hat = eps*real + (1-eps)*fake.

    Patch outputs are summed per sample before differentiating. ``eps`` is
    drawn uniformly per sample when not given.
    """
    if real.shape != fake.shape:
        raise DimensionError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} batches differ")
    n = real.shape[0]
    if eps is None:
        eps = torch.rand(n, generator=generator, dtype=real.dtype)
    eps = eps.reshape(n, *([1] * (real.dim() - 1))).to(real.dtype)
    x_hat = (eps * real.detach() + (1 - eps) * fake.detach()).requires_grad_(True)
    out = critic(x_hat)
    grad, = torch.autograd.grad(out.reshape(n, -1).sum(), x_hat, create_graph=create_graph)
    norms = grad.reshape(n, -1).norm(2, dim=1)
    return _check_finite(((norms - 1) ** 2).mean(), "gradient_penalty")


def adversarial_terms(real: torch.Tensor, fake: torch.Tensor, critic: Callable,
                      eps: Optional[torch.Tensor] = None,
                      generator: Optional[torch.Generator] = None):
    """(critic_gap, gradient_penalty) for one critic update."""
    if real.shape[0] != fake.shape[0]:
        raise DimensionError("real and fake batches must be the same size")
    gap = critic(real).mean() - critic(fake.detach()).mean()
    gp = gradient_penalty(critic, real, fake, eps=eps, generator=generator)
    return _check_finite(gap, "critic_gap"), gp


def generator_adversarial(fake_scores: torch.Tensor) -> torch.Tensor:
    return -fake_scores.mean()


# --------------------------------------------------------------------------
# classification


def classification_loss(logits: torch.Tensor, expression_ids, lighting_ids,
                        spec: AttributeSpec) -> torch.Tensor:
    """Expression cross-entropy plus lighting cross-entropy, batch mean."""
    if logits.dim() == 1:
        logits = logits[None]
    if logits.shape[-1] != spec.k:
        raise DimensionError(f"expected {spec.k} logits, got {logits.shape[-1]}")
    e = torch.as_tensor(expression_ids, dtype=torch.long).reshape(-1)
    l = torch.as_tensor(lighting_ids, dtype=torch.long).reshape(-1)
    if ((e < 0) | (e >= spec.num_expressions)).any() or ((l < 0) | (l >= spec.num_lightings)).any():
        raise BoundsError("classification label out of range")
    ne = spec.num_expressions
    return (F.cross_entropy(logits[:, :ne], e, reduction="mean")
            + F.cross_entropy(logits[:, ne:], l, reduction="mean"))


def split_predictions(logits: torch.Tensor, spec: AttributeSpec):
    ne = spec.num_expressions
    return logits[:, :ne].argmax(1), logits[:, ne:].argmax(1)


# --------------------------------------------------------------------------
# identity / reconstruction / tv


def cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """1 - cosine similarity per row, averaged over the batch."""
    if a.dim() == 1:
        a, b = a[None], b[None]
    na, nb = a.norm(dim=1), b.norm(dim=1)
    if (na <= 1e-12).any() or (nb <= 1e-12).any():
        raise DegenerateInputError("zero-norm identity embedding")
    return (1 - (a * b).sum(1) / (na * nb)).mean()


def identity_loss(inputs: torch.Tensor, outputs: torch.Tensor, embedder: Callable) -> torch.Tensor:
    return cosine_distance(embedder(inputs), embedder(outputs))


def reconstruction_loss(original: torch.Tensor, reconstructed: torch.Tensor) -> torch.Tensor:
    if original.shape != reconstructed.shape:
        raise DimensionError(f"shape mismatch {tuple(original.shape)} vs {tuple(reconstructed.shape)}")
    return (original - reconstructed).abs().mean()


def tv_loss(images: torch.Tensor) -> torch.Tensor:
    """Squared adjacent-pixel differences summed per image, averaged over the batch."""
    if images.dim() == 3:
        images = images[None]
    if images.shape[-1] < 2 or images.shape[-2] < 2:
        raise DimensionError("total variation needs H, W >= 2")
    dh = (images[..., 1:, :] - images[..., :-1, :]) ** 2
    dw = (images[..., :, 1:] - images[..., :, :-1]) ** 2
    return (dh.flatten(1).sum(1) + dw.flatten(1).sum(1)).mean()


# --------------------------------------------------------------------------
# perceptual quality


def freeze(module):
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def quality_loss(output_masked: torch.Tensor, input_masked: torch.Tensor, recon_masked: torch.Tensor,
                 q_net, q_target: float = 8.0) -> torch.Tensor:
    """|q - Q(out')| + |Q(in') - Q(rec')|, each batch-averaged; Q stays frozen."""
    if q_net is None:
        raise ConfigurationError("quality loss needs a pre-trained quality network")
    if any(p.requires_grad for p in q_net.parameters()):
        raise ConfigurationError("quality network must be frozen before use in a loss")
    with torch.no_grad():
        q_in = q_net(input_masked)
    first = (q_target - q_net(output_masked)).abs().mean()
    second = (q_in - q_net(recon_masked)).abs().mean()
    return first + second


def mask_batch(images: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Set pixels outside (N, H, W) boolean masks to -1."""
    if masks.shape[-2:] != images.shape[-2:]:
        raise DimensionError("mask and image sizes differ")
    keep = masks.to(torch.bool)[:, None]
    return torch.where(keep, images, torch.full_like(images, -1.0))


# --------------------------------------------------------------------------
# composition

G_TERMS = ("adv", "cls", "rec", "id", "qual", "tv")


@dataclass
class LossReport:
    adv: float = 0.0
    cls: float = 0.0
    rec: float = 0.0
    id: float = 0.0
    qual: float = 0.0
    tv: float = 0.0
    total: float = 0.0
    contributions: dict = field(default_factory=dict)
    directions: dict = field(default_factory=lambda: {t: "G" for t in G_TERMS})

    def to_json(self) -> dict:
        return {
            "adv": self.adv, "cls": self.cls, "rec": self.rec, "id": self.id, "qual": self.qual,
            "tv": self.tv, "total": self.total, "contributions": dict(self.contributions),
            "directions": dict(self.directions),
        }


def _weight_for(term: str, weights: LossWeights) -> float:
    return {"adv": weights.lambda_adv, "cls": weights.lambda_cls, "rec": weights.lambda_rec,
            "id": weights.lambda_id, "qual": weights.lambda_qual, "tv": weights.lambda_tv}[term]


def weighted_generator_total(components: dict, weights: LossWeights):
    """Differentiable G objective; ``components`` maps term -> tensor (missing = 0)."""
    total = None
    for term in G_TERMS:
        value = components.get(term)
        if value is None:
            continue
        w = _weight_for(term, weights)
        if w == 0.0:
            continue
        _check_finite(value.detach(), term)
        contrib = w * value
        total = contrib if total is None else total + contrib
    if total is None:
        total = torch.zeros(())
    return total


def total_loss(components: dict, weights: LossWeights) -> LossReport:
    """Weighted G-side sum; components may be floats or scalar tensors."""
    values = {}
    for term in G_TERMS:
        v = components.get(term, 0.0)
        v = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if not math.isfinite(v):
            raise DivergenceError(f"non-finite {term} loss", term=term)
        values[term] = v
    contributions = {t: _weight_for(t, weights) * values[t] for t in G_TERMS}
    total = 0.0
    for t in G_TERMS:
        total += contributions[t]
    return LossReport(total=total, contributions=contributions, **values)


def discriminator_total(critic_gap, penalty, cls_real, weights: LossWeights):
    """-(critic_gap) + lambda_gp * penalty + lambda_cls * cls_real, scaled by the ablation weights."""
    adv = weights.lambda_adv * (-critic_gap + weights.lambda_gp * penalty)
    return adv + weights.lambda_cls * cls_real
