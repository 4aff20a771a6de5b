"""Training engine for the translation model.

One cycle = ``n_critic`` critic updates on a batch followed by a single
generator update. Quality and identity networks stay frozen throughout.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .checkpoint import NetworkCheckpoint, config_hash, parameter_digest
from .core import (
    AttributeSpec,
    DatasetManifest,
    load_manifest_images,
    mirror,
    remap_lighting,
)
from .errors import ConfigurationError, DivergenceError, ValidationError
from .losses import (
    ABLATION_FLAGS,
    LossWeights,
    classification_loss,
    cosine_distance,
    discriminator_total,
    freeze,
    generator_adversarial,
    gradient_penalty,
    mask_batch,
    quality_loss,
    reconstruction_loss,
    total_loss,
    tv_loss,
    weighted_generator_total,
)
from .nets import Discriminator, Generator, UPSAMPLING_MODES, class_logits

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# augmentation hooks


def identity_hook(image, rng):
    return image


def color_jitter(image, rng):
    gain = rng.uniform(0.8, 1.2, size=3)
    bias = rng.uniform(-0.1, 0.1, size=3)
    return np.clip(image * gain + bias, -1.0, 1.0).astype(np.float32)


def grayscale(image, rng):
    gray = image @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    return np.repeat(gray[..., None], 3, axis=-1).astype(np.float32)


HOOKS = {"identity": identity_hook, "color_jitter": color_jitter, "grayscale": grayscale}


def register_hook(name: str, fn: Callable) -> None:
    """Make a custom ``(image, rng) -> image`` transform addressable by name."""
    HOOKS[name] = fn


# --------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 10
    epochs: int = 100
    n_critic: int = 5
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    spec: AttributeSpec = field(default_factory=AttributeSpec)
    upsampling: str = "pixel-shuffle"
    image_size: int = 128
    g_channels: int = 64
    d_channels: int = 64
    n_res: int = 6
    disable_disentangling: bool = False
    disable_adv: bool = False
    disable_cls: bool = False
    disable_rec: bool = False
    disable_qual: bool = False
    disable_id: bool = False
    augmentations: tuple = ()  # ((hook name, probability), ...)
    mirror: bool = False
    lighting_mirror_map: Optional[dict] = None
    max_g_steps: Optional[int] = None
    deterministic: bool = True

    def __post_init__(self):
        if self.n_critic < 1:
            raise ValidationError("n_critic must be >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be >= 1")
        if self.upsampling not in UPSAMPLING_MODES:
            raise ValidationError(f"unknown upsampling {self.upsampling!r}; expected one of {UPSAMPLING_MODES}")
        if self.image_size < 64 or self.image_size & (self.image_size - 1):
            raise ValidationError("image_size must be a power of two >= 64")
        for name, p in self.augmentations:
            if name not in HOOKS:
                raise ValidationError(f"unknown augmentation hook {name!r}")
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"augmentation probability {p} outside [0, 1]")
        if self.mirror and self.lighting_mirror_map is None:
            raise ValidationError("mirroring changes directional lighting labels; supply lighting_mirror_map")

    @property
    def ablations(self) -> tuple:
        return tuple(f for f in ABLATION_FLAGS if getattr(self, f))

    @property
    def effective_weights(self) -> LossWeights:
        return self.weights.ablated(f for f in self.ablations if f != "disable_disentangling")

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "weights":
                v = asdict(v)
            elif f.name == "spec":
                v = v.to_dict()
            elif f.name == "augmentations":
                v = [[n, p] for n, p in v]
            elif f.name == "lighting_mirror_map" and v is not None:
                v = {str(k): int(x) for k, x in v.items()}
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = dict(d)
        if "weights" in kw:
            kw["weights"] = LossWeights(**kw["weights"])
        if "spec" in kw:
            kw["spec"] = AttributeSpec.from_dict(kw["spec"])
        if "augmentations" in kw:
            kw["augmentations"] = tuple((str(n), float(p)) for n, p in kw["augmentations"])
        if kw.get("lighting_mirror_map") is not None:
            kw["lighting_mirror_map"] = {int(k): int(v) for k, v in kw["lighting_mirror_map"].items()}
        return cls(**kw)

    def hash(self) -> str:
        return config_hash(self.to_dict())


def register_augmentation(config: TrainConfig, hook, probability: float) -> TrainConfig:
    """Return a config with ``hook`` (a name or a callable) applied at load time with ``probability``."""
    if callable(hook):
        name = getattr(hook, "__name__", f"hook{len(HOOKS)}")
        register_hook(name, hook)
        hook = name
    return replace(config, augmentations=tuple(config.augmentations) + ((hook, float(probability)),))


def disable_disentangling(config: TrainConfig) -> TrainConfig:
    return replace(config, disable_disentangling=True)


def with_ablations(config: TrainConfig, flags) -> TrainConfig:
    changes = {}
    for flag in flags:
        if flag not in ABLATION_FLAGS:
            raise ValidationError(f"unknown ablation flag {flag!r}; valid: {', '.join(ABLATION_FLAGS)}")
        changes[flag] = True
    return replace(config, **changes)


def config_schema() -> dict:
    """JSON schema for the training config file."""
    num = {"type": "number", "minimum": 0}
    weights = {"type": "object", "additionalProperties": False,
               "properties": {f.name: num for f in fields(LossWeights)}}
    weights["properties"]["q_target"] = {"type": "number", "minimum": 5, "maximum": 10}
    spec = {"type": "object", "required": ["num_expressions", "num_lightings"],
            "properties": {"num_expressions": {"type": "integer", "minimum": 2},
                           "num_lightings": {"type": "integer", "minimum": 2},
                           "expression_names": {"type": ["array", "null"], "items": {"type": "string"}},
                           "lighting_names": {"type": ["array", "null"], "items": {"type": "string"}}}}
    props = {
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "beta1": {"type": "number", "minimum": 0, "maximum": 1},
        "beta2": {"type": "number", "minimum": 0, "maximum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 1},
        "n_critic": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "weights": weights,
        "spec": spec,
        "upsampling": {"enum": list(UPSAMPLING_MODES)},
        "image_size": {"type": "integer", "minimum": 64},
        "g_channels": {"type": "integer", "minimum": 4},
        "d_channels": {"type": "integer", "minimum": 1},
        "n_res": {"type": "integer", "minimum": 0},
        "augmentations": {"type": "array", "items": {
            "type": "array", "prefixItems": [{"type": "string"}, {"type": "number", "minimum": 0, "maximum": 1}],
            "minItems": 2, "maxItems": 2}},
        "mirror": {"type": "boolean"},
        "lighting_mirror_map": {"type": ["object", "null"], "additionalProperties": {"type": "integer"}},
        "max_g_steps": {"type": ["integer", "null"], "minimum": 1},
        "deterministic": {"type": "boolean"},
    }
    for flag in ABLATION_FLAGS:
        props[flag] = {"type": "boolean"}
    return {"$schema": "https://json-schema.org/draft/2020-12/schema", "title": "TrainConfig",
            "type": "object", "additionalProperties": False, "properties": props}


# --------------------------------------------------------------------------
# data


@dataclass
class TrainData:
    images: np.ndarray  # (N, H, W, 3)
    expressions: np.ndarray
    lightings: np.ndarray
    masks: np.ndarray  # (N, H, W) bool
    subjects: Optional[list] = None

    def __len__(self):
        return len(self.images)

    def subset(self, idx) -> "TrainData":
        idx = np.asarray(idx)
        subj = [self.subjects[i] for i in idx] if self.subjects is not None else None
        return TrainData(self.images[idx], self.expressions[idx], self.lightings[idx], self.masks[idx], subj)


def load_train_data(manifest: DatasetManifest, config: TrainConfig) -> TrainData:
    """Validate labels and load images at ``config.image_size`` with their face masks."""
    for i, r in enumerate(manifest):
        config.spec.check(r.expression, r.lighting, where=f"record {i} ({r.image})")
    images, masks = load_manifest_images(manifest, config.image_size)
    return TrainData(images,
                     np.array([r.expression for r in manifest], dtype=np.int64),
                     np.array([r.lighting for r in manifest], dtype=np.int64),
                     masks, [r.subject for r in manifest])


def augment_batch(images, lightings, masks, config: TrainConfig, rng: np.random.Generator):
    """Photometric hooks per image; optional mirroring with lighting remap."""
    out = images.copy()
    light = lightings.copy()
    msk = masks.copy()
    for i in range(len(out)):
        for name, p in config.augmentations:
            if p > 0 and rng.random() < p:
                out[i] = HOOKS[name](out[i], rng)
        if config.mirror and rng.random() < 0.5:
            out[i] = mirror(out[i])
            msk[i] = msk[i][:, ::-1]
            light[i] = remap_lighting(int(light[i]), config.lighting_mirror_map)
    return out, light, msk


# --------------------------------------------------------------------------
# state


@dataclass
class TrainState:
    generator: Generator
    discriminator: Discriminator
    g_opt: torch.optim.Optimizer
    d_opt: torch.optim.Optimizer
    q_net: Optional[torch.nn.Module]
    embedder: Optional[torch.nn.Module]
    np_rng: np.random.Generator
    torch_rng: torch.Generator
    iteration: int = 0
    d_steps: int = 0
    epoch: int = 0
    history: list = field(default_factory=list)
    frozen_digests: dict = field(default_factory=dict)


def _set_determinism(config: TrainConfig) -> None:
    if config.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True, warn_only=True)


def init_state(config: TrainConfig, q_net=None, embedder=None) -> TrainState:
    _set_determinism(config)
    torch.manual_seed(config.seed)
    gen = Generator(config.spec, config.g_channels, config.upsampling, config.n_res,
                    disentangle=not config.disable_disentangling)
    disc = Discriminator(config.image_size, config.spec.k, config.d_channels)
    betas = (config.beta1, config.beta2)
    g_opt = torch.optim.Adam(gen.parameters(), lr=config.lr, betas=betas)
    d_opt = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=betas)
    weights = config.effective_weights
    if weights.lambda_qual > 0 and q_net is None:
        raise ConfigurationError("quality loss enabled but no pre-trained quality network given")
    if weights.lambda_id > 0 and embedder is None:
        raise ConfigurationError("identity loss enabled but no identity embedder given")
    digests = {}
    if q_net is not None:
        freeze(q_net)
        digests["q"] = parameter_digest(q_net)
    if embedder is not None:
        freeze(embedder)
        digests["t"] = parameter_digest(embedder)
    trng = torch.Generator().manual_seed(config.seed)
    return TrainState(gen, disc, g_opt, d_opt, q_net, embedder, np.random.default_rng(config.seed), trng,
                      frozen_digests=digests)


def sample_targets(n: int, spec: AttributeSpec, rng: np.random.Generator):
    """Uniform over all (expression, lighting) pairs."""
    pairs = rng.integers(0, spec.num_pairs, size=n)
    return pairs // spec.num_lightings, pairs % spec.num_lightings


def _labels(expr, light, spec: AttributeSpec) -> torch.Tensor:
    out = torch.zeros(len(expr), spec.k)
    out[torch.arange(len(expr)), torch.as_tensor(expr)] = 1.0
    out[torch.arange(len(light)), spec.num_expressions + torch.as_tensor(light)] = 1.0
    return out


def _requires_grad(module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def critic_step(state: TrainState, real, fake, expr_a, light_a, config: TrainConfig) -> dict:
    w = config.effective_weights
    disc = state.discriminator
    src_real, cls_map = disc(real)
    src_fake, _ = disc(fake)
    gap = src_real.mean() - src_fake.mean()
    gp = gradient_penalty(disc.critic, real, fake, generator=state.torch_rng)
    cls_real = classification_loss(class_logits(cls_map), expr_a, light_a, config.spec)
    for name, v in (("critic_gap", gap), ("gradient_penalty", gp), ("cls_real", cls_real)):
        if not torch.isfinite(v):
            raise DivergenceError(f"non-finite {name} in critic update", term=name)
    total = discriminator_total(gap, gp, cls_real, w)
    state.d_opt.zero_grad()
    total.backward()
    state.d_opt.step()
    state.d_steps += 1
    return {"critic_gap": gap.item(), "gradient_penalty": gp.item(), "cls_real": cls_real.item(),
            "total": total.item()}


def generator_terms(generator, discriminator, q_net, embedder, real, masks, expr_a, light_a, expr_b, light_b,
                    config: TrainConfig) -> dict:
    """All G-side loss terms as tensors for one batch, plus the fake batch under ``_fake``."""
    spec = config.spec
    fake = generator(real, _labels(expr_b, light_b, spec)).output
    # cycle image: second pass through the same generator with the source labels
    recon = generator(fake, _labels(expr_a, light_a, spec)).output
    src_fake, cls_map = discriminator(fake)
    terms = {
        "adv": generator_adversarial(src_fake),
        "cls": classification_loss(class_logits(cls_map), expr_b, light_b, spec),
        "rec": reconstruction_loss(real, recon),
        "tv": tv_loss(fake) + tv_loss(recon),
        "id": cosine_distance(embedder(real), embedder(fake)) if embedder is not None else torch.zeros(()),
    }
    if q_net is not None:
        m = torch.as_tensor(np.asarray(masks))
        terms["qual"] = quality_loss(mask_batch(fake, m), mask_batch(real, m), mask_batch(recon, m),
                                     q_net, config.effective_weights.q_target)
    else:
        terms["qual"] = torch.zeros(())
    terms["_fake"] = fake
    return terms


def fixed_batch_report(generator, discriminator, q_net, embedder, images, expr_a, light_a, masks, targets,
                       config: TrainConfig):
    """LossReport of the current networks on one batch with given targets, no updates."""
    real = torch.as_tensor(np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2)))
    generator.eval()
    discriminator.eval()
    with torch.no_grad():
        terms = generator_terms(generator, discriminator, q_net, embedder, real, masks, np.asarray(expr_a),
                                np.asarray(light_a), *(np.asarray(t) for t in targets), config)
    terms.pop("_fake")
    return total_loss(terms, config.effective_weights)


def training_cycle(state: TrainState, images, expr_a, light_a, masks, config: TrainConfig,
                   targets=None) -> dict:
    """n_critic critic updates then one generator update on a single batch."""
    spec = config.spec
    real = torch.as_tensor(np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2)))
    expr_a = np.asarray(expr_a)
    light_a = np.asarray(light_a)
    if targets is None:
        expr_b, light_b = sample_targets(len(real), spec, state.np_rng)
    else:
        expr_b, light_b = (np.asarray(t) for t in targets)
    gen, disc = state.generator, state.discriminator
    gen.train()
    disc.train()

    d_reports = []
    if not config.disable_adv:
        with torch.no_grad():
            fake = gen(real, _labels(expr_b, light_b, spec)).output
        _requires_grad(disc, True)
        for _ in range(config.n_critic):
            d_reports.append(critic_step(state, real, fake, expr_a, light_a, config))

    _requires_grad(disc, False)
    terms = generator_terms(gen, disc, state.q_net, state.embedder, real, masks, expr_a, light_a, expr_b,
                            light_b, config)
    terms.pop("_fake")
    w = config.effective_weights
    objective = weighted_generator_total(terms, w)
    report = total_loss(terms, w)
    state.g_opt.zero_grad()
    objective.backward()
    state.g_opt.step()
    _requires_grad(disc, True)
    state.iteration += 1
    entry = {"iteration": state.iteration, "epoch": state.epoch, "d_steps": state.d_steps,
             "g": report.to_json(), "d": d_reports[-1] if d_reports else None}
    state.history.append(entry)
    return entry


def check_frozen(state: TrainState) -> None:
    if state.q_net is not None and parameter_digest(state.q_net) != state.frozen_digests.get("q"):
        raise RuntimeError("quality network parameters changed during training")
    if state.embedder is not None and parameter_digest(state.embedder) != state.frozen_digests.get("t"):
        raise RuntimeError("identity network parameters changed during training")


# --------------------------------------------------------------------------
# checkpoints


def _rng_meta(state: TrainState) -> dict:
    return {"np_rng": state.np_rng.bit_generator.state,
            "torch_rng": state.torch_rng.get_state().tolist()}


def save_state(state: TrainState, config: TrainConfig, out_dir) -> tuple:
    out_dir = Path(out_dir)
    meta = {"epoch": state.epoch, "iteration": state.iteration, "d_steps": state.d_steps,
            "config": config.to_dict(), **_rng_meta(state)}
    chash = config.hash()
    g = NetworkCheckpoint.from_module(state.generator, state.g_opt, state.iteration, chash, meta)
    d = NetworkCheckpoint.from_module(state.discriminator, state.d_opt, state.d_steps, chash, meta)
    g.save(out_dir / "generator.ckpt")
    d.save(out_dir / "discriminator.ckpt")
    return g, d


def restore_state(state: TrainState, g_ckpt: NetworkCheckpoint, d_ckpt: NetworkCheckpoint) -> TrainState:
    for module, opt, ck in ((state.generator, state.g_opt, g_ckpt), (state.discriminator, state.d_opt, d_ckpt)):
        module.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in ck.params.items()})
        if ck.optimizer_state is not None:
            opt.load_state_dict(ck.optimizer_state)
    meta = g_ckpt.meta
    state.epoch = meta["epoch"]
    state.iteration = meta["iteration"]
    state.d_steps = meta["d_steps"]
    state.np_rng.bit_generator.state = meta["np_rng"]
    state.torch_rng.set_state(torch.tensor(meta["torch_rng"], dtype=torch.uint8))
    return state


# --------------------------------------------------------------------------
# driver


@dataclass
class TrainResult:
    g_ckpt: NetworkCheckpoint
    d_ckpt: NetworkCheckpoint
    log: list
    state: TrainState


def train_arrays(data: TrainData, config: TrainConfig, q_net=None, embedder=None, out_dir=None,
                 resume: Optional[tuple] = None, callback: Optional[Callable] = None) -> TrainResult:
    """Run ``epochs`` passes over in-memory data (stopping early at ``max_g_steps``)."""
    if len(data) == 0:
        raise ValidationError("no training images")
    if data.images.shape[1:3] != (config.image_size, config.image_size):
        raise ValidationError(f"images are {data.images.shape[1:3]}, config expects {config.image_size}px")
    for e, l in zip(data.expressions, data.lightings):
        config.spec.check(int(e), int(l))
    state = init_state(config, q_net, embedder)
    if resume is not None:
        restore_state(state, *resume)
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = open(out_dir / "log.jsonl", "a" if resume else "w") if out_dir is not None else None
    g_ckpt = d_ckpt = None
    last_good = None
    try:
        start_epoch = state.epoch
        for epoch in range(start_epoch, config.epochs):
            state.epoch = epoch
            order = np.random.default_rng([config.seed, epoch]).permutation(len(data))
            for s in range(0, len(order), config.batch_size):
                if config.max_g_steps is not None and state.iteration >= config.max_g_steps:
                    break
                idx = order[s:s + config.batch_size]
                imgs, light, masks = augment_batch(data.images[idx], data.lightings[idx], data.masks[idx],
                                                   config, state.np_rng)
                try:
                    entry = training_cycle(state, imgs, data.expressions[idx], light, masks, config)
                except DivergenceError as exc:
                    if out_dir is not None and last_good is not None:
                        last_good[0].save(out_dir / "generator.ckpt")
                        last_good[1].save(out_dir / "discriminator.ckpt")
                    raise DivergenceError(
                        f"{exc} (epoch {epoch}, iteration {state.iteration}); "
                        f"last good checkpoint from epoch {last_good[0].meta['epoch'] if last_good else 'none'}",
                        term=exc.term) from exc
                if log_fh is not None:
                    log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
                if callback is not None:
                    callback(state, entry)
            state.epoch = epoch + 1
            if out_dir is not None:
                g_ckpt, d_ckpt = save_state(state, config, out_dir)
                log_fh.flush()
            else:
                g_ckpt, d_ckpt = _snapshot(state, config)
            last_good = (g_ckpt, d_ckpt)
            if config.max_g_steps is not None and state.iteration >= config.max_g_steps:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
    check_frozen(state)
    if g_ckpt is None:
        g_ckpt, d_ckpt = _snapshot(state, config)
    return TrainResult(g_ckpt, d_ckpt, state.history, state)


def _snapshot(state, config):
    meta = {"epoch": state.epoch, "iteration": state.iteration, "d_steps": state.d_steps,
            "config": config.to_dict(), **_rng_meta(state)}
    return (NetworkCheckpoint.from_module(state.generator, state.g_opt, state.iteration, config.hash(), meta),
            NetworkCheckpoint.from_module(state.discriminator, state.d_opt, state.d_steps, config.hash(), meta))


def train(manifest: DatasetManifest, config: TrainConfig, q_net=None, embedder=None, out_dir=None,
          resume: Optional[tuple] = None) -> TrainResult:
    """Validate the manifest against the config, load it, then train."""
    data = load_train_data(manifest, config)
    started = time.monotonic()
    result = train_arrays(data, config, q_net, embedder, out_dir, resume)
    log.info("trained %d iterations in %.1fs", result.state.iteration, time.monotonic() - started)
    return result


def translate(generator: Generator, images, expressions, lightings, spec: AttributeSpec,
              batch_size: int = 32) -> dict:
    """Batch inference; returns numpy (N, H, W, 3) arrays for output and masks."""
    generator.eval()
    outs, mes, mls = [], [], []
    images = np.asarray(images, dtype=np.float32)
    with torch.no_grad():
        for s in range(0, len(images), batch_size):
            x = torch.as_tensor(np.ascontiguousarray(images[s:s + batch_size].transpose(0, 3, 1, 2)))
            o = generator(x, _labels(expressions[s:s + batch_size], lightings[s:s + batch_size], spec))
            outs.append(o.output.numpy().transpose(0, 2, 3, 1))
            if o.mask_e is not None:
                mes.append(o.mask_e.numpy().transpose(0, 2, 3, 1))
                mls.append(o.mask_l.numpy().transpose(0, 2, 3, 1))
    res = {"output": np.concatenate(outs)}
    if mes:
        res["mask_e"] = np.concatenate(mes)
        res["mask_l"] = np.concatenate(mls)
    return res


def attribute_accuracy(discriminator: Discriminator, images, expressions, lightings, spec: AttributeSpec,
                       batch_size: int = 50) -> dict:
    """Critic classification accuracy per group and jointly on real images."""
    discriminator.eval()
    pe, pl = [], []
    images = np.asarray(images, dtype=np.float32)
    with torch.no_grad():
        for s in range(0, len(images), batch_size):
            x = torch.as_tensor(np.ascontiguousarray(images[s:s + batch_size].transpose(0, 3, 1, 2)))
            logits = class_logits(discriminator(x)[1])
            pe.append(logits[:, :spec.num_expressions].argmax(1).numpy())
            pl.append(logits[:, spec.num_expressions:].argmax(1).numpy())
    pe, pl = np.concatenate(pe), np.concatenate(pl)
    ok_e, ok_l = pe == np.asarray(expressions), pl == np.asarray(lightings)
    return {"expression": float(ok_e.mean()), "lighting": float(ok_l.mean()), "joint": float((ok_e & ok_l).mean())}
