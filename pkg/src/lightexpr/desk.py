"""Desk-scale end-to-end experiment on the procedural toy corpus.

Trains the identity embedder and quality net on toy data, then the
translation model, and scores it on held-out faces.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .core import mask_from_landmarks
from .identity import FrozenEmbedder, train_identity_embedder
from .quality import QualityTrainConfig, predict_quality, train_quality_model
from .toy import TOY_SPEC, make_ratings_corpus, make_toy_corpus
from .train import TrainConfig, TrainData, attribute_accuracy, init_state, sample_targets, train_arrays, translate

log = logging.getLogger(__name__)

DEGRADATIONS = ("blur", "noise", "texture", "flat")


@dataclass
class DeskConfig:
    n_train: int = 500
    n_heldout: int = 200
    size: int = 64
    n_subjects: int = 20
    seed: int = 0
    max_g_steps: int = 1500
    g_channels: int = 8
    d_channels: int = 8
    n_res: int = 6
    q_channels: int = 16
    q_ratings: int = 600
    q_epochs: int = 30
    id_epochs: int = 15
    train: dict = field(default_factory=dict)  # TrainConfig overrides


@dataclass
class DeskResult:
    d_accuracy: dict
    recon_l1: float
    quality_trained: float
    quality_untrained: float
    g_steps: int
    seconds: float
    log: list

    @property
    def quality_gain(self) -> float:
        return self.quality_trained - self.quality_untrained

    def to_json(self) -> dict:
        return {"d_accuracy": self.d_accuracy, "recon_l1": self.recon_l1,
                "quality_trained": self.quality_trained, "quality_untrained": self.quality_untrained,
                "quality_gain": self.quality_gain, "g_steps": self.g_steps, "seconds": self.seconds}


def face_masks(landmarks, size: int) -> np.ndarray:
    return np.stack([mask_from_landmarks(lm, size, size) for lm in landmarks])


def train_toy_quality(base, config: DeskConfig, kinds=DEGRADATIONS):
    rated = make_ratings_corpus(base, config.q_ratings, kinds=kinds, seed=config.seed + 100)
    masks = face_masks([r.landmarks for r in rated.records], config.size)
    images = np.where(masks[..., None], rated.images, -1.0).astype(np.float32)
    qcfg = QualityTrainConfig(image_size=config.size, base_channels=config.q_channels, fc_width=64,
                              epochs=config.q_epochs, patience=8, seed=config.seed)
    return train_quality_model(rated.records, qcfg, images=images)


def _mean_quality(q_net, images, masks) -> float:
    return float(np.mean([p.score for p in predict_quality(images, q_net, masks=masks)]))


def run_desk_experiment(config: DeskConfig, q_net=None, embedder=None) -> DeskResult:
    started = time.monotonic()
    torch.set_num_threads(1)
    corpus = make_toy_corpus(config.n_train, config.size, config.n_subjects, seed=config.seed)
    held = make_toy_corpus(config.n_heldout, config.size, config.n_subjects, seed=config.seed + 10_000)
    train_masks = face_masks(corpus.landmarks, config.size)
    held_masks = face_masks(held.landmarks, config.size)

    if embedder is None:
        enc = train_identity_embedder(corpus.images, corpus.subjects.tolist(), epochs=config.id_epochs,
                                      seed=config.seed)
        embedder = FrozenEmbedder(enc)
    if q_net is None:
        q_net = train_toy_quality(corpus, config).net

    tcfg = TrainConfig(spec=TOY_SPEC, image_size=config.size, g_channels=config.g_channels,
                       d_channels=config.d_channels, n_res=config.n_res, seed=config.seed,
                       epochs=10_000, max_g_steps=config.max_g_steps)
    if config.train:
        tcfg = replace(tcfg, **config.train)
    data = TrainData(corpus.images, corpus.expressions, corpus.lightings, train_masks,
                     corpus.subjects.tolist())

    rng = np.random.default_rng(config.seed + 20_000)
    te, tl = sample_targets(len(held), TOY_SPEC, rng)
    untrained = init_state(tcfg, q_net, embedder).generator
    fake0 = translate(untrained, held.images, te, tl, TOY_SPEC)["output"]
    q0 = _mean_quality(q_net, fake0, held_masks)

    result = train_arrays(data, tcfg, q_net, embedder)
    gen, disc = result.state.generator, result.state.discriminator
    acc = attribute_accuracy(disc, held.images, held.expressions, held.lightings, TOY_SPEC)
    fake = translate(gen, held.images, te, tl, TOY_SPEC)["output"]
    recon = translate(gen, fake, held.expressions, held.lightings, TOY_SPEC)["output"]
    recon_l1 = float(np.abs(recon - held.images).mean())
    q1 = _mean_quality(q_net, fake, held_masks)
    return DeskResult(acc, recon_l1, q1, q0, result.state.iteration, time.monotonic() - started, result.log)
