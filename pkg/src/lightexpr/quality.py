"""Perceptual quality estimator: rating-margin training, scoring, coarse filter."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .checkpoint import NetworkCheckpoint, config_hash
from .core import (
    MAX_RATING,
    NATURAL_THRESHOLD,
    RatingRecord,
    load_image,
    mask_from_landmarks,
    mirror,
    rating_bin,
    to_tensor,
)
from .errors import (
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    EmptyInputError,
    ValidationError,
)
from .nets import QualityNet, build_quality_net

log = logging.getLogger(__name__)


def _check_sigma(sigma):
    s = torch.as_tensor(sigma)
    if (s < 0).any():
        raise ValidationError("sigma must be non-negative")


def margin_loss(mu, sigma, prediction):
    """Mean over the batch of (sigma - (mu - p)^2)^2."""
    _check_sigma(sigma)
    mu, sigma, p = (torch.as_tensor(v, dtype=torch.float64) if not isinstance(v, torch.Tensor) else v
                    for v in (mu, sigma, prediction))
    return ((sigma - (mu - p) ** 2) ** 2).mean()


def hinge_loss(mu, sigma, prediction):
    """Mean over the batch of max(0, (mu - p)^2 - sigma)."""
    _check_sigma(sigma)
    mu, sigma, p = (torch.as_tensor(v, dtype=torch.float64) if not isinstance(v, torch.Tensor) else v
                    for v in (mu, sigma, prediction))
    return torch.clamp((mu - p) ** 2 - sigma, min=0).mean()


LOSSES = {"margin": margin_loss, "hinge": hinge_loss}


@dataclass(frozen=True)
class QualityPrediction:
    score: float

    @property
    def clamped_score(self) -> float:
        return min(MAX_RATING, max(0.0, self.score))


@dataclass
class QualityTrainConfig:
    image_size: int = 128
    base_channels: int = 64
    fc_width: int = 256
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 10
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    mirror: bool = True
    loss: str = "margin"
    max_seconds: Optional[float] = None

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown quality loss {self.loss!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be >= 1")


def split_indices(n: int, seed: int, fractions=(0.8, 0.1, 0.1)):
    """Seeded shuffle into train / val / test index lists."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return (sorted(order[:n_train].tolist()), sorted(order[n_train:n_train + n_val].tolist()),
            sorted(order[n_train + n_val:].tolist()))


def load_rated_image(record: RatingRecord, size: int) -> np.ndarray:
    """Load at ``size``; pixels outside the landmark hull become background when landmarks exist."""
    img = load_image(record.image, size)
    if record.landmarks:
        m = mask_from_landmarks(record.landmarks, size, size)
        img = np.where(m[..., None], img, -1.0).astype(np.float32)
    return img


@dataclass
class QualityTrainResult:
    net: QualityNet
    checkpoint: NetworkCheckpoint
    log: list
    split: tuple
    stopped_early: bool = False


def _evaluate_loss(net, images, mu, sigma, loss_fn, batch_size):
    if len(images) == 0:
        return float("nan")
    net.eval()
    total = 0.0
    with torch.no_grad():
        for s in range(0, len(images), batch_size):
            x = to_tensor(images[s:s + batch_size])
            p = net(x).double()
            total += float(loss_fn(torch.as_tensor(mu[s:s + batch_size]), torch.as_tensor(sigma[s:s + batch_size]),
                                   p)) * len(x)
    return total / len(images)


def train_quality_model(ratings: Sequence[RatingRecord], config: QualityTrainConfig,
                        images: Optional[np.ndarray] = None, out_dir=None) -> QualityTrainResult:
    """Fit Q to (mu, sigma) labels with the margin (or hinge) loss.

    ``images`` may supply the pixel data directly, aligned with ``ratings``;
    otherwise each record's image is loaded (and hull-masked when it carries
    landmarks). With ``out_dir`` the best checkpoint and ``metrics.jsonl`` are
    written there, and a divergence leaves the last good checkpoint behind.
    """
    if len(ratings) < 2:
        raise EmptyInputError(f"need at least 2 rated images, got {len(ratings)}")
    torch.manual_seed(config.seed)
    if images is None:
        images = np.stack([load_rated_image(r, config.image_size) for r in ratings])
    images = np.asarray(images, dtype=np.float32)
    if images.shape[0] != len(ratings) or images.shape[1:] != (config.image_size, config.image_size, 3):
        raise DimensionError(f"images {images.shape} do not match {len(ratings)} records at {config.image_size}px")
    mu = np.array([r.mu for r in ratings], dtype=np.float64)
    sigma = np.array([r.sigma for r in ratings], dtype=np.float64)

    train_idx, val_idx, test_idx = split_indices(len(ratings), config.seed)
    net = build_quality_net(config.image_size, config.base_channels, config.fc_width)
    # start the head at the mean training rating; from zero the quartic loss stalls early epochs
    with torch.no_grad():
        net.fc1.bias.fill_(float(mu[train_idx].mean()) if train_idx else 0.0)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    loss_fn = LOSSES[config.loss]
    chash = config_hash(asdict(config))
    rng = np.random.default_rng(config.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_fh = open(out_dir / "metrics.jsonl", "w") if out_dir is not None else None

    def snapshot(step):
        return NetworkCheckpoint.from_module(net, opt, step=step, config_hash=chash,
                                             meta={"trained": step > 0, "loss": config.loss})

    best = snapshot(0)
    best_val = math.inf
    bad_epochs = 0
    history = []
    step = 0
    started = time.monotonic()
    stopped_early = False
    val_images, val_mu, val_sigma = images[val_idx], mu[val_idx], sigma[val_idx]
    try:
        for epoch in range(config.epochs):
            net.train()
            order = rng.permutation(train_idx)
            running, seen = 0.0, 0
            for s in range(0, len(order), config.batch_size):
                idx = order[s:s + config.batch_size]
                batch = images[idx]
                if config.mirror:
                    flip = rng.random(len(idx)) < 0.5
                    batch = np.where(flip[:, None, None, None], mirror(batch), batch)
                pred = net(to_tensor(batch))
                loss = loss_fn(torch.as_tensor(mu[idx], dtype=torch.float32),
                               torch.as_tensor(sigma[idx], dtype=torch.float32), pred)
                if not torch.isfinite(loss):
                    if out_dir is not None:
                        best.save(out_dir / "quality.ckpt")
                    raise DivergenceError(f"non-finite quality loss at epoch {epoch}, step {step}", term="quality")
                opt.zero_grad()
                loss.backward()
                opt.step()
                step += 1
                running += loss.item() * len(idx)
                seen += len(idx)
            train_loss = running / max(seen, 1)
            val_loss = _evaluate_loss(net, val_images, val_mu, val_sigma, loss_fn, config.batch_size)
            monitored = val_loss if val_idx else train_loss
            entry = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss if val_idx else None}
            history.append(entry)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(entry) + "\n")
                metrics_fh.flush()
            log.info("quality epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
            if monitored < best_val:
                best_val, bad_epochs = monitored, 0
                best = snapshot(step)
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    stopped_early = True
                    break
            if config.max_seconds is not None and time.monotonic() - started > config.max_seconds:
                stopped_early = True
                break
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    best.meta["trained"] = True
    net = best.build()
    if out_dir is not None:
        best.save(out_dir / "quality.ckpt")
    return QualityTrainResult(net, best, history, (train_idx, val_idx, test_idx), stopped_early)


def _as_batch(images):
    if isinstance(images, torch.Tensor):
        return images if images.dim() == 4 else images[None]
    arr = np.asarray(images, dtype=np.float32)
    return to_tensor(arr)


def predict_quality(images, q_net: QualityNet, masks=None, batch_size: int = 32) -> list:
    """Score each image; when masks are given, pixels outside them are set to -1 first."""
    x = _as_batch(images)
    if masks is not None:
        m = torch.as_tensor(np.asarray(masks), dtype=torch.bool)
        if m.dim() == 2:
            m = m[None]
        if m.shape[0] != x.shape[0] or m.shape[-2:] != x.shape[-2:]:
            raise DimensionError(f"masks {tuple(m.shape)} do not match images {tuple(x.shape)}")
        x = torch.where(m[:, None], x, torch.full_like(x, -1.0))
    was_training = q_net.training
    q_net.eval()
    scores = []
    with torch.no_grad():
        for s in range(0, x.shape[0], batch_size):
            scores.extend(q_net(x[s:s + batch_size]).double().tolist())
    q_net.train(was_training)
    return [QualityPrediction(float(v)) for v in scores]


def quality_features(images, q_net: QualityNet, batch_size: int = 32) -> np.ndarray:
    x = _as_batch(images)
    q_net.eval()
    out = []
    with torch.no_grad():
        for s in range(0, x.shape[0], batch_size):
            out.append(q_net.features(x[s:s + batch_size]).double().numpy())
    return np.concatenate(out) if out else np.zeros((0, q_net.fc_width))


# --------------------------------------------------------------------------
# coarse naturalness filter


@dataclass
class CoarseFilter:
    weights: np.ndarray
    bias: float
    threshold: float = NATURAL_THRESHOLD

    def decision(self, features) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.bias

    def predict(self, features) -> np.ndarray:
        """+1 for 'natural', -1 for 'unnatural'."""
        return np.where(self.decision(features) >= 0, 1, -1)

    def predict_bins(self, features) -> list:
        return ["natural" if v > 0 else "unnatural" for v in self.predict(features)]


def train_coarse_filter(features, ratings, l2: float = 1e-3, lr: float = 0.1, epochs: int = 2000,
                        threshold: float = NATURAL_THRESHOLD) -> CoarseFilter:
    """Linear max-margin classifier (hinge + L2) by full-batch subgradient descent."""
    X = np.asarray(features, dtype=np.float64)
    r = np.asarray(ratings, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(r):
        raise DimensionError("features must be (n, d) and aligned with ratings")
    if ((r < 0) | (r > MAX_RATING)).any():
        raise ValidationError("ratings must lie in [0, 10]")
    y = np.where(r >= threshold, 1.0, -1.0)
    if np.all(y == y[0]):
        raise DegenerateInputError("coarse filter needs both natural and unnatural examples")
    mean, std = X.mean(0), X.std(0)
    std[std == 0] = 1.0
    Z = (X - mean) / std
    w = np.zeros(Z.shape[1])
    b = 0.0
    n = len(Z)
    for t in range(epochs):
        margins = y * (Z @ w + b)
        active = margins < 1
        gw = l2 * w - (y[active, None] * Z[active]).sum(0) / n
        gb = -y[active].sum() / n
        step = lr / math.sqrt(1 + t / 100)
        w -= step * gw
        b -= step * gb
    # fold standardisation back into raw-feature weights
    w_raw = w / std
    return CoarseFilter(w_raw, float(b - w_raw @ mean), threshold)


__all__ = [
    "CoarseFilter", "QualityPrediction", "QualityTrainConfig", "QualityTrainResult", "hinge_loss",
    "margin_loss", "predict_quality", "quality_features", "rating_bin", "split_indices",
    "train_coarse_filter", "train_quality_model",
]
