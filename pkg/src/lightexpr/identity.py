"""Default identity embedder: a small encoder trained to classify subjects."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .core import to_tensor
from .errors import ValidationError
from .losses import freeze
from .nets import IdentityEncoder


class FrozenEmbedder(torch.nn.Module):
    """Wraps an encoder's ``embed`` with parameters frozen."""

    def __init__(self, encoder: IdentityEncoder):
        super().__init__()
        self.encoder = freeze(encoder)

    def forward(self, x):
        return self.encoder.embed(x)

    def numpy_embed(self, images) -> np.ndarray:
        with torch.no_grad():
            return self.encoder.embed(to_tensor(images)).double().numpy()


def train_identity_embedder(images, subjects, input_size=None, width: int = 16, embed_dim: int = 64,
                            epochs: int = 15, batch_size: int = 32, lr: float = 1e-3, seed: int = 0) -> IdentityEncoder:
    """Subject classifier on (N, H, W, 3) images; labels may be any hashable ids."""
    images = np.asarray(images, dtype=np.float32)
    labels_raw = list(subjects)
    if len(labels_raw) != len(images) or not labels_raw:
        raise ValidationError("identity training needs one subject label per image")
    classes = sorted(set(labels_raw), key=str)
    if len(classes) < 2:
        raise ValidationError("identity training needs at least two subjects")
    lookup = {c: i for i, c in enumerate(classes)}
    y = np.array([lookup[s] for s in labels_raw])
    size = input_size or images.shape[1]
    torch.manual_seed(seed)
    enc = IdentityEncoder(size, width, embed_dim, num_subjects=len(classes))
    opt = torch.optim.Adam(enc.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    enc.train()
    for _ in range(epochs):
        order = rng.permutation(len(images))
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            loss = F.cross_entropy(enc(to_tensor(images[idx])), torch.as_tensor(y[idx]))
            opt.zero_grad()
            loss.backward()
            opt.step()
    enc.eval()
    return enc

