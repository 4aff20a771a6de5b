"""Procedural toy corpora for desk-scale runs.

Faces are drawn as shaded ellipses with two eyes and a mouth. The mouth
shape carries the expression class and a directional brightness ramp the
lighting class. Per-subject parameters (skin tone, face proportions, eye
spacing) give the identity signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import AttributeSpec, ManifestRecord, RatingRecord, aggregate_ratings, save_image, write_manifest

EXPRESSIONS = ("neutral", "smile", "surprise")
LIGHTINGS = ("left", "right", "top", "bottom")
TOY_SPEC = AttributeSpec(3, 4, EXPRESSIONS, LIGHTINGS)
SUPERSAMPLE = 3
N_LANDMARKS = 16


@dataclass
class ToyCorpus:
    images: np.ndarray  # (N, H, W, 3) in [-1, 1]
    expressions: np.ndarray
    lightings: np.ndarray
    subjects: np.ndarray
    landmarks: list
    spec: AttributeSpec = TOY_SPEC

    def __len__(self):
        return len(self.images)

    def records(self, image_names) -> list:
        return [ManifestRecord(name, int(e), int(l), f"s{int(s):02d}", [list(p) for p in lm])
                for name, e, l, s, lm in zip(image_names, self.expressions, self.lightings, self.subjects,
                                             self.landmarks)]


def subject_params(n_subjects: int, seed: int = 1234) -> list:
    """Fixed per-subject appearance; the same seed gives the same people."""
    rng = np.random.default_rng(seed)
    people = []
    for _ in range(n_subjects):
        people.append({
            "skin": rng.uniform([0.45, 0.25, 0.15], [0.95, 0.8, 0.7]),
            "rx": rng.uniform(0.28, 0.38),
            "ry": rng.uniform(0.36, 0.44),
            "eye_dx": rng.uniform(0.09, 0.15),
            "eye_r": rng.uniform(0.035, 0.06),
            "eye_color": rng.uniform(0.0, 0.3, size=3),
            "hair": rng.uniform(0.0, 0.6, size=3),
        })
    return people


def _ramp(lighting: int, xs, ys):
    # brightness factor in [0.3, 1.0] rising toward the light source
    t = {0: 1 - xs, 1: xs, 2: 1 - ys, 3: ys}[lighting]
    return 0.3 + 0.7 * np.clip(t, 0, 1)


def render_face(person: dict, expression: int, lighting: int, size: int = 64,
                jitter: Optional[np.ndarray] = None):
    """Returns (image (H, W, 3) in [-1, 1], landmarks as [(x, y), ...] in pixels)."""
    s = size * SUPERSAMPLE
    dx, dy = (0.0, 0.0) if jitter is None else jitter
    cx, cy = 0.5 + dx, 0.52 + dy
    ys, xs = (np.mgrid[0:s, 0:s] + 0.5) / s
    img = np.empty((s, s, 3))
    img[:] = 0.12 + 0.25 * person["hair"]
    face = ((xs - cx) / person["rx"]) ** 2 + ((ys - cy) / person["ry"]) ** 2 <= 1
    img[face] = person["skin"]
    eye_y = cy - 0.1
    for side in (-1, 1):
        eye = (xs - (cx + side * person["eye_dx"])) ** 2 + (ys - eye_y) ** 2 <= person["eye_r"] ** 2
        img[eye] = person["eye_color"]
    mx, my = cx, cy + 0.17
    half_w, thick = 0.11, 0.022
    if expression == 0:
        mouth = (np.abs(ys - my) <= thick) & (np.abs(xs - mx) <= half_w)
    elif expression == 1:
        curve = my + 0.07 * (1 - ((xs - mx) / half_w) ** 2) - 0.04
        mouth = (np.abs(ys - curve) <= thick) & (np.abs(xs - mx) <= half_w)
    else:
        rr = ((xs - mx) / 0.06) ** 2 + ((ys - my) / 0.075) ** 2
        mouth = (rr <= 1.0) & (rr >= 0.35)
    img[mouth & face] = (0.55, 0.05, 0.08)
    img[face] *= _ramp(lighting, xs, ys)[face][:, None]
    img = img.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE, 3).mean(axis=(1, 3))
    angles = np.linspace(0, 2 * np.pi, N_LANDMARKS, endpoint=False)
    landmarks = [(float((cx + person["rx"] * np.cos(a)) * size - 0.5),
                  float((cy + person["ry"] * np.sin(a)) * size - 0.5)) for a in angles]
    return (np.clip(img, 0, 1) * 2 - 1).astype(np.float32), landmarks


def make_toy_corpus(n: int = 500, size: int = 64, n_subjects: int = 20, seed: int = 0,
                    subject_seed: int = 1234, noise: float = 0.01) -> ToyCorpus:
    rng = np.random.default_rng(seed)
    people = subject_params(n_subjects, subject_seed)
    subjects = np.arange(n) % n_subjects
    rng.shuffle(subjects)
    expressions = rng.integers(0, len(EXPRESSIONS), n)
    lightings = rng.integers(0, len(LIGHTINGS), n)
    images, marks = [], []
    for s, e, l in zip(subjects, expressions, lightings):
        img, lm = render_face(people[s], int(e), int(l), size, jitter=rng.uniform(-0.02, 0.02, 2))
        img = np.clip(img + rng.normal(0, noise, img.shape), -1, 1).astype(np.float32)
        images.append(img)
        marks.append(lm)
    return ToyCorpus(np.stack(images), expressions, lightings, subjects, marks)


def write_toy_corpus(out_dir, corpus: ToyCorpus, prefix: str = "img") -> Path:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(corpus.images):
        name = f"images/{prefix}_{i:05d}.png"
        save_image(out_dir / name, img)
        names.append(name)
    path = out_dir / "manifest.jsonl"
    write_manifest(path, corpus.records(names))
    return path


# --------------------------------------------------------------------------
# rated degradations


def degrade(image: np.ndarray, level: float, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Apply a degradation of strength ``level`` in [0, 1]."""
    img = (np.asarray(image, dtype=np.float64) + 1) / 2
    if kind == "blur":
        sigma = 3.0 * level * img.shape[0] / 64
        if sigma > 0:
            img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")
    elif kind == "noise":
        img = img + rng.normal(0, 0.35 * level, img.shape)
    elif kind == "texture":
        tex = ndimage.gaussian_filter(rng.random(img.shape), sigma=(1, 1, 0))
        tex = (tex - tex.mean()) / (tex.std() + 1e-8) * 0.25 + 0.5
        img = (1 - level) * img + level * tex
    elif kind == "flat":
        img = (1 - level) * img + level * img.mean(axis=(0, 1), keepdims=True)
    else:
        raise ValueError(f"unknown degradation {kind!r}")
    return (np.clip(img, 0, 1) * 2 - 1).astype(np.float32)


@dataclass
class RatedCorpus:
    images: np.ndarray
    records: list
    true_mu: np.ndarray
    levels: np.ndarray
    kinds: list


def make_ratings_corpus(base: ToyCorpus, n: int = 600, kinds=("blur",), rater_noise: float = 0.5,
                        raters: int = 3, seed: int = 0) -> RatedCorpus:
    """Degraded copies of toy faces with naturalness 10 * (1 - level) plus rater noise."""
    rng = np.random.default_rng(seed)
    images, records, true_mu, levels, kind_list = [], [], [], [], []
    for i in range(n):
        j = int(rng.integers(len(base)))
        level = float(rng.uniform(0, 1))
        kind = kinds[int(rng.integers(len(kinds)))]
        img = degrade(base.images[j], level, kind, rng)
        mu_true = 10.0 * (1.0 - level)
        raw = np.clip(mu_true + rng.normal(0, rater_noise, raters), 0, 10)
        mu, sigma = aggregate_ratings(raw.tolist())
        images.append(img)
        records.append(RatingRecord(f"rated_{i:05d}.png", mu, sigma, raw.tolist(), base.landmarks[j]))
        true_mu.append(mu_true)
        levels.append(level)
        kind_list.append(kind)
    return RatedCorpus(np.stack(images), records, np.array(true_mu), np.array(levels), kind_list)


def write_ratings_corpus(out_dir, corpus: RatedCorpus) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for img, rec in zip(corpus.images, corpus.records):
        save_image(out_dir / rec.image, img)
    path = out_dir / "ratings.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus.records:
            d = {"image": rec.image, "ratings": rec.ratings}
            if rec.landmarks is not None:
                d["landmarks"] = [list(p) for p in rec.landmarks]
            fh.write(json.dumps(d) + "\n")
    return path
