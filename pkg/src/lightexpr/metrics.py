"""Evaluation metrics: Fréchet distance, SSIM, match score, and the report builder."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .errors import AlignmentError, DegenerateInputError, DimensionError, EmptyInputError, NumericalError

EIG_FLOOR = 1e-10
NEG_EIG_TOL = 1e-8

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < -NEG_EIG_TOL * scale:
        raise NumericalError(f"covariance not positive semi-definite (min eigenvalue {vals.min():.3e})")
    vals = np.where(vals < EIG_FLOOR, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_stats(features) -> tuple:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise EmptyInputError("need at least two feature vectors")
    return x.mean(0), np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])


def frechet_from_stats(mu_a, cov_a, mu_b, cov_b) -> float:
    """||mu_a - mu_b||^2 + Tr(cov_a + cov_b - 2 (cov_a^1/2 cov_b cov_a^1/2)^1/2)."""
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    if mu_a.shape != mu_b.shape:
        raise DimensionError(f"feature dimensions differ: {mu_a.shape} vs {mu_b.shape}")
    try:
        root_a = _psd_sqrt(np.atleast_2d(cov_a))
        root_b = _psd_sqrt(np.atleast_2d(cov_b))
    except NumericalError as exc:
        raise NumericalError(f"{exc}; cond(cov_a)={np.linalg.cond(cov_a):.3e}, "
                             f"cond(cov_b)={np.linalg.cond(cov_b):.3e}") from None
    # eigenvalues of root_a cov_b root_a are the squared singular values of root_a root_b,
    # so the trace of its square root is the nuclear norm (no squaring of tiny modes)
    tr_sqrt = float(np.linalg.svd(root_a @ root_b, compute_uv=False).sum())
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * tr_sqrt)
    return max(value, 0.0)


def frechet_distance(features_a, features_b) -> float:
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature sets must be (n, d) with equal d: {a.shape} vs {b.shape}")
    return frechet_from_stats(*gaussian_stats(a), *gaussian_stats(b))


# --------------------------------------------------------------------------
# SSIM


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size) - size // 2
    g = np.exp(-coords ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation over axes 0, 1, keeping only fully covered windows
    k = len(g)
    out = ndimage.correlate1d(x, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    h = k // 2
    return out[h:x.shape[0] - h, h:x.shape[1] - h]


def ssim(a, b) -> float:
    """Mean SSIM of two (H, W, C) images in [-1, 1], averaged over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise DimensionError(f"images must be at least {SSIM_WINDOW}px on each side")
    a = (a + 1) / 2
    b = (b + 1) / 2
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    g = gaussian_window()
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(float((num / den).mean()))
    return float(np.mean(scores))


# --------------------------------------------------------------------------
# identity match


def match_score(embedding_a, embedding_b) -> float:
    """Pearson correlation of two embedding vectors."""
    a = np.asarray(embedding_a, dtype=np.float64).ravel()
    b = np.asarray(embedding_b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise DimensionError("embeddings must have equal length >= 2")
    da, db = a - a.mean(), b - b.mean()
    na, nb = math.sqrt(da @ da), math.sqrt(db @ db)
    if na == 0 or nb == 0:
        raise DegenerateInputError("zero-variance embedding")
    return float(np.clip(da @ db / (na * nb), -1.0, 1.0))


# --------------------------------------------------------------------------
# reports


@dataclass
class FeatureExtractor:
    name: str
    dim: int
    fn: Callable  # (N, H, W, 3) array -> (N, dim) array

    def __call__(self, images) -> np.ndarray:
        out = np.asarray(self.fn(images), dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.dim:
            raise DimensionError(f"extractor {self.name} returned {out.shape}, expected (N, {self.dim})")
        return out


UNAVAILABLE = "unavailable"

REPORT_COLUMNS = ("fid", "lpips", "ssim", "match_score", "quality_score")


@dataclass
class MetricReport:
    fid: float
    ssim: Optional[float]
    match_score: Optional[float]
    quality_score: Optional[float]
    lpips: object = UNAVAILABLE
    n_real: int = 0
    n_fake: int = 0
    extractor: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def row(self, label: str) -> dict:
        d = {"model": label}
        for col in REPORT_COLUMNS:
            d[col] = getattr(self, col)
        return d


def write_report(path, report: MetricReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)


def write_table(path, rows: list, columns=None) -> None:
    """Delimited table; by default the model column followed by the metric columns."""
    columns = list(columns) if columns else ["model", *REPORT_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def evaluate(real_images, fake_images, extractor: FeatureExtractor, q_score: Optional[Callable] = None,
             embedder: Optional[Callable] = None, lpips: Optional[Callable] = None,
             paired: bool = True) -> MetricReport:
    """Score a fake image set against a real one.

    ``q_score`` maps an image batch to per-image quality scores and
    ``embedder`` to identity embeddings. Paired metrics (SSIM, match score,
    LPIPS) compare images at equal positions.
    """
    real = np.asarray(real_images, dtype=np.float32)
    fake = np.asarray(fake_images, dtype=np.float32)
    if len(real) == 0 or len(fake) == 0:
        raise EmptyInputError("real and fake sets must be nonempty")
    if paired and len(real) != len(fake):
        raise AlignmentError(f"paired metrics need equal counts, got {len(real)} real vs {len(fake)} fake")
    fid = frechet_distance(extractor(real), extractor(fake))
    ssim_v = match_v = None
    lp = UNAVAILABLE
    if paired:
        ssim_v = float(np.mean([ssim(r, f) for r, f in zip(real, fake)]))
        if embedder is not None:
            ea, eb = np.asarray(embedder(real)), np.asarray(embedder(fake))
            match_v = float(np.mean([match_score(x, y) for x, y in zip(ea, eb)]))
        if lpips is not None:
            lp = float(np.mean(lpips(real, fake)))
    quality = float(np.mean(q_score(fake))) if q_score is not None else None
    return MetricReport(fid=fid, ssim=ssim_v, match_score=match_v, quality_score=quality, lpips=lp,
                        n_real=len(real), n_fake=len(fake), extractor=extractor.name)
