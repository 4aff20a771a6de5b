"""Domain types, manifests, condition planes, face masks and image helpers.

Images are float arrays of shape (H, W, 3) with values in [-1, 1]. Batches
stack along a leading axis. Conversion to the channels-first layout used by
the networks happens in :func:`to_tensor` / :func:`from_tensor`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import (
    BoundsError,
    DegenerateGeometryError,
    DimensionError,
    EmptyInputError,
    ManifestParseError,
    ValidationError,
)

BACKGROUND = -1.0
# rating >= NATURAL_THRESHOLD is 'natural'; half-open bins [0, 5) and [5, 10]
NATURAL_THRESHOLD = 5.0
MAX_RATING = 10.0

# default elliptical face region, as fractions of (W, H)
ELLIPSE_CENTER = (0.5, 0.52)
ELLIPSE_AXES = (0.42, 0.48)


@dataclass(frozen=True)
class AttributeSpec:
    num_expressions: int = 6
    num_lightings: int = 20
    expression_names: Optional[tuple] = None
    lighting_names: Optional[tuple] = None

    def __post_init__(self):
        if self.num_expressions < 2 or self.num_lightings < 2:
            raise ValidationError(
                f"need at least 2 classes per group, got "
                f"({self.num_expressions}, {self.num_lightings})")
        for names, n in ((self.expression_names, self.num_expressions),
                         (self.lighting_names, self.num_lightings)):
            if names is not None and len(names) != n:
                raise ValidationError(f"{len(names)} class names for {n} classes")

    @property
    def k(self) -> int:
        return self.num_expressions + self.num_lightings

    @property
    def num_pairs(self) -> int:
        return self.num_expressions * self.num_lightings

    def check(self, expression: int, lighting: int, where: str = "") -> None:
        prefix = f"{where}: " if where else ""
        if not 0 <= int(expression) < self.num_expressions:
            raise BoundsError(f"{prefix}expression id {expression} outside [0, {self.num_expressions})")
        if not 0 <= int(lighting) < self.num_lightings:
            raise BoundsError(f"{prefix}lighting id {lighting} outside [0, {self.num_lightings})")

    def to_dict(self) -> dict:
        d = {"num_expressions": self.num_expressions, "num_lightings": self.num_lightings}
        if self.expression_names is not None:
            d["expression_names"] = list(self.expression_names)
        if self.lighting_names is not None:
            d["lighting_names"] = list(self.lighting_names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSpec":
        return cls(
            num_expressions=int(d["num_expressions"]),
            num_lightings=int(d["num_lightings"]),
            expression_names=tuple(d["expression_names"]) if d.get("expression_names") else None,
            lighting_names=tuple(d["lighting_names"]) if d.get("lighting_names") else None,
        )


@dataclass(frozen=True)
class ConditionMaps:
    """One-hot attribute planes, each (H, W, C)."""

    expression_maps: np.ndarray
    lighting_maps: np.ndarray

    @property
    def expression_id(self) -> int:
        return int(np.argmax(self.expression_maps[0, 0]))

    @property
    def lighting_id(self) -> int:
        return int(np.argmax(self.lighting_maps[0, 0]))

    def concatenated(self) -> np.ndarray:
        return np.concatenate([self.expression_maps, self.lighting_maps], axis=-1)


def encode_conditions(expression_id: int, lighting_id: int, spec: AttributeSpec,
                      height: int, width: int) -> ConditionMaps:
    spec.check(expression_id, lighting_id)
    expr = np.zeros((height, width, spec.num_expressions), dtype=np.float32)
    light = np.zeros((height, width, spec.num_lightings), dtype=np.float32)
    expr[..., expression_id] = 1.0
    light[..., lighting_id] = 1.0
    return ConditionMaps(expr, light)


def one_hot_labels(expression_ids, lighting_ids, spec: AttributeSpec) -> np.ndarray:
    """Per-image label vectors of length k: expression one-hot then lighting one-hot."""
    e = np.asarray(expression_ids, dtype=np.int64).reshape(-1)
    l = np.asarray(lighting_ids, dtype=np.int64).reshape(-1)
    for a, b in zip(e, l):
        spec.check(a, b)
    out = np.zeros((len(e), spec.k), dtype=np.float32)
    out[np.arange(len(e)), e] = 1.0
    out[np.arange(len(l)), spec.num_expressions + l] = 1.0
    return out


# --------------------------------------------------------------------------
# manifests


@dataclass
class ManifestRecord:
    image: str
    expression: int
    lighting: int
    subject: Optional[str] = None
    landmarks: Optional[list] = None

    def to_json(self) -> dict:
        d = {"image": self.image, "expression": self.expression, "lighting": self.lighting}
        if self.subject is not None:
            d["subject"] = self.subject
        if self.landmarks is not None:
            d["landmarks"] = [list(p) for p in self.landmarks]
        return d


@dataclass
class DatasetManifest:
    records: list = field(default_factory=list)
    root: Optional[Path] = None

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def resolve(self, record: ManifestRecord) -> Path:
        p = Path(record.image)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def subset(self, indices: Iterable[int]) -> "DatasetManifest":
        return DatasetManifest([self.records[i] for i in indices], self.root)


def _read_jsonl(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(path, line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ManifestParseError(path, line_no, "expected a JSON object")
            yield line_no, obj


def _parse_landmarks(raw, path, line_no):
    if raw is None:
        return None
    try:
        pts = [(float(p[0]), float(p[1])) for p in raw]
    except (TypeError, ValueError, IndexError):
        raise ManifestParseError(path, line_no, "landmarks must be an array of [x, y]") from None
    return pts


def load_manifest(path, spec: AttributeSpec) -> DatasetManifest:
    """Read a JSON-lines manifest; relative image paths resolve against its directory."""
    path = Path(path)
    records = []
    for line_no, obj in _read_jsonl(path):
        try:
            image = obj["image"]
            expression = obj["expression"]
            lighting = obj["lighting"]
        except KeyError as exc:
            raise ManifestParseError(path, line_no, f"missing field {exc.args[0]!r}") from None
        if not isinstance(expression, int) or not isinstance(lighting, int) \
                or isinstance(expression, bool) or isinstance(lighting, bool):
            raise ManifestParseError(path, line_no, "expression and lighting must be integers")
        spec.check(expression, lighting, where=f"{path}:{line_no} ({image})")
        subject = obj.get("subject")
        records.append(ManifestRecord(
            image=str(image), expression=expression, lighting=lighting,
            subject=None if subject is None else str(subject),
            landmarks=_parse_landmarks(obj.get("landmarks"), path, line_no),
        ))
    return DatasetManifest(records, root=path.parent)


def write_manifest(path, records: Iterable[ManifestRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


def check_resolvable(manifest: DatasetManifest) -> None:
    missing = [r.image for r in manifest if not manifest.resolve(r).exists()]
    if missing:
        raise ValidationError(f"{len(missing)} manifest images not found, first: {missing[0]}")


# --------------------------------------------------------------------------
# ratings


@dataclass
class RatingRecord:
    image: str
    mu: float
    sigma: float
    ratings: Optional[list] = None
    landmarks: Optional[list] = None

    def to_json(self) -> dict:
        d = {"image": self.image, "mu": self.mu, "sigma": self.sigma}
        if self.ratings is not None:
            d["ratings"] = list(self.ratings)
        if self.landmarks is not None:
            d["landmarks"] = [list(p) for p in self.landmarks]
        return d


def aggregate_ratings(raw: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation of crowd ratings."""
    values = [float(v) for v in raw]
    if not values:
        raise EmptyInputError("no ratings to aggregate")
    for v in values:
        if not 0.0 <= v <= MAX_RATING:
            raise ValidationError(f"rating {v} outside [0, {MAX_RATING}]")
    arr = np.asarray(values, dtype=np.float64)
    mu = float(arr.mean())
    dev = arr - mu
    scale = float(np.abs(dev).max())
    if np.all(arr == arr[0]) or scale == 0.0:
        return mu, 0.0
    # scaled so tiny deviations do not underflow when squared
    sigma = scale * float(np.sqrt(np.mean((dev / scale) ** 2)))
    return mu, sigma


def rating_bin(rating: float) -> str:
    return "natural" if rating >= NATURAL_THRESHOLD else "unnatural"


def load_ratings(path) -> list[RatingRecord]:
    path = Path(path)
    out = []
    for line_no, obj in _read_jsonl(path):
        if "image" not in obj:
            raise ManifestParseError(path, line_no, "missing field 'image'")
        image = str(obj["image"])
        if not Path(image).is_absolute():
            image = str(path.parent / image)
        where = f"{path}:{line_no}"
        landmarks = _parse_landmarks(obj.get("landmarks"), path, line_no)
        if "ratings" in obj:
            raw = obj["ratings"]
            if not isinstance(raw, list):
                raise ManifestParseError(path, line_no, "ratings must be an array")
            try:
                mu, sigma = aggregate_ratings(raw)
            except ValidationError as exc:
                raise type(exc)(f"{where}: {exc}") from None
            out.append(RatingRecord(image, mu, sigma, [float(v) for v in raw], landmarks))
        elif "mu" in obj and "sigma" in obj:
            mu, sigma = float(obj["mu"]), float(obj["sigma"])
            if not 0.0 <= mu <= MAX_RATING or sigma < 0 or not math.isfinite(sigma):
                raise ValidationError(f"{where}: invalid mu/sigma ({mu}, {sigma})")
            out.append(RatingRecord(image, mu, sigma, None, landmarks))
        else:
            raise ManifestParseError(path, line_no, "need 'ratings' or both 'mu' and 'sigma'")
    return out


def write_ratings(path, records: Iterable[RatingRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


# --------------------------------------------------------------------------
# masks


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list:
    """Counter-clockwise hull vertices (Andrew's monotone chain), collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def mask_from_landmarks(points, height: int, width: int) -> np.ndarray:
    """Boolean (H, W) mask of pixels whose centre lies inside or on the landmark hull.

    Pixel ``(row i, col j)`` has its centre at ``(x=j, y=i)``.
    """
    if len(points) < 3:
        raise DegenerateGeometryError(f"need at least 3 landmarks, got {len(points)}")
    hull = convex_hull(points)
    if len(hull) < 3:
        raise DegenerateGeometryError("landmarks are collinear")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    inside = np.ones((height, width), dtype=bool)
    scale = max(abs(c) for p in hull for c in p) + 1.0
    eps = 1e-9 * scale * scale
    for (x0, y0), (x1, y1) in zip(hull, hull[1:] + hull[:1]):
        inside &= (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0) >= -eps
    return inside


def default_face_mask(height: int, width: int) -> np.ndarray:
    cx, cy = ELLIPSE_CENTER[0] * width, ELLIPSE_CENTER[1] * height
    ax, ay = ELLIPSE_AXES[0] * width, ELLIPSE_AXES[1] * height
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 <= 1.0


def record_mask(record: ManifestRecord, height: int, width: int, scale=1.0) -> np.ndarray:
    """Hull mask from the record's landmarks, or the default ellipse when it has none.

    ``scale`` maps landmark pixels to the mask grid, one factor or (sx, sy).
    """
    sx, sy = (scale, scale) if np.isscalar(scale) else scale
    if record.landmarks:
        pts = [(x * sx, y * sy) for x, y in record.landmarks]
        return mask_from_landmarks(pts, height, width)
    return default_face_mask(height, width)


def apply_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    mask = np.asarray(mask)
    if mask.shape != image.shape[-3:-1]:
        raise DimensionError(f"mask {mask.shape} does not match image {image.shape}")
    return np.where(mask[..., None].astype(bool), image, np.asarray(BACKGROUND, dtype=image.dtype))


def mirror(image: np.ndarray) -> np.ndarray:
    """Horizontal flip of an (..., H, W, C) image."""
    return np.flip(np.asarray(image), axis=-2).copy()


def remap_lighting(lighting_id: int, table: Optional[dict]) -> int:
    """Lighting label of a mirrored image; ids absent from the table are symmetric."""
    if not table:
        return lighting_id
    return int(table.get(lighting_id, table.get(str(lighting_id), lighting_id)))


# --------------------------------------------------------------------------
# image I/O


def check_image(image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim < 3 or image.shape[-1] != 3:
        raise DimensionError(f"expected (..., H, W, 3), got {image.shape}")
    h, w = image.shape[-3:-1]
    if h % 4 or w % 4:
        raise DimensionError(f"height and width must be multiples of 4, got {h}x{w}")
    if image.size and (image.min() < -1.0 or image.max() > 1.0):
        raise ValidationError("image values outside [-1, 1]")


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float32) / 127.5 - 1.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(image) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def load_image(path, size: Optional[int] = None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        return from_uint8(np.asarray(im))


def save_image(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=-1)
    Image.fromarray(to_uint8(image)).save(path)


def to_tensor(images):
    """(N, H, W, C) or (H, W, C) numpy -> (N, C, H, W) float32 torch tensor."""
    import torch

    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def from_tensor(tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().transpose(0, 2, 3, 1)


def load_manifest_images(manifest: DatasetManifest, size: int) -> tuple:
    """Images resized to ``size`` square and their face masks, in manifest order."""
    check_resolvable(manifest)
    images, masks = [], []
    for r in manifest:
        path = manifest.resolve(r)
        with Image.open(path) as im:
            w, h = im.size
        images.append(load_image(path, size))
        masks.append(record_mask(r, size, size, scale=(size / w, size / h)))
    if not images:
        return np.zeros((0, size, size, 3), np.float32), np.zeros((0, size, size), bool)
    return np.stack(images), np.stack(masks)
