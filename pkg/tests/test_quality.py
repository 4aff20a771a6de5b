import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from lightexpr.core import RatingRecord, mirror, rating_bin
from lightexpr.errors import DegenerateInputError, EmptyInputError, ValidationError
from lightexpr.nets import build_quality_net
from lightexpr.quality import (
    QualityPrediction,
    QualityTrainConfig,
    hinge_loss,
    margin_loss,
    predict_quality,
    split_indices,
    train_coarse_filter,
    train_quality_model,
)
from lightexpr.toy import make_ratings_corpus, make_toy_corpus

finite = st.floats(-50, 50, allow_nan=False)


def test_margin_examples():
    assert float(margin_loss(7.0, 1.0, 8.0)) == 0.0
    assert float(margin_loss(7.0, 1.0, 7.0)) == 1.0
    assert float(margin_loss([7.0, 7.0], [1.0, 1.0], [8.0, 7.0])) == 0.5


def test_hinge_examples():
    assert float(hinge_loss(7.0, 1.0, 8.0)) == 0.0
    assert float(hinge_loss(7.0, 1.0, 9.0)) == 3.0
    assert float(hinge_loss(7.0, 1.0, 7.0)) == 0.0


def test_negative_sigma_rejected():
    with pytest.raises(ValidationError):
        margin_loss(7.0, -1.0, 7.0)


@settings(max_examples=200, deadline=None)
@given(mu=finite, sigma=st.floats(0, 20), p=finite)
def test_losses_symmetric_about_mean(mu, sigma, p):
    for fn in (margin_loss, hinge_loss):
        assert float(fn(mu, sigma, p)) == pytest.approx(float(fn(mu, sigma, 2 * mu - p)), rel=1e-9, abs=1e-9)
    assert float(margin_loss(mu, sigma, p)) >= 0


@settings(max_examples=100, deadline=None)
@given(mu=finite, sigma=st.floats(0, 20), sign=st.sampled_from([-1.0, 1.0]))
def test_margin_zero_set_inside_hinge_zero_set(mu, sigma, sign):
    p = mu + sign * np.sqrt(sigma)
    if float(margin_loss(mu, sigma, p)) == 0.0:
        assert float(hinge_loss(mu, sigma, p)) == 0.0


def test_split_ratios():
    train, val, test = split_indices(100, seed=3)
    assert (len(train), len(val), len(test)) == (80, 10, 10)
    assert sorted(train + val + test) == list(range(100))
    assert split_indices(100, seed=3) == (train, val, test)


def test_prediction_contract(rng):
    torch.manual_seed(0)
    q = build_quality_net(64, base_channels=4, fc_width=8)
    img = rng.uniform(-1, 1, (64, 64, 3)).astype(np.float32)
    a, b = predict_quality(np.stack([img, img]), q)
    assert a.score == b.score
    batch = rng.uniform(-1, 1, (5, 64, 64, 3)).astype(np.float32)
    scores = [p.score for p in predict_quality(batch, q)]
    singles = [predict_quality(x[None], q)[0].score for x in batch]
    assert scores == pytest.approx(singles, abs=1e-5)
    assert QualityPrediction(11.2).clamped_score == 10 and QualityPrediction(-0.3).clamped_score == 0
    assert QualityPrediction(11.2).score == 11.2


def test_prediction_masking(rng):
    torch.manual_seed(0)
    q = build_quality_net(64, base_channels=4, fc_width=8)
    img = rng.uniform(-1, 1, (1, 64, 64, 3)).astype(np.float32)
    masks = np.zeros((1, 64, 64), bool)
    masked = predict_quality(img, q, masks=masks)[0].score
    assert masked == predict_quality(np.full_like(img, -1.0), q)[0].score


def test_constant_ratings_converge(rng):
    n = 40
    images = rng.uniform(-1, 1, (n, 64, 64, 3)).astype(np.float32)
    records = [RatingRecord(f"{i}.png", 7.0, 0.0) for i in range(n)]
    cfg = QualityTrainConfig(image_size=64, base_channels=4, fc_width=16, epochs=8, seed=0)
    result = train_quality_model(records, cfg, images=images)
    preds = [p.score for p in predict_quality(images[result.split[0]], result.net)]
    assert np.mean(preds) == pytest.approx(7.0, abs=0.3)
    assert min(h["val_loss"] for h in result.log) < 0.1


def test_training_needs_records():
    with pytest.raises(EmptyInputError):
        train_quality_model([RatingRecord("a.png", 5.0, 0.0)], QualityTrainConfig())


def test_mirror_statistic():
    base = make_toy_corpus(120, 64, 10, seed=5)
    rated = make_ratings_corpus(base, 200, seed=6)
    cfg = QualityTrainConfig(image_size=64, base_channels=8, fc_width=32, epochs=12, seed=1, mirror=True)
    result = train_quality_model(rated.records, cfg, images=rated.images)
    val_loss = min(h["val_loss"] for h in result.log)
    plain = np.array([p.score for p in predict_quality(rated.images, result.net)])
    flipped = np.array([p.score for p in predict_quality(mirror(rated.images), result.net)])
    assert np.mean(np.abs(plain - flipped) < val_loss) >= 0.95


def test_coarse_filter_separable_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal([-3, -3], 0.5, (100, 2))
    b = rng.normal([3, 3], 0.5, (100, 2))
    X = np.vstack([a, b])
    ratings = np.array([2.0] * 100 + [8.0] * 100)
    filt = train_coarse_filter(X, ratings)
    acc = np.mean(filt.predict(X) == np.where(ratings >= 5, 1, -1))
    assert acc >= 0.99
    assert filt.predict_bins(X[:1]) == [rating_bin(2.0)] == ["unnatural"]
    with pytest.raises(DegenerateInputError):
        train_coarse_filter(X, np.full(200, 8.0))
    with pytest.raises(ValidationError):
        train_coarse_filter(X, np.full(200, 11.0))
