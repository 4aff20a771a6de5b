import numpy as np
import pytest

from lightexpr.core import load_manifest, load_ratings
from lightexpr.toy import (
    TOY_SPEC,
    degrade,
    make_ratings_corpus,
    make_toy_corpus,
    write_ratings_corpus,
    write_toy_corpus,
)


def test_corpus_shape_and_labels():
    c = make_toy_corpus(60, 64, n_subjects=20, seed=0)
    assert c.images.shape == (60, 64, 64, 3) and c.images.dtype == np.float32
    assert c.images.min() >= -1 and c.images.max() <= 1
    assert (TOY_SPEC.num_expressions, TOY_SPEC.num_lightings) == (3, 4)
    assert set(c.subjects.tolist()) == set(range(20))
    assert c.expressions.max() < 3 and c.lightings.max() < 4


def test_corpus_seeded():
    a, b = make_toy_corpus(5, 64, 3, seed=9), make_toy_corpus(5, 64, 3, seed=9)
    assert np.array_equal(a.images, b.images)
    assert not np.array_equal(a.images, make_toy_corpus(5, 64, 3, seed=10).images)


def test_lighting_ramp_direction():
    c = make_toy_corpus(200, 64, 5, seed=1)
    left = c.images[c.lightings == 0].mean(0)
    right = c.images[c.lightings == 1].mean(0)
    # light from the left brightens the left half of the face
    assert left[:, 16:32].mean() > right[:, 16:32].mean()
    assert right[:, 32:48].mean() > left[:, 32:48].mean()


def test_write_and_reload(tmp_path):
    c = make_toy_corpus(6, 64, 3, seed=2)
    m = load_manifest(write_toy_corpus(tmp_path, c), TOY_SPEC)
    assert len(m) == 6 and all(r.landmarks for r in m)
    assert [r.expression for r in m] == c.expressions.tolist()


@pytest.mark.parametrize("kind", ["blur", "noise", "texture", "flat"])
def test_degradation_level_zero_is_identity(kind):
    img = make_toy_corpus(1, 64, 1, seed=3).images[0]
    out = degrade(img, 0.0, kind, np.random.default_rng(0))
    assert np.abs(out - img).max() < 1e-6
    assert np.abs(degrade(img, 1.0, kind, np.random.default_rng(0)) - img).mean() > 0.01


def test_ratings_track_ground_truth(tmp_path):
    base = make_toy_corpus(20, 64, 4, seed=4)
    rated = make_ratings_corpus(base, 50, seed=5)
    mu = np.array([r.mu for r in rated.records])
    assert np.allclose(rated.true_mu, 10 * (1 - rated.levels))
    assert np.abs(mu - rated.true_mu).mean() < 0.6
    loaded = load_ratings(write_ratings_corpus(tmp_path, rated))
    assert len(loaded) == 50 and loaded[0].landmarks
    with pytest.raises(ValueError):
        degrade(base.images[0], 0.5, "smudge", np.random.default_rng(0))
