import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightexpr.core import (
    AttributeSpec,
    aggregate_ratings,
    apply_mask,
    check_image,
    convex_hull,
    default_face_mask,
    encode_conditions,
    from_uint8,
    load_image,
    load_manifest,
    load_ratings,
    mask_from_landmarks,
    mirror,
    one_hot_labels,
    rating_bin,
    remap_lighting,
    save_image,
    to_uint8,
)
from lightexpr.errors import (
    BoundsError,
    DegenerateGeometryError,
    DimensionError,
    EmptyInputError,
    ManifestParseError,
    ValidationError,
)

import oracles

PAPER_SPEC = AttributeSpec(6, 20)


# --------------------------------------------------------------------------
# condition encoding


def test_encode_conditions_one_hot_planes():
    maps = encode_conditions(2, 5, PAPER_SPEC, 128, 128)
    assert maps.expression_maps.shape == (128, 128, 6)
    assert maps.lighting_maps.shape == (128, 128, 20)
    assert np.all(maps.expression_maps[..., 2] == 1)
    assert np.all(maps.lighting_maps[..., 5] == 1)
    zeros = [c for c in range(6) if not maps.expression_maps[..., c].any()]
    zeros += [c for c in range(20) if not maps.lighting_maps[..., c].any()]
    assert len(zeros) == 24


def test_encode_conditions_minimal_spec():
    maps = encode_conditions(0, 0, AttributeSpec(2, 2), 4, 4)
    assert maps.expression_maps.shape == (4, 4, 2) and maps.lighting_maps.shape == (4, 4, 2)
    assert np.all(maps.expression_maps[..., 0] == 1) and np.all(maps.lighting_maps[..., 0] == 1)


def test_encode_conditions_rejects_out_of_range():
    with pytest.raises(BoundsError):
        encode_conditions(6, 0, PAPER_SPEC, 128, 128)
    with pytest.raises(BoundsError):
        encode_conditions(0, -1, PAPER_SPEC, 8, 8)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(2, 25), st.data())
def test_encode_conditions_invariants(ne, nl, data):
    spec = AttributeSpec(ne, nl)
    e = data.draw(st.integers(0, ne - 1))
    l = data.draw(st.integers(0, nl - 1))
    maps = encode_conditions(e, l, spec, 6, 5)
    for planes in (maps.expression_maps, maps.lighting_maps):
        assert set(np.unique(planes)) <= {0.0, 1.0}
        assert np.all(planes.sum(-1) == 1)
        assert np.all(planes == planes[:1, :1])
    assert (maps.expression_id, maps.lighting_id) == (e, l)


def test_attribute_spec_channel_count():
    assert PAPER_SPEC.k == 26
    assert PAPER_SPEC.num_pairs == 120
    with pytest.raises(ValidationError):
        AttributeSpec(1, 20)
    assert AttributeSpec.from_dict(AttributeSpec(3, 4, ("a", "b", "c")).to_dict()) == AttributeSpec(3, 4, ("a", "b", "c"))


def test_one_hot_labels_layout():
    lab = one_hot_labels([1, 0], [3, 19], PAPER_SPEC)
    assert lab.shape == (2, 26)
    assert lab[0, 1] == 1 and lab[0, 6 + 3] == 1 and lab[0].sum() == 2
    assert lab[1, 0] == 1 and lab[1, 25] == 1


# --------------------------------------------------------------------------
# manifests and ratings


def _write_lines(path, lines):
    path.write_text("".join(json.dumps(x) + "\n" if not isinstance(x, str) else x + "\n" for x in lines))
    return path


def test_load_manifest_three_records(tmp_path):
    p = _write_lines(tmp_path / "m.jsonl", [
        {"image": "a.png", "expression": 0, "lighting": 1},
        {"image": "b.png", "expression": 5, "lighting": 19, "subject": "s1"},
        {"image": "c.png", "expression": 2, "lighting": 0, "landmarks": [[1, 2], [3, 4], [5, 1]]},
    ])
    m = load_manifest(p, PAPER_SPEC)
    assert len(m) == 3
    assert [r.image for r in m] == ["a.png", "b.png", "c.png"]
    assert m[1].subject == "s1"
    assert m[2].landmarks == [(1.0, 2.0), (3.0, 4.0), (5.0, 1.0)]
    assert m.resolve(m[0]) == tmp_path / "a.png"


def test_load_manifest_names_bad_label(tmp_path):
    p = _write_lines(tmp_path / "m.jsonl", [
        {"image": "a.png", "expression": 0, "lighting": 1},
        {"image": "bad.png", "expression": 0, "lighting": 20},
    ])
    with pytest.raises(ValidationError, match="bad.png"):
        load_manifest(p, PAPER_SPEC)


def test_load_manifest_empty_file(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert len(load_manifest(p, PAPER_SPEC)) == 0


def test_load_manifest_parse_error_has_line_number(tmp_path):
    p = _write_lines(tmp_path / "m.jsonl", [{"image": "a.png", "expression": 0, "lighting": 1}, "{not json"])
    with pytest.raises(ManifestParseError) as err:
        load_manifest(p, PAPER_SPEC)
    assert err.value.line_no == 2


def test_load_manifest_missing_field(tmp_path):
    p = _write_lines(tmp_path / "m.jsonl", [{"image": "a.png", "expression": 0}])
    with pytest.raises(ManifestParseError, match="lighting"):
        load_manifest(p, PAPER_SPEC)


def test_aggregate_ratings_examples():
    assert aggregate_ratings([7, 7, 7]) == (7.0, 0.0)
    mu, sigma = aggregate_ratings([5, 7, 9])
    assert mu == pytest.approx(7.0, abs=1e-12)
    assert sigma == pytest.approx(1.632993161855452, abs=1e-12)
    assert aggregate_ratings([0, 10]) == pytest.approx((5.0, 5.0))


def test_aggregate_ratings_errors():
    with pytest.raises(EmptyInputError):
        aggregate_ratings([])
    with pytest.raises(ValidationError):
        aggregate_ratings([3, 11])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=8), st.randoms())
def test_aggregate_ratings_properties(values, rnd):
    mu, sigma = aggregate_ratings(values)
    ref_mu, ref_sigma = oracles.population_stats(values)
    assert mu == pytest.approx(ref_mu, abs=1e-9)
    assert sigma == pytest.approx(ref_sigma, abs=1e-9)
    assert (sigma == 0) == (len(set(values)) == 1)
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert aggregate_ratings(shuffled) == pytest.approx((mu, sigma), abs=1e-12)


def test_rating_bin_half_open_boundary():
    assert rating_bin(4.9) == "unnatural"
    assert rating_bin(5.0) == "natural"


def test_load_ratings_both_formats(tmp_path):
    p = _write_lines(tmp_path / "r.jsonl", [
        {"image": "x.png", "ratings": [5, 7, 9]},
        {"image": "/abs/y.png", "mu": 3.0, "sigma": 0.5},
    ])
    recs = load_ratings(p)
    assert recs[0].mu == pytest.approx(7.0) and recs[0].sigma == pytest.approx(1.632993161855452)
    assert recs[0].image == str(tmp_path / "x.png")
    assert recs[1].image == "/abs/y.png" and recs[1].sigma == 0.5
    bad = _write_lines(tmp_path / "b.jsonl", [{"image": "z.png"}])
    with pytest.raises(ManifestParseError):
        load_ratings(bad)


# --------------------------------------------------------------------------
# masks


def test_mask_square_corners():
    m = mask_from_landmarks([(10, 10), (10, 20), (20, 20), (20, 10)], 64, 64)
    assert m.sum() == 121
    assert m[10:21, 10:21].all()


def test_mask_triangle():
    assert mask_from_landmarks([(0, 0), (0, 2), (2, 0)], 8, 8).sum() == 6


def test_mask_degenerate_inputs():
    with pytest.raises(DegenerateGeometryError):
        mask_from_landmarks([(0, 0), (5, 5)], 8, 8)
    with pytest.raises(DegenerateGeometryError):
        mask_from_landmarks([(0, 0), (1, 1), (3, 3), (2, 2)], 8, 8)


def test_mask_matches_hull_oracle_on_random_sets():
    rng = np.random.default_rng(7)
    disagreements = 0
    for _ in range(100):
        n = int(rng.integers(3, 12))
        # mix of integer (boundary-heavy) and real coordinates
        pts = rng.integers(0, 24, size=(n, 2)).astype(float) if rng.random() < 0.5 else rng.uniform(-2, 26, (n, 2))
        if len(convex_hull([tuple(p) for p in pts])) < 3:
            continue
        ours = mask_from_landmarks([tuple(p) for p in pts], 24, 24)
        disagreements += int((ours != oracles.hull_mask(pts, 24, 24)).sum())
    assert disagreements == 0


def test_default_mask_ellipse():
    m = default_face_mask(128, 128)
    assert m[int(0.52 * 128), 64]
    assert not m[0, 0] and not m[127, 127]
    # semi-axes 0.42 W and 0.48 H
    assert m[66, 64 - 53] and not m[66, 64 - 55]


# --------------------------------------------------------------------------
# images


def test_apply_mask_examples(rng):
    img = rng.uniform(-1, 1, (8, 8, 3)).astype(np.float32)
    assert np.array_equal(apply_mask(img, np.ones((8, 8), bool)), img)
    assert np.all(apply_mask(img, np.zeros((8, 8), bool)) == -1)
    half = np.zeros((8, 8), bool)
    half[:, :4] = True
    out = apply_mask(img, half)
    assert np.array_equal(out[:, :4], img[:, :4]) and np.all(out[:, 4:] == -1)
    assert np.array_equal(apply_mask(out, half), out)
    with pytest.raises(DimensionError):
        apply_mask(img, np.ones((4, 8), bool))


def test_mirror_flip_and_involution(rng):
    grad = np.tile(np.arange(6, dtype=np.float32)[None, :, None], (4, 1, 3))
    assert np.array_equal(mirror(grad)[0, :, 0], np.arange(6)[::-1])
    x = rng.uniform(-1, 1, (5, 7, 3))
    assert np.array_equal(mirror(mirror(x)), x)
    sym = np.concatenate([x, x[:, ::-1]], axis=1)
    assert np.array_equal(mirror(sym), sym)


def test_remap_lighting_table():
    table = {0: 1, 1: 0}
    assert remap_lighting(0, table) == 1 and remap_lighting(2, table) == 2
    assert remap_lighting(3, None) == 3


def test_uint8_roundtrip_and_io(tmp_path, rng):
    raw = rng.integers(0, 256, (8, 12, 3), dtype=np.uint8)
    img = from_uint8(raw)
    assert img.min() >= -1 and img.max() <= 1
    assert np.array_equal(to_uint8(img), raw)
    save_image(tmp_path / "a.png", img)
    assert np.array_equal(load_image(tmp_path / "a.png"), img)
    assert load_image(tmp_path / "a.png", 16).shape == (16, 16, 3)


def test_check_image_invariants():
    check_image(np.zeros((8, 8, 3)))
    with pytest.raises(DimensionError):
        check_image(np.zeros((6, 8, 3)))
    with pytest.raises(ValidationError):
        check_image(np.full((8, 8, 3), 1.5))
