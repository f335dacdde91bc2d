import math

import numpy as np
import pytest

from nodulefusion.ingest import AUGMENTATION_TAGS, Volume, VolumeError, augment_array
from nodulefusion.radiomics import (
    CONFIGURATIONS,
    DIRECTIONS,
    HANDCRAFTED_NAMES,
    TEXTURE_NAMES,
    FeatureTable,
    build_glcm,
    geometric_features,
    glcm_texture,
    handcrafted,
    intensity_features,
    intensity_stats,
    quantize,
    read_feature_table,
    texture_features,
    write_feature_table,
)

from oracles import GLCM_DIRECTIONS, geometry_oracle, glcm_oracle, glcm_oracle_all, texture_oracle


def random_volume(rng, max_side=8, p=0.7, integer=False):
    dims = tuple(rng.integers(2, max_side + 1, size=3))
    vals = rng.integers(-50, 50, size=dims).astype(float) if integer else rng.normal(size=dims)
    mask = rng.random(dims) < p
    mask.flat[rng.integers(mask.size)] = True
    return Volume(vals, mask, (1.0, 1.0, 1.0), "r")


def test_direction_list_is_thirteen_non_opposite_unit_steps():
    assert tuple(DIRECTIONS) == tuple(GLCM_DIRECTIONS)
    assert len(set(DIRECTIONS)) == 13
    for d in DIRECTIONS:
        assert tuple(-c for c in d) not in DIRECTIONS
    assert len(CONFIGURATIONS) == 260


# ------------------------------------------------------------------ intensity


def test_intensity_example_one_to_five():
    f = intensity_stats([1, 2, 3, 4, 5])
    assert f["minimum"] == 1 and f["maximum"] == 5
    assert f["mean"] == 3 and f["sum"] == 15 and f["median"] == 3
    assert f["variance"] == pytest.approx(2.5)
    assert f["stand_deviation"] == pytest.approx(math.sqrt(2.5))
    assert f["skewness"] == pytest.approx(0.0, abs=1e-15)
    # population m4 / m2^2 - 3 = 6.8 / 4 - 3
    assert f["kurtosis"] == pytest.approx(-1.3)


def test_intensity_constant_values():
    f = intensity_stats(np.full(10, 0.1))
    assert f["stand_deviation"] == 0 and f["variance"] == 0
    assert f["skewness"] == 0 and f["kurtosis"] == 0


def test_intensity_matches_two_pass_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.gamma(2.0, 3.0, size=100) - 4
        f = intensity_stats(x)
        n = len(x)
        mean = sum(x) / n
        m2 = sum((v - mean) ** 2 for v in x) / n
        m3 = sum((v - mean) ** 3 for v in x) / n
        m4 = sum((v - mean) ** 4 for v in x) / n
        svar = m2 * n / (n - 1)
        assert f["variance"] == pytest.approx(svar, rel=1e-10)
        assert f["skewness"] == pytest.approx(m3 / m2**1.5, rel=1e-10)
        assert f["kurtosis"] == pytest.approx(m4 / m2**2 - 3, rel=1e-10)
        assert f["median"] == sorted(x)[49] / 2 + sorted(x)[50] / 2


def test_intensity_uses_masked_voxels_only():
    vals = np.arange(8.0).reshape(2, 2, 2)
    mask = vals > 4
    f = intensity_features(Volume(vals, mask, (1, 1, 1)))
    assert f["minimum"] == 5 and f["sum"] == 18


def test_intensity_rejects_empty():
    with pytest.raises(VolumeError):
        intensity_stats([])


# ------------------------------------------------------------------ geometry


def test_geometry_solid_cube():
    mask = np.zeros((12, 12, 12), dtype=bool)
    mask[1:11, 1:11, 1:11] = True
    f = geometric_features(Volume(np.ones(mask.shape), mask, (1, 1, 1)))
    assert f["volume"] == 1000
    assert f["bounding_box_volume"] == 1000
    assert f["perimeter"] == 600
    assert f["eccentricity"] == 0
    assert f["elongation"] == pytest.approx(1.0)
    # point variance of 10 unit-spaced samples is (10^2 - 1) / 12
    assert f["major_diameter"] == pytest.approx(4 * math.sqrt(99 / 12))


def test_geometry_rod_along_z():
    mask = np.zeros((3, 3, 11), dtype=bool)
    mask[1, 1, 1:10] = True
    f = geometric_features(Volume(np.ones(mask.shape), mask, (1, 1, 1)))
    assert f["orientation"] == pytest.approx(0.0, abs=1e-9)
    assert f["minor_diameter"] == 0
    assert math.isfinite(f["elongation"])
    assert f["perimeter"] == 9 * 4 + 2


def test_geometry_single_voxel_convention():
    mask = np.zeros((3, 3, 3), dtype=bool)
    mask[1, 1, 1] = True
    f = geometric_features(Volume(np.ones(mask.shape), mask, (1, 2, 3)))
    assert f["major_diameter"] == 0 and f["minor_diameter"] == 0
    assert f["eccentricity"] == 0 and f["elongation"] == 1
    assert f["volume"] == 6 and f["perimeter"] == 2 * (6 + 3 + 2)


def test_geometry_matches_oracle_on_random_blobs():
    rng = np.random.default_rng(21)
    for _ in range(25):
        dims = tuple(rng.integers(3, 13, size=3))
        mask = rng.random(dims) < 0.5
        spacing = tuple(rng.uniform(0.5, 2.0, size=3))
        f = geometric_features(Volume(np.zeros(dims), mask, spacing))
        o = geometry_oracle(mask, spacing)
        for k in o:
            assert f[k] == pytest.approx(o[k], rel=1e-9, abs=1e-9), k


def test_geometry_spacing_doubling_scales():
    rng = np.random.default_rng(22)
    mask = rng.random((8, 7, 6)) < 0.5
    a = geometric_features(Volume(np.zeros(mask.shape), mask, (1, 1, 1)))
    b = geometric_features(Volume(np.zeros(mask.shape), mask, (2, 2, 2)))
    assert b["volume"] == pytest.approx(8 * a["volume"])
    assert b["bounding_box_volume"] == pytest.approx(8 * a["bounding_box_volume"])
    assert b["major_diameter"] == pytest.approx(2 * a["major_diameter"])
    assert b["minor_diameter"] == pytest.approx(2 * a["minor_diameter"])
    assert b["perimeter"] == pytest.approx(4 * a["perimeter"])
    for k in ("eccentricity", "elongation", "orientation"):
        assert b[k] == pytest.approx(a[k], abs=1e-9)


# ------------------------------------------------------------------ GLCM


def test_glcm_hand_example():
    # rows y, cols x: [[1, 2], [1, 1]] -> voxels (x, y)
    vals = np.zeros((2, 2, 1))
    vals[0, 0, 0], vals[1, 0, 0] = 1, 2
    vals[0, 1, 0], vals[1, 1, 0] = 1, 1
    v = Volume(vals, np.ones(vals.shape), (1, 1, 1))
    g = build_glcm(v, 2, 1, (0, 1, 0))
    np.testing.assert_array_equal(g.counts, [[2, 1], [1, 0]])
    assert g.total == 4
    np.testing.assert_allclose(g.probabilities(), [[0.5, 0.25], [0.25, 0]])
    stats = dict(zip(TEXTURE_NAMES, glcm_texture(g.counts)))
    assert stats["energy"] == pytest.approx(0.375)


def test_glcm_constant_volume_point_mass():
    v = Volume(np.full((5, 5, 5), 3.0), np.ones((5, 5, 5)), (1, 1, 1))
    for L, d, direction in CONFIGURATIONS[::17]:
        g = build_glcm(v, L, d, direction)
        assert not g.empty
        p = g.probabilities()
        assert p[0, 0] == 1 and p.sum() == 1


def test_quantization_top_edge_inclusive():
    vals = np.array([0.0, 0.5, 1.0]).reshape(3, 1, 1)
    q = quantize(vals, np.ones(vals.shape, bool), 4)
    assert q.ravel().tolist() == [1, 3, 4]


def test_glcm_unmasked_partners_do_not_count():
    vals = np.arange(4.0).reshape(4, 1, 1)
    mask = np.array([1, 0, 1, 1], bool).reshape(4, 1, 1)
    g = build_glcm(Volume(vals, mask, (1, 1, 1)), 8, 1, (-1, 0, 0))
    assert g.total == 2


def test_glcm_empty_flag():
    vals = np.zeros((3, 3, 3))
    mask = np.zeros((3, 3, 3), bool)
    mask[0, 0, 0] = True
    g = build_glcm(Volume(vals, mask, (1, 1, 1)), 8, 1, (0, 0, -1))
    assert g.empty
    assert glcm_texture(g.counts) is None
    assert all(v == 0 for v in texture_features(Volume(vals, mask, (1, 1, 1))).values())


def test_glcm_matches_pair_enumeration_oracle():
    rng = np.random.default_rng(31)
    for _ in range(50):
        v = random_volume(rng, max_side=6)
        expected = glcm_oracle_all(v.voxels, v.mask)
        for L, d, direction in CONFIGURATIONS:
            k = GLCM_DIRECTIONS.index(direction)
            g = build_glcm(v, L, d, direction)
            np.testing.assert_array_equal(g.counts, expected[(L, d, k)])
            np.testing.assert_array_equal(g.counts, g.counts.T)


def test_glcm_single_config_oracle_helper():
    rng = np.random.default_rng(32)
    v = random_volume(rng)
    np.testing.assert_array_equal(
        build_glcm(v, 16, 2, (1, -1, -1)).counts, glcm_oracle(v.voxels, v.mask, 16, 2, (1, -1, -1))
    )


def test_texture_statistics_match_formula_oracle():
    rng = np.random.default_rng(33)
    for _ in range(20):
        v = random_volume(rng)
        for L, d, direction in CONFIGURATIONS[::7]:
            g = build_glcm(v, L, d, direction)
            got = glcm_texture(g.counts)
            want = texture_oracle(g.counts)
            if want is None:
                assert got is None
                continue
            for name, value in zip(TEXTURE_NAMES, got):
                assert value == pytest.approx(want[name], rel=1e-9, abs=1e-12), name


def test_texture_constant_volume():
    f = texture_features(Volume(np.full((5, 5, 5), 2.0), np.ones((5, 5, 5)), (1, 1, 1)))
    assert f["energy"] == 1 and f["entropy"] == 0
    assert f["contrast"] == 0 and f["inertia"] == 0
    assert f["homogeneity"] == 1 and f["max_probability"] == 1


def test_texture_mean_over_configs_matches_oracle():
    rng = np.random.default_rng(34)
    v = random_volume(rng, max_side=6)
    counts = glcm_oracle_all(v.voxels, v.mask)
    per = [texture_oracle(C) for C in counts.values()]
    per = [p for p in per if p is not None]
    got = texture_features(v)
    for name in TEXTURE_NAMES:
        assert got[name] == pytest.approx(sum(p[name] for p in per) / len(per), rel=1e-9, abs=1e-12)


def test_texture_value_ranges():
    rng = np.random.default_rng(35)
    for _ in range(10):
        f = texture_features(random_volume(rng))
        assert 0 < f["energy"] <= 1
        assert f["entropy"] >= 0
        assert 0 < f["homogeneity"] <= 1
        assert 0 < f["max_probability"] <= 1
        assert f["contrast"] >= 0


def test_texture_affine_intensity_invariance():
    rng = np.random.default_rng(36)
    for _ in range(5):
        v = random_volume(rng, integer=True)
        w = Volume(2.0 * v.voxels + 64.0, v.mask, v.spacing)
        a, b = texture_features(v), texture_features(w)
        for name in TEXTURE_NAMES:
            assert a[name] == pytest.approx(b[name], rel=1e-12, abs=1e-12)


# ------------------------------------------------------------------ handcrafted


def test_handcrafted_arity_and_names():
    rng = np.random.default_rng(41)
    f = handcrafted(random_volume(rng))
    assert len(f) == 29
    assert tuple(f) == HANDCRAFTED_NAMES
    assert all(math.isfinite(x) for x in f.values())
    assert all(n == n.lower() and " " not in n for n in f)


def test_handcrafted_cube_contains_volume():
    mask = np.zeros((12, 12, 12), dtype=bool)
    mask[1:11, 1:11, 1:11] = True
    rng = np.random.default_rng(42)
    f = handcrafted(Volume(rng.normal(size=mask.shape), mask, (1, 1, 1)))
    assert f["volume"] == 1000


def test_handcrafted_intensity_shift():
    rng = np.random.default_rng(43)
    v = random_volume(rng, integer=True)
    a = handcrafted(v)
    b = handcrafted(Volume(v.voxels + 100.0, v.mask, v.spacing))
    n = int(v.mask.sum())
    for name in ("minimum", "maximum", "mean", "median"):
        assert b[name] == pytest.approx(a[name] + 100)
    assert b["sum"] == pytest.approx(a["sum"] + 100 * n)
    for name in HANDCRAFTED_NAMES:
        if name in ("minimum", "maximum", "mean", "median", "sum"):
            continue
        assert b[name] == pytest.approx(a[name], rel=1e-9, abs=1e-9), name


def test_handcrafted_invariant_under_augmentation():
    rng = np.random.default_rng(44)
    for _ in range(3):
        v = random_volume(rng, max_side=6, integer=True)
        base = handcrafted(v)
        for tag in AUGMENTATION_TAGS[1:]:
            w = Volume(augment_array(v.voxels, tag), augment_array(v.mask, tag), v.spacing)
            got = handcrafted(w)
            for name in HANDCRAFTED_NAMES:
                if name == "orientation":
                    continue
                assert got[name] == pytest.approx(base[name], rel=1e-9, abs=1e-9), (str(tag), name)


def test_feature_table_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(45)
    t = FeatureTable(["a", "b", "c"], [0, 1, 0], ["x", "y"], rng.normal(size=(3, 2)) * 1e-3)
    path = tmp_path / "f.csv"
    write_feature_table(path, t)
    back = read_feature_table(path)
    assert back.ids == t.ids and back.names == t.names
    np.testing.assert_array_equal(back.values, t.values)
    np.testing.assert_array_equal(back.labels, t.labels)
    assert path.read_text().splitlines()[0] == "id,label,x,y"
