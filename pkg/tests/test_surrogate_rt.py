import numpy as np
import pytest

from cotmask import ingest
from cotmask.errors import BadCount, DegenerateGeometry
from cotmask.surrogate_rt import (
    FAMILIES,
    FAMILY_PROBS,
    family_of_profile,
    generate_dataset,
    render_scenes,
    sample_scene,
    sample_surface,
    toa_reflectance_arrays,
)


def test_family_probabilities_sum_to_one():
    assert FAMILY_PROBS.sum() == pytest.approx(1.0, abs=1e-15)


def test_vegetation_fraction():
    rng = np.random.default_rng(0)
    fams = [sample_surface(rng).surface_family for _ in range(100_000)]
    assert 0.695 <= fams.count("vegetation") / len(fams) <= 0.715


def test_surface_albedo_in_unit_interval_and_reproducible():
    for seed in range(200):
        s = sample_surface(np.random.default_rng(seed))
        assert s.albedo.shape == (12,)
        assert np.all((0.0 <= s.albedo) & (s.albedo <= 1.0))
        assert family_of_profile(s.profile_id) == s.surface_family
    a = sample_surface(np.random.default_rng(5)).albedo
    np.testing.assert_array_equal(a, sample_surface(np.random.default_rng(5)).albedo)


def test_clear_scene_has_zero_cot():
    rng = np.random.default_rng(1)
    assert all(sample_scene(rng, "clear").cot == 0.0 for _ in range(100))


def test_water_cot_skews_thin_and_is_capped():
    rng = np.random.default_rng(2)
    cots = np.array([sample_scene(rng, "water").cot for _ in range(10_000)])
    assert np.median(cots) < 10.0
    assert cots.max() <= 50.0 and cots.min() > 0.0


def test_failed_fraction_keeps_label():
    rng = np.random.default_rng(3)
    scenes = [sample_scene(rng, "ice", failed_fraction=1.0) for _ in range(20)]
    assert all(s.cot == 0.0 and s.cloud_type_id == 2 for s in scenes)


def refl(cot, albedo, g=0.85, swir=1.0, sun=0.0, sat=0.0, gas=0.0, wv=0.0):
    return toa_reflectance_arrays(cot, g, np.full(12, swir), sun, sat, gas, wv, albedo)


def test_closed_form_cloud_reflectance():
    # x = 0.5 * 0.15 * 50 = 3.75, R_c = 3.75 / 4.75
    r = refl(50.0, np.zeros(12))
    np.testing.assert_allclose(r, 3.75 / 4.75, rtol=0, atol=1e-15)


def test_no_cloud_no_gas_returns_albedo():
    a = np.linspace(0.0, 1.0, 12)
    np.testing.assert_array_equal(refl(0.0, a, sun=45.0, sat=30.0, wv=3.0), a)


def test_gas_attenuation():
    a = np.full(12, 0.5)
    r = refl(0.0, a, gas=0.1, sun=60.0, sat=0.0)
    np.testing.assert_allclose(r, 0.5 * np.exp(-0.1 * 3.0), rtol=1e-12)


def test_grazing_geometry_rejected():
    with pytest.raises(DegenerateGeometry):
        refl(1.0, np.zeros(12), sun=90.0)


def test_dataset_layout(small_dataset):
    d = small_dataset
    assert len(d) == 400
    np.testing.assert_array_equal(np.bincount(d.cloud_type), [100, 100, 100, 100])
    assert np.all(d.cot[d.cloud_type == 0] == 0.0)
    assert np.all(d.cot[d.cloud_type > 0] > 0.0)
    assert {family_of_profile(s) for s in d.surface_id} <= set(FAMILIES)


def test_dataset_is_chunk_independent():
    # sample i depends only on (seed, i) within its part
    a = generate_dataset(8, 11)
    b = generate_dataset(8, 11)
    np.testing.assert_array_equal(a.bands, b.bands)
    assert ingest.dataset_to_csv_text(a) == ingest.dataset_to_csv_text(b)


@pytest.mark.parametrize("n", [0, 6, -4])
def test_bad_count(n):
    with pytest.raises(BadCount):
        generate_dataset(n, 0)


def test_render_scenes_clear_pixels_match_surface_path():
    cot = np.array([[0.0, 5.0], [1.0, 0.0]])
    img = render_scenes(cot, 9)
    assert img.shape == (2, 2, 12)
    assert np.all((img >= 0) & (img <= 1.2))
    np.testing.assert_array_equal(img, render_scenes(cot, 9))
