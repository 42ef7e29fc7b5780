import math

import numpy as np
import pytest

from cotmask.core import (
    BAND_NAMES,
    Dataset,
    LabeledSample,
    SplitRatios,
    split_dataset,
    split_indices,
    split_sizes,
    validate_dataset,
    validate_sample,
)
from cotmask.errors import BadRatios, EmptyDataset, OutOfRange


def make_sample(**kw):
    base = dict(bands=[0.3] * 12, sat_zenith_deg=10.0, sun_zenith_deg=20.0, azimuth_diff_deg=30.0,
                gas_optical_thickness=0.1, water_vapour=1.0, surface_profile_id=100, cloud_type_id=1, cot=5.0)
    base.update(kw)
    return LabeledSample(**base)


def test_cot_at_cap_is_valid():
    s = make_sample(cot=50.0)
    assert validate_sample(s) is s


@pytest.mark.parametrize("kw, field", [
    (dict(cot=-1.0), "cot"),
    (dict(cot=50.0001), "cot"),
    (dict(bands=[0.3] * 11 + [math.nan]), "bands"),
    (dict(bands=[0.3] * 10), "bands"),
    (dict(sun_zenith_deg=90.0), "sun_zenith_deg"),
    (dict(cloud_type_id=4), "cloud_type_id"),
    (dict(water_vapour=-0.1), "water_vapour"),
])
def test_out_of_range_names_the_field(kw, field):
    with pytest.raises(OutOfRange) as exc:
        validate_sample(make_sample(**kw))
    assert exc.value.field == field


def test_dataset_round_trips_samples():
    samples = [make_sample(cot=float(i)) for i in range(5)]
    d = Dataset.from_samples(samples)
    assert len(d) == 5
    assert d.sample(3) == samples[3]
    assert list(d) == samples
    assert validate_dataset(d) is None


def test_validate_dataset_reports_first_bad_row():
    d = Dataset.from_samples([make_sample(), make_sample()])
    cot = d.cot.copy()
    cot[1] = 61.0
    bad = Dataset(**{**d.__dict__, "cot": cot})
    assert validate_dataset(bad) == (1, "cot")


def test_without_cirrus_drops_b10():
    d = Dataset.from_samples([make_sample(bands=np.arange(12) / 20)])
    d11 = d.without_cirrus()
    assert d11.n_bands == 11 and not d11.cirrus_present
    assert "b10" not in d11.band_names
    assert d11.bands[0, 9] == d.bands[0, BAND_NAMES.index("b11")]


def test_paper_split_sizes():
    assert split_sizes(200_000, SplitRatios(0.8, 0.1, 0.1)) == (160_000, 20_000, 20_000)


def test_bad_ratios():
    with pytest.raises(BadRatios):
        SplitRatios(0.5, 0.5, 0.5)


def test_split_is_deterministic_partition():
    a = split_indices(1000, SplitRatios(), 3)
    b = split_indices(1000, SplitRatios(), 3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert sorted(np.concatenate(a).tolist()) == list(range(1000))
    c = split_indices(1000, SplitRatios(), 4)
    assert not np.array_equal(a[0], c[0])


def test_split_dataset_sizes(small_dataset):
    tr, va, te = split_dataset(small_dataset, SplitRatios(), 0)
    assert (len(tr), len(va), len(te)) == (320, 40, 40)


def test_split_needs_three_samples():
    d = Dataset.from_samples([make_sample(), make_sample()])
    with pytest.raises(EmptyDataset):
        split_dataset(d, SplitRatios(), 0)
