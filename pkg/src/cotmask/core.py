"""Domain types shared across the package: samples, datasets and splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadRatios, EmptyDataset, OutOfRange

# Sentinel-2 MSI bands in fixed column order; B01 (aerosol) is never simulated.
BAND_NAMES = ("b02", "b03", "b04", "b05", "b06", "b07", "b08", "b8a", "b09", "b10", "b11", "b12")
BAND_NAMES_NO_CIRRUS = tuple(b for b in BAND_NAMES if b != "b10")
CIRRUS_INDEX = BAND_NAMES.index("b10")

COT_MAX = 50.0
REFLECTANCE_MAX = 1.2

CLOUD_TYPES = ("clear", "water", "ice", "mixed")
AUX_FIELDS = ("sat_zenith", "sun_zenith", "azim_diff", "gas_ot", "wvp", "surface_id", "cloud_type")


@dataclass(frozen=True)
class LabeledSample:
    bands: tuple[float, ...]
    sat_zenith_deg: float
    sun_zenith_deg: float
    azimuth_diff_deg: float
    gas_optical_thickness: float
    water_vapour: float
    surface_profile_id: int
    cloud_type_id: int
    cot: float

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(float(b) for b in self.bands))


def validate_sample(s: LabeledSample) -> LabeledSample:
    """Return ``s`` unchanged if every field is in range, else raise OutOfRange."""
    if len(s.bands) not in (11, 12):
        raise OutOfRange("bands", f"expected 11 or 12 bands, got {len(s.bands)}")
    for b in s.bands:
        if not (math.isfinite(b) and 0.0 <= b <= REFLECTANCE_MAX):
            raise OutOfRange("bands", repr(b))
    for name, value in (("sat_zenith_deg", s.sat_zenith_deg), ("sun_zenith_deg", s.sun_zenith_deg)):
        if not (0.0 <= value < 90.0):
            raise OutOfRange(name, repr(value))
    if not (0.0 <= s.azimuth_diff_deg < 360.0):
        raise OutOfRange("azimuth_diff_deg", repr(s.azimuth_diff_deg))
    if not (s.gas_optical_thickness >= 0.0 and math.isfinite(s.gas_optical_thickness)):
        raise OutOfRange("gas_optical_thickness", repr(s.gas_optical_thickness))
    if not (s.water_vapour >= 0.0 and math.isfinite(s.water_vapour)):
        raise OutOfRange("water_vapour", repr(s.water_vapour))
    if s.cloud_type_id not in (0, 1, 2, 3):
        raise OutOfRange("cloud_type_id", repr(s.cloud_type_id))
    if not (0.0 <= s.cot <= COT_MAX):
        raise OutOfRange("cot", repr(s.cot))
    return s


def _first_bad(mask):
    idx = np.flatnonzero(~mask)
    return int(idx[0]) if idx.size else None


@dataclass(frozen=True)
class Dataset:
    """Column-oriented collection of labeled samples.

    Arrays are stored per field so that tens of thousands of samples can be
    fed to the network without per-row Python objects.  ``bands`` has shape
    ``(n, len(band_names))``; every other field has shape ``(n,)``.
    """

    bands: np.ndarray
    sat_zenith: np.ndarray
    sun_zenith: np.ndarray
    azim_diff: np.ndarray
    gas_ot: np.ndarray
    wvp: np.ndarray
    surface_id: np.ndarray
    cloud_type: np.ndarray
    cot: np.ndarray
    band_names: tuple[str, ...] = field(default=BAND_NAMES)

    def __post_init__(self):
        band_names = tuple(self.band_names)
        if band_names not in (BAND_NAMES, BAND_NAMES_NO_CIRRUS):
            raise OutOfRange("band_names", str(band_names))
        object.__setattr__(self, "band_names", band_names)
        bands = np.asarray(self.bands, dtype=np.float64).reshape(-1, len(band_names))
        object.__setattr__(self, "bands", bands)
        n = bands.shape[0]
        for name in ("sat_zenith", "sun_zenith", "azim_diff", "gas_ot", "wvp", "cot"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape[0] != n:
                raise OutOfRange(name, f"length {arr.shape[0]} != {n}")
            object.__setattr__(self, name, arr)
        for name in ("surface_id", "cloud_type"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)
            if arr.shape[0] != n:
                raise OutOfRange(name, f"length {arr.shape[0]} != {n}")
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.bands.shape[0]

    @property
    def cirrus_present(self):
        return "b10" in self.band_names

    @property
    def n_bands(self):
        return len(self.band_names)

    def sample(self, i) -> LabeledSample:
        return LabeledSample(
            bands=tuple(self.bands[i]),
            sat_zenith_deg=float(self.sat_zenith[i]),
            sun_zenith_deg=float(self.sun_zenith[i]),
            azimuth_diff_deg=float(self.azim_diff[i]),
            gas_optical_thickness=float(self.gas_ot[i]),
            water_vapour=float(self.wvp[i]),
            surface_profile_id=int(self.surface_id[i]),
            cloud_type_id=int(self.cloud_type[i]),
            cot=float(self.cot[i]),
        )

    def __iter__(self):
        return (self.sample(i) for i in range(len(self)))

    def subset(self, index) -> Dataset:
        index = np.asarray(index)
        return Dataset(
            bands=self.bands[index],
            sat_zenith=self.sat_zenith[index],
            sun_zenith=self.sun_zenith[index],
            azim_diff=self.azim_diff[index],
            gas_ot=self.gas_ot[index],
            wvp=self.wvp[index],
            surface_id=self.surface_id[index],
            cloud_type=self.cloud_type[index],
            cot=self.cot[index],
            band_names=self.band_names,
        )

    def without_cirrus(self) -> Dataset:
        """Drop the B10 column, e.g. to train models for Level-2A imagery."""
        if not self.cirrus_present:
            return self
        keep = [i for i, b in enumerate(self.band_names) if b != "b10"]
        return Dataset(
            bands=self.bands[:, keep],
            sat_zenith=self.sat_zenith,
            sun_zenith=self.sun_zenith,
            azim_diff=self.azim_diff,
            gas_ot=self.gas_ot,
            wvp=self.wvp,
            surface_id=self.surface_id,
            cloud_type=self.cloud_type,
            cot=self.cot,
            band_names=BAND_NAMES_NO_CIRRUS,
        )

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], band_names=BAND_NAMES) -> Dataset:
        band_names = tuple(band_names)
        if not samples:
            return cls.empty(band_names)
        return cls(
            bands=np.array([s.bands for s in samples], dtype=np.float64),
            sat_zenith=[s.sat_zenith_deg for s in samples],
            sun_zenith=[s.sun_zenith_deg for s in samples],
            azim_diff=[s.azimuth_diff_deg for s in samples],
            gas_ot=[s.gas_optical_thickness for s in samples],
            wvp=[s.water_vapour for s in samples],
            surface_id=[s.surface_profile_id for s in samples],
            cloud_type=[s.cloud_type_id for s in samples],
            cot=[s.cot for s in samples],
            band_names=band_names,
        )

    @classmethod
    def empty(cls, band_names=BAND_NAMES) -> Dataset:
        z = np.zeros(0)
        return cls(np.zeros((0, len(band_names))), z, z, z, z, z, z, z, z, band_names=tuple(band_names))


def validate_dataset(d: Dataset):
    """Vectorised :func:`validate_sample` over a whole dataset.

    Returns None when every row is valid, else ``(row_index, field_name)`` for
    the first offending row.
    """
    checks = (
        ("bands", np.all(np.isfinite(d.bands) & (d.bands >= 0) & (d.bands <= REFLECTANCE_MAX), axis=1)),
        ("sat_zenith", (d.sat_zenith >= 0) & (d.sat_zenith < 90)),
        ("sun_zenith", (d.sun_zenith >= 0) & (d.sun_zenith < 90)),
        ("azim_diff", (d.azim_diff >= 0) & (d.azim_diff < 360)),
        ("gas_ot", np.isfinite(d.gas_ot) & (d.gas_ot >= 0)),
        ("wvp", np.isfinite(d.wvp) & (d.wvp >= 0)),
        ("cloud_type", (d.cloud_type >= 0) & (d.cloud_type <= 3)),
        ("cot", (d.cot >= 0) & (d.cot <= COT_MAX)),
    )
    worst = None
    for name, ok in checks:
        bad = _first_bad(ok)
        if bad is not None and (worst is None or bad < worst[0]):
            worst = (bad, name)
    return worst


@dataclass(frozen=True)
class SplitRatios:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1

    def __post_init__(self):
        parts = (self.train, self.val, self.test)
        if not all(0.0 < r < 1.0 for r in parts) or abs(sum(parts) - 1.0) > 1e-9:
            raise BadRatios(f"split ratios must lie in (0, 1) and sum to 1, got {parts}")


def split_sizes(n, ratios: SplitRatios):
    n_val = int(round(n * ratios.val))
    n_test = int(round(n * ratios.test))
    return n - n_val - n_test, n_val, n_test


def split_dataset(d: Dataset, r: SplitRatios | tuple, seed: int):
    """Randomly partition ``d`` into (train, val, test).

    Validation and test sizes are ``round(n * ratio)``; train takes the
    remainder.  The permutation depends only on ``seed`` and ``len(d)``.
    """
    if not isinstance(r, SplitRatios):
        r = SplitRatios(*r)
    n = len(d)
    if n < 3:
        raise EmptyDataset(f"need at least 3 samples to split, got {n}")
    return tuple(d.subset(idx) for idx in split_indices(n, r, seed))


def split_indices(n, r: SplitRatios, seed: int):
    """Index form of :func:`split_dataset`, for checking the partition."""
    n_train, n_val, _ = split_sizes(n, r)
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5B117])).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]), np.sort(perm[n_train + n_val:])
