"""Surrogate radiative transfer: scene sampling and 12-band TOA reflectance.

This is a desk-scale stand-in for a full radiative-transfer simulation.  A
single plane-parallel, non-absorbing two-stream cloud layer sits over a
Lambertian surface, and gas absorption is a Beer-Lambert factor along the
sun-surface-sensor path.  The model is simple on purpose: it reproduces the
qualitative structure of the learning problem (thin clouds are hard, bright
surfaces mask clouds, ice and water differ in the SWIR) and makes no claim to
physical validity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BAND_NAMES, COT_MAX, REFLECTANCE_MAX, Dataset
from .errors import BadCount, DegenerateGeometry

FAMILIES = ("vegetation", "rock", "non_photosynthetic_vegetation", "water", "soil")
# Sample counts of the five main surface types in the reference dataset.
FAMILY_COUNTS = np.array([140_984, 21_319, 15_790, 11_526, 10_381])
FAMILY_PROBS = FAMILY_COUNTS / FAMILY_COUNTS.sum()

#                      B02   B03   B04   B05   B06   B07   B08   B8A   B09   B10   B11   B12
_PROTOTYPES = {
    "vegetation": [
        [0.04, 0.08, 0.04, 0.10, 0.30, 0.40, 0.45, 0.46, 0.44, 0.30, 0.25, 0.12],  # broadleaf
        [0.03, 0.06, 0.03, 0.08, 0.22, 0.30, 0.34, 0.35, 0.33, 0.22, 0.18, 0.08],  # conifer
        [0.05, 0.10, 0.07, 0.13, 0.28, 0.35, 0.38, 0.39, 0.37, 0.28, 0.27, 0.15],  # grass
    ],
    "rock": [
        [0.15, 0.18, 0.21, 0.23, 0.24, 0.25, 0.26, 0.27, 0.27, 0.30, 0.32, 0.30],
        [0.30, 0.34, 0.37, 0.38, 0.39, 0.40, 0.41, 0.41, 0.41, 0.42, 0.44, 0.40],  # limestone/marble
    ],
    "non_photosynthetic_vegetation": [
        [0.08, 0.11, 0.15, 0.19, 0.22, 0.25, 0.28, 0.29, 0.30, 0.32, 0.35, 0.30],
    ],
    "water": [
        [0.05, 0.04, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.00, 0.00, 0.00],  # liquid
        [0.95, 0.95, 0.93, 0.92, 0.90, 0.88, 0.85, 0.84, 0.75, 0.25, 0.08, 0.05],  # fresh snow
        [0.70, 0.68, 0.64, 0.62, 0.58, 0.55, 0.50, 0.49, 0.40, 0.10, 0.03, 0.02],  # old snow / ice
    ],
    "soil": [
        [0.10, 0.14, 0.19, 0.22, 0.24, 0.26, 0.28, 0.29, 0.30, 0.34, 0.38, 0.36],
        [0.06, 0.08, 0.11, 0.13, 0.15, 0.17, 0.19, 0.20, 0.21, 0.24, 0.28, 0.26],  # dark organic
    ],
}
ALBEDO_JITTER = 0.05

# Relative sensitivity of each band's gas path to column water vapour.
WATER_VAPOUR_SENSITIVITY = np.array([0.0, 0.0, 0.0, 0.02, 0.02, 0.03, 0.05, 0.08, 0.9, 1.5, 0.05, 0.1])
SWIR = np.array([b in ("b11", "b12") for b in BAND_NAMES])

ASYMMETRY = {"clear": 0.85, "water": 0.85, "ice": 0.80, "mixed": 0.825}
SWIR_ABSORPTION = {"clear": 1.0, "water": 0.95, "ice": 0.85, "mixed": 0.90}
PARTS = ("clear", "water", "ice", "mixed")

COT_GAMMA_SHAPE = 1.6
COT_GAMMA_SCALE = 4.0

SUN_ZENITH_MAX = 70.0
SAT_ZENITH_MAX = 60.0
GAS_OT_MAX = 0.3
WATER_VAPOUR_MAX = 5.0


@dataclass(frozen=True)
class SurfaceSpectrum:
    surface_family: str
    albedo: np.ndarray
    profile_id: int


@dataclass(frozen=True)
class SceneParams:
    cloud_type_id: int
    cot: float
    asymmetry: float
    swir_absorption: np.ndarray
    sun_zenith_deg: float
    sat_zenith_deg: float
    azimuth_diff_deg: float
    gas_optical_thickness: float
    water_vapour: float


def _profile_id(family_index, sub_index):
    return 100 * (family_index + 1) + sub_index


def sample_surface(rng: np.random.Generator) -> SurfaceSpectrum:
    fam = int(rng.choice(len(FAMILIES), p=FAMILY_PROBS))
    family = FAMILIES[fam]
    protos = _PROTOTYPES[family]
    sub = int(rng.integers(len(protos)))
    jitter = rng.uniform(-ALBEDO_JITTER, ALBEDO_JITTER, size=len(BAND_NAMES))
    albedo = np.clip(np.asarray(protos[sub]) + jitter, 0.0, 1.0)
    return SurfaceSpectrum(family, albedo, _profile_id(fam, sub))


def family_of_profile(profile_id):
    """Map a surface profile id back to its family name."""
    return FAMILIES[int(profile_id) // 100 - 1]


def sample_cot(rng: np.random.Generator) -> float:
    # truncated gamma by rejection; P(x > 50) is ~1e-5 so this almost never loops
    while True:
        cot = rng.gamma(COT_GAMMA_SHAPE, COT_GAMMA_SCALE)
        if cot <= COT_MAX:
            return float(cot)


def sample_scene(rng: np.random.Generator, part: str, failed_fraction: float = 0.0) -> SceneParams:
    """Draw cloud, geometry and atmosphere for one sample of the given part.

    ``failed_fraction`` is the probability that a cloudy sample keeps its cloud
    type label but has its cloud removed (COT 0), mimicking scenes whose cloud
    failed a consistency check in the reference simulation.
    """
    cloud_type_id = PARTS.index(part)
    sun = rng.uniform(0.0, SUN_ZENITH_MAX)
    sat = rng.uniform(0.0, SAT_ZENITH_MAX)
    azim = rng.uniform(0.0, 360.0)
    gas = rng.uniform(0.0, GAS_OT_MAX)
    wv = rng.uniform(0.0, WATER_VAPOUR_MAX)
    cot = 0.0
    if part != "clear":
        cot = sample_cot(rng)
        if failed_fraction > 0.0 and rng.random() < failed_fraction:
            cot = 0.0
    swir = np.where(SWIR, SWIR_ABSORPTION[part], 1.0)
    return SceneParams(cloud_type_id, cot, ASYMMETRY[part], swir, sun, sat, azim, gas, wv)


def toa_reflectance_arrays(cot, asymmetry, swir_absorption, sun_zenith_deg, sat_zenith_deg,
                           gas_ot, water_vapour, albedo):
    """Vectorised forward model.

    Scalars broadcast against ``(n,)`` per-sample arrays; ``swir_absorption``
    and ``albedo`` are ``(n, 12)`` (or ``(12,)``).  Returns ``(n, 12)``.
    """
    sun_zenith_deg = np.asarray(sun_zenith_deg, dtype=np.float64)
    sat_zenith_deg = np.asarray(sat_zenith_deg, dtype=np.float64)
    if np.any(sun_zenith_deg >= 90.0) or np.any(sat_zenith_deg >= 90.0):
        raise DegenerateGeometry("zenith angles must be below 90 degrees")
    mu_sun = np.cos(np.radians(sun_zenith_deg))[..., None]
    mu_sat = np.cos(np.radians(sat_zenith_deg))[..., None]
    cot = np.asarray(cot, dtype=np.float64)[..., None]
    g = np.asarray(asymmetry, dtype=np.float64)[..., None]
    gas = np.asarray(gas_ot, dtype=np.float64)[..., None]
    wv = np.asarray(water_vapour, dtype=np.float64)[..., None]
    albedo = np.asarray(albedo, dtype=np.float64)

    x = 0.5 * (1.0 - g) * cot / mu_sun
    r_cloud = x / (1.0 + x) * swir_absorption
    t_cloud = 1.0 - r_cloud
    r = r_cloud + t_cloud * t_cloud * albedo / (1.0 - albedo * r_cloud)

    airmass = 1.0 / mu_sun + 1.0 / mu_sat
    band_airmass = airmass * (1.0 + WATER_VAPOUR_SENSITIVITY * wv)
    r = r * np.exp(-gas * band_airmass)
    return np.clip(r, 0.0, REFLECTANCE_MAX)


def toa_reflectance(scene: SceneParams, surface: SurfaceSpectrum) -> np.ndarray:
    """12-band top-of-atmosphere reflectance for one scene."""
    return toa_reflectance_arrays(
        scene.cot, scene.asymmetry, scene.swir_absorption, scene.sun_zenith_deg,
        scene.sat_zenith_deg, scene.gas_optical_thickness, scene.water_vapour, surface.albedo,
    )


def part_of_index(i, n):
    """Samples are laid out as four contiguous equal blocks: clear, water, ice, mixed."""
    return PARTS[(4 * i) // n]


def sample_rng(seed, i):
    """Independent random stream for sample ``i``, so output never depends on chunking."""
    return np.random.default_rng([int(seed), int(i)])


def generate_dataset(n: int, seed: int, failed_fraction: float = 0.0) -> Dataset:
    """Generate ``n`` labeled samples, ``n/4`` per cloud part."""
    if n <= 0 or n % 4:
        raise BadCount(f"sample count must be a positive multiple of 4, got {n}")
    albedo = np.empty((n, len(BAND_NAMES)))
    swir = np.empty((n, len(BAND_NAMES)))
    cols = {k: np.empty(n) for k in ("cot", "g", "sun", "sat", "azim", "gas", "wv")}
    surface_id = np.empty(n, dtype=np.int64)
    cloud_type = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng = sample_rng(seed, i)
        surface = sample_surface(rng)
        scene = sample_scene(rng, part_of_index(i, n), failed_fraction)
        albedo[i] = surface.albedo
        swir[i] = scene.swir_absorption
        surface_id[i] = surface.profile_id
        cloud_type[i] = scene.cloud_type_id
        cols["cot"][i] = scene.cot
        cols["g"][i] = scene.asymmetry
        cols["sun"][i] = scene.sun_zenith_deg
        cols["sat"][i] = scene.sat_zenith_deg
        cols["azim"][i] = scene.azimuth_diff_deg
        cols["gas"][i] = scene.gas_optical_thickness
        cols["wv"][i] = scene.water_vapour
    bands = toa_reflectance_arrays(cols["cot"], cols["g"], swir, cols["sun"], cols["sat"],
                                   cols["gas"], cols["wv"], albedo)
    return Dataset(
        bands=bands,
        sat_zenith=cols["sat"],
        sun_zenith=cols["sun"],
        azim_diff=cols["azim"],
        gas_ot=cols["gas"],
        wvp=cols["wv"],
        surface_id=surface_id,
        cloud_type=cloud_type,
        cot=cols["cot"],
        band_names=BAND_NAMES,
    )


def render_scenes(cot_map: np.ndarray, seed: int, part: str = "water") -> np.ndarray:
    """Build an ``H x W x 12`` reflectance image from a ground-truth COT map.

    Each pixel gets its own surface and geometry draw; pixels with COT 0 are
    rendered clear, the rest as ``part`` clouds with their COT overridden.
    """
    cot_map = np.asarray(cot_map, dtype=np.float64)
    h, w = cot_map.shape
    flat = cot_map.reshape(-1)
    out = np.empty((flat.size, len(BAND_NAMES)))
    for i, cot in enumerate(flat):
        rng = sample_rng(seed, i)
        surface = sample_surface(rng)
        scene = sample_scene(rng, "clear" if cot == 0 else part)
        out[i] = toa_reflectance_arrays(
            cot, scene.asymmetry, scene.swir_absorption, scene.sun_zenith_deg, scene.sat_zenith_deg,
            scene.gas_optical_thickness, scene.water_vapour, surface.albedo,
        )
    return out.reshape(h, w, len(BAND_NAMES))
