"""File formats: dataset CSV, ``COTRASTER`` binary rasters and PGM class masks."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AUX_FIELDS, BAND_NAMES, BAND_NAMES_NO_CIRRUS, Dataset, validate_dataset
from .errors import DimensionMismatch, IoError, ParseError, SchemaMismatch

RASTER_MAGIC = "COTRASTER"
MASK_SCALE = 100
CIRRUS_PRAGMA = re.compile(r"^#\s*cirrus_present\s*=\s*(true|false)\s*$", re.IGNORECASE)


def dataset_header(cirrus_present=True):
    bands = BAND_NAMES if cirrus_present else BAND_NAMES_NO_CIRRUS
    return list(bands) + list(AUX_FIELDS) + ["cot"]


def parse_column_map(spec):
    """Parse ``"src=dst,src2=dst2"`` into a rename dict (source header -> schema name)."""
    if not spec:
        return {}
    out = {}
    for item in spec.split(","):
        src, sep, dst = item.partition("=")
        if not sep or not src.strip() or not dst.strip():
            raise SchemaMismatch("src=dst pairs", item)
        out[src.strip()] = dst.strip()
    return out


def load_dataset_csv(path, column_map=None) -> Dataset:
    """Read a dataset CSV and validate every row.

    Lines starting with ``#`` are comments; ``#cirrus_present=false`` selects
    the 11-band schema.  ``column_map`` renames source columns before the
    header is checked, and columns may appear in any order once renamed.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read dataset {path}: {exc}") from exc
    column_map = column_map or {}
    cirrus_present = True
    header, rows, line_numbers = None, [], []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            m = CIRRUS_PRAGMA.match(line)
            if m:
                cirrus_present = m.group(1).lower() == "true"
            continue
        if header is None:
            header = [column_map.get(h.strip(), h.strip()) for h in next(csv.reader([line]))]
        else:
            rows.append(line)
            line_numbers.append(n)
    expected = dataset_header(cirrus_present)
    if header is None or sorted(header) != sorted(expected):
        raise SchemaMismatch(",".join(expected), ",".join(header or []))
    order = [header.index(name) for name in expected]
    n_bands = len(expected) - len(AUX_FIELDS) - 1
    values = np.empty((len(rows), len(expected)))
    for r, (n, fields) in enumerate(zip(line_numbers, csv.reader(rows))):
        if len(fields) != len(expected):
            raise ParseError(n, "*", f"expected {len(expected)} fields, got {len(fields)}")
        for c, j in enumerate(order):
            try:
                values[r, c] = float(fields[j])
            except ValueError:
                raise ParseError(n, expected[c], f"not a number: {fields[j]!r}") from None
    for name in ("surface_id", "cloud_type"):
        col = values[:, expected.index(name)]
        bad = np.flatnonzero(col != np.round(col))
        if bad.size:
            raise ParseError(line_numbers[bad[0]], name, "expected an integer")
    aux = {name: values[:, n_bands + i] for i, name in enumerate(AUX_FIELDS)}
    d = Dataset(
        bands=values[:, :n_bands],
        cot=values[:, -1],
        band_names=BAND_NAMES if cirrus_present else BAND_NAMES_NO_CIRRUS,
        **aux,
    )
    bad = validate_dataset(d)
    if bad is not None:
        row, name = bad
        raise ParseError(line_numbers[row], name, "value out of range")
    return d


def _fmt(v):
    return repr(float(v))


def dataset_to_csv_text(d: Dataset) -> str:
    buf = io.StringIO()
    if not d.cirrus_present:
        buf.write("#cirrus_present=false\n")
    buf.write(",".join(dataset_header(d.cirrus_present)) + "\n")
    floats = (d.sat_zenith, d.sun_zenith, d.azim_diff, d.gas_ot, d.wvp)
    for i in range(len(d)):
        parts = [_fmt(v) for v in d.bands[i]]
        parts += [_fmt(col[i]) for col in floats]
        parts += [str(int(d.surface_id[i])), str(int(d.cloud_type[i])), _fmt(d.cot[i])]
        buf.write(",".join(parts) + "\n")
    return buf.getvalue()


def save_dataset_csv(d: Dataset, path):
    """Write shortest round-trip decimal text, so reloading is exact."""
    try:
        Path(path).write_text(dataset_to_csv_text(d))
    except OSError as exc:
        raise IoError(f"cannot write dataset {path}: {exc}") from exc


@dataclass(frozen=True)
class RasterImage:
    data: np.ndarray  # (height, width, channels) float32

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


def write_container(array, path):
    """Write an ``H x W x C`` array as ``COTRASTER`` + little-endian float32, pixel-interleaved."""
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    h, w, c = a.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"{RASTER_MAGIC} {h} {w} {c}\n".encode("ascii"))
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write raster {path}: {exc}") from exc


def read_container(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read raster {path}: {exc}") from exc
    end = raw.find(b"\n")
    head = raw[:end].decode("ascii", errors="replace").split() if end >= 0 else []
    if len(head) != 4 or head[0] != RASTER_MAGIC:
        raise ParseError(1, "header", f"expected '{RASTER_MAGIC} <H> <W> <C>'")
    try:
        h, w, c = (int(v) for v in head[1:])
    except ValueError:
        raise ParseError(1, "header", "dimensions must be integers") from None
    if min(h, w, c) < 0:
        raise ParseError(1, "header", "dimensions must be non-negative")
    payload = raw[end + 1:]
    if len(payload) != 4 * h * w * c:
        raise DimensionMismatch(f"{path}: header says {h}x{w}x{c} floats, payload has {len(payload)} bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    if not np.all(np.isfinite(data)):
        raise ParseError(2, "data", "non-finite value in raster payload")
    return data.astype(np.float32)


def load_raster(path) -> RasterImage:
    data = read_container(path)
    if data.shape[2] not in (11, 12):
        raise SchemaMismatch("11 or 12 channels", data.shape[2])
    return RasterImage(data)


def save_raster(img, path):
    write_container(img.data if isinstance(img, RasterImage) else img, path)


def save_cot_map(cot_map, path):
    write_container(np.asarray(cot_map)[:, :, None], path)


def load_cot_map(path) -> np.ndarray:
    data = read_container(path)
    if data.shape[2] != 1:
        raise SchemaMismatch("1 channel", data.shape[2])
    return data[:, :, 0].astype(np.float64)


def write_class_mask(mask, path):
    """Binary PGM (P5, maxval 255) with grey value ``label * 100``."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or not np.isin(mask, (0, 1, 2)).all():
        raise DimensionMismatch("class mask must be 2-D with labels in {0, 1, 2}")
    h, w = mask.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write((mask.astype(np.uint8) * MASK_SCALE).tobytes())
    except OSError as exc:
        raise IoError(f"cannot write class mask {path}: {exc}") from exc


def read_class_mask(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read class mask {path}: {exc}") from exc
    tokens, pos = [], 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(raw, pos)
        if not m:
            raise ParseError(1, "header", "truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P5" or tokens[3] != b"255":
        raise ParseError(1, "header", "expected binary PGM (P5) with maxval 255")
    w, h = int(tokens[1]), int(tokens[2])
    payload = raw[pos + 1:]
    if len(payload) != w * h:
        raise DimensionMismatch(f"{path}: expected {w * h} pixels, found {len(payload)}")
    values = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    if not np.isin(values, (0, 100, 200)).all():
        raise ParseError(2, "data", "class mask values must be 0, 100 or 200")
    return (values // MASK_SCALE).astype(np.int64)
