import numpy as np
import pytest

from cotmask import ingest
from cotmask.core import BAND_NAMES_NO_CIRRUS, Dataset
from cotmask.errors import DimensionMismatch, IoError, ParseError, SchemaMismatch
from cotmask.surrogate_rt import generate_dataset

HEADER = ",".join(ingest.dataset_header())
ROW = ",".join(["0.3"] * 12 + ["10", "20", "30", "0.1", "1.0", "100", "1", "5.0"])


def test_two_rows(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text(f"# comment\n{HEADER}\n{ROW}\n{ROW}\n")
    d = ingest.load_dataset_csv(f)
    assert len(d) == 2 and d.cot.tolist() == [5.0, 5.0]


def test_cot_above_cap_is_a_parse_error(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text(f"{HEADER}\n{ROW}\n{ROW[:-3]}61\n")
    with pytest.raises(ParseError) as exc:
        ingest.load_dataset_csv(f)
    assert (exc.value.line, exc.value.column) == (3, "cot")


def test_bad_number_reports_line_and_column(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text(f"{HEADER}\n{ROW.replace('20', 'abc', 1)}\n")
    with pytest.raises(ParseError) as exc:
        ingest.load_dataset_csv(f)
    assert (exc.value.line, exc.value.column) == (2, "sun_zenith")


def test_cirrus_pragma_selects_eleven_bands(tmp_path):
    header = ",".join(ingest.dataset_header(False))
    row = ",".join(["0.3"] * 11 + ["10", "20", "30", "0.1", "1.0", "100", "1", "5.0"])
    f = tmp_path / "d.csv"
    f.write_text(f"#cirrus_present=false\n{header}\n{row}\n")
    d = ingest.load_dataset_csv(f)
    assert d.band_names == BAND_NAMES_NO_CIRRUS and d.bands.shape == (1, 11)


def test_missing_b10_without_pragma_is_schema_error(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text(",".join(ingest.dataset_header(False)) + "\n")
    with pytest.raises(SchemaMismatch):
        ingest.load_dataset_csv(f)


def test_column_map_and_reordering(tmp_path):
    names = ingest.dataset_header()
    renamed = ["B2" if n == "b02" else "tau" if n == "cot" else n for n in names]
    order = list(reversed(range(len(names))))
    values = ROW.split(",")
    f = tmp_path / "d.csv"
    f.write_text(",".join(renamed[i] for i in order) + "\n" + ",".join(values[i] for i in order) + "\n")
    d = ingest.load_dataset_csv(f, ingest.parse_column_map("B2=b02, tau=cot"))
    assert d.cot[0] == 5.0 and d.surface_id[0] == 100
    with pytest.raises(SchemaMismatch):
        ingest.parse_column_map("B2")


def test_dataset_round_trip_exact(tmp_path):
    d = generate_dataset(1000, 3)
    ingest.save_dataset_csv(d, tmp_path / "d.csv")
    back = ingest.load_dataset_csv(tmp_path / "d.csv")
    for name in ("bands", "sat_zenith", "sun_zenith", "azim_diff", "gas_ot", "wvp", "surface_id", "cloud_type", "cot"):
        assert np.max(np.abs(getattr(back, name) - getattr(d, name))) < 1e-9


def test_empty_dataset_writes_header_only(tmp_path):
    ingest.save_dataset_csv(Dataset.empty(), tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text() == HEADER + "\n"


def test_unwritable_path(tmp_path):
    with pytest.raises(IoError):
        ingest.save_dataset_csv(Dataset.empty(), tmp_path / "missing" / "d.csv")
    with pytest.raises(IoError):
        ingest.load_dataset_csv(tmp_path / "nope.csv")


def test_raster_size_and_round_trip(tmp_path):
    img = np.random.default_rng(0).uniform(0, 1, (128, 128, 12)).astype(np.float32)
    ingest.save_raster(img, tmp_path / "r")
    back = ingest.load_raster(tmp_path / "r")
    assert back.data.size == 196_608
    np.testing.assert_array_equal(back.data, img)
    raw = (tmp_path / "r").read_bytes()
    assert raw.startswith(b"COTRASTER 128 128 12\n") and len(raw) == 21 + 4 * 196_608


def test_truncated_raster(tmp_path):
    ingest.save_raster(np.zeros((4, 4, 12), np.float32), tmp_path / "r")
    (tmp_path / "r").write_bytes((tmp_path / "r").read_bytes()[:-4])
    with pytest.raises(DimensionMismatch):
        ingest.load_raster(tmp_path / "r")


def test_raster_channel_count(tmp_path):
    ingest.write_container(np.zeros((2, 2, 13)), tmp_path / "r")
    with pytest.raises(SchemaMismatch):
        ingest.load_raster(tmp_path / "r")


def test_raster_bad_header_and_nan(tmp_path):
    (tmp_path / "r").write_bytes(b"RASTER 1 1 1\n\0\0\0\0")
    with pytest.raises(ParseError):
        ingest.read_container(tmp_path / "r")
    ingest.write_container(np.full((1, 1, 11), np.nan), tmp_path / "r")
    with pytest.raises(ParseError):
        ingest.load_raster(tmp_path / "r")


def test_cot_map_round_trip(tmp_path):
    c = np.arange(6.0).reshape(2, 3)
    ingest.save_cot_map(c, tmp_path / "c")
    np.testing.assert_array_equal(ingest.load_cot_map(tmp_path / "c"), c)


def test_class_mask_bytes(tmp_path):
    ingest.write_class_mask(np.zeros((4, 4), int), tmp_path / "m.pgm")
    raw = (tmp_path / "m.pgm").read_bytes()
    assert raw == b"P5\n4 4\n255\n" + bytes(16)
    mask = np.zeros((4, 4), int)
    mask[1, 2] = 2
    ingest.write_class_mask(mask, tmp_path / "m.pgm")
    payload = (tmp_path / "m.pgm").read_bytes()[len(b"P5\n4 4\n255\n"):]
    assert payload.count(200) == 1 and payload.count(0) == 15


def test_class_mask_round_trip(tmp_path):
    mask = np.random.default_rng(0).integers(0, 3, (7, 5))
    ingest.write_class_mask(mask, tmp_path / "m.pgm")
    np.testing.assert_array_equal(ingest.read_class_mask(tmp_path / "m.pgm"), mask)
    with pytest.raises(DimensionMismatch):
        ingest.write_class_mask(mask + 1, tmp_path / "m.pgm")
