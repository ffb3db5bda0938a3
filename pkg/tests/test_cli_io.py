import struct

import numpy as np
import pytest

from errors import (
    ConfigurationError,
    InvalidArgumentError,
    MagicMismatchError,
    MissingValueError,
    NonDenseSeriesError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from helper.cli_io import (
    HEADER,
    atomic_path,
    decode_field_series,
    encode_field_series,
    load_exposure,
    load_field_series,
    read_json_config,
    write_field_series,
)
from helper.field_core import regular_grid
from models.field import FieldSeries


@pytest.fixture
def small_series(rng):
    grid = regular_grid(5, 1, spacing=0.25, origin=(10.0, 45.0), coord_system="lonlat")
    values = rng.gamma(2.0, size=(7, 5)).astype(np.float32)
    return FieldSeries(grid=grid, values=values)


def test_binary_round_trip_is_bit_identical(tmp_path, small_series):
    path = write_field_series(small_series, tmp_path / "field.bin")
    loaded = load_field_series(path)
    assert loaded.values.dtype == np.float32
    assert loaded.values.tobytes() == small_series.values.tobytes()
    np.testing.assert_array_equal(loaded.grid.site_coords, small_series.grid.site_coords)
    assert loaded.grid.coord_system == "lonlat"
    assert encode_field_series(loaded) == path.read_bytes()


def test_binary_header_layout(small_series):
    payload = encode_field_series(small_series)
    magic, version, sites, times, code = HEADER.unpack_from(payload)
    assert (magic, version, sites, times, code) == (b"STXF", 1, 5, 7, 0)
    assert len(payload) == HEADER.size + 16 * 5 + 4 * 35


def test_truncated_payload(small_series):
    payload = encode_field_series(small_series)
    with pytest.raises(TruncatedPayloadError, match="truncated payload"):
        decode_field_series(payload[:-1])
    with pytest.raises(TruncatedPayloadError):
        decode_field_series(payload[:8])


def test_bad_magic_and_version(small_series):
    payload = bytearray(encode_field_series(small_series))
    with pytest.raises(MagicMismatchError):
        decode_field_series(b"NOPE" + bytes(payload[4:]))
    payload[4] = 2
    with pytest.raises(UnsupportedVersionError):
        decode_field_series(bytes(payload))


def test_unknown_coordinate_code(small_series):
    payload = bytearray(encode_field_series(small_series))
    payload[HEADER.size - 1] = 9
    with pytest.raises(InvalidArgumentError):
        decode_field_series(bytes(payload))


def test_nan_value_rejected(small_series):
    payload = encode_field_series(small_series)
    with pytest.raises(MissingValueError):
        decode_field_series(payload[:-4] + struct.pack("<f", float("nan")))


@pytest.mark.parametrize("bad", [float("inf"), float("-inf")])
def test_infinite_value_rejected(small_series, bad):
    payload = encode_field_series(small_series)
    with pytest.raises(MissingValueError, match="non-finite"):
        decode_field_series(payload[:-4] + struct.pack("<f", bad))


def test_trailing_bytes_ignored(small_series):
    loaded = decode_field_series(encode_field_series(small_series) + b"\x00\x00")
    np.testing.assert_array_equal(loaded.values, small_series.values)


def test_csv_round_trip(tmp_path, small_series):
    path = write_field_series(small_series, tmp_path / "field.csv", fmt="csv")
    assert (tmp_path / "sites.csv").exists()
    loaded = load_field_series(path, fmt="csv", coord_system="lonlat")
    np.testing.assert_array_equal(loaded.values.astype(np.float32), small_series.values)
    np.testing.assert_array_equal(loaded.grid.site_coords, small_series.grid.site_coords)


def test_csv_round_trip_float64(tmp_path, rng, grid_2x2):
    series = FieldSeries(grid=grid_2x2, values=rng.normal(size=(6, 4)) / 3.0)
    loaded = load_field_series(write_field_series(series, tmp_path / "f.csv", fmt="csv"), fmt="csv")
    np.testing.assert_array_equal(loaded.values, series.values)


def test_csv_missing_pair(tmp_path, small_series):
    path = write_field_series(small_series, tmp_path / "field.csv", fmt="csv")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:3] + lines[4:]) + "\n")
    with pytest.raises(NonDenseSeriesError, match="non-dense series"):
        load_field_series(path, fmt="csv")


def test_csv_duplicate_pair(tmp_path, small_series):
    path = write_field_series(small_series, tmp_path / "field.csv", fmt="csv")
    lines = path.read_text().splitlines()
    lines[2] = lines[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(NonDenseSeriesError):
        load_field_series(path, fmt="csv")


def test_csv_missing_value(tmp_path):
    (tmp_path / "sites.csv").write_text("site,x,y\n0,0,0\n1,1,0\n")
    path = tmp_path / "field.csv"
    path.write_text("time,site,value\n0,0,1.5\n0,1,\n")
    with pytest.raises(MissingValueError):
        load_field_series(path, fmt="csv")


def test_csv_infinite_value(tmp_path):
    (tmp_path / "sites.csv").write_text("site,x,y\n0,0,0\n1,1,0\n")
    path = tmp_path / "field.csv"
    path.write_text("time,site,value\n0,0,1.5\n0,1,inf\n")
    with pytest.raises(MissingValueError, match="non-finite"):
        load_field_series(path, fmt="csv")


def test_missing_files(tmp_path):
    with pytest.raises(ConfigurationError):
        load_field_series(tmp_path / "absent.bin")
    path = tmp_path / "field.csv"
    path.write_text("time,site,value\n0,0,1.0\n")
    with pytest.raises(ConfigurationError):
        load_field_series(path, fmt="csv")


def test_atomic_path_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.json"
    with pytest.raises(RuntimeError):
        with atomic_path(target) as tmp:
            tmp.write_text("partial")
            raise RuntimeError("interrupted")
    assert list(tmp_path.iterdir()) == []

    with atomic_path(target) as tmp:
        tmp.write_text("done")
    assert target.read_text() == "done"
    assert list(tmp_path.iterdir()) == [target]


def test_load_exposure(tmp_path):
    path = tmp_path / "exposure.csv"
    path.write_text("site,weight\n0,2.0\n3,0.5\n")
    np.testing.assert_array_equal(load_exposure(path, 4), [2.0, 0.0, 0.0, 0.5])
    with pytest.raises(InvalidArgumentError):
        load_exposure(path, 3)


def test_read_json_config(tmp_path):
    assert read_json_config(None) == {}
    good = tmp_path / "config.json"
    good.write_text('{"threshold_level": 0.9}')
    assert read_json_config(good) == {"threshold_level": 0.9}
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        read_json_config(bad)
