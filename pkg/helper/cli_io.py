"""
Field series file formats.

Binary (little-endian):
    b"STXF" | u8 version (1) | u32 site_count | u32 n_times | u8 coord_system
    (0 = lonlat, 1 = planar_km) | f64 x, y per site | f32 values, time-major

CSV: long file with header ``time,site,value`` and a sidecar ``sites.csv``
with header ``site,x,y`` in the same directory.
"""

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Literal, Optional

import numpy as np
import pandas as pd

from app_logging import get_logger
from errors import (
    ConfigurationError,
    InvalidArgumentError,
    MagicMismatchError,
    MissingValueError,
    NonDenseSeriesError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from models.field import CoordSystem, FieldSeries, SpatialGrid

logger = get_logger(__name__)

MAGIC = b"STXF"
VERSION = 1
HEADER = struct.Struct("<4sBIIB")
COORD_CODES = {"lonlat": 0, "planar_km": 1}
SITES_FILE = "sites.csv"

FileFormat = Literal["binary", "csv"]


@contextmanager
def atomic_path(path: Path) -> Iterator[Path]:
    """
    Yield a temporary path next to ``path`` and move it into place on success.

    The temporary file is removed if the block raises.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    tmp = Path(name)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def encode_field_series(series: FieldSeries) -> bytes:
    header = HEADER.pack(
        MAGIC, VERSION, series.site_count, series.n_times, COORD_CODES[series.grid.coord_system]
    )
    coords = np.ascontiguousarray(series.grid.site_coords, dtype="<f8").tobytes()
    values = np.ascontiguousarray(series.values, dtype="<f4").tobytes()
    return header + coords + values


def decode_field_series(payload: bytes) -> FieldSeries:
    """
    Parse the binary format.

    Raises:
        MagicMismatchError, UnsupportedVersionError, TruncatedPayloadError,
        MissingValueError: One per failure class
    """
    if len(payload) < 4 or payload[:4] != MAGIC:
        raise MagicMismatchError(f"bad magic {payload[:4]!r}, expected {MAGIC!r}")
    if len(payload) < HEADER.size:
        raise TruncatedPayloadError()
    _, version, site_count, n_times, coord_code = HEADER.unpack_from(payload)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    systems = {code: name for name, code in COORD_CODES.items()}
    if coord_code not in systems:
        raise InvalidArgumentError(f"unknown coordinate system code {coord_code}")

    coord_bytes = 16 * site_count
    value_bytes = 4 * site_count * n_times
    expected = HEADER.size + coord_bytes + value_bytes
    if len(payload) < expected:
        raise TruncatedPayloadError()
    if len(payload) > expected:
        logger.warning("Trailing bytes after payload ignored", extra_bytes=len(payload) - expected)

    coords = np.frombuffer(payload, dtype="<f8", count=2 * site_count, offset=HEADER.size)
    values = np.frombuffer(
        payload, dtype="<f4", count=site_count * n_times, offset=HEADER.size + coord_bytes
    ).reshape(n_times, site_count)
    bad = ~np.isfinite(values)
    if bad.any():
        raise MissingValueError(f"{int(bad.sum())} missing or non-finite values")
    grid = SpatialGrid(site_coords=coords.reshape(site_count, 2), coord_system=systems[coord_code])
    return FieldSeries(grid=grid, values=values.astype(np.float32))


def _load_csv(path: Path, coord_system: CoordSystem) -> FieldSeries:
    sites_path = path.parent / SITES_FILE
    if not sites_path.exists():
        raise ConfigurationError(f"sidecar {sites_path} not found")
    sites = pd.read_csv(sites_path, float_precision="round_trip")
    long = pd.read_csv(path, float_precision="round_trip")
    for frame, columns, name in ((sites, ["site", "x", "y"], SITES_FILE), (long, ["time", "site", "value"], path.name)):
        missing = set(columns) - set(frame.columns)
        if missing:
            raise InvalidArgumentError(f"{name} lacks columns {sorted(missing)}")

    sites = sites.sort_values("site")
    site_count = len(sites)
    if not np.array_equal(sites["site"].to_numpy(), np.arange(site_count)):
        raise InvalidArgumentError("sites must be numbered 0..N-1")
    if long["value"].isna().any():
        raise MissingValueError(f"{int(long['value'].isna().sum())} missing values")
    infinite = ~np.isfinite(long["value"].to_numpy(dtype=np.float64))
    if infinite.any():
        raise MissingValueError(f"{int(infinite.sum())} non-finite values")

    n_times = int(long["time"].max()) + 1 if len(long) else 0
    if n_times < 1 or len(long) != n_times * site_count:
        raise NonDenseSeriesError()
    if long.duplicated(["time", "site"]).any():
        raise NonDenseSeriesError()
    if (long["time"] < 0).any() or not long["site"].between(0, site_count - 1).all():
        raise NonDenseSeriesError()

    values = (
        long.pivot(index="time", columns="site", values="value")
        .reindex(index=range(n_times), columns=range(site_count))
        .to_numpy(dtype=np.float64)
    )
    if np.isnan(values).any():
        raise NonDenseSeriesError()
    grid = SpatialGrid(site_coords=sites[["x", "y"]].to_numpy(), coord_system=coord_system)
    return FieldSeries(grid=grid, values=values)


def load_field_series(
    path: Path, fmt: FileFormat = "binary", coord_system: CoordSystem = "planar_km"
) -> FieldSeries:
    """
    Read a field series.

    Args:
        path: Binary file, or the long CSV file (sidecar ``sites.csv`` next to it)
        fmt: ``binary`` or ``csv``
        coord_system: Coordinate system of CSV sites (binary files carry their own)

    Raises:
        ConfigurationError: If a file is missing
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"input file {path} not found")
    if fmt == "binary":
        series = decode_field_series(path.read_bytes())
    elif fmt == "csv":
        series = _load_csv(path, coord_system)
    else:
        raise InvalidArgumentError(f"unknown format {fmt}")
    logger.info(
        "Field series loaded",
        path=str(path),
        format=fmt,
        sites=series.site_count,
        n_times=series.n_times,
    )
    return series


def write_field_series(series: FieldSeries, path: Path, fmt: FileFormat = "binary") -> Path:
    """Write a field series atomically; CSV also writes ``sites.csv`` alongside."""
    path = Path(path)
    if fmt == "binary":
        payload = encode_field_series(series)
        with atomic_path(path) as tmp:
            tmp.write_bytes(payload)
    elif fmt == "csv":
        n, m = series.n_times, series.site_count
        long = pd.DataFrame(
            {
                "time": np.repeat(np.arange(n), m),
                "site": np.tile(np.arange(m), n),
                "value": np.asarray(series.values).ravel(),
            }
        )
        sites = pd.DataFrame(
            {"site": np.arange(m), "x": series.grid.site_coords[:, 0], "y": series.grid.site_coords[:, 1]}
        )
        # Shortest digit counts that round-trip the stored precision
        precision = "%.9g" if series.values.dtype == np.float32 else "%.17g"
        with atomic_path(path.parent / SITES_FILE) as tmp:
            sites.to_csv(tmp, index=False, float_format="%.17g")
        with atomic_path(path) as tmp:
            long.to_csv(tmp, index=False, float_format=precision)
    else:
        raise InvalidArgumentError(f"unknown format {fmt}")
    logger.info("Field series written", path=str(path), format=fmt)
    return path


def load_exposure(path: Path, site_count: int) -> np.ndarray:
    """
    Per-site exposure weights from a CSV with columns ``site,weight``.

    Sites not listed get weight 0.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"exposure file {path} not found")
    frame = pd.read_csv(path)
    if not {"site", "weight"} <= set(frame.columns):
        raise InvalidArgumentError("exposure file needs columns site,weight")
    if not frame["site"].between(0, site_count - 1).all():
        raise InvalidArgumentError("exposure references sites outside the grid")
    weights = np.zeros(site_count)
    weights[frame["site"].to_numpy(dtype=np.int64)] = frame["weight"].to_numpy(dtype=np.float64)
    return weights


def read_json_config(path: Optional[Path]) -> dict:
    """Load a JSON config file; an absent path gives an empty mapping."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found")
    try:
        return json.loads(path.read_text())
    except ValueError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
