"""File ingestion and emission: the native .vpv volume format, read-only
NIfTI-1 ingestion, and metric report serialization.

A .vpv volume is a JSON sidecar header (base.vpv.json) plus a raw
little-endian payload (base.vpv.raw), x-fastest within each component,
components stored back to back. docs/formats.md has the byte-level tables.
"""

from __future__ import annotations

import csv
import gzip
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimOverflow,
    EmptyCohort,
    MissingHeader,
    NonFiniteData,
    SizeMismatch,
    UnknownKind,
    UnsupportedDatatype,
)
from .field import Domain, LabelVolume, ScalarField, Transform, VectorField, transform_from_coords
from .metrics import METRIC_FIELDS, CohortSummary, MetricRecord

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "i32": np.dtype("<i4")}
_KINDS = ("scalar", "vector", "label", "transform")


@dataclass(frozen=True)
class VolumeHeader:
    dims: tuple[int, ...]
    kind: str
    components: int
    dtype: str
    byte_order: str = "little"
    spacing: tuple[float, ...] | None = None

    @property
    def d(self) -> int:
        return len(self.dims)


def _paths(path) -> tuple[Path, Path]:
    p = str(path)
    for suffix in (".vpv.json", ".vpv.raw", ".vpv"):
        if p.endswith(suffix):
            p = p[: -len(suffix)]
            break
    base = Path(p)
    return base.with_name(base.name + ".vpv.json"), base.with_name(base.name + ".vpv.raw")


def write_volume(value, path, dtype: str | None = None) -> None:
    """Write a field/label/transform pair (header + raw payload).

    dtype defaults to f64 for real-valued data (bit-exact round trips) and
    i32 for labels; pass "f32" for compact payloads.
    """
    if isinstance(value, ScalarField):
        kind, comps, data = "scalar", 1, value.values[None]
    elif isinstance(value, Transform):
        kind, comps, data = "transform", value.domain.d, value.coords
    elif isinstance(value, VectorField):
        kind, comps, data = "vector", value.domain.d, value.components
    elif isinstance(value, LabelVolume):
        kind, comps, data = "label", 1, value.labels[None]
    else:
        raise UnknownKind(f"cannot serialize {type(value).__name__}")
    if dtype is None:
        dtype = "i32" if kind == "label" else "f64"
    if kind == "label" and dtype != "i32":
        raise UnsupportedDatatype("label volumes use dtype i32")
    if kind != "label" and dtype not in ("f32", "f64"):
        raise UnsupportedDatatype(f"unsupported dtype {dtype!r} for {kind}")
    header = {
        "format": "vpv",
        "version": 1,
        "kind": kind,
        "dims": list(value.domain.dims),
        "components": comps,
        "dtype": dtype,
        "byte_order": "little",
        "order": "x-fastest",
    }
    header_path, raw_path = _paths(path)
    header_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    payload = b"".join(
        np.asarray(data[c], dtype=_DTYPES[dtype]).ravel(order="F").tobytes()
        for c in range(comps)
    )
    raw_path.write_bytes(payload)


def read_header(path) -> VolumeHeader:
    """Parse and validate the JSON sidecar of a .vpv pair."""
    header_path, _ = _paths(path)
    if not header_path.exists():
        raise MissingHeader(f"no header at {header_path}")
    try:
        raw = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise MissingHeader(f"unreadable header {header_path}: {exc}") from exc
    kind = raw.get("kind")
    if kind not in _KINDS:
        raise UnknownKind(f"unknown volume kind {kind!r}")
    if raw.get("byte_order", "little") != "little":
        raise UnsupportedDatatype("big-endian payloads are not supported")
    dtype = raw.get("dtype")
    if dtype not in _DTYPES:
        raise UnsupportedDatatype(f"unsupported dtype {dtype!r}")
    spacing = raw.get("spacing")
    return VolumeHeader(
        dims=tuple(int(n) for n in raw["dims"]),
        kind=kind,
        components=int(raw.get("components", 1)),
        dtype=dtype,
        spacing=None if spacing is None else tuple(float(s) for s in spacing),
    )


def read_volume(path):
    """Read a .vpv pair back into its typed container (float64 in memory)."""
    header = read_header(path)
    _, raw_path = _paths(path)
    dims = header.dims
    comps = header.components
    count = int(np.prod(dims))
    expected = comps * count * _DTYPES[header.dtype].itemsize
    if not raw_path.exists():
        raise MissingHeader(f"no payload at {raw_path}")
    payload = raw_path.read_bytes()
    if len(payload) != expected:
        raise SizeMismatch(f"payload is {len(payload)} bytes; expected {expected}")
    flat = np.frombuffer(payload, dtype=_DTYPES[header.dtype])
    data = np.stack(
        [flat[c * count : (c + 1) * count].reshape(dims, order="F") for c in range(comps)]
    )
    domain = Domain(dims)
    if header.kind == "label":
        if comps != 1:
            raise SizeMismatch("label volumes are single-component")
        return LabelVolume(domain, data[0].astype(np.int32))
    data = data.astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteData(f"{raw_path} contains non-finite values")
    if header.kind == "scalar":
        if comps != 1:
            raise SizeMismatch("scalar volumes are single-component")
        return ScalarField(domain, data[0])
    if comps != domain.d:
        raise SizeMismatch(f"{header.kind} needs {domain.d} components, header says {comps}")
    if header.kind == "vector":
        return VectorField(domain, data)
    pinned = transform_from_coords(domain, data)
    if not np.array_equal(pinned.coords, data):
        warnings.warn(f"{raw_path}: transform boundary re-pinned to identity")
    return pinned


_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}


def read_nifti(path, as_labels: bool = False, with_info: bool = False):
    """Ingest a single-file NIfTI-1 volume (.nii, optionally gzipped).

    Intensities are widened to float64 with scl_slope/scl_inter applied;
    integer volumes can be loaded as LabelVolume instead (no scaling).
    Orientation and spacing are recorded in the optional info dict but are
    never applied to the data.
    """
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 352:
        raise BadMagic(f"{path}: file shorter than a NIfTI-1 header")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise BadMagic(f"{path}: bad NIfTI magic {magic!r}")
    if magic == b"ni1\x00":
        raise BadMagic(f"{path}: two-file NIfTI (ni1) is not supported")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != 348:
        if struct.unpack_from(">i", raw, 0)[0] == 348:
            raise UnsupportedDatatype(f"{path}: big-endian NIfTI is not supported")
        raise BadMagic(f"{path}: sizeof_hdr = {sizeof_hdr}, expected 348")
    dim = struct.unpack_from("<8h", raw, 40)
    datatype, bitpix = struct.unpack_from("<2h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise DimOverflow(f"{path}: dim[0] = {ndim} out of range")
    dims = [int(n) for n in dim[1 : 1 + ndim]]
    while len(dims) > 2 and dims[-1] == 1:
        dims.pop()
    if len(dims) not in (2, 3):
        raise DimOverflow(f"{path}: {len(dims)}-D volumes are not supported")
    if datatype not in _NIFTI_DTYPES:
        raise UnsupportedDatatype(f"{path}: NIfTI datatype code {datatype}")
    np_dtype = np.dtype(_NIFTI_DTYPES[datatype]).newbyteorder("<")
    if bitpix != np_dtype.itemsize * 8:
        raise UnsupportedDatatype(f"{path}: bitpix {bitpix} does not match datatype")
    count = int(np.prod(dims))
    offset = int(vox_offset) if vox_offset >= 348 else 352
    body = raw[offset : offset + count * np_dtype.itemsize]
    if len(body) != count * np_dtype.itemsize:
        raise SizeMismatch(f"{path}: truncated NIfTI body")
    arr = np.frombuffer(body, dtype=np_dtype).reshape(dims, order="F")
    domain = Domain(tuple(dims))
    info = {
        "pixdim": tuple(float(v) for v in pixdim[1 : 1 + len(dims)]),
        "srow": [
            struct.unpack_from("<4f", raw, 280),
            struct.unpack_from("<4f", raw, 296),
            struct.unpack_from("<4f", raw, 312),
        ],
        "datatype": int(datatype),
    }
    if as_labels:
        if not np.issubdtype(np_dtype.base, np.integer):
            raise UnsupportedDatatype(f"{path}: labels need an integer datatype")
        distinct = np.unique(arr)
        if distinct.size > 4096:
            raise UnsupportedDatatype(
                f"{path}: {distinct.size} distinct values is too many for labels"
            )
        out = LabelVolume(domain, arr.astype(np.int32))
        return (out, info) if with_info else out
    values = arr.astype(np.float64)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        if scl_slope != 0.0:
            values = values * float(scl_slope) + float(scl_inter)
    if not np.all(np.isfinite(values)):
        raise NonFiniteData(f"{path}: non-finite intensities")
    out = ScalarField(domain, values)
    return (out, info) if with_info else out


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _record_columns(records: list[MetricRecord]) -> list[str]:
    labels: list[int] = []
    for rec in records:
        for lab in sorted(rec.dice):
            if lab not in labels:
                labels.append(lab)
    return list(METRIC_FIELDS) + [f"dice_{lab}" for lab in sorted(labels)]


def write_report(obj, path, format: str = "csv") -> None:
    """Serialize a MetricRecord, a list of them, or a CohortSummary."""
    if isinstance(obj, list):
        if not obj:
            raise EmptyCohort("refusing to write an empty record list")
        records = obj
    elif isinstance(obj, MetricRecord):
        records = [obj]
    elif isinstance(obj, CohortSummary):
        records = None
    else:
        raise UnknownKind(f"cannot serialize {type(obj).__name__}")
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if records is None:
                writer.writerow(["metric", "min", "q25", "median", "q75", "max", "mean", "std"])
                for name in obj.metric_names():
                    s = obj.stats[name]
                    writer.writerow(
                        [name] + [_fmt(s[k]) for k in ("min", "q25", "median", "q75", "max", "mean", "std")]
                    )
            else:
                cols = _record_columns(records)
                writer.writerow(cols)
                for rec in records:
                    items = rec.scalar_items()
                    writer.writerow([_fmt(items.get(c)) for c in cols])
    elif format == "json":
        if records is None:
            doc = {"kind": "cohort-summary", "metrics": obj.stats}
        else:
            rows = []
            for rec in records:
                row = {k: rec.scalar_items()[k] for k in METRIC_FIELDS}
                row["dice"] = {str(k): v for k, v in sorted(rec.dice.items())}
                rows.append(row)
            doc = {"kind": "metric-record", "records": rows} if len(rows) > 1 else {
                "kind": "metric-record",
                **rows[0],
            }
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    else:
        raise UnknownKind(f"unknown report format {format!r}")


def read_metric_record(path) -> MetricRecord:
    """Parse back a single-record JSON report."""
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "metric-record" or "records" in doc:
        raise UnknownKind(f"{path} is not a single metric-record report")
    dice = {int(k): float(v) for k, v in doc.get("dice", {}).items()}
    kwargs = {}
    for name in METRIC_FIELDS:
        if name == "mi_incr_pct":
            continue
        v = doc.get(name)
        kwargs[name] = None if v is None else float(v)
    return MetricRecord(dice=dice, **kwargs)
