"""Minimal NIfTI-1 reader/writer.

Covers exactly the subset the pipeline needs: single-file .nii / .nii.gz,
up to 4 dimensions, datatypes uint8/int16/int32/float32/float64, scl
scaling on read, sform (with qform fallback) on read, sform on write.
Little-endian is written; both byte orders are accepted on read.

Gzip members are written with mtime=0 so identical volumes produce
byte-identical files.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedError
from .volume import Intent, Volume

HEADER_SIZE = 348
_HEADER_FMT = (
    "i"      # sizeof_hdr
    "10s18sihbb"  # data_type, db_name, extents, session_error, regular, dim_info
    "8h"     # dim
    "fff"    # intent_p1..p3
    "hhh"    # intent_code, datatype, bitpix
    "h"      # slice_start
    "8f"     # pixdim
    "f"      # vox_offset
    "ff"     # scl_slope, scl_inter
    "h"      # slice_end
    "bb"     # slice_code, xyzt_units
    "ffff"   # cal_max, cal_min, slice_duration, toffset
    "ii"     # glmax, glmin
    "80s24s" # descrip, aux_file
    "hh"     # qform_code, sform_code
    "ffffff" # quatern_b..d, qoffset_x..z
    "4f4f4f" # srow_x, srow_y, srow_z
    "16s"    # intent_name
    "4s"     # magic
)
assert struct.calcsize("<" + _HEADER_FMT) == HEADER_SIZE

_DTYPE_FOR_CODE = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
}
_CODE_FOR_DTYPE = {np.dtype(d).str[1:]: c for c, d in _DTYPE_FOR_CODE.items()}

_INTENT_CODE = {Intent.INTENSITY: 0, Intent.LABEL: 1002, Intent.VECTOR: 1007}
_INTENT_FROM_CODE = {1002: Intent.LABEL, 1007: Intent.VECTOR}


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.GzipFile(fileobj=f) as gz:
                return gz.read()
        return f.read()


def _quaternion_affine(fields: dict) -> np.ndarray:
    b, c, d = fields["quatern_b"], fields["quatern_c"], fields["quatern_d"]
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    pixdim = fields["pixdim"]
    qfac = -1.0 if pixdim[0] == -1.0 else 1.0
    scale = np.array([pixdim[1], pixdim[2], qfac * pixdim[3]])
    affine = np.eye(4)
    affine[:3, :3] = rot * scale
    affine[:3, 3] = (fields["qoffset_x"], fields["qoffset_y"], fields["qoffset_z"])
    return affine


def _parse_header(raw: bytes) -> tuple[dict, str]:
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"file holds {len(raw)} bytes, shorter than a NIfTI-1 header")
    byte_order = None
    for bo in ("<", ">"):
        if struct.unpack_from(bo + "i", raw)[0] == HEADER_SIZE:
            byte_order = bo
            break
    if byte_order is None:
        raise FormatError("sizeof_hdr is not 348 in either byte order; not NIfTI-1")
    values = struct.unpack_from(byte_order + _HEADER_FMT, raw)
    names = [
        "sizeof_hdr", "data_type", "db_name", "extents", "session_error", "regular",
        "dim_info", "dim", "intent_p1", "intent_p2", "intent_p3", "intent_code",
        "datatype", "bitpix", "slice_start", "pixdim", "vox_offset", "scl_slope",
        "scl_inter", "slice_end", "slice_code", "xyzt_units", "cal_max", "cal_min",
        "slice_duration", "toffset", "glmax", "glmin", "descrip", "aux_file",
        "qform_code", "sform_code", "quatern_b", "quatern_c", "quatern_d",
        "qoffset_x", "qoffset_y", "qoffset_z", "srow_x", "srow_y", "srow_z",
        "intent_name", "magic",
    ]
    fields = {}
    i = 0
    for name in names:
        if name == "dim":
            fields[name] = values[i : i + 8]
            i += 8
        elif name == "pixdim":
            fields[name] = values[i : i + 8]
            i += 8
        elif name in ("srow_x", "srow_y", "srow_z"):
            fields[name] = values[i : i + 4]
            i += 4
        else:
            fields[name] = values[i]
            i += 1
    return fields, byte_order


def read_nifti(path) -> Volume:
    """Read a .nii or .nii.gz file into a Volume.

    Raises FormatError for malformed files, UnsupportedError for valid files
    outside the supported subset (datatype, >4 dims, hdr/img pairs).
    """
    path = Path(path)
    raw = _read_bytes(path)
    fields, bo = _parse_header(raw)

    magic = fields["magic"]
    if magic == b"ni1\x00":
        raise UnsupportedError(f"{path}: two-file (.hdr/.img) NIfTI pairs are not supported")
    if magic != b"n+1\x00":
        raise FormatError(f"{path}: bad NIfTI-1 magic {magic!r}")

    ndim = fields["dim"][0]
    if ndim > 4:
        raise UnsupportedError(f"{path}: {ndim}-dimensional image; only up to 4D is supported")
    if ndim < 1:
        raise FormatError(f"{path}: dim[0] = {ndim}")
    shape = tuple(max(1, int(n)) for n in fields["dim"][1 : 1 + max(ndim, 3)])

    code = fields["datatype"]
    if code not in _DTYPE_FOR_CODE:
        raise UnsupportedError(f"{path}: unsupported NIfTI datatype code {code}")
    dtype = np.dtype(_DTYPE_FOR_CODE[code]).newbyteorder(bo)

    offset = int(fields["vox_offset"])
    n_vox = int(np.prod(shape))
    needed = offset + n_vox * dtype.itemsize
    if needed > len(raw):
        raise FormatError(f"{path}: data truncated ({len(raw)} bytes, need {needed})")
    flat = np.frombuffer(raw, dtype=dtype, count=n_vox, offset=offset)
    data = flat.reshape(shape, order="F").astype(dtype.newbyteorder("="))

    slope, inter = fields["scl_slope"], fields["scl_inter"]
    if slope != 0.0 and not (slope == 1.0 and inter == 0.0):
        data = data.astype(np.float64) * slope + inter

    if fields["sform_code"] > 0:
        affine = np.eye(4)
        affine[0, :] = fields["srow_x"]
        affine[1, :] = fields["srow_y"]
        affine[2, :] = fields["srow_z"]
    elif fields["qform_code"] > 0:
        affine = _quaternion_affine(fields)
    else:
        affine = np.diag([fields["pixdim"][1], fields["pixdim"][2], fields["pixdim"][3], 1.0])

    spacing = tuple(float(p) for p in fields["pixdim"][1:4])
    if any(s <= 0 for s in spacing):
        spacing = tuple(float(np.linalg.norm(affine[:3, ax])) for ax in range(3))

    intent = _INTENT_FROM_CODE.get(fields["intent_code"], Intent.INTENSITY)
    return Volume(data=data, spacing=spacing, affine=affine, intent=intent)


def _storable(data: np.ndarray) -> np.ndarray:
    """Cast to the nearest supported on-disk dtype, loss-free for our uses."""
    kind = data.dtype.str[1:]
    if kind in _CODE_FOR_DTYPE:
        return data
    if data.dtype == np.bool_:
        return data.astype(np.uint8)
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(np.int32)
        if data.size and (data.min() < info.min or data.max() > info.max):
            raise UnsupportedError("integer values exceed int32 range")
        return data.astype(np.int32)
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise UnsupportedError(f"cannot store dtype {data.dtype} in NIfTI-1")


def write_nifti(v: Volume, path) -> None:
    """Write a Volume as single-file little-endian NIfTI-1, affine in sform."""
    path = Path(path)
    data = _storable(np.asarray(v.data))
    le = data.astype(data.dtype.newbyteorder("<"), copy=False)
    code = _CODE_FOR_DTYPE[np.dtype(data.dtype).str[1:]]
    bitpix = data.dtype.itemsize * 8

    dim = [data.ndim, 1, 1, 1, 1, 1, 1, 1]
    for ax, n in enumerate(data.shape):
        dim[1 + ax] = n
    pixdim = [1.0, *v.spacing, 1.0, 1.0, 1.0, 1.0]

    header = struct.pack(
        "<" + _HEADER_FMT,
        HEADER_SIZE,
        b"", b"", 0, 0, 0, 0,
        *dim,
        0.0, 0.0, 0.0,
        _INTENT_CODE[v.intent],
        code,
        bitpix,
        0,
        *pixdim,
        352.0,
        1.0, 0.0,           # scl_slope, scl_inter: stored values are final
        0, 0, 0,
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        b"tistack", b"",
        0, 2,               # qform unused, sform: aligned
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        *np.asarray(v.affine[0], dtype=np.float32),
        *np.asarray(v.affine[1], dtype=np.float32),
        *np.asarray(v.affine[2], dtype=np.float32),
        b"", b"n+1\x00",
    )
    payload = header + b"\x00\x00\x00\x00" + le.flatten(order="F").tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    if path.name.endswith(".gz"):
        with open(path, "wb") as f:
            with gzip.GzipFile(filename="", mode="wb", fileobj=f, mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as f:
            f.write(payload)
