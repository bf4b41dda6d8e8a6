"""Minimal NIfTI-1 IO for reading feature stacks and writing label maps.

Deliberately independent of the producing package: this side of the fence
only relies on the file format. Supports 3D/4D single-file NIfTI-1
(optionally gzipped), the numeric dtypes the pipeline emits, and sform
affines. Written files use a fixed gzip mtime so reruns are byte-identical.
"""
import gzip
import struct

import numpy as np

_HDR_SIZE = 348
_MAGIC = b"n+1\x00"

_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
}
_CODES = {np.dtype(np.uint8): (2, 8), np.dtype(np.int32): (8, 32),
          np.dtype(np.float32): (16, 32)}


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_volume(path):
    """Read a NIfTI-1 file. Returns (data, affine); data in Fortran layout
    order (x, y, z[, channels]), affine the 4x4 voxel-to-world matrix."""
    raw = _read_bytes(path)
    if len(raw) < _HDR_SIZE:
        raise ValueError(f"{path}: truncated NIfTI header")
    if struct.unpack_from("<i", raw, 0)[0] != _HDR_SIZE:
        raise ValueError(f"{path}: not a little-endian NIfTI-1 file")
    if raw[344:348] != _MAGIC:
        raise ValueError(f"{path}: unsupported magic {raw[344:348]!r}")
    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if ndim not in (3, 4):
        raise ValueError(f"{path}: expected 3D or 4D, got dim[0]={ndim}")
    shape = tuple(int(d) for d in dim[1:1 + ndim])
    datatype = struct.unpack_from("<h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise ValueError(f"{path}: unsupported datatype code {datatype}")
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    slope, inter = struct.unpack_from("<2f", raw, 112)
    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=_DTYPES[datatype], count=count,
                         offset=vox_offset)
    data = data.reshape(shape, order="F")
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * slope + inter

    sform_code = struct.unpack_from("<h", raw, 254)[0]
    affine = np.eye(4)
    if sform_code > 0:
        rows = struct.unpack_from("<12f", raw, 280)
        affine[0, :] = rows[0:4]
        affine[1, :] = rows[4:8]
        affine[2, :] = rows[8:12]
    else:
        pixdim = struct.unpack_from("<8f", raw, 76)
        for i in range(3):
            affine[i, i] = pixdim[i + 1] or 1.0
    return np.asarray(data), affine


def write_volume(data: np.ndarray, affine: np.ndarray, path,
                 intent_code: int = 0) -> None:
    """Write uint8/int32/float32 data as gzipped NIfTI-1 with an sform."""
    data = np.asarray(data)
    if data.dtype not in _CODES:
        raise ValueError(f"unsupported write dtype {data.dtype}")
    if data.ndim not in (3, 4):
        raise ValueError(f"expected 3D or 4D data, got {data.ndim}D")
    datatype, bitpix = _CODES[data.dtype]
    affine = np.asarray(affine, dtype=np.float64)
    spacing = [float(np.linalg.norm(affine[:3, i])) for i in range(3)]

    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    dim = [data.ndim, *data.shape] + [1] * (7 - data.ndim)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<h", hdr, 68, intent_code)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2],
                     1.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)   # vox_offset
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    struct.pack_into("<2h", hdr, 252, 0, 1)   # qform 0, sform 1
    struct.pack_into("<12f", hdr, 280,
                     *affine[0, :4], *affine[1, :4], *affine[2, :4])
    hdr[344:348] = _MAGIC

    payload = bytes(hdr) + b"\x00" * 4 + np.asfortranarray(data).tobytes(order="F")
    name = str(path)
    if name.endswith(".gz"):
        payload = gzip.compress(payload, mtime=0)
    with open(name, "wb") as fh:
        fh.write(payload)
