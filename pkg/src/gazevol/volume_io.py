"""CT volume and segmentation mask I/O.

Two on-disk formats are supported:

* raw little-endian payload plus a sidecar JSON header
  (``{"dims": [nx, ny, nz], "spacing": [sx, sy, sz], "dtype": "u8"|"i16"|"f32"}``),
  payload ordered x-fastest, then y, then z;
* a read-only subset of NIfTI-1 (single ``.nii`` file, uncompressed, 3-D,
  uint8 / int16 / float32).

Arrays are indexed ``[x, y, z]``; an axial slice is a fixed ``z``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

RAW_DTYPES = {"u8": "<u1", "i16": "<i2", "f32": "<f4"}
NIFTI_DTYPES = {2: "u1", 4: "i2", 16: "f4"}
NIFTI_HEADER_SIZE = 348


@dataclass(frozen=True)
class Volume:
    voxels: np.ndarray  # float32, shape (nx, ny, nz)
    spacing: tuple[float, float, float]

    def __post_init__(self):
        v = np.asarray(self.voxels, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise InputError(f"volume must be 3-D with non-zero dims, got shape {v.shape}")
        if len(self.spacing) != 3 or any(not (s > 0) for s in self.spacing):
            raise InputError(f"spacing must be three positive values, got {self.spacing}")
        v.flags.writeable = False
        object.__setattr__(self, "voxels", v)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.voxels.shape)

    @property
    def nz(self) -> int:
        return self.voxels.shape[2]

    def slice_image(self, z: int) -> np.ndarray:
        """Axial slice ``z`` as a row-major image of shape (ny, nx)."""
        if not 0 <= z < self.nz:
            raise InputError(f"slice {z} out of range [0, {self.nz})")
        return self.voxels[:, :, z].T


@dataclass(frozen=True)
class SegMask:
    labels: np.ndarray  # bool, shape (nx, ny, nz)

    def __post_init__(self):
        lab = np.asarray(self.labels) != 0
        if lab.ndim != 3:
            raise InputError(f"mask must be 3-D, got shape {lab.shape}")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.labels.shape)

    @property
    def n_foreground(self) -> int:
        return int(self.labels.sum())


def _read_raw(header_path: Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{header_path}: invalid JSON header ({exc})") from exc
    try:
        dims = [int(d) for d in header["dims"]]
        spacing = tuple(float(s) for s in header.get("spacing", (1.0, 1.0, 1.0)))
        dtype = RAW_DTYPES[header.get("dtype", "f32")]
    except KeyError as exc:
        raise InputError(f"{header_path}: missing or unsupported header field {exc}") from exc
    if len(dims) != 3 or min(dims) < 1:
        raise InputError(f"{header_path}: dims must be three positive integers, got {dims}")
    if len(spacing) != 3 or min(spacing) <= 0:
        raise InputError(f"{header_path}: spacing must be three positive values, got {spacing}")
    payload_path = header_path.with_suffix(".raw")
    if not payload_path.exists():
        raise InputError(f"{payload_path}: payload file not found")
    data = np.fromfile(payload_path, dtype=dtype)
    expected = dims[0] * dims[1] * dims[2]
    if data.size != expected:
        raise InputError(
            f"{payload_path}: header declares {dims[0]}x{dims[1]}x{dims[2]} = {expected} voxels, "
            f"payload holds {data.size}"
        )
    return data.reshape(dims, order="F"), spacing


def _read_nifti(path: Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    raw = path.read_bytes()
    if len(raw) < NIFTI_HEADER_SIZE:
        raise InputError(f"{path}: file shorter than a NIfTI-1 header")
    for endian in "<>":
        if struct.unpack(endian + "i", raw[:4])[0] == NIFTI_HEADER_SIZE:
            break
    else:
        raise InputError(f"{path}: sizeof_hdr is not 348")
    if raw[344:348] != b"n+1\x00":
        raise InputError(f"{path}: unsupported NIfTI magic {raw[344:348]!r} (single-file n+1 only)")
    dim = struct.unpack(endian + "8h", raw[40:56])
    if dim[0] != 3:
        raise InputError(f"{path}: expected a 3-D image, dim[0] = {dim[0]}")
    dims = list(dim[1:4])
    if min(dims) < 1:
        raise InputError(f"{path}: non-positive dims {dims}")
    datatype = struct.unpack(endian + "h", raw[70:72])[0]
    if datatype not in NIFTI_DTYPES:
        raise InputError(f"{path}: unsupported NIfTI datatype code {datatype}")
    pixdim = struct.unpack(endian + "8f", raw[76:108])
    spacing = tuple(float(abs(p)) for p in pixdim[1:4])
    if min(spacing) <= 0:
        raise InputError(f"{path}: non-positive voxel spacing {spacing}")
    vox_offset = int(struct.unpack(endian + "f", raw[108:112])[0])
    slope, inter = struct.unpack(endian + "2f", raw[112:120])

    dtype = np.dtype(NIFTI_DTYPES[datatype]).newbyteorder(endian)
    expected = dims[0] * dims[1] * dims[2]
    data = np.frombuffer(raw, dtype=dtype, offset=max(vox_offset, NIFTI_HEADER_SIZE))
    if data.size < expected:
        raise InputError(f"{path}: header declares {expected} voxels, payload holds {data.size}")
    arr = data[:expected].reshape(dims, order="F").astype(np.float32)
    if slope not in (0.0, 1.0) or inter != 0.0:
        arr = arr * np.float32(slope if slope != 0.0 else 1.0) + np.float32(inter)
    return arr, spacing


def _read_any(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    path = Path(path)
    if path.suffix == ".raw":
        path = path.with_suffix(".json")
    if not path.exists():
        raise InputError(f"{path}: file not found")
    if path.stat().st_size == 0:
        raise InputError(f"{path}: empty file")
    if path.suffix == ".nii":
        return _read_nifti(path)
    if path.suffix == ".json":
        return _read_raw(path)
    raise InputError(f"{path}: unrecognised volume format (expected .json/.raw or .nii)")


def load_volume(path) -> Volume:
    data, spacing = _read_any(path)
    return Volume(data.astype(np.float32), spacing)


def load_mask(path, vol: Volume) -> SegMask:
    """Load a mask and check it against ``vol``; any nonzero label becomes foreground."""
    data, _ = _read_any(path)
    if tuple(data.shape) != vol.dims:
        raise InputError(f"{path}: mask dims {tuple(data.shape)} do not match volume dims {vol.dims}")
    return SegMask(data != 0)


def save_volume(path, voxels: np.ndarray, spacing=(1.0, 1.0, 1.0), dtype: str = "f32") -> Path:
    """Write ``voxels`` as JSON header + raw payload. Returns the header path."""
    if dtype not in RAW_DTYPES:
        raise InputError(f"unsupported dtype {dtype!r}")
    path = Path(path).with_suffix(".json")
    arr = np.asarray(voxels)
    header = {"dims": [int(d) for d in arr.shape], "spacing": [float(s) for s in spacing], "dtype": dtype}
    path.write_text(json.dumps(header) + "\n")
    arr.astype(RAW_DTYPES[dtype]).ravel(order="F").tofile(path.with_suffix(".raw"))
    return path


def mask_slice_points(mask: SegMask, z: int) -> set[tuple[int, int]]:
    nz = mask.labels.shape[2]
    if not 0 <= z < nz:
        raise InputError(f"slice {z} out of range [0, {nz})")
    xs, ys = np.nonzero(mask.labels[:, :, z])
    return {(int(x), int(y)) for x, y in zip(xs, ys)}
