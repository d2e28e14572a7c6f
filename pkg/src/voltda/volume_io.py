"""Loading, saving and synthesizing 3D scalar volumes.

Two interchange formats are supported:

* NPY v1.0/v2.0, C-order, rank 3.
* Raw binary plus a JSON sidecar ``{"dims": [d, h, w], "dtype": "u8", "endian": "le"}``.

Integer volumes are returned as-is; rescaling is the converter's job.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.lib import format as npy_format

from .errors import FormatError, LayoutError, ShapeError, SpecError, TruncationError

# sidecar tag -> numpy kind/size (byte order applied separately)
DTYPE_TAGS = {
    "u8": np.dtype("u1"),
    "i16": np.dtype("i2"),
    "i32": np.dtype("i4"),
    "f32": np.dtype("f4"),
    "f64": np.dtype("f8"),
}

SynthKind = Literal["sphere_shell", "solid_ball", "two_blobs", "uniform_noise", "constant"]


def dtype_tag(dtype: np.dtype) -> str:
    for tag, dt in DTYPE_TAGS.items():
        if dt.kind == dtype.kind and dt.itemsize == dtype.itemsize:
            return tag
    raise LayoutError(f"unsupported dtype {dtype}")


@dataclass(frozen=True)
class Volume3D:
    """Dense scalar grid indexed ``[z, y, x]``."""

    data: np.ndarray
    dtype: str = field(default="")

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"volume must be rank 3, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ShapeError(f"all dims must be >= 1, got {data.shape}")
        data = np.ascontiguousarray(data)
        if not data.dtype.isnative:
            data = data.astype(data.dtype.newbyteorder("="))
        tag = dtype_tag(data.dtype)
        if data.dtype.kind == "f" and not np.all(np.isfinite(data)):
            raise FormatError("volume contains NaN or Inf")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dtype", tag)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def value_range(self) -> tuple[float, float]:
        return float(self.data.min()), float(self.data.max())

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)


# --------------------------------------------------------------------- NPY


def load_npy(path: str | Path) -> Volume3D:
    """Read a rank-3 C-order NPY file (format versions 1.0 and 2.0)."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: bad NPY magic ({exc})") from exc
        try:
            if version == (1, 0):
                shape, fortran, dtype = npy_format.read_array_header_1_0(fh)
            elif version == (2, 0):
                shape, fortran, dtype = npy_format.read_array_header_2_0(fh)
            else:
                raise FormatError(f"{path}: unsupported NPY version {version}")
        except (ValueError, SyntaxError) as exc:
            raise FormatError(f"{path}: malformed NPY header ({exc})") from exc
        if len(shape) != 3:
            raise ShapeError(f"{path}: expected rank 3, got shape {shape}")
        if fortran:
            raise LayoutError(f"{path}: Fortran-order arrays are not supported")
        if dtype.hasobject or dtype.kind not in "uif":
            raise LayoutError(f"{path}: unsupported dtype {dtype}")
        dtype_tag(dtype)
        count = int(np.prod(shape))
        payload = fh.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise FormatError(f"{path}: payload truncated")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return Volume3D(data)


def save_npy(vol: Volume3D | np.ndarray, path: str | Path) -> None:
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    with open(path, "wb") as fh:
        npy_format.write_array(fh, np.ascontiguousarray(data), version=(1, 0), allow_pickle=False)


# --------------------------------------------------------------------- raw


def _raw_dtype(header: dict) -> np.dtype:
    try:
        base = DTYPE_TAGS[header["dtype"]]
    except KeyError as exc:
        raise FormatError(f"unknown dtype tag in sidecar: {header.get('dtype')!r}") from exc
    endian = header.get("endian", "le")
    if endian not in ("le", "be"):
        raise FormatError(f"endian must be 'le' or 'be', got {endian!r}")
    return base.newbyteorder("<" if endian == "le" else ">")


def read_sidecar(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_raw(path: str | Path, header: dict | str | Path | None = None) -> Volume3D:
    """Read a headerless binary volume described by a JSON sidecar.

    ``header`` may be the parsed sidecar dict, a path to it, or None to use
    ``<path>.json``.
    """
    path = Path(path)
    if header is None:
        header = Path(str(path) + ".json")
    if not isinstance(header, dict):
        header = read_sidecar(header)
    dims = tuple(int(n) for n in header["dims"])
    if len(dims) != 3:
        raise ShapeError(f"sidecar dims must have 3 entries, got {dims}")
    if min(dims) < 1:
        raise ShapeError(f"all dims must be >= 1, got {dims}")
    dtype = _raw_dtype(header)
    payload = path.read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expected:
        raise TruncationError(f"{path}: expected {expected} bytes for {dims} {header['dtype']}, got {len(payload)}")
    return Volume3D(np.frombuffer(payload, dtype=dtype).reshape(dims))


def save_raw(vol: Volume3D, path: str | Path, endian: str = "le", sidecar: bool = True) -> dict:
    """Write ``vol`` as raw bytes; returns (and by default writes) the sidecar."""
    header = {"dims": list(vol.dims), "dtype": vol.dtype, "endian": endian}
    Path(path).write_bytes(vol.data.astype(_raw_dtype(header), copy=False).tobytes())
    if sidecar:
        with open(str(path) + ".json", "w") as fh:
            json.dump(header, fh)
    return header


# --------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SynthSpec:
    kind: SynthKind
    dims: tuple[int, int, int] = (32, 32, 32)
    center: tuple[float, float, float] | None = None  # defaults to the grid centre
    radius: float = 10.0
    thickness: float = 2.0
    separation: float = 12.0
    value: float = 1.0
    noise: float = 0.0
    seed: int = 0
    dtype: str = "f64"


def _default_center(dims):
    return tuple((n - 1) / 2.0 for n in dims)


def _check_ball(center, extent, dims, what):
    for c, n in zip(center, dims):
        if c - extent < 0 or c + extent > n - 1:
            raise SpecError(f"{what} of extent {extent} at {center} does not fit dims {dims}")


def _distance_grid(dims, center):
    z, y, x = np.indices(dims, dtype=np.float64)
    return np.sqrt((z - center[0]) ** 2 + (y - center[1]) ** 2 + (x - center[2]) ** 2)


def foreground_mask(spec: SynthSpec) -> np.ndarray:
    """Noise-free foreground of a geometric synth kind."""
    dims = tuple(spec.dims)
    center = spec.center if spec.center is not None else _default_center(dims)
    if spec.kind == "sphere_shell":
        if spec.thickness <= 0 or spec.radius - spec.thickness / 2 < 0:
            raise SpecError("shell needs thickness > 0 and radius >= thickness/2")
        _check_ball(center, spec.radius + spec.thickness / 2, dims, "shell")
        return np.abs(_distance_grid(dims, center) - spec.radius) <= spec.thickness / 2
    if spec.kind == "solid_ball":
        if spec.radius <= 0:
            raise SpecError("ball radius must be positive")
        _check_ball(center, spec.radius, dims, "ball")
        return _distance_grid(dims, center) <= spec.radius
    if spec.kind == "two_blobs":
        if spec.radius <= 0:
            raise SpecError("blob radius must be positive")
        half = spec.separation / 2
        centers = [(center[0], center[1], center[2] - half), (center[0], center[1], center[2] + half)]
        mask = np.zeros(dims, dtype=bool)
        for c in centers:
            _check_ball(c, spec.radius, dims, "blob")
            mask |= _distance_grid(dims, c) <= spec.radius
        return mask
    if spec.kind in ("uniform_noise", "constant"):
        return np.zeros(dims, dtype=bool)
    raise SpecError(f"unknown synth kind {spec.kind!r}")


def synth_volume(spec: SynthSpec) -> Volume3D:
    """Build a deterministic test volume; identical specs give identical arrays."""
    dims = tuple(int(n) for n in spec.dims)
    if len(dims) != 3 or min(dims) < 1:
        raise SpecError(f"dims must be three positive integers, got {spec.dims}")
    if spec.noise < 0:
        raise SpecError("noise amplitude must be nonnegative")
    if spec.dtype not in DTYPE_TAGS:
        raise SpecError(f"unknown dtype tag {spec.dtype!r}")
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "constant":
        data = np.full(dims, float(spec.value))
    elif spec.kind == "uniform_noise":
        data = rng.uniform(0.0, spec.value, size=dims)
    else:
        data = foreground_mask(spec).astype(np.float64) * spec.value
    if spec.noise > 0 and spec.kind != "uniform_noise":
        data = data + rng.uniform(-spec.noise, spec.noise, size=dims)
    target = DTYPE_TAGS[spec.dtype]
    if target.kind in "ui":
        info = np.iinfo(target)
        data = np.clip(np.rint(data), info.min, info.max)
    return Volume3D(data.astype(target))
