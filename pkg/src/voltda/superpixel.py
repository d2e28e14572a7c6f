"""Volume -> 4D superpixel point cloud.

A volume is Gaussian-prefiltered, sampled on a uniform grid whose step is
derived from a target superpixel count, and each sample becomes one
``(z, y, x, v)`` point with coordinates scaled to ``[0, 1]`` and intensity
scaled to ``[0, intensity_weight]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import SpecError
from .volume_io import Volume3D


@dataclass(frozen=True)
class ConverterConfig:
    target_count: int = 600
    prefilter_sigma: float | None = None  # None -> auto (step / 2)
    intensity_weight: float = 1.0
    sampling: Literal["nearest", "trilinear"] = "nearest"

    def __post_init__(self):
        if int(self.target_count) < 1:
            raise SpecError("target_count must be >= 1")
        if self.intensity_weight < 0:
            raise SpecError("intensity_weight must be >= 0")
        if self.prefilter_sigma is not None and self.prefilter_sigma < 0:
            raise SpecError("prefilter_sigma must be >= 0")
        if self.sampling not in ("nearest", "trilinear"):
            raise SpecError(f"unknown sampling mode {self.sampling!r}")

    def sigma_for(self, step: int) -> float:
        return step / 2.0 if self.prefilter_sigma is None else float(self.prefilter_sigma)


@dataclass(frozen=True)
class PointCloud4D:
    points: np.ndarray  # (n, 4) rows of z, y, x, v
    source_dims: tuple[int, int, int] | None = None
    step: int | None = None
    target_count: int | None = None
    intensity_weight: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


def compute_step(dims, target_count: int) -> int:
    """Isotropic sampling step ``max(1, round(cbrt(voxels / S)))``, at most the smallest dim."""
    if target_count < 1 or min(dims) < 1:
        raise SpecError("target_count and dims must be positive")
    voxels = math.prod(int(n) for n in dims)
    step = max(1, int(round(np.cbrt(voxels / target_count))))
    # thin anisotropic volumes would otherwise get an empty sample grid
    return min(step, min(int(n) for n in dims))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at ``ceil(3 sigma)``, normalized to unit sum."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(vol: Volume3D, sigma: float) -> Volume3D:
    """Separable Gaussian blur with mirrored (half-sample symmetric) borders."""
    if sigma < 0:
        raise SpecError("sigma must be >= 0")
    if sigma == 0:
        return vol
    kernel = gaussian_kernel1d(sigma)
    out = vol.as_float()
    for axis in range(3):
        out = ndimage.correlate1d(out, kernel, axis=axis, mode="reflect")
    return Volume3D(out)


def sample_centers(dim: int, step: int) -> np.ndarray:
    n = dim // step
    return (np.arange(n) + 0.5) * step - 0.5


def _normalize_intensity(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def to_point_cloud(vol: Volume3D, cfg: ConverterConfig = ConverterConfig()) -> PointCloud4D:
    dims = vol.dims
    step = compute_step(dims, cfg.target_count)
    smoothed = gaussian_smooth(vol, cfg.sigma_for(step)).as_float()
    centers = [sample_centers(n, step) for n in dims]
    assert all(len(c) > 0 for c in centers), "empty sample grid"

    grid = np.meshgrid(*centers, indexing="ij")
    if cfg.sampling == "nearest":
        idx = [np.clip(np.floor(g + 0.5).astype(int), 0, n - 1) for g, n in zip(grid, dims)]
        values = smoothed[tuple(idx)]
    else:
        values = ndimage.map_coordinates(smoothed, np.stack([g.ravel() for g in grid]), order=1, mode="nearest")
        values = values.reshape(grid[0].shape)

    lo, hi = float(smoothed.min()), float(smoothed.max())
    v = _normalize_intensity(values.ravel(), lo, hi) * cfg.intensity_weight
    coords = []
    for g, n in zip(grid, dims):
        coords.append(g.ravel() / (n - 1) if n > 1 else np.zeros(g.size))
    points = np.column_stack(coords + [v])
    return PointCloud4D(points, source_dims=dims, step=step, target_count=cfg.target_count,
                        intensity_weight=cfg.intensity_weight)


# ------------------------------------------------------------------- CSV


def write_cloud_csv(cloud: PointCloud4D, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("z,y,x,v\n")
        for row in cloud.points:
            fh.write(",".join(repr(float(c)) for c in row) + "\n")


def read_cloud_csv(path: str | Path) -> PointCloud4D:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["z", "y", "x", "v"]:
            raise SpecError(f"{path}: expected header z,y,x,v")
        rows = [[float(c) for c in row] for row in reader if row]
    return PointCloud4D(np.array(rows, dtype=np.float64).reshape(-1, 4))
