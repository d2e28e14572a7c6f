"""Persistence images with a Gaussian width fixed by an adjacent-pixel ratio.

Given a k x k grid over births ``[m, M]`` and deaths ``[n, N]``, the pixel
pitches are ``dx = (M - m) / k`` and ``dy = (N - n) / k``. Choosing ``epsilon``
as the ratio between a Gaussian's peak pixel and its diagonal neighbour gives

    sigma = sqrt((dx**2 + dy**2) / (-2 ln epsilon))

so one ``epsilon`` serves any grid. Pixel values are point evaluations of
the weighted Gaussians at pixel centres.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np
from PIL import Image

from .errors import DomainError, EmptyDiagramError, IntegrityError
from .persistence import PersistenceDiagram

DEFAULT_EPSILON = 0.95
DEFAULT_RESOLUTION = 50
PAD_FRACTION = 0.05

Norm = Literal["max", "sum", "none"]
InfPolicy = Literal["drop", "cap_at_rmax"]
WeightMode = Literal["gaussian", "linear"]


def optimized_sigma(bounds, k: int, epsilon: float) -> float:
    m, M, n, N = bounds
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not (M > m and N > n):
        raise DomainError(f"degenerate bounds {bounds}")
    if k < 1:
        raise DomainError("resolution must be >= 1")
    dx = (M - m) / k
    dy = (N - n) / k
    return math.sqrt((dx * dx + dy * dy) / (-2.0 * math.log(epsilon)))


def weight(b, d, sigma: float):
    """Persistence weight ``exp(-(d - b)^2 / (2 sigma^2))``; 1 at zero persistence."""
    p = np.asarray(d, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.exp(-(p * p) / (2.0 * sigma * sigma))


def linear_weight(b, d, ceiling: float):
    """Ramp from 0 at zero persistence to 1 at ``ceiling`` (comparison option)."""
    p = np.asarray(d, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.clip(p / ceiling, 0.0, 1.0)


@dataclass(frozen=True)
class PIParams:
    bounds: tuple[float, float, float, float]
    resolution: int = DEFAULT_RESOLUTION
    epsilon: float = DEFAULT_EPSILON
    hom_dim: int = 2
    norm: Norm = "max"
    inf_policy: InfPolicy = "drop"
    weight_mode: WeightMode = "gaussian"

    def __post_init__(self):
        bounds = tuple(float(v) for v in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.norm not in ("max", "sum", "none"):
            raise DomainError(f"unknown norm {self.norm!r}")
        if self.inf_policy not in ("drop", "cap_at_rmax"):
            raise DomainError(f"unknown infinite-death policy {self.inf_policy!r}")
        if self.weight_mode not in ("gaussian", "linear"):
            raise DomainError(f"unknown weight mode {self.weight_mode!r}")
        self.sigma  # validates epsilon, bounds, resolution

    @property
    def sigma(self) -> float:
        return optimized_sigma(self.bounds, self.resolution, self.epsilon)

    @property
    def pixel_size(self) -> tuple[float, float]:
        m, M, n, N = self.bounds
        return (M - m) / self.resolution, (N - n) / self.resolution

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        m, _, n, _ = self.bounds
        dx, dy = self.pixel_size
        idx = np.arange(self.resolution) + 0.5
        return m + idx * dx, n + idx * dy

    def to_json(self) -> dict:
        m, M, n, N = self.bounds
        return {"m": m, "M": M, "n": n, "N": N, "k": self.resolution, "epsilon": self.epsilon,
                "sigma": self.sigma, "hom_dim": self.hom_dim, "norm": self.norm,
                "inf_policy": self.inf_policy, "weight": self.weight_mode}

    @classmethod
    def from_json(cls, obj: dict) -> "PIParams":
        return cls(bounds=(obj["m"], obj["M"], obj["n"], obj["N"]), resolution=int(obj["k"]),
                   epsilon=float(obj["epsilon"]), hom_dim=int(obj["hom_dim"]), norm=obj["norm"],
                   inf_policy=obj["inf_policy"], weight_mode=obj.get("weight", "gaussian"))


@dataclass(frozen=True)
class PersistenceImage:
    """``grid[i, j]``: row ``i`` is a birth coordinate, column ``j`` a death coordinate."""

    grid: np.ndarray
    params: PIParams
    fingerprint: str = ""


def select_pairs(dgm: PersistenceDiagram, hom_dim: int, inf_policy: InfPolicy = "drop",
                 r_max: float | None = None) -> np.ndarray:
    """Finite (birth, death) rows of one dimension after resolving infinite deaths."""
    pts = dgm.in_dim(hom_dim).copy()
    inf = np.isinf(pts[:, 1])
    if inf_policy == "drop":
        return pts[~inf]
    cap = dgm.r_max if r_max is None else r_max
    if inf.any() and not math.isfinite(cap):
        raise DomainError("cap_at_rmax needs a finite r_max")
    pts[inf, 1] = cap
    return pts


def diagram_fingerprint(pts: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(pts, dtype="<f8").tobytes()).hexdigest()[:16]


def _pad(lo: float, hi: float) -> tuple[float, float]:
    if hi > lo:
        return lo, hi
    pad = PAD_FRACTION * max(abs(lo), abs(hi), 1.0)
    return lo - pad, hi + pad


def raw_bounds(point_sets: Iterable[np.ndarray]) -> tuple[float, float, float, float] | None:
    """Min/max of births and deaths over several (birth, death) arrays, unpadded."""
    b_lo = d_lo = math.inf
    b_hi = d_hi = -math.inf
    for pts in point_sets:
        if len(pts) == 0:
            continue
        b_lo, b_hi = min(b_lo, float(pts[:, 0].min())), max(b_hi, float(pts[:, 0].max()))
        d_lo, d_hi = min(d_lo, float(pts[:, 1].min())), max(d_hi, float(pts[:, 1].max()))
    if b_lo == math.inf:
        return None
    return b_lo, b_hi, d_lo, d_hi


def pad_bounds(bounds) -> tuple[float, float, float, float]:
    m, M, n, N = bounds
    return _pad(m, M) + _pad(n, N)


def diagram_bounds(point_sets, mode: Literal["per_diagram", "dataset"] = "dataset"):
    """Grid bounds ``(m, M, n, N)`` over one or many finite (birth, death) arrays.

    ``per_diagram`` returns one bounds tuple per input; ``dataset`` returns a
    single tuple shared by all of them. Degenerate axes are padded.
    """
    if isinstance(point_sets, np.ndarray):
        point_sets = [point_sets]
    point_sets = list(point_sets)
    if mode == "per_diagram":
        out = []
        for pts in point_sets:
            rb = raw_bounds([pts])
            if rb is None:
                raise EmptyDiagramError("diagram has no finite pairs")
            out.append(pad_bounds(rb))
        return out if len(out) != 1 else out[0]
    rb = raw_bounds(point_sets)
    if rb is None:
        raise EmptyDiagramError("no finite pairs across the dataset")
    return pad_bounds(rb)


def normalize(grid: np.ndarray, mode: Norm = "max") -> np.ndarray:
    if mode == "none":
        return grid
    total = grid.max() if mode == "max" else grid.sum()
    if total <= 0:
        return grid
    return grid / total


def rasterize_points(pts: np.ndarray, params: PIParams) -> np.ndarray:
    """Unnormalized grid for an (n, 2) array of finite (birth, death) points."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    if np.isnan(pts).any() or np.isinf(pts).any():
        raise IntegrityError("diagram points must be finite")
    sigma = params.sigma
    xs, ys = params.centers()
    k = params.resolution
    grid = np.zeros((k, k))
    if len(pts) == 0:
        return grid
    b, d = pts[:, 0], pts[:, 1]
    if params.weight_mode == "gaussian":
        w = weight(b, d, sigma)
    else:
        m, _, _, N = params.bounds
        w = linear_weight(b, d, N - m)
    coef = w / (2.0 * math.pi * sigma * sigma)
    gx = np.exp(-((xs[:, None] - b[None, :]) ** 2) / (2 * sigma * sigma))  # (k, n)
    gy = np.exp(-((ys[:, None] - d[None, :]) ** 2) / (2 * sigma * sigma))  # (k, n)
    # separable Gaussian: sum_p coef_p gx[i,p] gy[j,p], fixed summation order
    return (gx * coef[None, :]) @ gy.T


def rasterize(dgm: PersistenceDiagram | np.ndarray, params: PIParams,
              r_max: float | None = None) -> PersistenceImage:
    if isinstance(dgm, PersistenceDiagram):
        pts = select_pairs(dgm, params.hom_dim, params.inf_policy, r_max)
    else:
        pts = np.asarray(dgm, dtype=np.float64).reshape(-1, 2)
    grid = normalize(rasterize_points(pts, params), params.norm)
    return PersistenceImage(grid, params, diagram_fingerprint(pts))


# --------------------------------------------------------------- writers


def write_pi_csv(pi: PersistenceImage, path: str | Path) -> None:
    with open(path, "w") as fh:
        for row in pi.grid:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_pi_csv(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return np.array(rows, dtype=np.float64)


def write_pi_png(pi: PersistenceImage, path: str | Path) -> None:
    """8-bit grayscale; row 0 is the smallest birth."""
    grid = pi.grid
    if pi.params.norm != "max":
        grid = normalize(grid, "max")
    pixels = np.clip(np.rint(255.0 * grid), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PNG")


def write_params_json(pi: PersistenceImage, path: str | Path, extra: dict | None = None) -> None:
    obj = pi.params.to_json()
    obj["fingerprint"] = pi.fingerprint
    if extra:
        obj["config"] = extra
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

