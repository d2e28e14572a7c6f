"""Vietoris-Rips filtered complexes over 4D point clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import IntegrityError, ResourceError, SpecError, ThresholdError

DEFAULT_BUDGET = 5_000_000
DEFAULT_QUANTILE = 0.4


@dataclass(frozen=True)
class FilteredComplex:
    """Simplices in filtration order: sorted by (value, dim, vertices)."""

    simplices: list[tuple[int, ...]]
    values: np.ndarray
    max_dim: int
    r_max: float
    n_points: int

    def __len__(self):
        return len(self.simplices)

    @property
    def dims(self) -> np.ndarray:
        return np.fromiter((len(s) - 1 for s in self.simplices), dtype=np.int64, count=len(self.simplices))

    def index(self) -> dict[tuple[int, ...], int]:
        return {s: i for i, s in enumerate(self.simplices)}

    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.simplices:
            out[len(s) - 1] = out.get(len(s) - 1, 0) + 1
        return out


def _points_of(cloud) -> np.ndarray:
    pts = np.asarray(cloud.points if hasattr(cloud, "points") else cloud, dtype=np.float64)
    return pts.reshape(1, -1) if pts.ndim == 1 else pts


def from_simplices(simplices, values, max_dim=None, r_max=math.inf, n_points=None) -> FilteredComplex:
    """Sort arbitrary (simplex, value) data into a complex, checking face closure."""
    items = sorted(((float(f), len(s) - 1, tuple(sorted(s))) for s, f in zip(simplices, values)))
    simp = [s for _, _, s in items]
    vals = np.array([f for f, _, _ in items], dtype=np.float64)
    if max_dim is None:
        max_dim = max((len(s) - 1 for s in simp), default=0)
    if n_points is None:
        n_points = sum(1 for s in simp if len(s) == 1)
    cx = FilteredComplex(simp, vals, max_dim, float(r_max), n_points)
    check_filtration(cx)
    return cx


def check_filtration(cx: FilteredComplex) -> None:
    """Raise IntegrityError unless every face is present and precedes its cofaces."""
    pos = cx.index()
    if len(pos) != len(cx.simplices):
        raise IntegrityError("duplicate simplices in complex")
    for j, s in enumerate(cx.simplices):
        if any(b <= a for a, b in zip(s, s[1:])):
            raise IntegrityError(f"simplex {s} vertices not strictly increasing")
        if len(s) == 1:
            continue
        for k in range(len(s)):
            face = s[:k] + s[k + 1:]
            i = pos.get(face)
            if i is None:
                raise IntegrityError(f"face {face} of {s} missing")
            if i >= j or cx.values[i] > cx.values[j]:
                raise IntegrityError(f"face {face} does not precede coface {s}")


def pairwise_distances(cloud) -> np.ndarray:
    return squareform(pdist(_points_of(cloud)))


def default_threshold(cloud, q: float = DEFAULT_QUANTILE) -> float:
    """Nearest-rank ``q``-quantile of all pairwise distances."""
    pts = _points_of(cloud)
    if len(pts) < 2:
        raise ThresholdError("need at least two points to derive a threshold")
    if not 0 < q <= 1:
        raise SpecError(f"quantile must lie in (0, 1], got {q}")
    d = np.sort(pdist(pts))
    rank = max(1, math.ceil(q * len(d) - 1e-9))
    return float(d[rank - 1])


class BudgetGuard:
    """Running simplex counter that aborts construction past ``budget``."""

    def __init__(self, budget: int = DEFAULT_BUDGET):
        if budget <= 0:
            raise SpecError("budget must be positive")
        self.budget = budget
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n
        if self.count > self.budget:
            raise ResourceError(
                f"simplex budget of {self.budget} exceeded ({self.count} simplices so far); "
                "try a smaller r_max / quantile or fewer superpixels"
            )


def rips_complex(cloud, r_max: float, max_dim: int = 3, budget: int = DEFAULT_BUDGET) -> FilteredComplex:
    """Vietoris-Rips complex up to ``max_dim`` with edges of length <= ``r_max``."""
    pts = _points_of(cloud)
    n = len(pts)
    if n == 0:
        raise SpecError("point cloud is empty")
    if not r_max > 0:
        raise SpecError("r_max must be positive")
    if not 0 <= max_dim <= 3:
        raise SpecError("max_dim must lie in [0, 3]")
    guard = BudgetGuard(budget)
    dist = pairwise_distances(pts).tolist() if n > 1 else [[0.0]]

    items: list[tuple[float, int, tuple[int, ...]]] = []
    guard.add(n)
    items.extend((0.0, 0, (v,)) for v in range(n))

    # upper neighbourhoods: neighbours with a larger index within r_max
    upper: list[set[int]] = []
    for u in range(n):
        row = dist[u]
        upper.append({v for v in range(u + 1, n) if row[v] <= r_max})

    if max_dim >= 1:
        for u in range(n):
            row = dist[u]
            stack = []
            for v in sorted(upper[u]):
                guard.add()
                f = row[v]
                items.append((f, 1, (u, v)))
                if max_dim >= 2:
                    stack.append(((u, v), f, upper[u] & upper[v]))
            while stack:
                simplex, f, cand = stack.pop()
                dim = len(simplex)  # dimension of the extension
                for w in sorted(cand):
                    guard.add()
                    fw = max(f, max(dist[x][w] for x in simplex))
                    ext = simplex + (w,)
                    items.append((fw, dim, ext))
                    if dim < max_dim:
                        stack.append((ext, fw, cand & upper[w]))

    items.sort()
    return FilteredComplex(
        simplices=[s for _, _, s in items],
        values=np.array([f for f, _, _ in items], dtype=np.float64),
        max_dim=max_dim,
        r_max=float(r_max),
        n_points=n,
    )


def dump_complex(cx: FilteredComplex, path: str | Path) -> None:
    """Debug dump, one ``f dim v0 v1 ...`` line per simplex in filtration order."""
    with open(path, "w") as fh:
        for s, f in zip(cx.simplices, cx.values):
            fh.write(f"{float(f)!r} {len(s) - 1} {' '.join(map(str, s))}\n")
