"""Persistence diagrams from filtered complexes, over Z/2.

Three routes produce the same pairs:

``compute_persistence``
    sparse column reduction with clearing, dimensions processed top-down;
``naive_reduction``
    dense left-to-right reduction with no optimizations (a test oracle);
``h0_union_find``
    union-find with the elder rule, for dimension 0 only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, OracleScaleError, SpecError
from .filtration import FilteredComplex

ORACLE_MAX_SIMPLICES = 20_000


@dataclass(frozen=True)
class PersistenceDiagram:
    """Rows of ``(dim, birth, death)``; ``death`` is ``inf`` for essential classes."""

    pairs: np.ndarray
    r_max: float = math.inf
    max_dim: int | None = None
    n_points: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.pairs, dtype=np.float64).reshape(-1, 3)
        if np.isnan(arr).any():
            raise IntegrityError("diagram contains NaN")
        order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
        object.__setattr__(self, "pairs", arr[order])

    def __len__(self):
        return len(self.pairs)

    def in_dim(self, k: int) -> np.ndarray:
        """(birth, death) rows of homology dimension ``k``."""
        return self.pairs[self.pairs[:, 0] == k][:, 1:]

    def essential(self, k: int | None = None) -> np.ndarray:
        rows = self.pairs[np.isinf(self.pairs[:, 2])]
        return rows if k is None else rows[rows[:, 0] == k]

    def as_tuples(self) -> list[tuple[int, float, float]]:
        return [(int(k), float(b), float(d)) for k, b, d in self.pairs]


def _diagram(pairs, cx: FilteredComplex, keep_zero: bool) -> PersistenceDiagram:
    if not keep_zero:
        pairs = [p for p in pairs if p[2] > p[1]]
    return PersistenceDiagram(np.array(pairs, dtype=np.float64).reshape(-1, 3),
                              r_max=cx.r_max, max_dim=cx.max_dim, n_points=cx.n_points)


def _boundaries(cx: FilteredComplex) -> list[list[int]]:
    pos = cx.index()
    if len(pos) != len(cx):
        raise IntegrityError("duplicate simplices in complex")
    out = []
    for j, s in enumerate(cx.simplices):
        if len(s) == 1:
            out.append([])
            continue
        col = []
        for k in range(len(s)):
            i = pos.get(s[:k] + s[k + 1:])
            if i is None or i >= j:
                raise IntegrityError(f"face of {s} missing or placed after it")
            col.append(i)
        out.append(col)
    return out


def compute_persistence(cx: FilteredComplex, max_hom_dim: int | None = None,
                        keep_zero_bars: bool = False) -> PersistenceDiagram:
    """Reduce the boundary matrix with the clearing (twist) optimization.

    Columns are reduced one dimension at a time from ``max_hom_dim + 1``
    down to 1. A column whose index already appeared as a pivot of a
    higher-dimensional column is known to reduce to zero and is skipped.
    """
    if max_hom_dim is None:
        max_hom_dim = cx.max_dim
    if max_hom_dim > cx.max_dim:
        raise SpecError(f"max_hom_dim {max_hom_dim} exceeds complex max_dim {cx.max_dim}")
    boundary = _boundaries(cx)
    dims = [len(s) - 1 for s in cx.simplices]
    values = cx.values.tolist()
    top = min(max_hom_dim + 1, cx.max_dim)

    by_dim: dict[int, list[int]] = {}
    for j, d in enumerate(dims):
        by_dim.setdefault(d, []).append(j)

    owner: dict[int, int] = {}  # pivot row -> column
    reduced: dict[int, set[int]] = {}
    cleared: set[int] = set()
    for d in range(top, 0, -1):
        for j in by_dim.get(d, ()):
            if j in cleared:
                continue
            col = set(boundary[j])
            while col:
                low = max(col)
                k = owner.get(low)
                if k is None:
                    owner[low] = j
                    reduced[j] = col
                    cleared.add(low)
                    break
                col ^= reduced[k]

    pairs = []
    for low, j in owner.items():
        if dims[low] <= max_hom_dim:
            pairs.append((dims[low], values[low], values[j]))
    for i, d in enumerate(dims):
        if d <= max_hom_dim and i not in reduced and i not in owner:
            pairs.append((d, values[i], math.inf))
    return _diagram(pairs, cx, keep_zero_bars)


def naive_reduction(cx: FilteredComplex, keep_zero_bars: bool = False) -> PersistenceDiagram:
    """Dense Z/2 reduction, left to right, no shortcuts. Reports every dimension."""
    n = len(cx)
    if n > ORACLE_MAX_SIMPLICES:
        raise OracleScaleError(f"{n} simplices exceeds oracle cap {ORACLE_MAX_SIMPLICES}")
    dims = [len(s) - 1 for s in cx.simplices]
    values = cx.values.tolist()
    mat = np.zeros((n, n), dtype=bool)
    for j, col in enumerate(_boundaries(cx)):
        mat[col, j] = True

    def low(j):
        nz = np.flatnonzero(mat[:, j])
        return int(nz[-1]) if len(nz) else -1

    lows = [-1] * n
    owner: dict[int, int] = {}
    for j in range(n):
        lj = low(j)
        while lj >= 0 and lj in owner:
            mat[:, j] ^= mat[:, owner[lj]]
            lj = low(j)
        lows[j] = lj
        if lj >= 0:
            owner[lj] = j

    pairs = [(dims[i], values[i], values[j]) for i, j in owner.items()]
    for i in range(n):
        if lows[i] < 0 and i not in owner:
            pairs.append((dims[i], values[i], math.inf))
    return _diagram(pairs, cx, keep_zero_bars)


class UnionFind:
    """Disjoint sets whose representative is always the oldest member."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, elder: int, younger: int) -> None:
        self.parent[younger] = elder


def h0_union_find(cx: FilteredComplex, keep_zero_bars: bool = False) -> PersistenceDiagram:
    """Dimension-0 pairs via the elder rule.

    Age is the position in filtration order, so ties in birth value are
    broken by vertex order, exactly as the matrix reduction does.
    """
    order: dict[int, int] = {}
    births: dict[int, float] = {}
    for i, s in enumerate(cx.simplices):
        if len(s) == 1:
            order[s[0]] = i
            births[s[0]] = float(cx.values[i])
    # relabel so that union-find slots follow filtration order
    verts = sorted(order, key=order.get)
    slot = {v: k for k, v in enumerate(verts)}
    uf = UnionFind(len(verts))
    pairs = []
    for s, f in zip(cx.simplices, cx.values.tolist()):
        if len(s) != 2:
            continue
        a, b = uf.find(slot[s[0]]), uf.find(slot[s[1]])
        if a == b:
            continue
        elder, younger = min(a, b), max(a, b)
        uf.union(elder, younger)
        pairs.append((0, births[verts[younger]], f))
    for k in range(len(verts)):
        if uf.find(k) == k:
            pairs.append((0, births[verts[k]], math.inf))
    return _diagram(pairs, cx, keep_zero_bars)


# ------------------------------------------------------------------- CSV


def write_diagram_csv(dgm: PersistenceDiagram, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("dim,birth,death\n")
        for k, b, d in dgm.pairs:
            death = "inf" if math.isinf(d) else repr(float(d))
            fh.write(f"{int(k)},{float(b)!r},{death}\n")


def read_diagram_csv(path: str | Path) -> PersistenceDiagram:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "dim,birth,death":
            raise IntegrityError(f"{path}: expected header dim,birth,death")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k, b, d = line.split(",")
            rows.append((int(k), float(b), float(d)))
    return PersistenceDiagram(np.array(rows, dtype=np.float64).reshape(-1, 3))
