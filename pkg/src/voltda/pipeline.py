"""Volume -> point cloud -> diagram -> persistence image, over batches of files."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import image as pi
from .errors import ConfigError, ResourceError, VoltdaError
from .filtration import DEFAULT_BUDGET, default_threshold, rips_complex
from .persistence import PersistenceDiagram, compute_persistence, read_diagram_csv, write_diagram_csv
from .superpixel import ConverterConfig, PointCloud4D, to_point_cloud
from .volume_io import SynthSpec, Volume3D, load_npy, load_raw, save_npy, synth_volume

log = logging.getLogger(__name__)

CONFIG_ENV = "VOLTDA_CONFIG"
# The op-level default quantile (0.4) makes a dense Rips complex on a few hundred
# superpixels; the pipeline default keeps 600-superpixel clouds tractable.
PIPELINE_QUANTILE = 0.02


@dataclass(frozen=True)
class FiltrationConfig:
    r_max: float | None = None
    quantile: float = PIPELINE_QUANTILE
    max_dim: int = 3
    budget: int = DEFAULT_BUDGET
    keep_zero_bars: bool = False

    def __post_init__(self):
        if self.r_max is not None and not self.r_max > 0:
            raise ConfigError("r_max must be positive")
        if not 0 < self.quantile <= 1:
            raise ConfigError("quantile must lie in (0, 1]")
        if not 0 <= self.max_dim <= 3:
            raise ConfigError("max_dim must lie in [0, 3]")
        if self.budget <= 0:
            raise ConfigError("budget must be positive")

    def threshold(self, cloud) -> float:
        if self.r_max is not None:
            return float(self.r_max)
        return default_threshold(cloud, self.quantile)


@dataclass(frozen=True)
class ImageConfig:
    resolution: int = pi.DEFAULT_RESOLUTION
    epsilon: float = pi.DEFAULT_EPSILON
    hom_dims: tuple[int, ...] = (2,)
    norm: str = "max"
    bounds: str = "per"  # "per" (per diagram) or "dataset"
    inf_policy: str = "drop"
    weight: str = "gaussian"
    stack: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hom_dims", tuple(int(k) for k in self.hom_dims))
        if self.bounds not in ("per", "dataset"):
            raise ConfigError("bounds must be 'per' or 'dataset'")
        if not self.hom_dims:
            raise ConfigError("at least one homology dimension is required")
        try:
            self.params(0, (0.0, 1.0, 0.0, 1.0))
        except VoltdaError as exc:
            raise ConfigError(str(exc)) from exc

    def params(self, hom_dim: int, bounds) -> pi.PIParams:
        return pi.PIParams(bounds=bounds, resolution=self.resolution, epsilon=self.epsilon, hom_dim=hom_dim,
                           norm=self.norm, inf_policy=self.inf_policy, weight_mode=self.weight)


@dataclass(frozen=True)
class PipelineConfig:
    converter: ConverterConfig = field(default_factory=ConverterConfig)
    filtration: FiltrationConfig = field(default_factory=FiltrationConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    seed: int = 0
    jobs: int | None = None

    def __post_init__(self):
        if any(k > self.filtration.max_dim for k in self.image.hom_dims):
            raise ConfigError("requested homology dimension exceeds filtration max_dim")

    def effective(self) -> dict:
        """Resolved settings echoed into sidecars (``jobs`` does not affect output)."""
        out = asdict(self)
        out.pop("jobs")
        out["image"]["hom_dims"] = list(self.image.hom_dims)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        known = {"converter", "filtration", "image", "seed", "jobs"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                converter=_build(ConverterConfig, obj.get("converter", {})),
                filtration=_build(FiltrationConfig, obj.get("filtration", {})),
                image=_build(ImageConfig, obj.get("image", {})),
                seed=int(obj.get("seed", 0)),
                jobs=obj.get("jobs"),
            )
        except VoltdaError as exc:
            raise ConfigError(str(exc)) from exc

    def override(self, section: str | None = None, **values) -> "PipelineConfig":
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        try:
            if section is None:
                return replace(self, **values)
            return replace(self, **{section: replace(getattr(self, section), **values)})
        except VoltdaError as exc:
            raise ConfigError(str(exc)) from exc


def _build(klass, obj: dict):
    names = {f.name for f in fields(klass)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"unknown {klass.__name__} keys: {sorted(unknown)}")
    return klass(**obj)


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Read a JSON config from ``path`` or ``$VOLTDA_CONFIG``; defaults otherwise."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return PipelineConfig.from_dict(obj)


# ------------------------------------------------------------------ stages


def load_volume(path: str | Path) -> Volume3D:
    path = Path(path)
    if path.suffix == ".npy":
        return load_npy(path)
    return load_raw(path)


def discover_volumes(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix in (".npy", ".raw")))
        else:
            out.append(p)
    return out


def diagram_of(cloud: PointCloud4D, cfg: FiltrationConfig, max_hom_dim: int) -> PersistenceDiagram:
    r_max = cfg.threshold(cloud)
    cx = rips_complex(cloud, r_max, cfg.max_dim, cfg.budget)
    return compute_persistence(cx, min(max_hom_dim, cfg.max_dim), cfg.keep_zero_bars)


def image_points(dgm: PersistenceDiagram, k: int, cfg: ImageConfig) -> np.ndarray:
    return pi.select_pairs(dgm, k, cfg.inf_policy)


def fallback_bounds(r_max: float) -> tuple[float, float, float, float]:
    hi = r_max if math.isfinite(r_max) and r_max > 0 else 1.0
    return (0.0, hi, 0.0, hi)


def per_diagram_bounds(points: np.ndarray, r_max: float):
    if len(points) == 0:
        return fallback_bounds(r_max)
    return pi.diagram_bounds(points, "per_diagram")


@dataclass
class VolumeResult:
    path: Path
    diagram: PersistenceDiagram | None = None
    error: str | None = None
    resource: bool = False


def _persist_one(args) -> VolumeResult:
    path, cfg = args
    try:
        cloud = to_point_cloud(load_volume(path), cfg.converter)
        dgm = diagram_of(cloud, cfg.filtration, max(cfg.image.hom_dims))
        return VolumeResult(path, dgm)
    except ResourceError as exc:
        return VolumeResult(path, error=str(exc), resource=True)
    except (VoltdaError, OSError, ValueError) as exc:
        return VolumeResult(path, error=f"{type(exc).__name__}: {exc}")


def _map(func, items, jobs: int | None):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def write_images(stem: str, dgm: PersistenceDiagram, cfg: PipelineConfig, out_dir: Path,
                 bounds_by_dim: dict[int, tuple] | None = None) -> list[Path]:
    """Rasterize every requested dimension of ``dgm`` and write PNG, CSV and sidecar."""
    written = []
    grids = []
    for k in cfg.image.hom_dims:
        pts = image_points(dgm, k, cfg.image)
        bounds = bounds_by_dim[k] if bounds_by_dim else per_diagram_bounds(pts, dgm.r_max)
        image = pi.rasterize(pts, cfg.image.params(k, bounds))
        base = out_dir / f"{stem}.H{k}"
        pi.write_pi_csv(image, f"{base}.pi.csv")
        pi.write_pi_png(image, f"{base}.pi.png")
        extra = cfg.effective()
        extra["r_max"] = dgm.r_max
        pi.write_params_json(image, f"{base}.params.json", extra)
        written += [Path(f"{base}.pi.csv"), Path(f"{base}.pi.png"), Path(f"{base}.params.json")]
        grids.append(image.grid)
    if cfg.image.stack:
        save_npy(np.stack(grids), out_dir / f"{stem}.stack.npy")
        written.append(out_dir / f"{stem}.stack.npy")
    return written


@dataclass
class BatchReport:
    done: list[Path] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    resource_failure: bool = False

    @property
    def exit_code(self) -> int:
        if self.resource_failure:
            return 3
        return 1 if self.failed else 0


def run_pipeline(inputs, out_dir: str | Path, cfg: PipelineConfig = PipelineConfig()) -> BatchReport:
    """Process every volume; failures are logged and skipped.

    In dataset-bounds mode all diagrams are computed first, then a single
    grid (and therefore a single sigma) is derived for each homology
    dimension before any image is written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = discover_volumes(inputs)
    results = _map(_persist_one, [(p, cfg) for p in paths], cfg.jobs)

    report = BatchReport()
    ok = []
    for res in results:
        if res.error is not None:
            log.error("%s: %s", res.path, res.error)
            report.failed[str(res.path)] = res.error
            report.resource_failure |= res.resource
            continue
        write_diagram(res.diagram, out_dir / f"{res.path.stem}.diagram.csv")
        ok.append(res)

    shared = None
    if cfg.image.bounds == "dataset" and ok:
        shared = {}
        for k in cfg.image.hom_dims:
            sets = [image_points(r.diagram, k, cfg.image) for r in ok]
            rb = pi.raw_bounds(sets)
            if rb is None:
                shared[k] = fallback_bounds(max(r.diagram.r_max for r in ok))
            else:
                shared[k] = pi.pad_bounds(rb)

    for res in ok:
        write_images(res.path.stem, res.diagram, cfg, out_dir, shared)
        report.done.append(res.path)
    return report


# ----------------------------------------------------- stage-wise helpers


def convert_file(path, cfg: ConverterConfig) -> PointCloud4D:
    return to_point_cloud(load_volume(path), cfg)


def persist_cloud(cloud: PointCloud4D, cfg: FiltrationConfig, max_hom_dim: int) -> PersistenceDiagram:
    return diagram_of(cloud, cfg, max_hom_dim)


def write_diagram(dgm: PersistenceDiagram, path: str | Path) -> None:
    """Diagram CSV plus a ``.json`` sidecar carrying the Rips threshold."""
    write_diagram_csv(dgm, path)
    meta = {"r_max": dgm.r_max, "max_dim": dgm.max_dim, "n_points": dgm.n_points}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def read_diagram(path: str | Path) -> PersistenceDiagram:
    dgm = read_diagram_csv(path)
    side = Path(str(path) + ".json")
    if side.exists():
        meta = json.loads(side.read_text())
        dgm = PersistenceDiagram(dgm.pairs, r_max=meta["r_max"], max_dim=meta.get("max_dim"),
                                 n_points=meta.get("n_points"))
    return dgm


def image_from_diagram_file(path, cfg: PipelineConfig, out_dir, bounds=None, r_max=None) -> list[Path]:
    dgm = read_diagram(path)
    if r_max is not None:
        dgm = PersistenceDiagram(dgm.pairs, r_max=float(r_max), max_dim=dgm.max_dim, n_points=dgm.n_points)
    stem = Path(path).name.removesuffix(".diagram.csv").removesuffix(".csv")
    bounds_by_dim = {k: tuple(bounds) for k in cfg.image.hom_dims} if bounds is not None else None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return write_images(stem, dgm, cfg, out_dir, bounds_by_dim)


def synth_batch(base: SynthSpec, kinds, count: int, seed: int, out_dir, jitter: float = 0.0) -> list[Path]:
    """Write ``count`` volumes per kind plus ``labels.csv`` (columns ``file,label``).

    Each volume gets its own seed derived from ``(seed, kind index, item)``;
    ``jitter`` shifts the centre uniformly by up to that many voxels per axis.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = tuple(base.dims)
    centre = np.array(base.center if base.center is not None else [(n - 1) / 2 for n in dims])
    files, rows = [], []
    for ki, kind in enumerate(kinds):
        for i in range(count):
            item_seed = int(np.random.SeedSequence([seed, ki, i]).generate_state(1)[0])
            rng = np.random.default_rng(item_seed)
            c = centre + (rng.uniform(-jitter, jitter, size=3) if jitter > 0 else 0.0)
            spec = replace(base, kind=kind, seed=item_seed, center=tuple(float(v) for v in c))
            path = out_dir / f"{kind}_{i:03d}.npy"
            save_npy(synth_volume(spec), path)
            files.append(path)
            rows.append(f"{path.name},{kind}")
    (out_dir / "labels.csv").write_text("file,label\n" + "\n".join(rows) + "\n")
    return files
