"""Volumetric topological data analysis: 3D volumes to persistence images."""

from .filtration import FilteredComplex, default_threshold, rips_complex
from .image import PersistenceImage, PIParams, diagram_bounds, optimized_sigma, rasterize
from .persistence import PersistenceDiagram, compute_persistence, h0_union_find, naive_reduction
from .superpixel import ConverterConfig, PointCloud4D, compute_step, gaussian_smooth, to_point_cloud
from .volume_io import SynthSpec, Volume3D, load_npy, load_raw, save_npy, save_raw, synth_volume

__version__ = "0.1.0"

__all__ = [
    "ConverterConfig", "FilteredComplex", "PIParams", "PersistenceDiagram", "PersistenceImage",
    "PointCloud4D", "SynthSpec", "Volume3D", "compute_persistence", "compute_step", "default_threshold",
    "diagram_bounds", "gaussian_smooth", "h0_union_find", "load_npy", "load_raw", "naive_reduction",
    "optimized_sigma", "rasterize", "rips_complex", "save_npy", "save_raw", "synth_volume", "to_point_cloud",
]
