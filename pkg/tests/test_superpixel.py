import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voltda.superpixel import (
    ConverterConfig,
    compute_step,
    gaussian_kernel1d,
    gaussian_smooth,
    read_cloud_csv,
    sample_centers,
    to_point_cloud,
    write_cloud_csv,
)
from voltda.volume_io import SynthSpec, Volume3D, synth_volume


def dense_convolve_reflect(vol, kernel3d):
    """Direct 3D correlation with half-sample symmetric borders."""

    def mirror(i, n):
        period = 2 * n
        i %= period
        return i if i < n else period - 1 - i

    r = kernel3d.shape[0] // 2
    d, h, w = vol.shape
    out = np.zeros_like(vol, dtype=np.float64)
    for z, y, x in itertools.product(range(d), range(h), range(w)):
        acc = 0.0
        for a, b, c in itertools.product(range(-r, r + 1), repeat=3):
            acc += kernel3d[a + r, b + r, c + r] * vol[mirror(z + a, d), mirror(y + b, h), mirror(x + c, w)]
        out[z, y, x] = acc
    return out


@pytest.mark.parametrize("dims,s,expected", [
    ((28, 28, 28), 600, 3),
    ((64, 64, 64), 512, 8),
    ((4, 4, 4), 64, 1),
    ((4, 4, 4), 10_000, 1),
    ((1, 1, 64), 1, 1),
])
def test_compute_step(dims, s, expected):
    assert compute_step(dims, s) == expected


def test_step_formula_28_cubed():
    assert (28 ** 3 / 600) ** (1 / 3) == pytest.approx(3.32, abs=0.01)


@given(st.tuples(*[st.integers(1, 80)] * 3), st.integers(1, 5000), st.integers(1, 5000))
def test_step_monotone_in_target(dims, a, b):
    lo, hi = sorted((a, b))
    assert compute_step(dims, hi) <= compute_step(dims, lo)


def test_kernel_truncation_and_sum():
    k = gaussian_kernel1d(1.0)
    assert len(k) == 7  # radius ceil(3 * 1)
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert len(gaussian_kernel1d(0.5)) == 5


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.3])
def test_constant_volume_unchanged(sigma):
    vol = Volume3D(np.full((6, 5, 7), 3.25))
    out = gaussian_smooth(vol, sigma)
    assert np.allclose(out.data, 3.25, atol=1e-10, rtol=0)


def test_sigma_zero_identity():
    vol = synth_volume(SynthSpec("uniform_noise", dims=(5, 6, 7), seed=1))
    out = gaussian_smooth(vol, 0.0)
    assert out.data.tobytes() == vol.data.tobytes()


def test_impulse_response_is_kernel_tensor_product():
    data = np.zeros((9, 9, 9))
    data[4, 4, 4] = 1.0
    out = gaussian_smooth(Volume3D(data), 1.0).data
    k = gaussian_kernel1d(1.0)
    k3 = np.einsum("i,j,k->ijk", k, k, k)
    expected = np.zeros((9, 9, 9))
    expected[1:8, 1:8, 1:8] = k3
    assert np.allclose(out, expected, atol=1e-15)
    assert np.allclose(out, dense_convolve_reflect(data, k3), atol=1e-15)


def test_separable_matches_dense_with_borders():
    data = np.random.default_rng(5).normal(size=(5, 6, 4))
    k = gaussian_kernel1d(0.8)
    k3 = np.einsum("i,j,k->ijk", k, k, k)
    out = gaussian_smooth(Volume3D(data), 0.8).data
    assert np.allclose(out, dense_convolve_reflect(data, k3), atol=1e-12)


def test_point_count_28_cubed():
    vol = synth_volume(SynthSpec("solid_ball", dims=(28, 28, 28), radius=8, noise=0.1, seed=0))
    cloud = to_point_cloud(vol, ConverterConfig(target_count=600))
    assert cloud.step == 3
    assert len(cloud) == 9 ** 3
    assert cloud.points[:, :3].min() >= 0 and cloud.points[:, :3].max() <= 1
    assert cloud.points[:, 3].min() >= 0 and cloud.points[:, 3].max() <= 1


def test_constant_zero_volume_gives_regular_grid():
    vol = Volume3D(np.zeros((8, 8, 8)))
    cloud = to_point_cloud(vol, ConverterConfig(target_count=64))
    step = cloud.step
    assert step == 2
    assert np.all(cloud.points[:, 3] == 0)
    axis = np.unique(cloud.points[:, 0])
    assert len(axis) == 4
    assert np.allclose(np.diff(axis), step / 7)
    assert np.allclose(axis, [0.5 / 7, 2.5 / 7, 4.5 / 7, 6.5 / 7])


def test_zero_intensity_weight_collapses_axis():
    vol = synth_volume(SynthSpec("sphere_shell", dims=(16, 16, 16), radius=5, thickness=2, seed=0))
    cloud = to_point_cloud(vol, ConverterConfig(target_count=100, intensity_weight=0.0))
    assert np.all(cloud.points[:, 3] == 0)


def test_intensity_weight_scales_axis():
    vol = synth_volume(SynthSpec("sphere_shell", dims=(16, 16, 16), radius=5, thickness=2, seed=0))
    a = to_point_cloud(vol, ConverterConfig(target_count=100))
    b = to_point_cloud(vol, ConverterConfig(target_count=100, intensity_weight=3.0))
    assert np.allclose(b.points[:, 3], 3.0 * a.points[:, 3])
    assert np.array_equal(a.points[:, :3], b.points[:, :3])


def test_single_voxel_axis_maps_to_zero():
    vol = Volume3D(np.random.default_rng(0).uniform(size=(1, 6, 6)))
    cloud = to_point_cloud(vol, ConverterConfig(target_count=36, prefilter_sigma=0.0))
    assert np.all(cloud.points[:, 0] == 0)


def test_trilinear_matches_nearest_on_odd_step():
    # odd steps put sample centres on voxel centres, so both modes agree
    vol = synth_volume(SynthSpec("solid_ball", dims=(27, 27, 27), radius=8, noise=0.2, seed=4))
    a = to_point_cloud(vol, ConverterConfig(target_count=27 ** 3 // 27, sampling="nearest"))
    b = to_point_cloud(vol, ConverterConfig(target_count=27 ** 3 // 27, sampling="trilinear"))
    assert a.step == 3
    assert np.allclose(a.points, b.points, atol=1e-12)


volumes = st.builds(
    lambda dims, seed: synth_volume(SynthSpec("uniform_noise", dims=dims, seed=seed)),
    st.tuples(*[st.integers(1, 14)] * 3),
    st.integers(0, 2 ** 16),
)


@settings(max_examples=40, deadline=None)
@given(volumes, st.integers(1, 400), st.sampled_from(["nearest", "trilinear"]))
def test_cloud_invariants(vol, target, sampling):
    cfg = ConverterConfig(target_count=target, sampling=sampling, intensity_weight=2.0)
    cloud = to_point_cloud(vol, cfg)
    s = compute_step(vol.dims, target)
    assert len(cloud) == math.prod(n // s for n in vol.dims)
    pts = cloud.points
    assert pts[:, :3].min() >= 0 and pts[:, :3].max() <= 1
    assert pts[:, 3].min() >= 0 and pts[:, 3].max() <= 2.0 + 1e-12
    again = to_point_cloud(vol, cfg)
    assert again.points.tobytes() == pts.tobytes()


@settings(max_examples=30, deadline=None)
@given(volumes, st.integers(1, 400))
def test_intensity_order_preserved(vol, target):
    cloud = to_point_cloud(vol, ConverterConfig(target_count=target))
    s = cloud.step
    smoothed = gaussian_smooth(vol, s / 2).as_float()
    grids = np.meshgrid(*[sample_centers(n, s) for n in vol.dims], indexing="ij")
    idx = tuple(np.clip(np.floor(g + 0.5).astype(int), 0, n - 1).ravel() for g, n in zip(grids, vol.dims))
    sampled = smoothed[idx]
    order = np.argsort(sampled, kind="stable")
    assert np.all(np.diff(cloud.points[order, 3]) >= 0)


def test_cloud_csv_roundtrip(tmp_path):
    vol = synth_volume(SynthSpec("two_blobs", dims=(12, 12, 24), radius=3, separation=10, noise=0.3, seed=3))
    cloud = to_point_cloud(vol, ConverterConfig(target_count=50))
    write_cloud_csv(cloud, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "z,y,x,v"
    back = read_cloud_csv(tmp_path / "c.csv")
    assert back.points.tobytes() == cloud.points.tobytes()
