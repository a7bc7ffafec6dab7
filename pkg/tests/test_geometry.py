import numpy as np
import pytest

from src.errors import ConfigError, ShapeError
from src.geometry import (CameraModel, PointCloud, WorkspaceBox, backproject, crop_workspace,
                          farthest_point_sample, normalize_points, resample_to_count)


def identity_camera(size=64, f=100.0, c=None):
    c = size / 2.0 if c is None else c
    return CameraModel(f, f, c, c, size, size, np.eye(3), np.zeros(3))


def greedy_oracle(points: np.ndarray, k: int, seed_index: int) -> list:
    """Exhaustive max-min selection, recomputed from scratch every round."""
    selected = [seed_index]
    while len(selected) < k:
        best, best_score = None, -1.0
        for i in range(len(points)):
            if i in selected:
                continue
            score = min(float(np.sum((points[i] - points[j]) ** 2)) for j in selected)
            if score > best_score:
                best, best_score = i, score
        selected.append(best)
    return selected


def test_camera_rejects_bad_intrinsics_and_rotation():
    with pytest.raises(ConfigError):
        CameraModel(0.0, 1.0, 0, 0, 4, 4, np.eye(3), np.zeros(3))
    with pytest.raises(ConfigError):
        CameraModel(1.0, 1.0, 0, 0, 4, 4, np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_principal_pixel_backprojects_onto_axis():
    # pixel 31 has its centre at 31.5, on the optical axis when cx = cy = 31.5
    depth = np.zeros((64, 64), dtype=np.float32)
    depth[31, 31] = 2.0
    cloud = backproject(depth, np.zeros((64, 64, 3), dtype=np.uint8), identity_camera(c=31.5))
    assert len(cloud) == 1
    assert np.allclose(cloud.points[0], [0.0, 0.0, 2.0])


def test_pixel_centre_convention_off_axis():
    depth = np.zeros((64, 64), dtype=np.float32)
    depth[31, 31] = 2.0
    cloud = backproject(depth, np.zeros((64, 64, 3), dtype=np.uint8), identity_camera())
    assert np.allclose(cloud.points[0], [-0.01, -0.01, 2.0])


def test_all_invalid_depth_gives_empty_cloud():
    cloud = backproject(np.zeros((8, 8)), np.zeros((8, 8, 3)), identity_camera(8, 10.0))
    assert len(cloud) == 0


def test_backproject_carries_colors_in_unit_range():
    rgb = np.full((8, 8, 3), 255, dtype=np.uint8)
    cloud = backproject(np.ones((8, 8)), rgb, identity_camera(8, 10.0))
    assert len(cloud) == 64
    assert np.allclose(cloud.colors, 1.0)


def test_projection_round_trip():
    rng = np.random.default_rng(1)
    cam = CameraModel.orbit(30.0, 40.0, 1.0, [0.0, 0.0, 0.0], 60.0, 64)
    points = rng.uniform(-0.2, 0.2, (50, 3))
    u, v, z = cam.project(points)
    inside = (u >= 0) & (u < 64) & (v >= 0) & (v < 64)
    cols, rows = np.floor(u[inside]).astype(int), np.floor(v[inside]).astype(int)
    for point, r, c, depth in zip(points[inside], rows, cols, z[inside]):
        buf = np.zeros((64, 64))
        buf[r, c] = depth
        recovered = backproject(buf, np.zeros((64, 64, 3)), cam).points[0]
        footprint = depth / cam.fx
        assert np.linalg.norm(recovered - point) <= footprint * np.sqrt(2)


def test_crop_matches_linear_scan():
    rng = np.random.default_rng(2)
    cloud = PointCloud(rng.uniform(-1, 1, (1000, 3)))
    box = WorkspaceBox([-0.5, -0.2, 0.0], [0.3, 0.6, 0.9])
    expected = [i for i, p in enumerate(cloud.points)
                if all(box.minimum[a] <= p[a] <= box.maximum[a] for a in range(3))]
    cropped = crop_workspace(cloud, box)
    assert np.array_equal(cropped.points, cloud.points[expected])
    assert np.array_equal(crop_workspace(cropped, box).points, cropped.points)


def test_crop_extremes():
    cloud = PointCloud(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
    assert len(crop_workspace(cloud, WorkspaceBox([0, 0, 0], [1, 1, 1]))) == 2
    assert len(crop_workspace(cloud, WorkspaceBox([5, 5, 5], [6, 6, 6]))) == 0


def test_fps_known_cloud():
    points = np.array([[0, 0, 0], [10, 0, 0], [5, 0, 0], [0, 2, 0]], dtype=float)
    assert farthest_point_sample(points, 3, 0).tolist() == [0, 1, 2]
    assert farthest_point_sample(points, 1, 3).tolist() == [3]
    assert sorted(farthest_point_sample(points, 4, 0).tolist()) == [0, 1, 2, 3]


def test_fps_matches_greedy_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 65))
        k = int(rng.integers(1, n + 1))
        seed = int(rng.integers(n))
        # a coarse grid makes distance ties common
        points = rng.integers(0, 4, (n, 3)).astype(float) if rng.random() < 0.3 else rng.random((n, 3))
        assert farthest_point_sample(points, k, seed).tolist() == greedy_oracle(points, k, seed)


def test_fps_full_selection_is_a_permutation_with_duplicates():
    points = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], dtype=float)
    assert farthest_point_sample(points, 3, 0).tolist() == [0, 2, 1]

    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        grid = rng.integers(0, 2, (n, 3)).astype(float)
        chosen = farthest_point_sample(grid, n, int(rng.integers(n)))
        assert sorted(chosen.tolist()) == list(range(n))


def test_fps_cycles_past_cloud_size():
    points = np.array([[0, 0, 0], [1, 0, 0]], dtype=float)
    assert farthest_point_sample(points, 5, 0).tolist() == [0, 1, 0, 1, 0]


def test_fps_empty_cloud_is_an_error():
    with pytest.raises(ShapeError):
        farthest_point_sample(np.zeros((0, 3)), 1)


def test_resample_identity_and_padding():
    rng = np.random.default_rng(4)
    cloud = PointCloud(rng.random((6, 3)))
    same = resample_to_count(cloud, 6, rng)
    assert sorted(map(tuple, same.points)) == sorted(map(tuple, cloud.points))

    small = PointCloud(rng.random((3, 3)))
    padded = resample_to_count(small, 6, rng)
    assert len(padded) == 6
    originals = {tuple(p) for p in small.points}
    assert all(tuple(p) in originals for p in padded.points)


def test_resample_empty_cloud_is_an_error():
    with pytest.raises(ShapeError):
        resample_to_count(PointCloud(np.zeros((0, 3))), 4, np.random.default_rng(0))


def test_normalize_is_a_translation():
    box = WorkspaceBox([-1, -1, 0], [1, 3, 2])
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.random((20, 3)))
    once = normalize_points(cloud, box)
    twice = normalize_points(once, box)
    assert np.allclose(normalize_points(PointCloud(box.center), box).points, 0.0)
    assert np.allclose(twice.points, cloud.points - 2 * box.center)
    d0 = np.linalg.norm(cloud.points[:, None] - cloud.points[None], axis=-1)
    d1 = np.linalg.norm(once.points[:, None] - once.points[None], axis=-1)
    assert np.allclose(d0, d1, atol=1e-6)


def test_features_append_colors():
    cloud = PointCloud(np.ones((2, 3)), np.full((2, 3), 0.5))
    assert cloud.features().shape == (2, 3)
    feats = cloud.features(with_colors=True)
    assert feats.shape == (2, 6) and feats.dtype == np.float32
    assert np.allclose(feats[:, 3:], 0.5)
