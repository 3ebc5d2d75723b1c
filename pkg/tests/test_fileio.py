import numpy as np
import pytest

from splatvo import fileio
from splatvo.geometry import PointCloud
from splatvo.splat import GaussianScene

from conftest import random_pose, random_scene


class TestTum:
    def test_round_trip(self, rng, tmp_path):
        poses = [random_pose(rng) for _ in range(7)]
        path = tmp_path / "traj.tum"
        fileio.save_trajectory_tum(path, poses)
        loaded, stamps = fileio.load_trajectory_tum(path)
        assert stamps == [float(i) for i in range(7)]
        for a, b in zip(poses, loaded):
            assert np.allclose(a.matrix(), b.matrix(), atol=1e-12)

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "t.tum"
        path.write_text("# header\n\n0 0 0 0 0 0 0 1\n")
        poses, _ = fileio.load_trajectory_tum(path)
        assert len(poses) == 1
        assert np.allclose(poses[0].matrix(), np.eye(4))

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.tum"
        path.write_text("0 0 0 0 0 0 0 1\n1 2 3\n")
        with pytest.raises(ValueError, match="line 2"):
            fileio.load_trajectory_tum(path)

    def test_non_numeric_reports_number(self, tmp_path):
        path = tmp_path / "bad.tum"
        path.write_text("a b c d e f g h\n")
        with pytest.raises(ValueError, match="line 1"):
            fileio.load_trajectory_tum(path)


class TestPly:
    def test_cloud_round_trip_plain(self, rng, tmp_path):
        pc = PointCloud(rng.normal(size=(40, 3)))
        path = tmp_path / "c.ply"
        fileio.save_point_cloud_ply(path, pc)
        back = fileio.load_point_cloud_ply(path)
        assert np.allclose(back.points, pc.points, atol=1e-6)
        assert back.colors is None

    def test_cloud_round_trip_colors(self, rng, tmp_path):
        pc = PointCloud(rng.normal(size=(10, 3)), colors=rng.uniform(size=(10, 3)))
        path = tmp_path / "c.ply"
        fileio.save_point_cloud_ply(path, pc)
        back = fileio.load_point_cloud_ply(path)
        assert np.allclose(back.colors, pc.colors, atol=1 / 255.0)

    def test_scene_round_trip(self, rng, tmp_path):
        scene = random_scene(rng, n=9)
        path = tmp_path / "scene.ply"
        fileio.save_scene_ply(path, scene)
        back = fileio.load_scene_ply(path)
        assert len(back) == 9
        assert np.allclose(back.means, scene.means, atol=1e-5)
        assert np.allclose(back.quaternions, scene.quaternions, atol=1e-6)
        assert np.allclose(back.opacity_logits, scene.opacity_logits, atol=1e-5)

    def test_scene_reader_rejects_plain_cloud(self, rng, tmp_path):
        path = tmp_path / "c.ply"
        fileio.save_point_cloud_ply(path, PointCloud(rng.normal(size=(4, 3))))
        with pytest.raises(ValueError):
            fileio.load_scene_ply(path)


class TestPng:
    def test_round_trip_quantized(self, rng, tmp_path):
        img = rng.uniform(size=(12, 9, 3))
        path = tmp_path / "i.png"
        fileio.save_image_png(path, img)
        back = fileio.load_image_png(path)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-9

    def test_half_up_rounding(self, tmp_path):
        # 0.5/255 must round up to byte 1, not banker's-round to 0
        img = np.full((1, 1, 3), 0.5 / 255.0)
        path = tmp_path / "r.png"
        fileio.save_image_png(path, img)
        assert np.allclose(fileio.load_image_png(path), 1.0 / 255.0)


class TestDepth:
    def test_round_trip_exact(self, rng, tmp_path):
        vals = rng.uniform(0.5, 90, size=(11, 7)).astype(np.float32).astype(np.float64)
        path = tmp_path / "d.depth"
        fileio.save_depth(path, vals)
        back = fileio.load_depth(path)
        assert back.shape == (11, 7)
        assert np.array_equal(back, vals)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.depth"
        path.write_bytes(b"JUNK" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            fileio.load_depth(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "t.depth"
        fileio.save_depth(path, np.ones((4, 4)))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError, match="bytes"):
            fileio.load_depth(path)
