import math

import numpy as np
import pytest

from splatvo.geometry import PoseSE3, Twist, chain_poses, compose, exp_map
from splatvo.metrics import align_trajectories, ate, format_report, psnr, report_json, rpe, ssim
from splatvo.losses import dssim_loss

from conftest import random_pose


def random_trajectory(rng, n=10):
    rels = [
        exp_map(Twist(rng.normal(scale=0.08, size=3), rng.normal(scale=0.3, size=3)))
        for _ in range(n - 1)
    ]
    return chain_poses(rels)


def apply_sim3(poses, scale, q: PoseSE3):
    return [
        PoseSE3(q.rotation @ p.rotation, scale * (q.rotation @ p.translation) + q.translation)
        for p in poses
    ]


def naive_ate(est, gt, scale, xf):
    """Independent oracle: per-pose loop over aligned residuals."""
    total = 0.0
    for e, g in zip(est, gt):
        aligned = scale * xf.rotation @ e.translation + xf.translation
        total += float(np.sum((aligned - g.translation) ** 2))
    return math.sqrt(total / len(est))


def naive_rpe(est, gt, delta, scale):
    """Independent oracle: explicit per-pair loop with 4x4 matrices."""
    t_sq, r_sq, count = 0.0, 0.0, 0
    for i in range(len(est) - delta):
        def mat(p, s):
            m = p.matrix()
            m[:3, 3] *= s
            return m

        rel_gt = np.linalg.inv(mat(gt[i], 1.0)) @ mat(gt[i + delta], 1.0)
        rel_est = np.linalg.inv(mat(est[i], scale)) @ mat(est[i + delta], scale)
        err = np.linalg.inv(rel_gt) @ rel_est
        t_sq += float(np.sum(err[:3, 3] ** 2))
        c = (np.trace(err[:3, :3]) - 1) / 2
        r_sq += math.degrees(math.acos(min(1.0, max(-1.0, c)))) ** 2
        count += 1
    return math.sqrt(t_sq / count), math.sqrt(r_sq / count)


class TestAlign:
    def test_identical(self, rng):
        traj = random_trajectory(rng)
        scale, xf = align_trajectories(traj, traj)
        assert scale == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(xf.matrix(), np.eye(4), atol=1e-9)

    def test_recovers_similarity(self, rng):
        gt = random_trajectory(rng)
        rot30 = exp_map(Twist([0, 0, math.radians(30)], [0, 0, 0]))
        est = apply_sim3(gt, 2.0, rot30)
        scale, xf = align_trajectories(est, gt)
        assert scale == pytest.approx(0.5, abs=1e-9)
        assert np.allclose(xf.rotation, rot30.rotation.T, atol=1e-9)

    def test_beats_random_similarities(self, rng):
        gt = random_trajectory(rng, n=12)
        est = [
            PoseSE3(p.rotation, p.translation + rng.normal(scale=0.05, size=3)) for p in gt
        ]
        scale, xf = align_trajectories(est, gt)
        best = naive_ate(est, gt, scale, xf)
        for _ in range(1000):
            q = random_pose(rng, rot_scale=0.5, trans_scale=0.5)
            s = rng.uniform(0.5, 2.0)
            assert best <= naive_ate(est, gt, s, q) + 1e-12

    def test_validation(self, rng):
        traj = random_trajectory(rng, n=5)
        with pytest.raises(ValueError):
            align_trajectories(traj, traj[:-1])
        with pytest.raises(ValueError):
            align_trajectories(traj[:2], traj[:2])


class TestAte:
    def test_identical_zero(self, rng):
        traj = random_trajectory(rng)
        assert ate(traj, traj) == pytest.approx(0.0, abs=1e-12)

    def test_rigid_transform_absorbed(self, rng):
        gt = random_trajectory(rng)
        est = apply_sim3(gt, 1.7, random_pose(rng))
        assert ate(est, gt) < 1e-9

    def test_single_offset_matches_oracle(self, rng):
        gt = [PoseSE3(np.eye(3), [0, 0, float(i)]) for i in range(8)]
        est = [PoseSE3(p.rotation, p.translation.copy()) for p in gt]
        est[3] = PoseSE3(np.eye(3), est[3].translation + [0.25, 0, 0])
        scale, xf = align_trajectories(est, gt)
        assert ate(est, gt) == pytest.approx(naive_ate(est, gt, scale, xf), abs=1e-12)

    def test_random_matches_oracle(self, rng):
        gt = random_trajectory(rng)
        est = [
            PoseSE3(p.rotation, p.translation + rng.normal(scale=0.1, size=3)) for p in gt
        ]
        scale, xf = align_trajectories(est, gt)
        assert ate(est, gt) == pytest.approx(naive_ate(est, gt, scale, xf), abs=1e-12)

    def test_invariance_under_sim3_of_est(self, rng):
        gt = random_trajectory(rng)
        est = [
            PoseSE3(p.rotation, p.translation + rng.normal(scale=0.1, size=3)) for p in gt
        ]
        base = ate(est, gt)
        for _ in range(10):
            q = random_pose(rng)
            s = rng.uniform(0.3, 3.0)
            assert abs(ate(apply_sim3(est, s, q), gt) - base) < 1e-9


class TestRpe:
    def test_identical_zero(self, rng):
        traj = random_trajectory(rng)
        t, r = rpe(traj, traj)
        assert t == pytest.approx(0.0, abs=1e-12)
        assert r == pytest.approx(0.0, abs=1e-9)

    def test_constant_rotation_error(self, rng):
        gt = random_trajectory(rng, n=9)
        bump = exp_map(Twist([0, 0, math.radians(1.0)], [0, 0, 0]))
        rels = [compose(gt[i].inverse(), gt[i + 1]) for i in range(len(gt) - 1)]
        est = chain_poses([compose(rel, bump) for rel in rels])
        _, r = rpe(est, gt)
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_random_matches_oracle(self, rng):
        for delta in (1, 2):
            gt = random_trajectory(rng, n=11)
            est = random_trajectory(rng, n=11)
            scale, _ = align_trajectories(est, gt)
            t, r = rpe(est, gt, delta=delta)
            ot, orr = naive_rpe(est, gt, delta, scale)
            assert t == pytest.approx(ot, abs=1e-12)
            assert r == pytest.approx(orr, abs=1e-12)

    def test_global_rigid_invariance_of_rotation_part(self, rng):
        gt = random_trajectory(rng)
        est = random_trajectory(rng)
        _, r_base = rpe(est, gt)
        q = random_pose(rng)
        est_moved = [compose(q, p) for p in est]
        _, r_moved = rpe(est_moved, gt)
        assert abs(r_base - r_moved) < 1e-9

    def test_length_validation(self, rng):
        traj = random_trajectory(rng, n=4)
        with pytest.raises(ValueError):
            rpe(traj, traj, delta=4)


class TestPsnr:
    def test_identical_infinite(self, rng):
        a = rng.uniform(size=(8, 8, 3))
        assert psnr(a, a.copy()) == math.inf

    def test_uniform_half(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.5)
        assert psnr(a, b) == pytest.approx(20 * math.log10(2), abs=1e-12)

    def test_matches_direct_sum_oracle(self, rng):
        a = rng.uniform(size=(9, 7, 3))
        b = rng.uniform(size=(9, 7, 3))
        total = 0.0
        for i in range(9):
            for j in range(7):
                for c in range(3):
                    total += (a[i, j, c] - b[i, j, c]) ** 2
        expected = 10 * math.log10(1.0 / (total / (9 * 7 * 3)))
        assert psnr(a, b) == pytest.approx(expected, abs=1e-10)

    def test_monotone_in_noise(self, rng):
        a = rng.uniform(0.3, 0.7, size=(16, 16, 3))
        values = []
        for amp in np.linspace(0.01, 0.2, 10):
            noise = rng.uniform(-1, 1, size=a.shape)
            values.append(psnr(a, np.clip(a + amp * np.abs(noise) + 1e-3, 0, 1)))
        assert all(x > y for x, y in zip(values, values[1:]))


class TestSsim:
    def test_identical_one(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        assert ssim(a, a.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self, rng):
        a = rng.uniform(size=(14, 14, 3))
        b = rng.uniform(size=(14, 14, 3))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_shared_kernel_with_dssim(self, rng):
        a = rng.uniform(size=(13, 13, 3))
        b = rng.uniform(size=(13, 13, 3))
        assert ssim(a, b) == 1.0 - dssim_loss(a, b)[0]


class TestReport:
    def test_text_format(self):
        text = format_report({"trajectory": {"ate": 0.5, "rpe_t": 0.25}})
        assert "[trajectory]" in text
        assert "ate: 0.5" in text

    def test_json_inf_sentinel(self):
        import json

        out = json.loads(report_json({"render": {"psnr": math.inf}}))
        assert out["render"]["psnr"] == "inf"
