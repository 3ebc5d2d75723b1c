import numpy as np
import pytest

from splatvo.geometry import CameraIntrinsics, PoseSE3, Twist, exp_map
from splatvo.splat import GaussianScene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, rot_scale=0.5, trans_scale=1.0) -> PoseSE3:
    return exp_map(
        Twist(rng.normal(scale=rot_scale, size=3), rng.normal(scale=trans_scale, size=3))
    )


def small_intrinsics(res=16, f=20.0) -> CameraIntrinsics:
    return CameraIntrinsics(fx=f, fy=f, cx=(res - 1) / 2, cy=(res - 1) / 2, width=res, height=res)


def random_scene(rng, n=5, depth_range=(2.0, 6.0), spread=1.2) -> GaussianScene:
    """Small random scene in front of the identity camera."""
    means = np.stack(
        [
            rng.uniform(-spread, spread, size=n),
            rng.uniform(-spread, spread, size=n),
            rng.uniform(*depth_range, size=n),
        ],
        axis=1,
    )
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    # opacity capped below ~0.73 so transmittance stays clear of the 1e-4
    # cutoff and the 0.99 alpha clamp in finite-difference checks
    return GaussianScene(
        means=means,
        log_scales=rng.uniform(-1.6, -0.4, size=(n, 3)),
        quaternions=quats,
        opacity_logits=rng.uniform(-1.0, 1.0, size=n),
        colors=rng.uniform(0.05, 0.95, size=(n, 3)),
    )
