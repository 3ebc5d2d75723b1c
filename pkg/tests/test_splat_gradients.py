"""Finite-difference validation of the splat renderer's reverse pass.

The scalar objective is sum(weights * rendered_color) for a fixed random
weight image; its analytic gradient is render_backward(weights).
"""

import numpy as np
import pytest

from splatvo.geometry import PoseSE3, Twist, compose, exp_map
from splatvo.pose_opt import view_twist_grad_to_pose_twist_grad
from splatvo.splat import render, render_backward

from conftest import random_pose, random_scene, small_intrinsics

FD_H = 1e-4


def objective(scene, view, k, weights):
    return float(np.sum(render(scene, view, k).color * weights))


def check_entry(analytic, fd, rel=1e-3, abs_tol=1e-6):
    err = abs(analytic - fd)
    assert err <= max(rel * max(abs(analytic), abs(fd)), abs_tol), (
        f"analytic {analytic:.8g} vs fd {fd:.8g} (err {err:.3g})"
    )


def fd_scene_param(scene, view, k, weights, array, index):
    orig = array[index]
    array[index] = orig + FD_H
    hi = objective(scene, view, k, weights)
    array[index] = orig - FD_H
    lo = objective(scene, view, k, weights)
    array[index] = orig
    return (hi - lo) / (2 * FD_H)


PARAM_ARRAYS = ("means", "log_scales", "quaternions", "opacity_logits", "colors")


def check_scene_gradients(scene, view, k, weights):
    grads, view_twist = render_backward(scene, view, k, weights)
    for name in PARAM_ARRAYS:
        arr = getattr(scene, name)
        ga = getattr(grads, name)
        for index in np.ndindex(arr.shape):
            fd = fd_scene_param(scene, view, k, weights, arr, index)
            check_entry(ga[index], fd)
    # view twist, left perturbation of the view transform
    for j in range(6):
        e = np.zeros(6)
        e[j] = FD_H
        hi = objective(scene, compose(exp_map(Twist.from_vector(e)), view), k, weights)
        lo = objective(scene, compose(exp_map(Twist.from_vector(-e)), view), k, weights)
        check_entry(view_twist[j], (hi - lo) / (2 * FD_H))


class TestSingleGaussian:
    def test_all_parameters(self, rng):
        k = small_intrinsics(res=16, f=18.0)
        weights = rng.normal(size=(k.height, k.width, 3))
        scene = random_scene(rng, n=1)
        view = random_pose(rng, rot_scale=0.1, trans_scale=0.2)
        check_scene_gradients(scene, view, k, weights)


class TestRandomScenes:
    @pytest.mark.parametrize("seed", range(8))
    def test_scene(self, seed):
        rng = np.random.default_rng(900 + seed)
        k = small_intrinsics(res=16, f=18.0)
        weights = rng.normal(size=(k.height, k.width, 3))
        scene = random_scene(rng, n=int(rng.integers(2, 6)))
        view = random_pose(rng, rot_scale=0.15, trans_scale=0.25)
        check_scene_gradients(scene, view, k, weights)


class TestNumpyBackendGradients:
    def test_scene(self, monkeypatch):
        from splatvo.splat import backend

        monkeypatch.setenv(backend.ENV_VAR, "numpy")
        rng = np.random.default_rng(7)
        k = small_intrinsics(res=16, f=18.0)
        weights = rng.normal(size=(k.height, k.width, 3))
        scene = random_scene(rng, n=3)
        view = random_pose(rng, rot_scale=0.15, trans_scale=0.25)
        check_scene_gradients(scene, view, k, weights)


class TestPoseTwistGradient:
    def test_matches_fd_of_pose_perturbation(self, rng):
        # gradient w.r.t. the left perturbation of the camera pose (= view^-1)
        k = small_intrinsics(res=16, f=18.0)
        weights = rng.normal(size=(k.height, k.width, 3))
        for _ in range(5):
            scene = random_scene(rng, n=3)
            pose = random_pose(rng, rot_scale=0.1, trans_scale=0.2)
            view = pose.inverse()
            _, view_twist = render_backward(scene, view, k, weights)
            pose_twist = view_twist_grad_to_pose_twist_grad(view_twist, view)
            for j in range(6):
                e = np.zeros(6)
                e[j] = FD_H
                hi = objective(
                    scene, compose(exp_map(Twist.from_vector(e)), pose).inverse(), k, weights
                )
                lo = objective(
                    scene, compose(exp_map(Twist.from_vector(-e)), pose).inverse(), k, weights
                )
                check_entry(pose_twist[j], (hi - lo) / (2 * FD_H))
