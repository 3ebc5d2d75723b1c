from .scene import Gaussian, GaussianScene, RenderOutput, SceneGradients, logit, sigmoid
from .render import evaluate_gaussian, project_gaussian, render, render_backward
from .project import ALPHA_MAX, COV_DILATION, NEAR_PLANE, POWER_CUT, T_CUTOFF

__all__ = [
    "Gaussian",
    "GaussianScene",
    "RenderOutput",
    "SceneGradients",
    "sigmoid",
    "logit",
    "evaluate_gaussian",
    "project_gaussian",
    "render",
    "render_backward",
    "ALPHA_MAX",
    "COV_DILATION",
    "NEAR_PLANE",
    "POWER_CUT",
    "T_CUTOFF",
]
