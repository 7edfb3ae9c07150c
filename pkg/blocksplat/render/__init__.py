"""
BlockSplat Render

Projection, rasterization, backward pass and the reference renderer.
"""

from .oracle import render_oracle
from .projection import COV2D_DILATION, NEAR_PLANE, ProjectedGaussians, project, quaternion_to_rotation
from .rasterizer import (
    ALPHA_MAX,
    ALPHA_MIN,
    TRANSMITTANCE_MIN,
    GradientSet,
    RenderedView,
    RenderTrace,
    render,
    render_backward,
)

__all__ = [
    "ALPHA_MAX",
    "ALPHA_MIN",
    "TRANSMITTANCE_MIN",
    "COV2D_DILATION",
    "NEAR_PLANE",
    "GradientSet",
    "ProjectedGaussians",
    "RenderedView",
    "RenderTrace",
    "project",
    "quaternion_to_rotation",
    "render",
    "render_backward",
    "render_oracle",
]
