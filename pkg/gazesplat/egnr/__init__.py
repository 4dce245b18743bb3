"""
Expression-guided neural renderer.
"""

from gazesplat.egnr.renderer import (
    ExpressionAttention,
    ExpressionGuidedRenderer,
    expression_attend,
    render,
)

__all__ = ["ExpressionAttention", "ExpressionGuidedRenderer", "expression_attend", "render"]
