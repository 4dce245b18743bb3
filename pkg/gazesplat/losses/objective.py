"""
Total training objective λ_I·L_I + λ_G·L_G.
"""

from typing import Optional

import torch

from gazesplat.models import LossWeights


def total_loss(
    synthesis: torch.Tensor,
    gaze: Optional[torch.Tensor],
    weights: Optional[LossWeights] = None,
) -> torch.Tensor:
    """Weighted sum of the synthesis loss and the gaze loss (None counts as 0)."""
    weights = weights or LossWeights()
    total = weights.image * synthesis
    if gaze is not None:
        total = total + weights.gaze * gaze
    return total
