"""
Gaze redirection endpoint.

POST /redirect takes a frame condition (expression, identity, head pose,
camera) plus a target gaze and answers with the rendered head as PNG.
"""

import logging
from functools import lru_cache

import torch
from fastapi import APIRouter, Depends, Response

from gazesplat.config import settings
from gazesplat.deform.fields import FrameCondition
from gazesplat.deform.pose import HeadPose
from gazesplat.errors import CheckpointError
from gazesplat.evaluation import redirect
from gazesplat.gauss.core import Camera
from gazesplat.models import RedirectRequest
from gazesplat.splat.featuremap import encode_png
from gazesplat.trainer.loop import load_model
from gazesplat.trainer.model import GazeGaussianModel

logger = logging.getLogger(__name__)

router = APIRouter()


@lru_cache(maxsize=4)
def _load_cached(checkpoint: str) -> GazeGaussianModel:
    model, _ = load_model(checkpoint)
    return model


def get_model() -> GazeGaussianModel:
    """Model served from CHECKPOINT_DIR, loaded once per path."""
    if not settings.CHECKPOINT_DIR:
        raise CheckpointError("CHECKPOINT_DIR is not set")
    return _load_cached(settings.CHECKPOINT_DIR)


@router.post("/redirect", responses={200: {"content": {"image/png": {}}}})
def redirect_gaze(request: RedirectRequest, model: GazeGaussianModel = Depends(get_model)) -> Response:
    """
    Render the head under the requested gaze.

    Declared sync so FastAPI runs the torch work in its threadpool.

    Returns:
        PNG image of the redirected head
    """
    condition = FrameCondition(
        tau=torch.tensor(request.tau, dtype=torch.float32),
        pose=HeadPose.from_record(request.pose),
        pitch=request.pitch,
        yaw=request.yaw,
        camera=Camera.from_record(request.camera),
        identity=request.identity,
    )
    image = redirect(model, condition, request.pitch, request.yaw)
    logger.info(f"Redirected identity {request.identity} to ({request.pitch:.3f}, {request.yaw:.3f})")
    return Response(content=encode_png(image), media_type="image/png")
