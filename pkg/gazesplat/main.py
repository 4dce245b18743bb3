"""
gazesplat redirect service - FastAPI application.

Serves a trained GazeGaussian checkpoint:
- GET  /          service information
- GET  /health    liveness check
- POST /redirect  condition + target gaze -> PNG
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from gazesplat import __version__
from gazesplat.api import routes
from gazesplat.config import apply_torch_settings, settings
from gazesplat.errors import CONFIGURATION_ERRORS, CheckpointError, GazeSplatError

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Log startup and shutdown information."""
    apply_torch_settings(settings)
    logger.info("=" * 60)
    logger.info("gazesplat Redirect Service Starting")
    logger.info("=" * 60)
    logger.info(f"Checkpoint: {settings.CHECKPOINT_DIR or '(not set)'}")
    logger.info(f"Debug Mode: {settings.DEBUG}")
    logger.info(f"Log Level: {settings.LOG_LEVEL}")
    logger.info("=" * 60)
    yield
    logger.info("gazesplat Redirect Service Shutting Down")


app = FastAPI(
    title="gazesplat Redirect Service",
    description="Gaze redirection with two-stream Gaussian head avatars",
    version=__version__,
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)


# ============================================================================
# Exception Handlers
# ============================================================================

def _error_response(status_code: int, exc: GazeSplatError) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={"error": exc.code, "error_description": str(exc)},
    )


@app.exception_handler(GazeSplatError)
async def gazesplat_exception_handler(request: Request, exc: GazeSplatError):
    """Map library errors onto 400 / 404 / 500."""
    if isinstance(exc, CONFIGURATION_ERRORS):
        return _error_response(400, exc)
    if isinstance(exc, CheckpointError):
        return _error_response(404, exc)
    logger.error(f"Redirect failed: {exc}")
    return _error_response(500, exc)


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    """Global exception handler for unhandled errors."""
    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={
            "error": "internal_server_error",
            "error_description": str(exc) if settings.DEBUG else "An internal error occurred"
        }
    )


# ============================================================================
# Include Routers
# ============================================================================

app.include_router(routes.router, tags=["Redirect"])


# ============================================================================
# Root Endpoints
# ============================================================================

@app.get("/")
async def root():
    """Root endpoint with service information and links."""
    return {
        "name": "gazesplat Redirect Service",
        "version": __version__,
        "description": "Two-stream Gaussian head avatars with gaze redirection",
        "checkpoint": settings.CHECKPOINT_DIR,
        "endpoints": {
            "redirect": "/redirect",
            "health": "/health",
            "openapi": "/docs",
        },
    }


@app.get("/health")
async def health_check():
    """Health check endpoint for monitoring."""
    return {
        "status": "healthy",
        "service": "gazesplat",
        "version": __version__
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "gazesplat.main:app",
        host=settings.SERVER_HOST,
        port=settings.SERVER_PORT,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL.lower()
    )
