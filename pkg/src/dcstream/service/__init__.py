"""HTTP facade: pydantic request/response models over the core routines."""

from .app import create_app

__all__ = ["create_app"]
