"""HTTP service wrapping the reduced-order-model pipeline."""

from .app import app, create_app

__all__ = ["app", "create_app"]
