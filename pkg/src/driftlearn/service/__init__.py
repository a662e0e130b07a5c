"""HTTP service wrapping the library; see app.create_app."""
from .app import app, create_app

__all__ = ["app", "create_app"]
