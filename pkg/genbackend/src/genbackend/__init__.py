"""Generation backend service for the decoupled-augmentation pipeline."""

from .app import create_app

__all__ = ["create_app"]
