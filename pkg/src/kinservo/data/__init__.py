"""Bundled robot models and scenarios."""
