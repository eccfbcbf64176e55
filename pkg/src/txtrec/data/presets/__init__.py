"""Packaged synthetic corpus specs (YAML)."""
