"""Tests for txtrec."""
