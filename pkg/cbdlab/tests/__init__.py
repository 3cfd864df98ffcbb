"""Tests for the cbdlab toolkit."""
