"""
Tests for gazesplat.api.
"""
