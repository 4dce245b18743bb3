"""
Tests for gazesplat.splat.
"""
