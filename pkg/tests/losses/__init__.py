"""
Tests for gazesplat.losses.
"""
