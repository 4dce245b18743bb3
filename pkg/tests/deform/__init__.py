"""
Tests for gazesplat.deform.
"""
