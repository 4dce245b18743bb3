"""
Tests for gazesplat.egnr.
"""
