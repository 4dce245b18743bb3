"""
Tests for gazesplat.gauss.
"""
