"""
Tests for gazesplat.toyscene.
"""
