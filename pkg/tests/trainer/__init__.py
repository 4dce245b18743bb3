"""
Tests for gazesplat.trainer.
"""
