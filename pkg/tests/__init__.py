"""
gazesplat test suite.
"""
