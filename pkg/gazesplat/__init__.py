"""
gazesplat: two-stream Gaussian head avatars with gaze redirection, trained on
a procedural synthetic head dataset.
"""

__version__ = "0.1.0"
