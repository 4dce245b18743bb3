"""
HTTP routes for the redirect service.
"""
