"""
Package version, single source of truth.

Update this string when tagging a new release.
"""

__version__ = "0.1.0"
