"""Exceptions used in this package."""


class SQLParseError(Exception):
    """Base class for exceptions in this module."""
