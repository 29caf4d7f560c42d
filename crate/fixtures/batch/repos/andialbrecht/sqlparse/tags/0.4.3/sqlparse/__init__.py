"""Parse SQL statements."""

from sqlparse import engine
from sqlparse import exceptions
from sqlparse import sql
from sqlparse import tokens

__version__ = '0.4.3'
__all__ = ['engine', 'exceptions', 'sql', 'tokens', 'parse', 'parsestream', 'split']


def parse(sql, encoding=None):
    """Parse sql and return a tuple of statements."""
    return tuple(parsestream(sql, encoding))


def parsestream(stream, encoding=None):
    """Parses sql statements from a string, yielding grouped statements."""
    stack = engine.FilterStack()
    stack.enable_grouping()
    return stack.run(stream, encoding)


def split(sql, encoding=None):
    """Split sql into single statements."""
    stack = engine.FilterStack()
    return [str(stmt).strip() for stmt in stack.run(sql, encoding)]
