"""filter"""

from sqlparse import lexer
from sqlparse.exceptions import SQLParseError
from sqlparse.engine import grouping
from sqlparse.engine.statement_splitter import StatementSplitter


class FilterStack:
    def __init__(self):
        self._grouping = False

    def enable_grouping(self):
        self._grouping = True

    def run(self, sql, encoding=None):
        stream = lexer.tokenize(sql, encoding)
        for stmt in StatementSplitter().process(stream):
            if self._grouping:
                try:
                    stmt = grouping.group(stmt)
                except RecursionError as err:
                    raise SQLParseError('Maximum recursion depth exceeded') from err
            yield stmt
