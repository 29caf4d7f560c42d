"""SQL Lexer."""

import re

from sqlparse import tokens as T

KEYWORDS = {
    'SELECT', 'FROM', 'WHERE', 'AND', 'OR', 'NOT', 'INSERT', 'INTO', 'VALUES',
    'UPDATE', 'SET', 'DELETE', 'CREATE', 'TABLE', 'AS', 'ON', 'JOIN', 'CASE',
    'WHEN', 'THEN', 'ELSE', 'END', 'NULL', 'ORDER', 'BY', 'GROUP', 'LIMIT',
}

SQL_REGEX = [
    (r'(\r\n|\r|\n)', T.Newline),
    (r'\s+', T.Whitespace),
    (r"'(''|\\\\|\\'|[^'])*'", T.String),
    (r'[0-9]+(\.[0-9]+)?', T.Number),
    (r'[_A-Za-z][_A-Za-z0-9$]*', None),
    (r'(<=|>=|<>|!=|=|<|>)', T.Comparison),
    (r'[+\-/%]', T.Operator),
    (r'\*', T.Wildcard),
    (r'[;:()\[\],.]', T.Punctuation),
]

_COMPILED = [(re.compile(rx), tt) for rx, tt in SQL_REGEX]


def _word(value):
    return T.Keyword if value.upper() in KEYWORDS else T.Name


def tokenize(sql, encoding=None):
    """Yield (ttype, value) pairs for the given text."""
    if isinstance(sql, bytes):
        sql = sql.decode(encoding or 'utf-8')
    elif not isinstance(sql, str):
        sql = sql.read()
    pos, end = 0, len(sql)
    while pos < end:
        for rx, ttype in _COMPILED:
            m = rx.match(sql, pos)
            if m:
                value = m.group()
                yield (ttype or _word(value)), value
                pos = m.end()
                break
        else:
            yield T.Error, sql[pos]
            pos += 1
