from sqlparse import sql, tokens as T


class StatementSplitter:
    """Filter that splits a token stream into individual statements."""

    def process(self, stream):
        tokens = []
        for ttype, value in stream:
            tokens.append(sql.Token(ttype, value))
            if ttype is T.Punctuation and value == ';':
                yield sql.Statement(tokens)
                tokens = []
        if tokens and not all(t.is_whitespace for t in tokens):
            yield sql.Statement(tokens)
