"""Classes representing parsed SQL."""

from sqlparse import tokens as T


class Token:
    """Base class for all tokens."""

    is_group = False

    def __init__(self, ttype, value):
        self.ttype = ttype
        self.value = str(value)
        self.parent = None
        self.is_whitespace = ttype in T.Whitespace
        self.is_keyword = ttype in T.Keyword

    def __str__(self):
        return self.value

    def __repr__(self):
        return '<{} {!r}>'.format(type(self).__name__, self.value[:10])

    def flatten(self):
        yield self

    def match(self, ttype, values):
        if self.ttype is not ttype and ttype not in (self.ttype or ()):
            return False
        return self.value in values


class TokenList(Token):
    """A group of tokens."""

    is_group = True

    def __init__(self, tokens=None):
        self.tokens = tokens or []
        for token in self.tokens:
            token.parent = self
        super().__init__(None, '')

    def __str__(self):
        return ''.join(token.value for token in self.flatten())

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, item):
        return self.tokens[item]

    @property
    def value(self):
        return str(self)

    @value.setter
    def value(self, _):
        pass

    def flatten(self):
        """Generator yielding ungrouped tokens, descending into sublists."""
        for token in self.tokens:
            if token.is_group:
                yield from token.flatten()
            else:
                yield token

    def get_sublists(self):
        for token in self.tokens:
            if token.is_group:
                yield token

    def group_tokens(self, grp_cls, start, end):
        """Replace tokens[start:end+1] with a single group."""
        subtokens = self.tokens[start:end + 1]
        grp = grp_cls(subtokens)
        self.tokens[start:end + 1] = [grp]
        grp.parent = self
        return grp


class Statement(TokenList):
    """Represents a SQL statement."""


class Parenthesis(TokenList):
    """Tokens between parenthesis."""
    M_OPEN = T.Punctuation, '('
    M_CLOSE = T.Punctuation, ')'


class SquareBrackets(TokenList):
    """Tokens between square brackets."""
    M_OPEN = T.Punctuation, '['
    M_CLOSE = T.Punctuation, ']'


class Identifier(TokenList):
    """Represents an identifier, optionally with an alias."""


class Comparison(TokenList):
    """A comparison used for example in WHERE clauses."""
