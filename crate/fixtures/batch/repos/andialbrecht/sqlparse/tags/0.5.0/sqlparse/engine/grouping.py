from sqlparse import sql
from sqlparse import tokens as T


def _group_matching(tlist, cls):
    """Groups Tokens that have beginning and end."""
    opens = []
    tidx_offset = 0
    for idx, token in enumerate(list(tlist)):
        tidx = idx - tidx_offset

        if token.is_whitespace:
            continue

        if token.is_group and not isinstance(token, cls):
            _group_matching(token, cls)
            continue

        if token.match(*cls.M_OPEN):
            opens.append(tidx)

        elif token.match(*cls.M_CLOSE):
            try:
                open_idx = opens.pop()
            except IndexError:
                # this indicates invalid sql and unbalanced tokens.
                continue
            close_idx = tidx
            tlist.group_tokens(cls, open_idx, close_idx)
            tidx_offset += close_idx - open_idx


def group_brackets(tlist):
    _group_matching(tlist, sql.SquareBrackets)


def group_parenthesis(tlist):
    _group_matching(tlist, sql.Parenthesis)


def recurse(*cls):
    """Function decorator to help with recursion

    :param cls: Classes to not recurse over
    :return: function
    """
    def wrap(f):
        def wrapped_f(tlist):
            for sgroup in tlist.get_sublists():
                if not isinstance(sgroup, cls):
                    wrapped_f(sgroup)
            f(tlist)

        return wrapped_f

    return wrap


@recurse(sql.Identifier)
def group_identifier(tlist):
    for idx, token in enumerate(list(tlist.tokens)):
        if token.ttype is T.Name and not isinstance(token.parent, sql.Identifier):
            tlist.group_tokens(sql.Identifier, idx, idx)


@recurse(sql.Comparison)
def group_comparison(tlist):
    tokens = tlist.tokens
    for idx in range(1, len(tokens) - 1):
        if tokens[idx].ttype is T.Comparison:
            left, right = idx - 1, idx + 1
            while left > 0 and tokens[left].is_whitespace:
                left -= 1
            while right < len(tokens) - 1 and tokens[right].is_whitespace:
                right += 1
            tlist.group_tokens(sql.Comparison, left, right)
            return


def group(stmt):
    for func in [
        group_brackets,
        group_parenthesis,
        group_identifier,
        group_comparison,
    ]:
        func(stmt)
    return stmt
