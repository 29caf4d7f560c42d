import sqlparse


def test_split():
    assert sqlparse.split('select 1; select 2;') == ['select 1;', 'select 2;']


def test_parse_roundtrip():
    sql = 'select * from foo where (a = 1) and b[2] = 3'
    assert str(sqlparse.parse(sql)[0]) == sql
