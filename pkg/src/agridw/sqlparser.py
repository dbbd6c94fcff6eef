"""Parser for the warehouse SQL subset.

Covers exactly the query shapes the workload needs: SELECT lists with
SUM/COUNT/MAX and aliases, implicit joins through WHERE equality, LEFT and
RIGHT JOIN ... ON, AND/OR and the six comparison operators, LIKE, IN with an
uncorrelated subquery, GROUP BY, HAVING, UNION, ORDER BY, LIMIT, the scalar
functions YEAR and MONTH, derived tables in FROM, backquoted identifiers and
case-insensitive keywords.  Anything else fails with a syntax error carrying
the offending position, or an unsupported-construct error naming the
construct.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class SqlSyntaxError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnsupportedSqlError(SqlSyntaxError):
    def __init__(self, construct: str, line: int, column: int):
        super().__init__(f"unsupported construct: {construct}", line, column)
        self.construct = construct


KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT",
    "UNION", "LEFT", "RIGHT", "JOIN", "ON", "AND", "OR", "LIKE", "IN", "AS",
    "ASC", "DESC",
}

# recognised so the error can name them instead of a generic syntax error
UNSUPPORTED_KEYWORDS = {
    "INNER", "FULL", "OUTER", "CROSS", "NATURAL", "DISTINCT", "NOT",
    "BETWEEN", "IS", "NULL", "EXISTS", "CASE", "MIN", "AVG", "WITH",
    "OFFSET", "INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALL", "ANY",
}

AGG_FUNCS = {"SUM", "COUNT", "MAX"}
SCALAR_FUNCS = {"YEAR", "MONTH"}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRef:
    table: str | None
    name: str


@dataclass(frozen=True)
class Literal:
    value: int | float | str


@dataclass(frozen=True)
class FuncCall:
    name: str  # "year" | "month"
    arg: "Expr"


@dataclass(frozen=True)
class Aggregate:
    func: str  # "sum" | "count" | "max"
    arg: "Expr | None"  # None means COUNT(*)


@dataclass(frozen=True)
class Comparison:
    op: str  # = <> < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class LikeExpr:
    operand: "Expr"
    pattern: str


@dataclass(frozen=True)
class InSubquery:
    operand: "Expr"
    query: "Query"


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    items: tuple["Expr", ...]


Expr = ColumnRef | Literal | FuncCall | Aggregate | Comparison | LikeExpr \
    | InSubquery | BoolOp


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: str | None


@dataclass(frozen=True)
class TableRef:
    name: str | None
    alias: str | None
    subquery: "Query | None" = None

    @property
    def binding_name(self) -> str:
        if self.alias:
            return self.alias
        if self.name:
            return self.name
        raise ValueError("derived table requires an alias")


@dataclass(frozen=True)
class JoinClause:
    kind: str  # "left" | "right"
    table: TableRef
    on: Expr


@dataclass(frozen=True)
class FromItem:
    base: TableRef
    joins: tuple[JoinClause, ...] = ()


@dataclass(frozen=True)
class OrderKey:
    ref: ColumnRef
    desc: bool = False


@dataclass(frozen=True)
class SelectCore:
    items: tuple[SelectItem, ...]
    from_items: tuple[FromItem, ...]
    where: Expr | None = None
    group_by: tuple[ColumnRef, ...] = ()
    having: Expr | None = None


@dataclass(frozen=True)
class Query:
    branches: tuple[SelectCore, ...]
    order_by: tuple[OrderKey, ...] = ()
    limit: int | None = None


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # KEYWORD IDENT NUMBER STRING OP PUNCT EOF
    value: object
    line: int
    column: int


_TWO_CHAR_OPS = ("<>", "<=", ">=", "!=")
_ONE_CHAR_OPS = ("=", "<", ">")
_PUNCT = "(),.*;"


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i, n = 1, 1, 0, len(text)

    def err(msg):
        return SqlSyntaxError(msg, line, col)

    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        start_line, start_col = line, col
        if ch == "'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string literal",
                                         start_line, start_col)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":  # '' escape
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(_Token("STRING", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch == "`":
            j = text.find("`", i + 1)
            if j == -1:
                raise err("unterminated backquoted identifier")
            tokens.append(_Token("IDENT", text[i + 1:j], start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    # 10.x where x is not a digit means "10" then "." punct
                    if j + 1 >= n or not text[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            raw = text[i:j]
            value = float(raw) if "." in raw else int(raw)
            tokens.append(_Token("NUMBER", value, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            upper = word.upper()
            if upper in KEYWORDS or upper in UNSUPPORTED_KEYWORDS \
                    or upper in AGG_FUNCS or upper in SCALAR_FUNCS:
                tokens.append(_Token("KEYWORD", upper, start_line, start_col))
            else:
                tokens.append(_Token("IDENT", word, start_line, start_col))
            col += j - i
            i = j
            continue
        two = text[i:i + 2]
        if two in _TWO_CHAR_OPS:
            op = "<>" if two == "!=" else two
            tokens.append(_Token("OP", op, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR_OPS:
            tokens.append(_Token("OP", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch in _PUNCT:
            tokens.append(_Token("PUNCT", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        raise err(f"unexpected character {ch!r}")
    tokens.append(_Token("EOF", None, line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.cur
        self.pos += 1
        return tok

    def error(self, message: str, token: _Token | None = None) -> SqlSyntaxError:
        tok = token or self.cur
        return SqlSyntaxError(message, tok.line, tok.column)

    def unsupported(self, construct: str, token: _Token | None = None):
        tok = token or self.cur
        return UnsupportedSqlError(construct, tok.line, tok.column)

    def at_keyword(self, *words: str) -> bool:
        return self.cur.kind == "KEYWORD" and self.cur.value in words

    def accept_keyword(self, *words: str) -> bool:
        if self.at_keyword(*words):
            self.advance()
            return True
        return False

    def expect_keyword(self, word: str):
        if not self.accept_keyword(word):
            raise self.error(f"expected {word}, found {self._describe()}")

    def at_punct(self, ch: str) -> bool:
        return self.cur.kind == "PUNCT" and self.cur.value == ch

    def accept_punct(self, ch: str) -> bool:
        if self.at_punct(ch):
            self.advance()
            return True
        return False

    def expect_punct(self, ch: str):
        if not self.accept_punct(ch):
            raise self.error(f"expected {ch!r}, found {self._describe()}")

    def _describe(self) -> str:
        tok = self.cur
        if tok.kind == "EOF":
            return "end of input"
        return repr(str(tok.value))

    def _check_unsupported(self):
        if self.cur.kind == "KEYWORD" and self.cur.value in UNSUPPORTED_KEYWORDS:
            raise self.unsupported(str(self.cur.value))

    # -- identifiers --------------------------------------------------------

    def identifier(self, what: str) -> str:
        self._check_unsupported()
        tok = self.cur
        if tok.kind == "IDENT":
            self.advance()
            return str(tok.value)
        # keywords that double as column names when unambiguous (e.g. `Year`
        # is usually backquoted, but a qualified bare year/month is fine)
        if tok.kind == "KEYWORD" and tok.value in SCALAR_FUNCS:
            self.advance()
            return str(tok.value)
        raise self.error(f"expected {what}, found {self._describe()}")

    # -- query --------------------------------------------------------------

    def query(self) -> Query:
        branches = [self.select_core()]
        while self.accept_keyword("UNION"):
            self._check_unsupported()  # UNION ALL / UNION DISTINCT
            branches.append(self.select_core())
        order_by: list[OrderKey] = []
        if self.accept_keyword("ORDER"):
            self.expect_keyword("BY")
            order_by.append(self.order_key())
            while self.accept_punct(","):
                order_by.append(self.order_key())
        limit = None
        if self.accept_keyword("LIMIT"):
            tok = self.cur
            if tok.kind != "NUMBER" or not isinstance(tok.value, int):
                raise self.error("LIMIT expects an integer")
            limit = int(tok.value)
            if limit < 0:
                raise self.error("LIMIT must be non-negative", tok)
            self.advance()
        return Query(tuple(branches), tuple(order_by), limit)

    def order_key(self) -> OrderKey:
        ref = self.column_ref()
        desc = False
        if self.accept_keyword("DESC"):
            desc = True
        else:
            self.accept_keyword("ASC")
        return OrderKey(ref, desc)

    def select_core(self) -> SelectCore:
        self.expect_keyword("SELECT")
        self._check_unsupported()
        items = [self.select_item()]
        while self.accept_punct(","):
            items.append(self.select_item())
        self.expect_keyword("FROM")
        from_items = [self.from_item()]
        while self.accept_punct(","):
            from_items.append(self.from_item())
        where = None
        if self.accept_keyword("WHERE"):
            where = self.expression()
        group_by: list[ColumnRef] = []
        if self.accept_keyword("GROUP"):
            self.expect_keyword("BY")
            group_by.append(self.column_ref())
            while self.accept_punct(","):
                group_by.append(self.column_ref())
        having = None
        if self.accept_keyword("HAVING"):
            having = self.expression()
        return SelectCore(tuple(items), tuple(from_items), where,
                          tuple(group_by), having)

    def select_item(self) -> SelectItem:
        expr = self.expression()
        alias = None
        if self.accept_keyword("AS"):
            alias = self.identifier("alias")
        elif self.cur.kind == "IDENT":
            # bare aliases are reserved for table refs; a dangling identifier
            # here is almost always a missing comma
            raise self.error(
                f"unexpected {self._describe()} after select expression "
                "(missing comma or AS?)")
        return SelectItem(expr, alias)

    def from_item(self) -> FromItem:
        base = self.table_ref()
        joins = []
        while self.at_keyword("LEFT", "RIGHT"):
            kind = str(self.advance().value).lower()
            self.expect_keyword("JOIN")
            table = self.table_ref()
            self.expect_keyword("ON")
            joins.append(JoinClause(kind, table, self.expression()))
        return FromItem(base, tuple(joins))

    def table_ref(self) -> TableRef:
        self._check_unsupported()
        if self.accept_punct("("):
            sub = self.query()
            self.expect_punct(")")
            self.accept_keyword("AS")
            alias = self.identifier("derived table alias")
            return TableRef(None, alias, sub)
        name = self.identifier("table name")
        alias = None
        if self.accept_keyword("AS"):
            alias = self.identifier("table alias")
        elif self.cur.kind == "IDENT":
            alias = self.identifier("table alias")
        return TableRef(name, alias, None)

    def column_ref(self) -> ColumnRef:
        first = self.identifier("column name")
        if self.accept_punct("."):
            return ColumnRef(first, self.identifier("column name"))
        return ColumnRef(None, first)

    # -- expressions ---------------------------------------------------------

    def expression(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        items = [self.and_expr()]
        while self.accept_keyword("OR"):
            items.append(self.and_expr())
        if len(items) == 1:
            return items[0]
        return BoolOp("or", tuple(items))

    def and_expr(self) -> Expr:
        items = [self.predicate()]
        while self.accept_keyword("AND"):
            items.append(self.predicate())
        if len(items) == 1:
            return items[0]
        return BoolOp("and", tuple(items))

    def predicate(self) -> Expr:
        left = self.operand()
        if self.cur.kind == "OP":
            op = str(self.advance().value)
            return Comparison(op, left, self.operand())
        if self.at_keyword("LIKE"):
            self.advance()
            tok = self.cur
            if tok.kind != "STRING":
                raise self.error("LIKE expects a string pattern")
            self.advance()
            return LikeExpr(left, str(tok.value))
        if self.at_keyword("IN"):
            self.advance()
            self.expect_punct("(")
            if not self.at_keyword("SELECT"):
                raise self.unsupported("IN with a value list (subquery required)")
            sub = self.query()
            self.expect_punct(")")
            return InSubquery(left, sub)
        return left

    def operand(self) -> Expr:
        self._check_unsupported()
        tok = self.cur
        if tok.kind == "PUNCT" and tok.value == "(":
            self.advance()
            inner = self.expression()
            self.expect_punct(")")
            return inner
        if tok.kind == "NUMBER":
            self.advance()
            return Literal(tok.value)
        if tok.kind == "STRING":
            self.advance()
            return Literal(str(tok.value))
        if tok.kind == "KEYWORD" and tok.value in AGG_FUNCS:
            self.advance()
            func = str(tok.value).lower()
            self.expect_punct("(")
            if func == "count" and self.accept_punct("*"):
                self.expect_punct(")")
                return Aggregate("count", None)
            arg = self.expression()
            self.expect_punct(")")
            return Aggregate(func, arg)
        if tok.kind == "KEYWORD" and tok.value in SCALAR_FUNCS:
            nxt = self.tokens[self.pos + 1]
            if nxt.kind == "PUNCT" and nxt.value == "(":
                self.advance()
                self.advance()
                arg = self.expression()
                self.expect_punct(")")
                return FuncCall(str(tok.value).lower(), arg)
            # bare YEAR / MONTH treated as a column name
            return self.column_ref()
        if tok.kind == "IDENT":
            return self.column_ref()
        raise self.error(f"expected an expression, found {self._describe()}")


def parse(text: str) -> Query:
    """Parse one query; raises SqlSyntaxError / UnsupportedSqlError."""
    tokens = _tokenize(text)
    parser = _Parser(tokens)
    query = parser.query()
    parser.accept_punct(";")
    if parser.cur.kind != "EOF":
        raise parser.error(f"unexpected trailing input: {parser._describe()}")
    return query
