"""Name binding, type checking, and physical planning.

Turns a parsed query into a BranchPlan per UNION branch: an ordered join
sequence over bound table sources, filter conjuncts split into pushable
(single table, safe side of any outer join) and residual sets, grouping
keys, deduplicated aggregates, and post-aggregation output expressions.
Both executors consume this one plan; how they evaluate it differs.

Implicit inner joins are recovered from WHERE equality conjuncts over two
tables.  A RIGHT JOIN is planned as the one outer-join primitive with the
preserved side swapped.  Non-grouped select columns under GROUP BY take the
group minimum (deterministic stand-in for MySQL's "any value in the group").
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

from .schema import ConstellationSchema, TableDef
from . import sqlparser as ast


class BindError(Exception):
    pass


_NUMERIC = ("int64", "float64")
_ORDERABLE = ("int64", "float64", "text", "date", "bool")


# -- bound row-context expressions ------------------------------------------

@dataclass(frozen=True)
class BoundColumn:
    alias: str
    column: str
    dtype: str


@dataclass(frozen=True)
class BoundLiteral:
    value: object
    dtype: str


@dataclass(frozen=True)
class BoundFunc:
    fn: str  # "year" | "month"
    arg: "BoundExpr"
    dtype: str = "int64"


@dataclass(frozen=True)
class BoundCompare:
    op: str
    left: "BoundExpr"
    right: "BoundExpr"


@dataclass(frozen=True)
class BoundLike:
    arg: "BoundExpr"
    pattern: str


@dataclass
class BoundIn:
    arg: "BoundExpr"
    subplan: "QueryPlan"


@dataclass(frozen=True)
class BoundBool:
    op: str  # "and" | "or"
    items: tuple["BoundExpr", ...]


BoundExpr = BoundColumn | BoundLiteral | BoundFunc | BoundCompare | BoundLike \
    | BoundIn | BoundBool


@dataclass(frozen=True)
class BoundAggregate:
    func: str  # sum | count | max
    arg: BoundExpr | None  # None = COUNT(*)
    dtype: str


# -- post-aggregation expressions -------------------------------------------

@dataclass(frozen=True)
class KeyRef:
    index: int
    dtype: str


@dataclass(frozen=True)
class AggRef:
    index: int
    dtype: str


@dataclass(frozen=True)
class MinRep:
    """Group minimum of a non-grouped column (deterministic representative)."""

    column: BoundColumn

    @property
    def dtype(self) -> str:
        return self.column.dtype


# ---------------------------------------------------------------------------

@dataclass
class AliasSource:
    alias: str
    table: str | None = None           # catalog table, or None when derived
    subplan: "QueryPlan | None" = None
    pushed: list[BoundExpr] = field(default_factory=list)
    nullable_side: bool = False        # may be null-extended by an outer join


@dataclass
class JoinStep:
    alias: str           # table entering the join
    kind: str            # inner | left | right | cross
    left: BoundColumn | None = None   # key on the already-joined side
    right: BoundColumn | None = None  # key on the entering side


@dataclass
class BranchPlan:
    sources: list[AliasSource]
    steps: list[JoinStep]
    residual: list[BoundExpr]
    group_keys: list[BoundColumn]
    aggregates: list[BoundAggregate]
    outputs: list[tuple[str, object]]  # (header, row expr or post-agg expr)
    having: object | None
    grouped: bool


@dataclass
class QueryPlan:
    branches: list[BranchPlan]
    headers: list[str]
    dtypes: list[str]
    order_spec: list[tuple[int, bool]]
    limit: int | None
    query: ast.Query
    path: str | None = None


# ---------------------------------------------------------------------------
# Binding environment
# ---------------------------------------------------------------------------

class _Source:
    """One FROM binding: a catalog table or a planned derived table."""

    def __init__(self, alias: str, table: TableDef | None,
                 subplan: QueryPlan | None):
        self.alias = alias
        self.table = table
        self.subplan = subplan
        if table is not None:
            self._cols = {c.name.lower(): (c.name, c.dtype) for c in table.columns}
        else:
            self._cols = {
                h.lower(): (h, d)
                for h, d in zip(subplan.headers, subplan.dtypes)
            }

    def lookup(self, name: str) -> tuple[str, str] | None:
        return self._cols.get(name.lower())


class _Env:
    def __init__(self, schema: ConstellationSchema):
        self.schema = schema
        self.sources: dict[str, _Source] = {}
        self.order: list[str] = []

    def add(self, ref: ast.TableRef):
        if ref.subquery is not None:
            subplan = plan(ref.subquery, self.schema)
            source = _Source(ref.binding_name, None, subplan)
        else:
            if not self.schema.has_table(ref.name):
                raise BindError(f"unknown table {ref.name!r}")
            source = _Source(ref.binding_name, self.schema.table(ref.name), None)
        key = source.alias.lower()
        if key in self.sources:
            raise BindError(f"duplicate table alias {source.alias!r}")
        self.sources[key] = source
        self.order.append(key)

    def source(self, alias: str) -> _Source:
        try:
            return self.sources[alias.lower()]
        except KeyError:
            raise BindError(f"unknown table or alias {alias!r}") from None

    def resolve(self, ref: ast.ColumnRef) -> BoundColumn:
        if ref.table is not None:
            source = self.source(ref.table)
            hit = source.lookup(ref.name)
            if hit is None:
                raise BindError(
                    f"unknown column {ref.name!r} in table {ref.table!r}")
            name, dtype = hit
            return BoundColumn(source.alias, name, dtype)
        matches = []
        for key in self.order:
            source = self.sources[key]
            hit = source.lookup(ref.name)
            if hit is not None:
                matches.append((source, hit))
        if not matches:
            raise BindError(f"unknown column {ref.name!r}")
        if len(matches) > 1:
            names = ", ".join(s.alias for s, _ in matches)
            raise BindError(f"ambiguous column {ref.name!r} (in {names})")
        source, (name, dtype) = matches[0]
        return BoundColumn(source.alias, name, dtype)


# ---------------------------------------------------------------------------
# Expression binding
# ---------------------------------------------------------------------------

def _dtype_class(dtype: str) -> str:
    if dtype in _NUMERIC:
        return "numeric"
    return dtype


def _coerce_literal(lit: BoundLiteral, target: str) -> BoundLiteral | None:
    """Re-type a literal to match the column it is compared with."""
    if _dtype_class(lit.dtype) == _dtype_class(target):
        return lit
    if lit.dtype == "text" and target in _NUMERIC:
        text = str(lit.value).strip()
        try:
            value = int(text) if target == "int64" else float(text)
        except ValueError:
            try:
                value = float(text)
            except ValueError:
                return None
        return BoundLiteral(value, target)
    if lit.dtype == "text" and target == "date":
        try:
            return BoundLiteral(dt.date.fromisoformat(str(lit.value)), "date")
        except ValueError:
            return None
    if lit.dtype == "int64" and target == "float64":
        return BoundLiteral(float(lit.value), "float64")
    return None


def _expr_dtype(expr) -> str:
    if isinstance(expr, (BoundColumn, BoundLiteral, BoundFunc, KeyRef, AggRef)):
        return expr.dtype
    if isinstance(expr, BoundAggregate):
        return expr.dtype
    if isinstance(expr, MinRep):
        return expr.dtype
    if isinstance(expr, (BoundCompare, BoundLike, BoundIn, BoundBool)):
        return "bool"
    raise BindError(f"no dtype for {expr!r}")


def render_expr(expr) -> str:
    """Stable text rendering (headers, EXPLAIN, aggregate dedup keys)."""
    if isinstance(expr, BoundColumn):
        return f"{expr.alias}.{expr.column}"
    if isinstance(expr, BoundLiteral):
        if isinstance(expr.value, str):
            return "'" + expr.value.replace("'", "''") + "'"
        return str(expr.value)
    if isinstance(expr, BoundFunc):
        return f"{expr.fn}({render_expr(expr.arg)})"
    if isinstance(expr, BoundAggregate):
        return f"{expr.func}({'*' if expr.arg is None else render_expr(expr.arg)})"
    if isinstance(expr, BoundCompare):
        return f"{render_expr(expr.left)} {expr.op} {render_expr(expr.right)}"
    if isinstance(expr, BoundLike):
        return f"{render_expr(expr.arg)} like '{expr.pattern}'"
    if isinstance(expr, BoundIn):
        return f"{render_expr(expr.arg)} in (<subquery>)"
    if isinstance(expr, BoundBool):
        inner = f" {expr.op} ".join(render_expr(i) for i in expr.items)
        return f"({inner})"
    if isinstance(expr, KeyRef):
        return f"key[{expr.index}]"
    if isinstance(expr, AggRef):
        return f"agg[{expr.index}]"
    if isinstance(expr, MinRep):
        return f"min({render_expr(expr.column)})"
    return repr(expr)


class _ExprBinder:
    def __init__(self, env: _Env, schema: ConstellationSchema,
                 allow_aggregates: bool):
        self.env = env
        self.schema = schema
        self.allow_aggregates = allow_aggregates

    def bind(self, expr: ast.Expr) -> BoundExpr:
        if isinstance(expr, ast.ColumnRef):
            return self.env.resolve(expr)
        if isinstance(expr, ast.Literal):
            if isinstance(expr.value, str):
                return BoundLiteral(expr.value, "text")
            if isinstance(expr.value, int):
                return BoundLiteral(expr.value, "int64")
            return BoundLiteral(expr.value, "float64")
        if isinstance(expr, ast.FuncCall):
            arg = self.bind(expr.arg)
            if _expr_dtype(arg) != "date":
                raise BindError(f"{expr.name.upper()} expects a date argument")
            return BoundFunc(expr.name, arg)
        if isinstance(expr, ast.Aggregate):
            if not self.allow_aggregates:
                raise BindError(
                    f"aggregate {expr.func.upper()} is not allowed here")
            return self._bind_aggregate(expr)
        if isinstance(expr, ast.Comparison):
            return self._bind_comparison(expr)
        if isinstance(expr, ast.LikeExpr):
            operand = self.bind(expr.operand)
            if _expr_dtype(operand) != "text":
                raise BindError(
                    f"LIKE needs a text operand, got {_expr_dtype(operand)} "
                    f"({render_expr(operand)})")
            return BoundLike(operand, expr.pattern)
        if isinstance(expr, ast.InSubquery):
            operand = self.bind(expr.operand)
            subplan = plan(expr.query, self.schema)
            if len(subplan.headers) != 1:
                raise BindError("IN subquery must produce exactly one column")
            if _dtype_class(_expr_dtype(operand)) != _dtype_class(subplan.dtypes[0]):
                raise BindError(
                    f"IN operand type {_expr_dtype(operand)} does not match "
                    f"subquery column type {subplan.dtypes[0]}")
            return BoundIn(operand, subplan)
        if isinstance(expr, ast.BoolOp):
            return BoundBool(expr.op, tuple(self.bind(i) for i in expr.items))
        raise BindError(f"cannot bind expression {expr!r}")

    def _bind_aggregate(self, expr: ast.Aggregate) -> BoundAggregate:
        if expr.arg is None:
            return BoundAggregate("count", None, "int64")
        inner = _ExprBinder(self.env, self.schema, allow_aggregates=False)
        try:
            arg = inner.bind(expr.arg)
        except BindError as exc:
            if "not allowed" in str(exc):
                raise BindError("nested aggregates are not allowed") from None
            raise
        dtype = _expr_dtype(arg)
        if expr.func == "count":
            return BoundAggregate("count", arg, "int64")
        if expr.func == "sum":
            if dtype not in _NUMERIC:
                raise BindError(f"SUM needs a numeric argument, got {dtype}")
            return BoundAggregate("sum", arg, dtype)
        if dtype not in _ORDERABLE:
            raise BindError(f"MAX cannot order values of type {dtype}")
        return BoundAggregate("max", arg, dtype)

    def _bind_comparison(self, expr: ast.Comparison) -> BoundCompare:
        left = self.bind(expr.left)
        right = self.bind(expr.right)
        lt, rt = _expr_dtype(left), _expr_dtype(right)
        if isinstance(right, BoundLiteral) and not isinstance(left, BoundLiteral):
            coerced = _coerce_literal(right, lt)
            if coerced is None:
                raise BindError(
                    f"type error: cannot compare {lt} with {rt} in "
                    f"{render_expr(left)} {expr.op} {render_expr(right)}")
            right, rt = coerced, coerced.dtype
        elif isinstance(left, BoundLiteral) and not isinstance(right, BoundLiteral):
            coerced = _coerce_literal(left, rt)
            if coerced is None:
                raise BindError(f"type error: cannot compare {lt} with {rt}")
            left, lt = coerced, coerced.dtype
        if isinstance(left, BoundLiteral) and isinstance(right, BoundLiteral):
            raise BindError("comparison needs at least one column reference")
        if _dtype_class(lt) != _dtype_class(rt):
            raise BindError(
                f"type error: cannot compare {lt} with {rt} in "
                f"{render_expr(left)} {expr.op} {render_expr(right)}")
        if _dtype_class(lt) in ("geo-point", "geo-polygon"):
            raise BindError("geo values cannot be compared")
        if _dtype_class(lt) == "bool" and expr.op not in ("=", "<>"):
            raise BindError("bool values only support = and <>")
        return BoundCompare(expr.op, left, right)


# ---------------------------------------------------------------------------
# Helpers over bound expressions
# ---------------------------------------------------------------------------

def _conjuncts(expr: BoundExpr | None) -> list[BoundExpr]:
    if expr is None:
        return []
    if isinstance(expr, BoundBool) and expr.op == "and":
        out = []
        for item in expr.items:
            out.extend(_conjuncts(item))
        return out
    return [expr]


def expr_aliases(expr) -> set[str]:
    if isinstance(expr, BoundColumn):
        return {expr.alias}
    if isinstance(expr, (BoundLiteral, KeyRef, AggRef)):
        return set()
    if isinstance(expr, MinRep):
        return {expr.column.alias}
    if isinstance(expr, BoundFunc):
        return expr_aliases(expr.arg)
    if isinstance(expr, BoundCompare):
        return expr_aliases(expr.left) | expr_aliases(expr.right)
    if isinstance(expr, BoundLike):
        return expr_aliases(expr.arg)
    if isinstance(expr, BoundIn):
        return expr_aliases(expr.arg)
    if isinstance(expr, BoundBool):
        out: set[str] = set()
        for item in expr.items:
            out |= expr_aliases(item)
        return out
    if isinstance(expr, BoundAggregate):
        return set() if expr.arg is None else expr_aliases(expr.arg)
    raise BindError(f"cannot inspect {expr!r}")


def _contains_aggregate(expr) -> bool:
    if isinstance(expr, BoundAggregate):
        return True
    if isinstance(expr, BoundFunc):
        return _contains_aggregate(expr.arg)
    if isinstance(expr, BoundCompare):
        return _contains_aggregate(expr.left) or _contains_aggregate(expr.right)
    if isinstance(expr, (BoundLike,)):
        return _contains_aggregate(expr.arg)
    if isinstance(expr, BoundIn):
        return _contains_aggregate(expr.arg)
    if isinstance(expr, BoundBool):
        return any(_contains_aggregate(i) for i in expr.items)
    return False


def _is_join_edge(expr) -> bool:
    return (isinstance(expr, BoundCompare) and expr.op == "="
            and isinstance(expr.left, BoundColumn)
            and isinstance(expr.right, BoundColumn)
            and expr.left.alias != expr.right.alias)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

def plan(query: ast.Query, schema: ConstellationSchema) -> QueryPlan:
    """Bind and plan a parsed query against the catalog."""
    branches = [_plan_branch(core, schema) for core in query.branches]

    first = branches[0]
    headers = [name for name, _ in first.outputs]
    dtypes = [_expr_dtype(expr) for _, expr in first.outputs]
    for branch in branches[1:]:
        if len(branch.outputs) != len(first.outputs):
            raise BindError("UNION branches must have the same number of columns")
        for (_, expr), expected in zip(branch.outputs, dtypes):
            got = _expr_dtype(expr)
            if _dtype_class(got) != _dtype_class(expected):
                raise BindError(
                    f"UNION branch column type {got} does not match {expected}")

    order_spec = []
    for key in query.order_by:
        idx = _resolve_order_key(key.ref, first, headers)
        if dtypes[idx] not in _ORDERABLE:
            raise BindError(f"cannot ORDER BY values of type {dtypes[idx]}")
        order_spec.append((idx, key.desc))

    return QueryPlan(branches, headers, dtypes, order_spec, query.limit, query)


def _resolve_order_key(ref: ast.ColumnRef, branch: BranchPlan,
                       headers: list[str]) -> int:
    want = ref.name.lower()
    if ref.table is None:
        for i, h in enumerate(headers):
            if h.lower() == want:
                return i
    for i, (_, expr) in enumerate(branch.outputs):
        col = None
        if isinstance(expr, BoundColumn):
            col = expr
        elif isinstance(expr, KeyRef):
            col = branch.group_keys[expr.index]
        elif isinstance(expr, MinRep):
            col = expr.column
        if col is None:
            continue
        if col.column.lower() == want and (
                ref.table is None or col.alias.lower() == ref.table.lower()):
            return i
    raise BindError(
        f"ORDER BY key {ref.name!r} does not name an output column")


def _plan_branch(core: ast.SelectCore, schema: ConstellationSchema) -> BranchPlan:
    env = _Env(schema)
    explicit: list[tuple[str, list[ast.JoinClause]]] = []
    for item in core.from_items:
        env.add(item.base)
        for join in item.joins:
            env.add(join.table)
        explicit.append((item.base.binding_name, list(item.joins)))

    binder = _ExprBinder(env, schema, allow_aggregates=False)
    where = binder.bind(core.where) if core.where is not None else None
    if where is not None and _contains_aggregate(where):
        raise BindError("aggregates are not allowed in WHERE")
    if where is not None and _expr_dtype(where) != "bool":
        raise BindError("WHERE must be a boolean expression")

    conjuncts = _conjuncts(where)
    edges = [c for c in conjuncts if _is_join_edge(c)]
    filters = [c for c in conjuncts if not _is_join_edge(c)]

    sources, steps, leftovers = _order_joins(env, explicit, edges, binder)
    filters.extend(leftovers)

    # group keys / aggregates -------------------------------------------------
    group_keys = [env.resolve(ref) for ref in core.group_by]
    agg_binder = _ExprBinder(env, schema, allow_aggregates=True)

    aggregates: list[BoundAggregate] = []
    agg_index: dict[str, int] = {}

    def intern_agg(agg: BoundAggregate) -> int:
        key = render_expr(agg)
        if key not in agg_index:
            agg_index[key] = len(aggregates)
            aggregates.append(agg)
        return agg_index[key]

    # bind select items in row context first
    bound_items: list[tuple[str, BoundExpr]] = []
    for item in core.items:
        expr = agg_binder.bind(item.expr)
        if not isinstance(expr, (BoundColumn, BoundFunc, BoundAggregate)):
            raise BindError(
                "select items must be columns, aggregates, or YEAR/MONTH calls")
        name = item.alias or _default_header(expr)
        bound_items.append((name, expr))

    has_aggregates = any(
        _contains_aggregate(e) for _, e in bound_items)
    having_bound = None
    if core.having is not None:
        having_bound = _bind_having(core.having, env, schema, bound_items,
                                    group_keys)
        has_aggregates = has_aggregates or _contains_aggregate_post(having_bound)
    grouped = bool(group_keys) or has_aggregates
    if core.having is not None and not grouped:
        raise BindError("HAVING requires GROUP BY or aggregates")

    outputs: list[tuple[str, object]] = []
    if grouped:
        for name, expr in bound_items:
            outputs.append((name, _to_post_expr(expr, group_keys, intern_agg)))
        if having_bound is not None:
            having_bound = _intern_post_aggs(having_bound, intern_agg, group_keys)
        if not group_keys:
            # whole-query aggregation: every output must be an aggregate
            for name, expr in outputs:
                if not _post_is_aggregate_only(expr):
                    raise BindError(
                        f"column {name!r} must appear in GROUP BY or inside "
                        f"an aggregate")
    else:
        outputs = list(bound_items)

    return BranchPlan(
        sources=sources,
        steps=steps,
        residual=filters,
        group_keys=group_keys,
        aggregates=aggregates,
        outputs=outputs,
        having=having_bound,
        grouped=grouped,
    )


def _default_header(expr) -> str:
    if isinstance(expr, BoundColumn):
        return expr.column
    if isinstance(expr, BoundAggregate):
        if expr.arg is None:
            return "count(*)"
        return f"{expr.func}({_default_header_arg(expr.arg)})"
    if isinstance(expr, BoundFunc):
        return f"{expr.fn}({_default_header_arg(expr.arg)})"
    return render_expr(expr)


def _default_header_arg(expr) -> str:
    if isinstance(expr, BoundColumn):
        return expr.column
    return render_expr(expr)


def _to_post_expr(expr, group_keys: list[BoundColumn], intern_agg):
    """Rewrite a select-item expression into the post-aggregation context."""
    if isinstance(expr, BoundAggregate):
        idx = intern_agg(expr)
        return AggRef(idx, expr.dtype)
    if isinstance(expr, BoundColumn):
        for i, key in enumerate(group_keys):
            if key.alias == expr.alias and key.column == expr.column:
                return KeyRef(i, key.dtype)
        return MinRep(expr)
    if isinstance(expr, BoundFunc):
        return BoundFunc(expr.fn, _to_post_expr(expr.arg, group_keys, intern_agg))
    if isinstance(expr, BoundLiteral):
        return expr
    raise BindError(f"cannot use {render_expr(expr)} with GROUP BY")


def _bind_having(having: ast.Expr, env: _Env, schema, bound_items,
                 group_keys) -> object:
    """Bind HAVING over select aliases, aggregates, and group keys."""
    alias_map = {name.lower(): expr for name, expr in bound_items}

    def bind(expr: ast.Expr):
        if isinstance(expr, ast.ColumnRef):
            if expr.table is None and expr.name.lower() in alias_map:
                return alias_map[expr.name.lower()]
            bound = env.resolve(expr)
            for key in group_keys:
                if key.alias == bound.alias and key.column == bound.column:
                    return bound
            raise BindError(
                f"HAVING column {expr.name!r} must be a select alias, "
                f"aggregate, or GROUP BY key")
        if isinstance(expr, ast.Aggregate):
            binder = _ExprBinder(env, schema, allow_aggregates=True)
            return binder.bind(expr)
        if isinstance(expr, ast.BoolOp):
            return BoundBool(expr.op, tuple(bind(i) for i in expr.items))
        if isinstance(expr, ast.Comparison):
            left = bind(expr.left)
            right = bind(expr.right)
            lt, rt = _expr_dtype(left), _expr_dtype(right)
            if isinstance(right, BoundLiteral) and not isinstance(left, BoundLiteral):
                coerced = _coerce_literal(right, lt)
                if coerced is None:
                    raise BindError(f"type error comparing {lt} with {rt}")
                right = coerced
            elif isinstance(left, BoundLiteral) and not isinstance(right, BoundLiteral):
                coerced = _coerce_literal(left, rt)
                if coerced is None:
                    raise BindError(f"type error comparing {lt} with {rt}")
                left = coerced
            if _dtype_class(_expr_dtype(left)) != _dtype_class(_expr_dtype(right)):
                raise BindError(
                    f"type error comparing {_expr_dtype(left)} with "
                    f"{_expr_dtype(right)} in HAVING")
            return BoundCompare(expr.op, left, right)
        if isinstance(expr, ast.Literal):
            binder = _ExprBinder(env, schema, allow_aggregates=True)
            return binder.bind(expr)
        if isinstance(expr, ast.FuncCall):
            arg = bind(expr.arg)
            if _expr_dtype(arg) != "date":
                raise BindError(f"{expr.name.upper()} expects a date argument")
            return BoundFunc(expr.name, arg)
        if isinstance(expr, (ast.LikeExpr, ast.InSubquery)):
            raise BindError("LIKE / IN are not supported in HAVING")
        raise BindError(f"cannot bind HAVING expression {expr!r}")

    bound = bind(having)
    if _expr_dtype(bound) != "bool":
        raise BindError("HAVING must be a boolean expression")
    return bound


def _contains_aggregate_post(expr) -> bool:
    if isinstance(expr, (BoundAggregate, AggRef)):
        return True
    if isinstance(expr, BoundCompare):
        return _contains_aggregate_post(expr.left) or \
            _contains_aggregate_post(expr.right)
    if isinstance(expr, BoundBool):
        return any(_contains_aggregate_post(i) for i in expr.items)
    if isinstance(expr, BoundFunc):
        return _contains_aggregate_post(expr.arg)
    return False


def _intern_post_aggs(expr, intern_agg, group_keys):
    """Rewrite a HAVING tree into post-aggregation form: aggregates become
    AggRef slots, group-key columns become KeyRef slots."""
    if isinstance(expr, BoundAggregate):
        return AggRef(intern_agg(expr), expr.dtype)
    if isinstance(expr, BoundColumn):
        for i, key in enumerate(group_keys):
            if key.alias == expr.alias and key.column == expr.column:
                return KeyRef(i, key.dtype)
        return expr
    if isinstance(expr, BoundCompare):
        return BoundCompare(
            expr.op,
            _intern_post_aggs(expr.left, intern_agg, group_keys),
            _intern_post_aggs(expr.right, intern_agg, group_keys))
    if isinstance(expr, BoundBool):
        return BoundBool(expr.op, tuple(_intern_post_aggs(i, intern_agg, group_keys)
                                        for i in expr.items))
    if isinstance(expr, BoundFunc):
        return BoundFunc(expr.fn, _intern_post_aggs(expr.arg, intern_agg, group_keys))
    return expr


def _post_is_aggregate_only(expr) -> bool:
    if isinstance(expr, AggRef):
        return True
    if isinstance(expr, BoundFunc):
        return _post_is_aggregate_only(expr.arg)
    if isinstance(expr, BoundLiteral):
        return True
    return False


def _order_joins(env: _Env, explicit, edges: list[BoundCompare],
                 binder: _ExprBinder):
    """Produce join order: FROM-clause chains glued by implicit equi-edges.

    Returns (sources, steps, leftover filter exprs).  Implicit edges that do
    not drive a join (cycles, or edges within a chain) fall back to residual
    filters, preserving semantics.
    """
    included: list[str] = []
    included_set: set[str] = set()
    steps: list[JoinStep] = []
    used: set[int] = set()
    nullable: set[str] = set()

    def edge_for(alias: str):
        low = alias.lower()
        for i, e in enumerate(edges):
            if i in used:
                continue
            la, ra = e.left.alias.lower(), e.right.alias.lower()
            if la == low and ra in included_set:
                return i, e.right, e.left
            if ra == low and la in included_set:
                return i, e.left, e.right
        return None

    def add_alias(alias: str, via: JoinStep | None):
        included.append(alias)
        included_set.add(alias.lower())
        if via is not None:
            steps.append(via)

    def add_chain(base: str, joins: list[ast.JoinClause]):
        base_alias = env.source(base).alias
        if not included:
            add_alias(base_alias, None)
        else:
            hit = edge_for(base_alias)
            if hit is not None:
                i, left, right = hit
                used.add(i)
                add_alias(base_alias, JoinStep(base_alias, "inner", left, right))
            else:
                add_alias(base_alias, JoinStep(base_alias, "cross"))
        for join in joins:
            new_alias = env.source(join.table.binding_name).alias
            left_col, right_col = _bind_on(join, new_alias, binder, included_set)
            add_alias(new_alias,
                      JoinStep(new_alias, join.kind, left_col, right_col))
            if join.kind == "left":
                nullable.add(new_alias.lower())
            else:  # right outer: every already-included alias can null-extend
                nullable.update(a.lower() for a in included[:-1])

    for base, joins in explicit:
        add_chain(base, joins)

    leftovers = [e for i, e in enumerate(edges) if i not in used]
    sources = [AliasSource(alias=a,
                           table=(env.source(a).table.name
                                  if env.source(a).table else None),
                           subplan=env.source(a).subplan,
                           nullable_side=a.lower() in nullable)
               for a in included]
    return sources, steps, leftovers


def _bind_on(join: ast.JoinClause, new_alias: str, binder: _ExprBinder,
             included: set[str]):
    on = binder.bind(join.on)
    if not (isinstance(on, BoundCompare) and on.op == "="
            and isinstance(on.left, BoundColumn)
            and isinstance(on.right, BoundColumn)):
        raise BindError(
            "JOIN ... ON must be an equality between two columns")
    a, b = on.left, on.right
    if a.alias.lower() == new_alias.lower() and b.alias.lower() in included:
        return b, a
    if b.alias.lower() == new_alias.lower() and a.alias.lower() in included:
        return a, b
    raise BindError(
        "JOIN ... ON must relate the joined table to an earlier table")


def attach_pushdown_filters(branch: BranchPlan):
    """Move single-table residual conjuncts onto their source when safe.

    A filter is pushable when it references exactly one alias and that alias
    can never be null-extended by an outer join in this branch.
    """
    keep = []
    by_alias = {s.alias.lower(): s for s in branch.sources}
    for expr in branch.residual:
        aliases = expr_aliases(expr)
        if len(aliases) == 1 and not isinstance(expr, BoundIn):
            alias = next(iter(aliases)).lower()
            source = by_alias[alias]
            if not getattr(source, "nullable_side", False):
                source.pushed.append(expr)
                continue
        keep.append(expr)
    branch.residual = keep


def plan_query(text_or_query, schema: ConstellationSchema,
               pushdown: bool = True) -> QueryPlan:
    """Parse (if needed) and plan, applying filter pushdown."""
    query = text_or_query
    if isinstance(query, str):
        query = ast.parse(query)
    result = plan(query, schema)
    if pushdown:
        for branch in result.branches:
            attach_pushdown_filters(branch)
    return result


# ---------------------------------------------------------------------------
# EXPLAIN
# ---------------------------------------------------------------------------

def explain(qplan: QueryPlan) -> str:
    """Deterministic text rendering of the operator tree and chosen path."""
    lines = [f"path: {qplan.path or 'unset'}"]
    top = []
    if qplan.limit is not None:
        top.append(f"limit {qplan.limit}")
    if qplan.order_spec:
        keys = ", ".join(
            f"{qplan.headers[i]} {'desc' if d else 'asc'}"
            for i, d in qplan.order_spec)
        top.append(f"sort [{keys}]")
    if len(qplan.branches) > 1:
        top.append("union distinct")
    indent = 0
    for op in top:
        lines.append("  " * indent + op)
        indent += 1
    for bi, branch in enumerate(qplan.branches):
        base = indent
        if len(qplan.branches) > 1:
            lines.append("  " * base + f"branch {bi + 1}")
            base += 1
        cols = ", ".join(name for name, _ in branch.outputs)
        lines.append("  " * base + f"project [{cols}]")
        depth = base + 1
        if branch.having is not None:
            lines.append("  " * depth + f"having {render_expr(branch.having)}")
            depth += 1
        if branch.grouped:
            keys = ", ".join(render_expr(k) for k in branch.group_keys)
            aggs = ", ".join(render_expr(a) for a in branch.aggregates)
            lines.append("  " * depth + f"aggregate keys=[{keys}] aggs=[{aggs}]")
            depth += 1
        for expr in branch.residual:
            lines.append("  " * depth + f"filter {render_expr(expr)}")
            depth += 1
        for step in reversed(branch.steps):
            if step.kind == "cross":
                lines.append("  " * depth + f"join cross {step.alias}")
            else:
                lines.append(
                    "  " * depth
                    + f"join {step.kind} {step.alias} on "
                    + f"{render_expr(step.left)} = {render_expr(step.right)}")
            depth += 1
        for source in branch.sources:
            label = source.table or "derived"
            extra = ""
            if source.pushed:
                extra = " where " + " and ".join(
                    render_expr(e) for e in source.pushed)
            kind = "scan" if source.table else "subquery"
            lines.append("  " * depth + f"{kind} {label} as {source.alias}{extra}")
            if source.subplan is not None:
                for sub in explain(source.subplan).splitlines()[1:]:
                    lines.append("  " * (depth + 1) + sub)
    return "\n".join(lines)
