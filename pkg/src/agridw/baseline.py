"""Reference executor over the naive row store.

Row-at-a-time interpretation: full-table scans, per-row predicate closures,
hash-lookup joins driven one outer row at a time, dictionary aggregation.
This path is the correctness oracle for the columnar executor, so it stays
as plain as possible; float sums use math.fsum so totals are exactly
rounded regardless of row order.
"""

from __future__ import annotations

import math

from .like import like_match
from .planner import (
    BoundAggregate,
    BoundBool,
    BoundColumn,
    BoundCompare,
    BoundFunc,
    BoundIn,
    BoundLike,
    BoundLiteral,
    BranchPlan,
    QueryPlan,
)
from .postagg import (
    CMP as _CMP,
    collect_minrep_columns,
    empty_scalar_row,
    finish_groups,
)
from .results import ResultTable, apply_order_and_limit, union_distinct
from .storage import RowStore


class ExecutionError(Exception):
    pass


class _BranchRun:
    """Executes one UNION branch against the row store."""

    def __init__(self, branch: BranchPlan, store: RowStore):
        self.branch = branch
        self.store = store
        self.alias_pos = {s.alias.lower(): i for i, s in enumerate(branch.sources)}
        self.col_index: dict[tuple[str, str], int] = {}
        self.rows_by_alias: dict[str, list[tuple]] = {}
        self.arity: dict[str, int] = {}

    # -- source preparation --------------------------------------------------

    def prepare_sources(self):
        for source in self.branch.sources:
            if source.table is not None:
                table = self.store.schema.table(source.table)
                rows = self.store.rows(source.table)
                for c in table.columns:
                    self.col_index[(source.alias.lower(), c.name.lower())] = \
                        table.column_index(c.name)
                self.arity[source.alias.lower()] = len(table.columns)
            else:
                sub = execute_baseline(source.subplan, self.store)
                rows = sub.rows
                for i, h in enumerate(sub.headers):
                    self.col_index[(source.alias.lower(), h.lower())] = i
                self.arity[source.alias.lower()] = len(sub.headers)
            if source.pushed:
                pos = self.alias_pos[source.alias.lower()]
                width = len(self.branch.sources)
                checks = [self.compile(e) for e in source.pushed]
                kept = []
                probe: list = [None] * width
                for row in rows:
                    probe[pos] = row
                    if all(c(probe) for c in checks):
                        kept.append(row)
                rows = kept
            self.rows_by_alias[source.alias.lower()] = rows

    def _col(self, col: BoundColumn) -> tuple[int, int]:
        return (self.alias_pos[col.alias.lower()],
                self.col_index[(col.alias.lower(), col.column.lower())])

    # -- expression compilation ----------------------------------------------

    def compile(self, expr):
        """BoundExpr -> closure(ctx) over the per-alias row list."""
        if isinstance(expr, BoundColumn):
            ai, ci = self._col(expr)
            return lambda ctx: ctx[ai][ci]
        if isinstance(expr, BoundLiteral):
            value = expr.value
            return lambda ctx: value
        if isinstance(expr, BoundFunc):
            arg = self.compile(expr.arg)
            if expr.fn == "year":
                def year(ctx, _a=arg):
                    v = _a(ctx)
                    return None if v is None else v.year
                return year
            def month(ctx, _a=arg):
                v = _a(ctx)
                return None if v is None else v.month
            return month
        if isinstance(expr, BoundCompare):
            left = self.compile(expr.left)
            right = self.compile(expr.right)
            op = _CMP[expr.op]
            def cmp(ctx, _l=left, _r=right, _op=op):
                a = _l(ctx)
                if a is None:
                    return False
                b = _r(ctx)
                if b is None:
                    return False
                return _op(a, b)
            return cmp
        if isinstance(expr, BoundLike):
            arg = self.compile(expr.arg)
            pattern = expr.pattern
            return lambda ctx: like_match(arg(ctx), pattern)
        if isinstance(expr, BoundIn):
            arg = self.compile(expr.arg)
            values = _in_values(expr, self.store, execute_baseline)
            return lambda ctx: (v := arg(ctx)) is not None and v in values
        if isinstance(expr, BoundBool):
            items = [self.compile(i) for i in expr.items]
            if expr.op == "and":
                return lambda ctx: all(f(ctx) for f in items)
            return lambda ctx: any(f(ctx) for f in items)
        raise ExecutionError(f"cannot compile {expr!r}")


def _in_values(expr: BoundIn, store, executor) -> frozenset:
    sub = executor(expr.subplan, store)
    return frozenset(row[0] for row in sub.rows if row[0] is not None)


def _null_row(arity: int) -> tuple:
    return (None,) * arity


def execute_baseline(plan: QueryPlan, store: RowStore) -> ResultTable:
    """Run a plan on the row store with reference semantics."""
    parts = [_run_branch(branch, store) for branch in plan.branches]
    if len(parts) > 1:
        rows = union_distinct(parts)
    else:
        rows = parts[0]
    ordered = bool(plan.order_spec)
    if ordered or plan.limit is not None:
        rows = apply_order_and_limit(rows, plan.order_spec, plan.limit)
    plan.path = "baseline"
    return ResultTable(list(plan.headers), rows, ordered, list(plan.order_spec))


def _run_branch(branch: BranchPlan, store: RowStore) -> list[tuple]:
    run = _BranchRun(branch, store)
    run.prepare_sources()

    contexts = _join(run)

    for expr in branch.residual:
        check = run.compile(expr)
        contexts = [ctx for ctx in contexts if check(ctx)]

    if branch.grouped:
        return _aggregate(run, contexts)

    out_funcs = [run.compile(expr) for _, expr in branch.outputs]
    return [tuple(f(ctx) for f in out_funcs) for ctx in contexts]


def _join(run: _BranchRun) -> list[tuple]:
    branch = run.branch
    first = branch.sources[0]
    contexts: list[tuple] = [(row,) for row in
                             run.rows_by_alias[first.alias.lower()]]
    for step in branch.steps:
        new_rows = run.rows_by_alias[step.alias.lower()]
        if step.kind == "cross":
            contexts = [ctx + (row,) for ctx in contexts for row in new_rows]
            continue
        lai, lci = run._col(step.left)
        _, rci = run._col(step.right)
        if step.kind in ("inner", "left"):
            index: dict = {}
            for row in new_rows:
                key = row[rci]
                if key is not None:
                    index.setdefault(key, []).append(row)
            out = []
            if step.kind == "inner":
                for ctx in contexts:
                    key = ctx[lai][lci]
                    if key is None:
                        continue
                    hit = index.get(key)
                    if hit:
                        for row in hit:
                            out.append(ctx + (row,))
            else:
                null_row = _null_row(run.arity[step.alias.lower()])
                for ctx in contexts:
                    key = ctx[lai][lci]
                    hit = index.get(key) if key is not None else None
                    if hit:
                        for row in hit:
                            out.append(ctx + (row,))
                    else:
                        out.append(ctx + (null_row,))
            contexts = out
        elif step.kind == "right":
            # preserve the entering table; null-extend the joined-so-far chain
            cindex: dict = {}
            for ctx in contexts:
                key = ctx[lai][lci]
                if key is not None:
                    cindex.setdefault(key, []).append(ctx)
            width = branch.steps.index(step) + 1  # aliases joined so far
            null_prefix = tuple(_null_row(run.arity[s.alias.lower()])
                                for s in branch.sources[:width])
            out = []
            for row in new_rows:
                key = row[rci]
                hit = cindex.get(key) if key is not None else None
                if hit:
                    for ctx in hit:
                        out.append(ctx + (row,))
                else:
                    out.append(null_prefix + (row,))
            contexts = out
        else:
            raise ExecutionError(f"unknown join kind {step.kind!r}")
    return contexts


def _aggregate(run: _BranchRun, contexts: list[tuple]) -> list[tuple]:
    branch = run.branch
    key_funcs = [run.compile(k) for k in branch.group_keys]
    minrep_cols = collect_minrep_columns(branch)
    minrep_funcs = [run.compile(c) for c in minrep_cols]
    agg_arg_funcs = [None if a.arg is None else run.compile(a.arg)
                     for a in branch.aggregates]
    aggs = branch.aggregates

    groups: dict[tuple, list] = {}
    for ctx in contexts:
        key = tuple(f(ctx) for f in key_funcs)
        state = groups.get(key)
        if state is None:
            # one slot per aggregate, then one per min-representative column
            state = [_new_agg_state(a) for a in aggs] + [None] * len(minrep_cols)
            groups[key] = state
        for i, agg in enumerate(aggs):
            fn = agg_arg_funcs[i]
            if agg.func == "count":
                if fn is None or fn(ctx) is not None:
                    state[i][0] += 1
            elif agg.func == "sum":
                value = fn(ctx)
                if value is not None:
                    state[i].append(value)
            else:  # max
                value = fn(ctx)
                if value is not None and (state[i][0] is None or value > state[i][0]):
                    state[i][0] = value
        base = len(aggs)
        for j, fn in enumerate(minrep_funcs):
            value = fn(ctx)
            if value is not None:
                current = state[base + j]
                if current is None or value < current:
                    state[base + j] = value

    if not groups and not branch.group_keys:
        return empty_scalar_row(branch)

    min_keys = [(c.alias.lower(), c.column.lower()) for c in minrep_cols]
    finished: dict[tuple, tuple[list, dict]] = {}
    base = len(aggs)
    for key, state in groups.items():
        agg_values = [_finish_agg(a, state[i]) for i, a in enumerate(aggs)]
        min_values = {mk: state[base + j] for j, mk in enumerate(min_keys)}
        finished[key] = (agg_values, min_values)
    return finish_groups(branch, finished)


def _new_agg_state(agg: BoundAggregate):
    if agg.func == "count":
        return [0]
    if agg.func == "sum":
        return []
    return [None]


def _finish_agg(agg: BoundAggregate, state):
    if agg.func == "count":
        return state[0]
    if agg.func == "sum":
        if not state:
            return None
        if agg.dtype == "int64":
            return sum(state)
        return math.fsum(state)
    return state[0]
