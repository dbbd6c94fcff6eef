"""Columnar executor over the column store.

Late materialization throughout: the working set is one position vector per
joined table (-1 marks an outer-join null extension); only the segments a
predicate, join key, group key, or output actually names are ever touched.
Filters evaluate to boolean masks, equi-joins run on sort + searchsorted,
grouping factorizes key columns into dense codes, and sums stay exact
(math.fsum over each group's slice).

``partitions`` splits the first table's selection into chunks whose partial
aggregation states merge deterministically, so results are independent of
the partition count; branches with a preserve-right outer join are never
split (splitting the probe side would duplicate unmatched preserved rows).
"""

from __future__ import annotations

import math

import numpy as np

from .like import like_match
from .planner import (
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
    CMP,
    collect_minrep_columns,
    empty_scalar_row,
    finish_groups,
    merge_sum_parts,
)
from .results import ResultTable, apply_order_and_limit, union_distinct
from .storage import ColumnStore

_NP_CMP = {
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class RolapError(Exception):
    pass


class _Provider:
    """Column access for one alias: catalog segments or derived arrays."""

    alias: str

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError


class _TableProvider(_Provider):
    def __init__(self, alias: str, table_name: str, store: ColumnStore):
        self.alias = alias
        self.table = store.schema.table(table_name)
        self.store = store

    def column(self, name: str):
        seg = self.store.segment(self.table.name, name)
        return seg.values, seg.nulls

    def __len__(self):
        return self.store.row_count(self.table.name)


class _DerivedProvider(_Provider):
    def __init__(self, alias: str, headers: list[str], dtypes: list[str],
                 rows: list[tuple]):
        from .storage import _encode_column
        self.alias = alias
        self._cols: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._n = len(rows)
        for i, (header, dtype) in enumerate(zip(headers, dtypes)):
            cells = [row[i] for row in rows]
            self._cols[header.lower()] = _encode_column(dtype, cells)

    def column(self, name: str):
        return self._cols[name.lower()]

    def __len__(self):
        return self._n


def _materialize(vals: np.ndarray, nulls: np.ndarray) -> list:
    out = vals.tolist()
    if nulls.any():
        for i in np.flatnonzero(nulls):
            out[i] = None
    return out


class _BranchRun:
    def __init__(self, branch: BranchPlan, store: ColumnStore):
        self.branch = branch
        self.store = store
        self.providers: dict[str, _Provider] = {}
        self.selections: dict[str, np.ndarray] = {}
        self.in_values: dict[int, frozenset] = {}

    # -- setup ----------------------------------------------------------------

    def prepare(self):
        for source in self.branch.sources:
            key = source.alias.lower()
            if source.table is not None:
                provider: _Provider = _TableProvider(
                    source.alias, source.table, self.store)
            else:
                sub = execute_rolap(source.subplan, self.store)
                provider = _DerivedProvider(source.alias, sub.headers,
                                            source.subplan.dtypes, sub.rows)
            self.providers[key] = provider
            positions = np.arange(len(provider), dtype=np.int64)
            if source.pushed:
                frame = {key: positions}
                for expr in source.pushed:
                    mask = self.eval_mask(expr, frame, len(positions))
                    positions = positions[mask]
                    frame = {key: positions}
            self.selections[key] = positions
        for expr in self._all_filters():
            self._prepare_in(expr)

    def _all_filters(self):
        for source in self.branch.sources:
            yield from source.pushed
        yield from self.branch.residual

    def _prepare_in(self, expr):
        if isinstance(expr, BoundIn):
            if id(expr) not in self.in_values:
                sub = execute_rolap(expr.subplan, self.store)
                self.in_values[id(expr)] = frozenset(
                    row[0] for row in sub.rows if row[0] is not None)
        elif isinstance(expr, BoundBool):
            for item in expr.items:
                self._prepare_in(item)
        elif isinstance(expr, BoundCompare):
            self._prepare_in(expr.left)
            self._prepare_in(expr.right)

    # -- column access ----------------------------------------------------------

    def gather(self, col: BoundColumn, frame: dict[str, np.ndarray]
               ) -> tuple[np.ndarray, np.ndarray]:
        positions = frame[col.alias.lower()]
        vals, nulls = self.providers[col.alias.lower()].column(col.column)
        if len(vals) == 0:
            # empty base table: all positions are -1 (outer-join extensions)
            dtype = vals.dtype
            out_vals = np.zeros(len(positions), dtype=dtype)
            return out_vals, np.ones(len(positions), dtype=np.bool_)
        clipped = np.where(positions < 0, 0, positions)
        out_vals = vals[clipped]
        out_nulls = nulls[clipped] | (positions < 0)
        return out_vals, out_nulls

    # -- scalar expressions (vectorized) ---------------------------------------

    def eval_scalar(self, expr, frame, n) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(expr, BoundColumn):
            return self.gather(expr, frame)
        if isinstance(expr, BoundLiteral):
            if expr.dtype == "text":
                vals = np.full(n, expr.value, dtype=object)
            elif expr.dtype == "date":
                vals = np.full(n, np.datetime64(expr.value, "D"))
            else:
                vals = np.full(n, expr.value)
            return vals, np.zeros(n, dtype=np.bool_)
        if isinstance(expr, BoundFunc):
            vals, nulls = self.eval_scalar(expr.arg, frame, n)
            if expr.fn == "year":
                out = vals.astype("datetime64[Y]").astype(np.int64) + 1970
            else:
                out = vals.astype("datetime64[M]").astype(np.int64) % 12 + 1
            return out, nulls
        raise RolapError(f"not a scalar expression: {expr!r}")

    # -- predicates (vectorized) -------------------------------------------------

    def eval_mask(self, expr, frame, n) -> np.ndarray:
        if isinstance(expr, BoundBool):
            masks = [self.eval_mask(i, frame, n) for i in expr.items]
            out = masks[0]
            for m in masks[1:]:
                out = (out & m) if expr.op == "and" else (out | m)
            return out
        if isinstance(expr, BoundLike):
            vals, nulls = self.eval_scalar(expr.arg, frame, n)
            pattern = expr.pattern
            lst = vals.tolist()
            nl = nulls.tolist()
            return np.fromiter(
                (not nl[i] and like_match(lst[i], pattern) for i in range(n)),
                dtype=np.bool_, count=n)
        if isinstance(expr, BoundIn):
            vals, nulls = self.eval_scalar(expr.arg, frame, n)
            values = self.in_values[id(expr)]
            if vals.dtype != object and vals.dtype.kind in "if":
                if not values:
                    return np.zeros(n, dtype=np.bool_)
                return np.isin(vals, np.array(sorted(values))) & ~nulls
            lst = vals.tolist()
            nl = nulls.tolist()
            return np.fromiter(
                (not nl[i] and lst[i] in values for i in range(n)),
                dtype=np.bool_, count=n)
        if isinstance(expr, BoundCompare):
            # literal sides compare as numpy scalars (no full literal array)
            if isinstance(expr.right, BoundLiteral) and \
                    not isinstance(expr.left, BoundLiteral):
                lv, ln = self.eval_scalar(expr.left, frame, n)
                return self._compare_with_scalar(expr.op, lv, ~ln,
                                                 expr.right, n)
            if isinstance(expr.left, BoundLiteral) and \
                    not isinstance(expr.right, BoundLiteral):
                rv, rn = self.eval_scalar(expr.right, frame, n)
                flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<=",
                           "=": "=", "<>": "<>"}[expr.op]
                return self._compare_with_scalar(flipped, rv, ~rn,
                                                 expr.left, n)
            lv, ln = self.eval_scalar(expr.left, frame, n)
            rv, rn = self.eval_scalar(expr.right, frame, n)
            valid = ~(ln | rn)
            if lv.dtype == object or rv.dtype == object:
                if expr.op in ("=", "<>"):
                    mask = _NP_CMP[expr.op](lv, rv)
                    return np.asarray(mask, dtype=np.bool_) & valid
                op = CMP[expr.op]
                ll, rl = lv.tolist(), rv.tolist()
                vl = valid.tolist()
                return np.fromiter(
                    (vl[i] and op(ll[i], rl[i]) for i in range(n)),
                    dtype=np.bool_, count=n)
            mask = _NP_CMP[expr.op](lv, rv)
            return np.asarray(mask, dtype=np.bool_) & valid
        raise RolapError(f"not a predicate: {expr!r}")

    def _compare_with_scalar(self, op: str, vals: np.ndarray,
                             valid: np.ndarray, lit: BoundLiteral,
                             n: int) -> np.ndarray:
        operand = lit.value
        if lit.dtype == "date":
            operand = np.datetime64(operand, "D")
        if vals.dtype == object:
            if op in ("=", "<>"):
                mask = _NP_CMP[op](vals, operand)
                return np.asarray(mask, dtype=np.bool_) & valid
            fn = CMP[op]
            lst = vals.tolist()
            vl = valid.tolist()
            return np.fromiter(
                (vl[i] and fn(lst[i], operand) for i in range(n)),
                dtype=np.bool_, count=n)
        mask = _NP_CMP[op](vals, operand)
        return np.asarray(mask, dtype=np.bool_) & valid

    # -- joins ---------------------------------------------------------------

    def run_joins(self, first_positions: np.ndarray) -> dict[str, np.ndarray]:
        branch = self.branch
        frame = {branch.sources[0].alias.lower(): first_positions}
        for step in branch.steps:
            new_key = step.alias.lower()
            new_positions = self.selections[new_key]
            length = len(next(iter(frame.values())))
            if step.kind == "cross":
                m = len(new_positions)
                li = np.repeat(np.arange(length, dtype=np.int64), m)
                ri = np.tile(np.arange(m, dtype=np.int64), length)
            else:
                lv, lnull = self.gather(step.left, frame)
                rv_full, rnull_full = self.providers[new_key].column(
                    step.right.column)
                if len(rv_full):
                    rv = rv_full[new_positions]
                    rnull = rnull_full[new_positions]
                else:
                    rv = rv_full
                    rnull = rnull_full
                li, ri = _join_positions(lv, ~lnull, rv, ~rnull, step.kind)
            out = {}
            for key, positions in frame.items():
                if len(positions):
                    taken = positions[np.where(li < 0, 0, li)]
                    out[key] = np.where(li < 0, -1, taken)
                else:
                    out[key] = np.full(len(li), -1, dtype=np.int64)
            if len(new_positions):
                taken = new_positions[np.where(ri < 0, 0, ri)]
                out[new_key] = np.where(ri < 0, -1, taken)
            else:
                out[new_key] = np.full(len(ri), -1, dtype=np.int64)
            frame = out
        return frame

    # -- grouped aggregation ---------------------------------------------------

    def aggregate(self, frame) -> dict[tuple, list]:
        """Partial aggregation: group key -> mutable state list."""
        branch = self.branch
        n = len(next(iter(frame.values()))) if frame else 0
        aggs = branch.aggregates
        minrep_cols = collect_minrep_columns(branch)

        if n == 0:
            return {}

        if branch.group_keys:
            codes, lookups = [], []
            for key_col in branch.group_keys:
                vals, nulls = self.gather(key_col, frame)
                code, lookup = _factorize(vals, nulls)
                codes.append(code)
                lookups.append(lookup)
            width = 1
            for lookup in lookups:
                width *= len(lookup)
            if width <= 2 ** 62:
                combined = codes[0].astype(np.int64)
                for code, lookup in zip(codes[1:], lookups[1:]):
                    combined = combined * len(lookup) + code
            else:  # astronomically wide key space: hash tuple codes instead
                mapping: dict[tuple, int] = {}
                stacked = list(zip(*(c.tolist() for c in codes)))
                combined = np.fromiter(
                    (mapping.setdefault(t, len(mapping)) for t in stacked),
                    dtype=np.int64, count=n)
            _, first_idx, ginv = np.unique(
                combined, return_index=True, return_inverse=True)
            num_groups = len(first_idx)
            key_tuples = list(zip(*(
                [lookup[c] for c in code[first_idx].tolist()]
                for code, lookup in zip(codes, lookups))))
        else:
            num_groups = 1
            ginv = np.zeros(n, dtype=np.int64)
            key_tuples = [()]

        order = np.argsort(ginv, kind="stable")
        g_sorted = ginv[order]
        bounds = np.searchsorted(g_sorted, np.arange(num_groups + 1))

        groups: dict[tuple, list] = {}
        states: list[list] = [None] * num_groups  # type: ignore

        agg_columns = []
        for agg in aggs:
            if agg.arg is None:
                agg_columns.append(None)
            else:
                vals, nulls = self.eval_scalar(agg.arg, frame, n)
                agg_columns.append((_reorder(vals, order), nulls[order]))
        min_columns = []
        for col in minrep_cols:
            vals, nulls = self.gather(col, frame)
            min_columns.append((_reorder(vals, order), nulls[order]))

        counts = np.bincount(ginv, minlength=num_groups)
        for g in range(num_groups):
            lo, hi = int(bounds[g]), int(bounds[g + 1])
            state: list = []
            for ai, agg in enumerate(aggs):
                if agg.func == "count":
                    if agg.arg is None:
                        state.append(int(counts[g]))
                    else:
                        _, nl = agg_columns[ai]
                        state.append(hi - lo - int(nl[lo:hi].sum()))
                elif agg.func == "sum":
                    vals_list, nl = agg_columns[ai]
                    chunk = vals_list[lo:hi]
                    if nl[lo:hi].any():
                        nchunk = nl[lo:hi].tolist()
                        chunk = [v for v, bad in zip(chunk, nchunk) if not bad]
                    if not chunk:
                        state.append(None)
                    elif agg.dtype == "int64":
                        state.append(sum(chunk))
                    else:
                        state.append(math.fsum(chunk))
                else:  # max
                    vals_list, nl = agg_columns[ai]
                    chunk = vals_list[lo:hi]
                    if nl[lo:hi].any():
                        nchunk = nl[lo:hi].tolist()
                        chunk = [v for v, bad in zip(chunk, nchunk) if not bad]
                    state.append(max(chunk) if chunk else None)
            for mi in range(len(minrep_cols)):
                vals_list, nl = min_columns[mi]
                chunk = vals_list[lo:hi]
                if nl[lo:hi].any():
                    nchunk = nl[lo:hi].tolist()
                    chunk = [v for v, bad in zip(chunk, nchunk) if not bad]
                state.append(min(chunk) if chunk else None)
            states[g] = state
        for g, key in enumerate(key_tuples):
            groups[key] = states[g]
        return groups

    # -- plain projection -------------------------------------------------------

    def project(self, frame) -> list[tuple]:
        n = len(next(iter(frame.values()))) if frame else 0
        if n == 0:
            return []
        cols = []
        for _, expr in self.branch.outputs:
            vals, nulls = self.eval_scalar(expr, frame, n)
            cols.append(_materialize(vals, nulls))
        return list(zip(*cols))


def _reorder(vals: np.ndarray, order: np.ndarray) -> list:
    return vals[order].tolist()


def _factorize(vals: np.ndarray, nulls: np.ndarray) -> tuple[np.ndarray, list]:
    """Dense codes per value; code 0 is reserved for null.

    Returns (codes, lookup) with lookup[0] is None and lookup[c] the value
    for code c.
    """
    n = len(vals)
    if vals.dtype == object:
        mapping: dict = {}
        lst = vals.tolist()
        nl = nulls.tolist()
        codes = np.empty(n, dtype=np.int64)
        lookup: list = [None]
        for i in range(n):
            if nl[i]:
                codes[i] = 0
                continue
            v = lst[i]
            code = mapping.get(v)
            if code is None:
                code = len(lookup)
                mapping[v] = code
                lookup.append(v)
            codes[i] = code
        return codes, lookup
    valid = ~nulls
    codes = np.zeros(n, dtype=np.int64)
    if valid.any():
        u, inv = np.unique(vals[valid], return_inverse=True)
        codes[valid] = inv + 1
        lookup = [None] + u.tolist()
    else:
        lookup = [None]
    return codes, lookup


def _join_positions(lv, l_valid, rv, r_valid, kind):
    """Equality join on key vectors; returns (li, ri) index pairs.

    kind 'inner': matching pairs only.  'left': every left row appears, ri=-1
    when unmatched.  'right': every right row appears, li=-1 when unmatched.
    """
    if kind == "right":
        ri, li = _join_positions(rv, r_valid, lv, l_valid, "left")
        return li, ri

    ridx = np.flatnonzero(r_valid)
    rkeys = rv[ridx]
    order = np.argsort(rkeys, kind="stable")
    sorted_keys = rkeys[order]

    lidx = np.flatnonzero(l_valid)
    lkeys = lv[lidx]
    starts = np.searchsorted(sorted_keys, lkeys, "left")
    ends = np.searchsorted(sorted_keys, lkeys, "right")
    counts = ends - starts
    total = int(counts.sum())

    li_matched = np.repeat(lidx, counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(
        np.cumsum(counts) - counts, counts)
    ri_matched = ridx[order[np.repeat(starts, counts) + within]]

    if kind == "inner":
        return li_matched, ri_matched

    unmatched = lidx[counts == 0]
    invalid = np.flatnonzero(~l_valid)
    li = np.concatenate([li_matched, unmatched, invalid])
    ri = np.concatenate([
        ri_matched,
        np.full(len(unmatched) + len(invalid), -1, dtype=np.int64),
    ])
    return li, ri


# ---------------------------------------------------------------------------

def _merge_states(branch: BranchPlan, parts: list[dict[tuple, list]]
                  ) -> dict[tuple, list]:
    aggs = branch.aggregates
    n_min = len(collect_minrep_columns(branch))
    merged: dict[tuple, list] = {}
    for part in parts:
        for key, state in part.items():
            into = merged.get(key)
            if into is None:
                merged[key] = list(state)
                continue
            for i, agg in enumerate(aggs):
                if state[i] is None:
                    continue
                if into[i] is None:
                    into[i] = state[i]
                elif agg.func == "count":
                    into[i] += state[i]
                elif agg.func == "sum":
                    into[i] = _SumParts(into[i], state[i])
                else:
                    into[i] = max(into[i], state[i])
            base = len(aggs)
            for j in range(n_min):
                v = state[base + j]
                if v is not None and (into[base + j] is None or v < into[base + j]):
                    into[base + j] = v
    return merged


class _SumParts:
    """Deferred exact merge of partial sums."""

    __slots__ = ("parts",)

    def __init__(self, a, b):
        parts = []
        for x in (a, b):
            if isinstance(x, _SumParts):
                parts.extend(x.parts)
            else:
                parts.append(x)
        self.parts = parts


def _finalize(branch: BranchPlan, states: dict[tuple, list]) -> list[tuple]:
    if not states and not branch.group_keys:
        return empty_scalar_row(branch)
    aggs = branch.aggregates
    min_keys = [(c.alias.lower(), c.column.lower())
                for c in collect_minrep_columns(branch)]
    finished = {}
    for key, state in states.items():
        agg_values = []
        for i, agg in enumerate(aggs):
            v = state[i]
            if isinstance(v, _SumParts):
                v = merge_sum_parts(v.parts, agg.dtype)
            agg_values.append(v)
        min_values = {mk: state[len(aggs) + j] for j, mk in enumerate(min_keys)}
        finished[key] = (agg_values, min_values)
    return finish_groups(branch, finished)


def execute_rolap(plan: QueryPlan, store: ColumnStore,
                  partitions: int = 1) -> ResultTable:
    """Run a plan on the column store; results match execute_baseline."""
    parts = []
    for branch in plan.branches:
        parts.append(_run_branch(branch, store, partitions))
    rows = union_distinct(parts) if len(parts) > 1 else parts[0]
    ordered = bool(plan.order_spec)
    if ordered or plan.limit is not None:
        rows = apply_order_and_limit(rows, plan.order_spec, plan.limit)
    plan.path = "rolap"
    return ResultTable(list(plan.headers), rows, ordered, list(plan.order_spec))


def _run_branch(branch: BranchPlan, store: ColumnStore,
                partitions: int) -> list[tuple]:
    run = _BranchRun(branch, store)
    run.prepare()

    first_key = branch.sources[0].alias.lower()
    first_positions = run.selections[first_key]

    splittable = partitions > 1 and len(first_positions) >= partitions \
        and not any(step.kind == "right" for step in branch.steps)
    chunks = np.array_split(first_positions, partitions) if splittable \
        else [first_positions]

    if branch.grouped:
        states = []
        for chunk in chunks:
            frame = run.run_joins(chunk)
            frame = _apply_residual(run, frame)
            states.append(run.aggregate(frame))
        return _finalize(branch, _merge_states(branch, states))

    rows: list[tuple] = []
    for chunk in chunks:
        frame = run.run_joins(chunk)
        frame = _apply_residual(run, frame)
        rows.extend(run.project(frame))
    return rows


def _apply_residual(run: _BranchRun, frame):
    n = len(next(iter(frame.values()))) if frame else 0
    if n == 0:
        return frame
    for expr in run.branch.residual:
        mask = run.eval_mask(expr, frame, n)
        frame = {k: v[mask] for k, v in frame.items()}
        n = int(mask.sum())
        if n == 0:
            break
    return frame
