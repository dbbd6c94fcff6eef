"""Scalar semantics shared by both executors after aggregation.

Group states (counts, exact sums, maxima, group-minimum representatives)
are produced very differently by the row-at-a-time and columnar executors,
but HAVING filtering and output assembly over the finished per-group
scalars follow one rule set, kept here so the two paths cannot drift.
"""

from __future__ import annotations

import math

from .planner import (
    AggRef,
    BoundBool,
    BoundCompare,
    BoundFunc,
    BoundLiteral,
    BranchPlan,
    KeyRef,
    MinRep,
)

CMP = {
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def eval_post(expr, key: tuple, agg_values: list, min_values: dict):
    """Evaluate a post-aggregation expression for one group.

    ``min_values`` maps (alias lower, column lower) to the group minimum of
    that non-grouped column.  Null comparisons are false, as everywhere.
    """
    if isinstance(expr, KeyRef):
        return key[expr.index]
    if isinstance(expr, AggRef):
        return agg_values[expr.index]
    if isinstance(expr, MinRep):
        return min_values[(expr.column.alias.lower(), expr.column.column.lower())]
    if isinstance(expr, BoundLiteral):
        return expr.value
    if isinstance(expr, BoundFunc):
        value = eval_post(expr.arg, key, agg_values, min_values)
        if value is None:
            return None
        return value.year if expr.fn == "year" else value.month
    if isinstance(expr, BoundCompare):
        a = eval_post(expr.left, key, agg_values, min_values)
        if a is None:
            return False
        b = eval_post(expr.right, key, agg_values, min_values)
        if b is None:
            return False
        return CMP[expr.op](a, b)
    if isinstance(expr, BoundBool):
        values = (eval_post(i, key, agg_values, min_values) for i in expr.items)
        return all(values) if expr.op == "and" else any(values)
    raise ValueError(f"cannot evaluate post-aggregation expression {expr!r}")


def collect_minrep_columns(branch: BranchPlan) -> list:
    """All distinct MinRep columns appearing in outputs or HAVING."""
    found = []
    seen = set()

    def walk(expr):
        if isinstance(expr, MinRep):
            key = (expr.column.alias.lower(), expr.column.column.lower())
            if key not in seen:
                seen.add(key)
                found.append(expr.column)
        elif isinstance(expr, BoundFunc):
            walk(expr.arg)
        elif isinstance(expr, BoundCompare):
            walk(expr.left)
            walk(expr.right)
        elif isinstance(expr, BoundBool):
            for item in expr.items:
                walk(item)

    for _, expr in branch.outputs:
        walk(expr)
    if branch.having is not None:
        walk(branch.having)
    return found


def finish_groups(branch: BranchPlan,
                  groups: dict[tuple, tuple[list, dict]]) -> list[tuple]:
    """Apply HAVING and project outputs over finished group scalars.

    ``groups`` maps group-key tuple -> (aggregate values, min_values dict).
    """
    out = []
    for key, (agg_values, min_values) in groups.items():
        if branch.having is not None and not bool(
                eval_post(branch.having, key, agg_values, min_values)):
            continue
        out.append(tuple(eval_post(expr, key, agg_values, min_values)
                         for _, expr in branch.outputs))
    return out


def empty_scalar_row(branch: BranchPlan) -> list[tuple]:
    """Whole-query aggregation over empty input.

    COUNT aggregates yield one row of zeros; any other aggregate makes the
    result empty (documented divergence from SQL's single NULL row).
    """
    if not branch.aggregates or branch.group_keys:
        return []
    if not all(a.func == "count" for a in branch.aggregates):
        return []
    agg_values = [0] * len(branch.aggregates)
    groups = {(): (agg_values, {})}
    return finish_groups(branch, groups)


def merge_sum_parts(parts: list[float], dtype: str):
    """Combine per-partition partial sums (already exact per partition)."""
    if not parts:
        return None
    if dtype == "int64":
        return sum(parts)
    return math.fsum(parts)
