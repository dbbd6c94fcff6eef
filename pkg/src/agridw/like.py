"""SQL LIKE pattern matching.

``%`` matches any run of characters (including empty), ``_`` matches exactly
one character; matching is case-sensitive and there is no escape character.
``like_match`` is the engine matcher (translated to a compiled regex);
``like_match_naive`` is a regex-free reference used to cross-check it.
"""

from __future__ import annotations

import re
from functools import lru_cache


@lru_cache(maxsize=512)
def _compile(pattern: str) -> re.Pattern:
    parts = []
    for ch in pattern:
        if ch == "%":
            parts.append(".*")
        elif ch == "_":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.DOTALL)


def like_match(value: str | None, pattern: str) -> bool:
    """True when value matches the LIKE pattern; null input never matches."""
    if value is None:
        return False
    return _compile(pattern).fullmatch(value) is not None


def like_match_naive(value: str | None, pattern: str) -> bool:
    """Reference matcher: iterative two-pointer walk, no regex involved."""
    if value is None:
        return False
    vi = pi = 0
    star_pi = -1
    star_vi = 0
    n, m = len(value), len(pattern)
    while vi < n:
        if pi < m and (pattern[pi] == "_" or pattern[pi] == value[vi]):
            vi += 1
            pi += 1
        elif pi < m and pattern[pi] == "%":
            star_pi = pi
            star_vi = vi
            pi += 1
        elif star_pi != -1:
            pi = star_pi + 1
            star_vi += 1
            vi = star_vi
        else:
            return False
    while pi < m and pattern[pi] == "%":
        pi += 1
    return pi == m
