from hypothesis import given, strategies as st

from agridw.like import like_match, like_match_naive

TEXT = st.text(alphabet="abcAB%_ \t.*+?[](){}^$\\|", max_size=24)
PATTERN = st.text(alphabet="abcAB%_.*\\", max_size=12)


@given(TEXT, PATTERN)
def test_engine_matches_reference(value, pattern):
    assert like_match(value, pattern) == like_match_naive(value, pattern)


@given(TEXT)
def test_percent_matches_everything(value):
    assert like_match(value, "%")
    assert like_match(value, "%%")


@given(st.text(alphabet="abc", min_size=1, max_size=10))
def test_underscore_counts_characters(value):
    assert like_match(value, "_" * len(value))
    assert not like_match(value, "_" * (len(value) + 1))


def test_case_sensitivity():
    assert like_match("Potato", "P%")
    assert not like_match("potato", "P%")


def test_null_never_matches():
    assert not like_match(None, "%")
    assert not like_match_naive(None, "%")


def test_substring_pattern():
    assert like_match("Ammonium Nitrate", "%N%")
    assert not like_match("urea", "%N%")


def test_regex_metacharacters_are_literal():
    assert like_match("a.b", "a.b")
    assert not like_match("axb", "a.b")
    assert like_match("a*b", "a*b")
    assert not like_match("ab", "a*b")
