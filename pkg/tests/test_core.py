import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multildp.core import (AttributeSpec, ConfigError, DomainError, PrivacyBudget, RandomSource, Schema,
                           UserTuple, as_epsilon, denormalize, format_schema, normalize, parse_schema,
                           read_dataset, read_schema, write_dataset, write_schema)


@pytest.mark.parametrize("eps", [0, -1, math.inf, math.nan])
def test_budget_rejects_non_positive(eps):
    with pytest.raises(ConfigError):
        PrivacyBudget(eps)


def test_budget_split_and_float():
    b = PrivacyBudget(2.0)
    assert b.split(4).epsilon == 0.5
    assert float(b) == 2.0
    assert as_epsilon(b) == as_epsilon(2) == 2.0


def test_attribute_validation():
    with pytest.raises(ConfigError):
        AttributeSpec.numeric("a", 0)
    with pytest.raises(ConfigError):
        AttributeSpec.categorical("c", 1)
    with pytest.raises(ConfigError):
        AttributeSpec("x", "ordinal")
    c = AttributeSpec.categorical("c", 3)
    assert c.admits(3) and not c.admits(0) and not c.admits(2.5)


def test_schema_duplicates_and_lookup():
    with pytest.raises(ConfigError):
        Schema((AttributeSpec.numeric("a"), AttributeSpec.numeric("a")))
    s = Schema((AttributeSpec.numeric("a", 2), AttributeSpec.categorical("b", 4)))
    assert s.index("b") == 1 and s.numeric_indices == [0] and s.categorical_indices == [1]
    with pytest.raises(ConfigError):
        s.index("zz")
    assert s.without("a").names == ["b"]


def test_user_tuple_domain():
    s = Schema((AttributeSpec.numeric("a", 2), AttributeSpec.categorical("b", 4)))
    assert UserTuple((1.0, 4), s).normalized() == [0.5, 4]
    with pytest.raises(DomainError):
        UserTuple((2.5, 1), s)
    with pytest.raises(DomainError):
        UserTuple((0.0, 5), s)
    with pytest.raises(DomainError):
        UserTuple((0.0,), s)


@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=0.1, max_value=10))
def test_normalize_roundtrip(v, r):
    spec = AttributeSpec.numeric("a", r)
    if abs(v) > r:
        with pytest.raises(DomainError):
            normalize(v, spec)
    else:
        x = normalize(v, spec)
        assert -1 <= x <= 1
        assert denormalize(x, spec) == pytest.approx(v, abs=1e-12)


def test_schema_text_roundtrip(tmp_path):
    text = "# comment\nage,numeric,90\nsex,categorical,2\n\n"
    s = parse_schema(text.splitlines())
    assert s.names == ["age", "sex"] and s[0].r == 90.0
    write_schema(s, tmp_path / "s.txt")
    assert read_schema(tmp_path / "s.txt") == s
    assert parse_schema(format_schema(s).splitlines()) == s
    with pytest.raises(ConfigError):
        parse_schema(["a,numeric"])
    with pytest.raises(ConfigError):
        parse_schema(["a,weird,2"])


def test_dataset_roundtrip_and_errors(tmp_path):
    s = Schema((AttributeSpec.numeric("a", 2), AttributeSpec.categorical("b", 3)))
    data = np.array([[0.5, 1], [-2.0, 3], [1.25, 2]])
    p = tmp_path / "d.csv"
    write_dataset(data, s, p)
    assert np.array_equal(read_dataset(p, s), data)
    (tmp_path / "swap.csv").write_text("b,a\n2,0.5\n")
    assert np.array_equal(read_dataset(tmp_path / "swap.csv", s), [[0.5, 2]])
    (tmp_path / "miss.csv").write_text("a\n0.5\n")
    with pytest.raises(ConfigError):
        read_dataset(tmp_path / "miss.csv", s)
    (tmp_path / "extra.csv").write_text("a,b,c\n0.5,1,0\n")
    with pytest.raises(ConfigError):
        read_dataset(tmp_path / "extra.csv", s)
    (tmp_path / "bad.csv").write_text("a,b\n3.0,1\n")
    with pytest.raises(DomainError):
        read_dataset(tmp_path / "bad.csv", s)


def test_random_source_replay_and_independence():
    a = RandomSource(5, (1, 2)).generator().random(8)
    b = RandomSource(5, (1, 2)).generator().random(8)
    c = RandomSource(5).child(1, 3).generator().random(8)
    d = RandomSource(6, (1, 2)).generator().random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    assert RandomSource(5).child(1, 2).key == (1, 2)
