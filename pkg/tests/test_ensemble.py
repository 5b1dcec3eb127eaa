"""Tests for virialab.ensemble: fan-out list and the ordered worker pool."""

import numpy as np
import pytest

from virialab.ensemble import ensemble, parallel_map
from virialab.exceptions import InputError


class _Rec:
    def __init__(self, val):
        self.val = val
        self.flag = val % 2 == 0

    def double(self):
        return self.val*2

    def to_dict(self):
        return {"val": self.val, "flag": self.flag}


def _square(x):
    return x*x


# ---------------------------------------------------------------------------
# Construction and attribute fan-out
# ---------------------------------------------------------------------------

def test_is_list_subclass():
    x = ensemble(range(3))
    assert isinstance(x, list)
    assert list(x) == [0, 1, 2]


def test_attribute_access_returns_ensemble():
    recs = ensemble([_Rec(1), _Rec(2), _Rec(3)])
    vals = recs.val
    assert isinstance(vals, ensemble)
    assert list(vals) == [1, 2, 3]


def test_method_call_fans_out():
    recs = ensemble([_Rec(1), _Rec(2)])
    assert list(recs.double()) == [2, 4]


def test_nested_attribute_access():
    outer = ensemble([ensemble([_Rec(10), _Rec(20)])])
    result = outer.val
    assert isinstance(result[0], ensemble)
    assert list(result[0]) == [10, 20]


def test_empty_ensemble_attribute_error():
    with pytest.raises(AttributeError):
        ensemble([]).val


def test_scalar_members_have_no_attributes():
    with pytest.raises(AttributeError):
        ensemble([1.0, 2.0]).t_exit


def test_private_lookup_not_fanned_out():
    with pytest.raises(AttributeError):
        ensemble([_Rec(1)])._hidden


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

def test_boolean_mask():
    recs = ensemble([_Rec(1), _Rec(2), _Rec(3), _Rec(4)])
    even = recs[np.array(recs.flag)]
    assert list(even.val) == [2, 4]


def test_boolean_mask_length_mismatch():
    with pytest.raises(IndexError):
        ensemble([1, 2, 3])[np.array([True, False])]


def test_integer_array_selection():
    x = ensemble([10, 20, 30, 40])
    assert list(x[[3, 0]]) == [40, 10]


def test_float_array_selection_rejected():
    with pytest.raises(IndexError):
        ensemble([1, 2])[np.array([0.5])]


def test_slice_stays_ensemble():
    x = ensemble([1, 2, 3])[1:]
    assert isinstance(x, ensemble)
    assert list(x) == [2, 3]


# ---------------------------------------------------------------------------
# apply / tabulation
# ---------------------------------------------------------------------------

def test_apply_returns_new_ensemble():
    x = ensemble([1, 2, 3])
    y = x.apply(lambda a: a**2)
    assert isinstance(y, ensemble)
    assert list(y) == [1, 4, 9]
    assert list(x) == [1, 2, 3]


def test_apply_inplace():
    x = ensemble([1, 2, 3])
    assert x.apply(lambda a: a*10, inplace=True) is None
    assert list(x) == [10, 20, 30]


def test_apply_recurses():
    outer = ensemble([ensemble([1, 2]), ensemble([3, 4])])
    result = outer.apply(lambda a: a*2)
    assert list(result[0]) == [2, 4]
    assert list(result[1]) == [6, 8]


def test_to_dataframe_from_to_dict():
    df = ensemble([_Rec(1), _Rec(2)]).to_dataframe()
    assert df.index.name == "member"
    assert list(df.columns) == ["val", "flag"]
    assert list(df["val"]) == [1, 2]


def test_to_dataframe_columns():
    df = ensemble([_Rec(5), _Rec(6)]).to_dataframe(["flag"])
    assert list(df.columns) == ["flag"]
    assert list(df["flag"]) == [False, True]


def test_to_array():
    arr = ensemble([[1, 2], [3, 4]]).to_array()
    assert arr.shape == (2, 2)


# ---------------------------------------------------------------------------
# parallel_map
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("jobs", [1, 3])
def test_parallel_map_keeps_order(jobs):
    out = parallel_map(_square, range(10), jobs=jobs)
    assert isinstance(out, ensemble)
    assert list(out) == [x*x for x in range(10)]


def test_parallel_map_rejects_bad_jobs():
    with pytest.raises(InputError):
        parallel_map(_square, [1, 2], jobs=0)


def test_parallel_map_empty():
    assert list(parallel_map(_square, [], jobs=4)) == []
