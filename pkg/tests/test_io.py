import json

import numpy as np
import pytest

from balanced_metrics.errors import ValidationError
from balanced_metrics.io import (atomic_write, matrix_from_json, matrix_to_json,
                                 profile_from_json, read_json, rows_csv,
                                 sample_from_json, sample_to_json, write_json)
from balanced_metrics.quantization import AnticanonicalSample
from balanced_metrics.samples import (build_ac_p1_sample, build_p1_sample,
                                      degenerate_sample, random_sample)


def roundtrip(doc):
    return json.loads(json.dumps(doc))


@pytest.mark.parametrize("make", [
    lambda: build_p1_sample(3),
    lambda: build_ac_p1_sample(2),
    lambda: degenerate_sample(3, 7, 1, allow_degenerate=True, seed=5),
    lambda: random_sample(np.random.default_rng(3), 4, 9),
])
def test_sample_round_trip_is_bit_exact(make):
    s = make()
    back = sample_from_json(roundtrip(sample_to_json(s)))
    assert type(back) is type(s)
    np.testing.assert_array_equal(back.evals, s.evals)
    np.testing.assert_array_equal(back.weights, s.weights)
    assert (back.k, back.n, back.label, back.allow_degenerate) == \
        (s.k, s.n, s.label, s.allow_degenerate)
    if isinstance(s, AnticanonicalSample):
        np.testing.assert_array_equal(back.base, s.base)


def test_matrix_round_trip(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    np.testing.assert_array_equal(matrix_from_json(json.dumps(matrix_to_json(a))), a)


def test_wrong_shape():
    doc = sample_to_json(build_p1_sample(2))
    doc["evals"] = doc["evals"][:-1]
    with pytest.raises(ValidationError) as exc:
        sample_from_json(doc)
    assert exc.value.path == "/evals"


def test_missing_field():
    doc = sample_to_json(build_p1_sample(2))
    del doc["weights"]
    with pytest.raises(ValidationError) as exc:
        sample_from_json(doc)
    assert exc.value.path == "/weights"


def test_profile():
    assert profile_from_json('{"coeffs": [0.3, 0.3]}').coeffs == (0.3, 0.3)


def test_read_missing(tmp_path):
    with pytest.raises(ValidationError):
        read_json(tmp_path / "nope.json")


def test_write_and_read(tmp_path):
    write_json(tmp_path / "x" / "a.json", {"b": 1, "a": [1.5]})
    assert read_json(tmp_path / "x" / "a.json") == {"a": [1.5], "b": 1}


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write(tmp_path / "f.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


def test_rows_csv_repr_floats():
    assert rows_csv(["a", "b"], [(1, 0.1)]) == "a,b\n1,0.1\n"
