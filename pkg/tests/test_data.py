import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scfrl.data import (
    CONTINUOUS,
    DISCRETE,
    Dataset,
    FeatureSchema,
    denormalize,
    load_dataset,
    make_synthetic,
    normalize,
    read_normalized_csv,
    schema_document,
    split,
    write_csv,
)
from scfrl.errors import (
    DomainViolation,
    EmptyPartition,
    InvalidSpec,
    MalformedSchema,
    MissingColumn,
    OutOfRange,
)


def write_pair(tmp_path, header, rows, schema):
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    schema_path = tmp_path / "d.schema.json"
    schema_path.write_text(json.dumps(schema))
    return csv_path, schema_path


SIMPLE_SCHEMA = {
    "label": {"column": "y", "target": "yes"},
    "features": [
        {"name": "age", "kind": "continuous", "mutable": True, "min": 20, "max": 70},
        {"name": "grade", "kind": "discrete", "mutable": True, "categories": ["A", "B", "C"]},
    ],
}


class TestLoad:
    def test_three_rows(self, tmp_path):
        c, s = write_pair(tmp_path, ["age", "grade", "y"],
                          [[25, "A", "no"], [45, "B", "yes"], [70, "C", "no"]], SIMPLE_SCHEMA)
        d = load_dataset(c, s)
        assert len(d) == 3
        assert d.labels.tolist() == [0, 1, 0]
        assert d.rows[:, 1].tolist() == [0, 1, 2]
        assert d.target_class == "yes"

    def test_unknown_category(self, tmp_path):
        c, s = write_pair(tmp_path, ["age", "grade", "y"], [[25, "A", "no"], [30, "Z", "yes"]], SIMPLE_SCHEMA)
        with pytest.raises(DomainViolation) as e:
            load_dataset(c, s)
        assert e.value.row == 1 and e.value.feature == "grade"

    def test_out_of_domain_continuous(self, tmp_path):
        c, s = write_pair(tmp_path, ["age", "grade", "y"], [[25, "A", "no"], [90, "B", "yes"]], SIMPLE_SCHEMA)
        with pytest.raises(DomainViolation):
            load_dataset(c, s)

    def test_missing_column(self, tmp_path):
        c, s = write_pair(tmp_path, ["age", "y"], [[25, "no"]], SIMPLE_SCHEMA)
        with pytest.raises(MissingColumn):
            load_dataset(c, s)

    @pytest.mark.parametrize("bad", [
        {"features": []},
        {"label": "y", "features": [{"name": "a", "kind": "ordinal"}]},
        {"label": "y", "features": [{"name": "a", "kind": "continuous", "min": 3, "max": 3}]},
        {"label": "y", "features": [{"name": "a", "kind": "discrete", "categories": ["only"]}]},
        {"label": "y", "features": [{"name": "a", "kind": "continuous", "mutable": False}]},
    ])
    def test_malformed_schema(self, tmp_path, bad):
        c, s = write_pair(tmp_path, ["a", "y"], [[1, "0"]], bad)
        with pytest.raises(MalformedSchema):
            load_dataset(c, s)

    def test_german_risk_shape(self, tmp_path):
        # 3 continuous, 4 discrete, 2 of them immutable -> K = 5
        feats = [{"name": f"c{i}", "kind": "continuous", "mutable": i != 0, "min": 0, "max": 1} for i in range(3)]
        feats += [{"name": f"d{i}", "kind": "discrete", "mutable": i != 0, "categories": ["p", "q"]}
                  for i in range(4)]
        schema = {"label": {"column": "risk"}, "features": feats}
        rows = [[0.1, 0.2, 0.3, "p", "q", "p", "q", "good"], [0.4, 0.5, 0.6, "q", "p", "q", "p", "bad"],
                [0.7, 0.8, 0.9, "p", "p", "p", "p", "good"]]
        c, s = write_pair(tmp_path, [f["name"] for f in feats] + ["risk"], rows, schema)
        d = load_dataset(c, s)
        assert d.n_features == 7
        assert d.n_mutable == 5
        assert 0 not in d.mutable_indices and 3 not in d.mutable_indices
        # default target: minority label
        assert d.target_class == "bad"

    def test_non_binary_labels(self, tmp_path):
        c, s = write_pair(tmp_path, ["age", "grade", "y"],
                          [[25, "A", "no"], [45, "B", "yes"], [50, "C", "maybe"]], SIMPLE_SCHEMA)
        with pytest.raises(Exception):
            load_dataset(c, s)


class TestNormalize:
    def test_examples(self):
        f = FeatureSchema("age", CONTINUOUS, True, 20, 70)
        g = FeatureSchema("g", DISCRETE, True, categories=tuple("abcde"))
        d = Dataset((f, g), [[45, 3], [20, 0], [70, 4]], [0, 1, 0])
        n = normalize(d)
        assert n.rows[0, 0] == 0.0
        assert n.rows[1, 0] == -1.0
        assert n.rows[2, 0] == 1.0
        assert n.rows[0, 1] == -1 + 2 * 3 / 4 == 0.5
        assert n.normalized

    def test_norm_params_map_endpoints(self):
        f = FeatureSchema("age", CONTINUOUS, True, 20, 70)
        scale, offset = f.norm
        assert scale * 20 + offset == pytest.approx(-1.0, abs=1e-12)
        assert scale * 70 + offset == pytest.approx(1.0, abs=1e-12)

    def test_denormalize_examples(self):
        f = FeatureSchema("age", CONTINUOUS, True, 20, 70)
        g = FeatureSchema("g", DISCRETE, True, categories=tuple("abcde"))
        assert denormalize(0.0, f) == 45.0
        assert denormalize(-1.0, f) == 20.0
        assert denormalize(0.3, g) == "d"  # code 3, grid point 0.5
        with pytest.raises(OutOfRange):
            denormalize(1.5, f)

    @given(lo=st.floats(-1e6, 1e6), span=st.floats(1e-3, 1e6), frac=st.floats(0, 1))
    def test_round_trip_continuous(self, lo, span, frac):
        f = FeatureSchema("x", CONTINUOUS, True, lo, lo + span)
        v = f.low + frac * (f.high - f.low)
        back = denormalize(np.clip(f.normalize_value(v), -1, 1), f)
        assert abs(back - v) <= 1e-9 * max(1.0, abs(v), abs(f.low), abs(f.high))

    @given(n_cat=st.integers(2, 30), data=st.data())
    def test_round_trip_discrete(self, n_cat, data):
        f = FeatureSchema("g", DISCRETE, True, categories=tuple(f"c{i}" for i in range(n_cat)))
        code = data.draw(st.integers(0, n_cat - 1))
        assert denormalize(f.normalize_value(code), f) == f"c{code}"

    @given(a=st.floats(0, 100), b=st.floats(0, 100))
    def test_monotone(self, a, b):
        f = FeatureSchema("x", CONTINUOUS, True, 0, 100)
        if a <= b:
            assert f.normalize_value(a) <= f.normalize_value(b)


class TestSplit:
    def test_counts_and_determinism(self):
        d = make_synthetic(10, 1, 1, 0, seed=3)
        a, b = split(d, 0.8, 7), split(d, 0.8, 7)
        assert (len(a.train), len(a.test)) == (8, 2)
        assert np.array_equal(a.train_index, b.train_index)
        assert np.array_equal(a.train.rows, b.train.rows)

    def test_thousand_rows(self):
        d = make_synthetic(1000, 3, 2, 1, seed=0)
        sp = split(d, 0.8, 0)
        assert (len(sp.train), len(sp.test)) == (800, 200)

    def test_empty_partition(self):
        d = make_synthetic(10, 2, 0, 0, seed=0)
        with pytest.raises(EmptyPartition):
            split(d, 0.99, 0)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(10, 200), ratio=st.floats(0.1, 0.9), seed=st.integers(0, 2**31))
    def test_partition(self, n, ratio, seed):
        d = make_synthetic(n, 2, 0, 0, seed=1)
        try:
            sp = split(d, ratio, seed)
        except EmptyPartition:
            return
        both = np.concatenate([sp.train_index, sp.test_index])
        assert sorted(both.tolist()) == list(range(n))
        assert abs(len(sp.train) - n * ratio) <= 0.5 + 1e-9


class TestSynthetic:
    def test_example(self):
        d = make_synthetic(200, 2, 1, 0, seed=1)
        assert len(d) == 200
        assert 0 < d.labels.sum() < 200
        assert d.n_mutable == 3

    def test_deterministic(self):
        a, b = make_synthetic(50, 2, 1, 1, seed=5), make_synthetic(50, 2, 1, 1, seed=5)
        assert np.array_equal(a.rows, b.rows) and np.array_equal(a.labels, b.labels)

    @pytest.mark.parametrize("args", [(200, 0, 0, 0), (5, 2, 0, 0), (100, 2, 0, 2), (100, 1, 0, 0), (100, -1, 2, 0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidSpec):
            make_synthetic(*args)

    @pytest.mark.parametrize("seed", range(3))
    def test_no_single_feature_separator(self, seed):
        d = make_synthetic(300, 3, 1, 1, seed=seed)
        y = d.labels
        for j in range(d.n_features):
            col = d.rows[:, j]
            for cut in np.unique(col):
                for pred in (col >= cut, col < cut):
                    assert (pred == y).mean() < 1.0

    def test_immutables_not_mutable(self):
        d = make_synthetic(50, 2, 2, 3, seed=0)
        assert d.mutable_indices == [3]
        assert all(not d.schema[j].mutable for j in range(3))


def test_normalized_csv_round_trip(tmp_path):
    d = normalize(make_synthetic(40, 2, 1, 1, seed=2))
    (tmp_path / "s.json").write_text(json.dumps(schema_document(d)))
    write_csv(d, tmp_path / "d.csv")
    back = read_normalized_csv(tmp_path / "d.csv", tmp_path / "s.json")
    assert np.array_equal(back.rows, d.rows)
    assert np.array_equal(back.labels, d.labels)
    assert back.schema == d.schema


def test_raw_csv_round_trip(tmp_path):
    d = make_synthetic(40, 2, 1, 1, seed=2)
    (tmp_path / "s.json").write_text(json.dumps(schema_document(d)))
    write_csv(d, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv", tmp_path / "s.json")
    assert np.array_equal(back.rows, d.rows)
    assert np.array_equal(back.labels, d.labels)


def test_dataset_immutable():
    d = make_synthetic(20, 2, 0, 0, seed=0)
    with pytest.raises(ValueError):
        d.rows[0, 0] = 5.0
