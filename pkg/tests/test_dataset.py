import numpy as np
import pytest

from loanblend import dataset
from loanblend.dataset import ColumnSchema


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


SCHEMA_2NUM = [
    ColumnSchema("a", "numeric"),
    ColumnSchema("b", "numeric"),
    ColumnSchema("loan_status", "label"),
]


class TestSchema:
    def test_read_schema_file(self, tmp_path):
        path = write(tmp_path, "s.schema", "a,numeric\np,categorical,x|y\nloan_status,label\n")
        schema = dataset.read_schema(path)
        assert [c.kind for c in schema] == ["numeric", "categorical", "label"]
        assert schema[1].allowed_categories == ["x", "y"]

    def test_exactly_one_label(self):
        with pytest.raises(ValueError):
            dataset.validate_schema([ColumnSchema("a", "numeric")])
        with pytest.raises(ValueError):
            dataset.validate_schema(
                [ColumnSchema("a", "label"), ColumnSchema("b", "label")]
            )

    def test_unique_names(self):
        with pytest.raises(ValueError):
            dataset.validate_schema(
                [ColumnSchema("a", "numeric"), ColumnSchema("a", "label")]
            )


class TestIngest:
    def test_three_row_parse(self, tmp_path):
        path = write(tmp_path, "d.csv",
                     "a,b,loan_status\n1,2,Fully Paid\n3,4,Charged Off\n5,6,Fully Paid\n")
        d = dataset.ingest_csv(path, SCHEMA_2NUM)
        assert d.n_rows == 3
        assert list(d.label) == [1.0, 0.0, 1.0]
        assert list(d.columns["a"]) == [1.0, 3.0, 5.0]

    def test_all_fully_paid(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b,loan_status\n1,2,Fully Paid\n3,4,Fully Paid\n")
        d = dataset.ingest_csv(path, SCHEMA_2NUM)
        assert (d.label == 1.0).all()

    def test_header_mismatch(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,wrong,loan_status\n1,2,Fully Paid\n")
        with pytest.raises(ValueError, match="header"):
            dataset.ingest_csv(path, SCHEMA_2NUM)

    def test_unparseable_cell_reports_location(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b,loan_status\n1,oops,Fully Paid\n")
        with pytest.raises(ValueError, match=r"row 1.*'b'"):
            dataset.ingest_csv(path, SCHEMA_2NUM)

    def test_unknown_label(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b,loan_status\n1,2,Defaulted\n")
        with pytest.raises(ValueError, match="unknown label"):
            dataset.ingest_csv(path, SCHEMA_2NUM)

    def test_custom_label_map(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b,loan_status\n1,2,bad\n3,4,good\n")
        d = dataset.ingest_csv(path, SCHEMA_2NUM, label_map={"bad": 0, "good": 1})
        assert list(d.label) == [0.0, 1.0]


class TestDropMissing:
    def test_identity_when_clean(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b,loan_status\n1,2,Fully Paid\n3,4,Charged Off\n")
        d = dataset.ingest_csv(path, SCHEMA_2NUM)
        kept = dataset.drop_missing(d)
        assert kept.n_rows == d.n_rows
        np.testing.assert_array_equal(kept.columns["a"], d.columns["a"])

    def test_counts(self, tmp_path):
        rows = []
        for i in range(10):
            a = "" if i == 3 else str(i)
            b = "NA" if i == 7 else str(i * 2)
            rows.append(f"{a},{b},Fully Paid" if i != 0 else f"{a},{b},Charged Off")
        path = write(tmp_path, "d.csv", "a,b,loan_status\n" + "\n".join(rows) + "\n")
        d = dataset.ingest_csv(path, SCHEMA_2NUM)
        kept = dataset.drop_missing(d)
        assert kept.n_rows == 8

    def test_missing_tokens_case_insensitive(self, tmp_path):
        path = write(
            tmp_path, "d.csv",
            "a,b,loan_status\nnull,1,Fully Paid\nNaN,2,Fully Paid\n3,4,Charged Off\n",
        )
        d = dataset.ingest_csv(path, SCHEMA_2NUM)
        assert dataset.drop_missing(d).n_rows == 1

    def test_all_removed_errors(self, tmp_path):
        path = write(tmp_path, "d.csv", "a,b,loan_status\n,1,Fully Paid\n")
        d = dataset.ingest_csv(path, SCHEMA_2NUM)
        with pytest.raises(ValueError):
            dataset.drop_missing(d)


def make_dataset(columns, schema, label):
    return dataset.Dataset(schema=schema, columns=columns, label=np.asarray(label, float))


class TestEncode:
    def test_one_hot_definition(self):
        schema = [ColumnSchema("c", "categorical"), ColumnSchema("loan_status", "label")]
        d = make_dataset({"c": np.asarray(["A", "B", "A"], dtype=object)}, schema, [1, 0, 1])
        enc = dataset.encode(d)
        assert enc.feature_names == ["c=A", "c=B"]
        np.testing.assert_array_equal(enc.X[0], [1.0, 0.0])

    def test_numeric_only_identity(self):
        schema = [ColumnSchema("a", "numeric"), ColumnSchema("loan_status", "label")]
        d = make_dataset({"a": np.asarray([1.5, 2.5])}, schema, [0, 1])
        enc = dataset.encode(d)
        np.testing.assert_array_equal(enc.X[:, 0], [1.5, 2.5])
        assert enc.X.shape[1] == 1

    def test_dimension_arithmetic(self):
        # 2 categoricals with 3 and 2 categories + 4 numerics -> D = 9
        schema = (
            [ColumnSchema(f"n{i}", "numeric") for i in range(4)]
            + [ColumnSchema("c1", "categorical"), ColumnSchema("c2", "categorical"),
               ColumnSchema("loan_status", "label")]
        )
        cols = {f"n{i}": np.arange(6, dtype=float) for i in range(4)}
        cols["c1"] = np.asarray(["a", "b", "c", "a", "b", "c"], dtype=object)
        cols["c2"] = np.asarray(["x", "y", "x", "y", "x", "y"], dtype=object)
        enc = dataset.encode(make_dataset(cols, schema, [0, 1, 0, 1, 0, 1]))
        assert enc.X.shape[1] == 9

    def test_category_not_in_allowed_list(self):
        schema = [ColumnSchema("c", "categorical", allowed_categories=["A", "B"]),
                  ColumnSchema("loan_status", "label")]
        d = make_dataset({"c": np.asarray(["A", "Z"], dtype=object)}, schema, [0, 1])
        with pytest.raises(ValueError, match="allowed"):
            dataset.encode(d)

    def test_unknown_category_predict_time_zero_group(self):
        schema = [ColumnSchema("c", "categorical"), ColumnSchema("loan_status", "label")]
        d = make_dataset({"c": np.asarray(["A", "B"], dtype=object)}, schema, [0, 1])
        enc = dataset.Encoder.fit(d)
        new = make_dataset({"c": np.asarray(["Z"], dtype=object)}, schema, [1])
        out = enc.transform(new, strict=False)
        np.testing.assert_array_equal(out.X[0], [0.0, 0.0])

    def test_one_hot_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        cats = np.asarray([["r", "g", "b"][i] for i in rng.integers(0, 3, 50)], dtype=object)
        schema = [ColumnSchema("c", "categorical"), ColumnSchema("loan_status", "label")]
        enc = dataset.encode(make_dataset({"c": cats}, schema, rng.integers(0, 2, 50)))
        np.testing.assert_array_equal(enc.X.sum(axis=1), np.ones(50))

    def test_lexicographic_category_order(self):
        schema = [ColumnSchema("c", "categorical"), ColumnSchema("loan_status", "label")]
        d = make_dataset({"c": np.asarray(["zeta", "alpha"], dtype=object)}, schema, [0, 1])
        enc = dataset.encode(d)
        assert enc.feature_names == ["c=alpha", "c=zeta"]


class TestSplit:
    def encoded(self, n, n_pos, seed=0):
        rng = np.random.default_rng(seed)
        y = np.zeros(n, dtype=np.int64)
        y[rng.choice(n, n_pos, replace=False)] = 1
        return dataset.EncodedMatrix(
            X=rng.standard_normal((n, 3)), feature_names=["a", "b", "c"], y=y,
            numeric_mask=np.ones(3, dtype=bool),
        )

    def test_test_count(self):
        sp = dataset.split(self.encoded(10, 5), 0.2, seed=1)
        assert sp.test_indices.size == 2

    def test_determinism(self):
        enc = self.encoded(50, 20)
        a = dataset.split(enc, 0.2, seed=7)
        b = dataset.split(enc, 0.2, seed=7)
        np.testing.assert_array_equal(a.train_indices, b.train_indices)
        np.testing.assert_array_equal(a.test_indices, b.test_indices)

    def test_stratification(self):
        enc = self.encoded(100, 30)
        sp = dataset.split(enc, 0.2, seed=3)
        pos_in_test = enc.y[sp.test_indices].sum()
        assert abs(pos_in_test - 6) <= 1

    def test_partition(self):
        enc = self.encoded(37, 11)
        sp = dataset.split(enc, 0.25, seed=5)
        merged = np.sort(np.concatenate([sp.train_indices, sp.test_indices]))
        np.testing.assert_array_equal(merged, np.arange(37))

    def test_small_class_rejected(self):
        enc = self.encoded(10, 1)
        with pytest.raises(ValueError):
            dataset.split(enc, 0.2, seed=1)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            dataset.split(self.encoded(10, 5), 0.0, seed=1)

    def test_split_file_roundtrip(self, tmp_path):
        sp = dataset.split(self.encoded(30, 12), 0.2, seed=9)
        path = tmp_path / "split.txt"
        dataset.save_split(path, sp)
        loaded = dataset.load_split(path)
        np.testing.assert_array_equal(loaded.train_indices, sp.train_indices)
        np.testing.assert_array_equal(loaded.test_indices, sp.test_indices)
        text = path.read_text()
        assert text.startswith("train:\n")
        assert "test:\n" in text


class TestProperties:
    def test_encode_after_drop_has_no_nonfinite(self, tmp_path):
        rng = np.random.default_rng(12)
        for trial in range(10):
            lines = ["a,b,c,loan_status"]
            for i in range(40):
                cells = [repr(float(v)) for v in rng.standard_normal(2)]
                cells.append(["u", "v", "w"][rng.integers(0, 3)])
                cells.append("Fully Paid" if rng.random() < 0.6 else "Charged Off")
                # random NA injection
                if rng.random() < 0.2:
                    cells[int(rng.integers(0, 3))] = ["", "NA", "null", "NaN"][rng.integers(0, 4)]
                lines.append(",".join(cells))
            path = write(tmp_path, f"p{trial}.csv", "\n".join(lines) + "\n")
            schema = [ColumnSchema("a", "numeric"), ColumnSchema("b", "numeric"),
                      ColumnSchema("c", "categorical"), ColumnSchema("loan_status", "label")]
            d = dataset.drop_missing(dataset.ingest_csv(path, schema))
            enc = dataset.encode(d)
            assert np.isfinite(enc.X).all()
            assert np.isin(enc.y, (0, 1)).all()

    def test_chain_byte_identical_across_runs(self, tmp_path):
        path = write(
            tmp_path, "d.csv",
            "a,c,loan_status\n1,x,Fully Paid\n2,y,Charged Off\n3,x,Fully Paid\n"
            "4,y,Charged Off\n5,x,Fully Paid\n6,y,Fully Paid\n7,x,Charged Off\n"
            "8,y,Fully Paid\n9,x,Charged Off\n10,y,Fully Paid\n",
        )
        schema = [ColumnSchema("a", "numeric"), ColumnSchema("c", "categorical"),
                  ColumnSchema("loan_status", "label")]

        def chain():
            enc = dataset.encode(dataset.drop_missing(dataset.ingest_csv(path, schema)))
            sp = dataset.split(enc, 0.2, seed=42)
            return enc.X.tobytes(), enc.y.tobytes(), sp.train_indices.tobytes(), sp.test_indices.tobytes()

        assert chain() == chain()


class TestKfoldHoldout:
    def test_kfold_partition_and_stratification(self):
        rng = np.random.default_rng(2)
        y = rng.integers(0, 2, 103)
        folds = dataset.stratified_kfold(y, 5, seed=1)
        seen = np.concatenate([te for _, te in folds])
        np.testing.assert_array_equal(np.sort(seen), np.arange(103))
        for tr, te in folds:
            assert np.intersect1d(tr, te).size == 0
            assert np.unique(y[te]).size == 2

    def test_holdout_fraction(self):
        y = np.asarray([0] * 80 + [1] * 20)
        main, held = dataset.stratified_holdout(y, 0.2, seed=0)
        assert held.size == 20
        assert y[held].sum() == 4
        assert np.intersect1d(main, held).size == 0
