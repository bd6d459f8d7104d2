import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deltabound import (
    LibsvmFormatError,
    ModificationSet,
    OverlayView,
    SparseDataset,
    apply_modifications,
    emit_libsvm,
    normalize_rows,
    parse_libsvm,
    split_train_test,
)

from conftest import random_dataset


def dense_of(n, d, triples):
    out = np.zeros((n, d))
    for i, j, v in triples:
        out[i, j] = v
    return out


class TestFromCells:
    def test_round_trip_dense(self):
        triples = [(0, 1, 2.0), (2, 0, -1.5), (2, 3, 0.25), (1, 2, 4.0)]
        ds = SparseDataset.from_cells(
            3, 4, [t[0] for t in triples], [t[1] for t in triples],
            [t[2] for t in triples], [1, -1, 1],
        )
        assert np.array_equal(ds.to_dense(), dense_of(3, 4, triples))
        assert ds.nnz == 4

    def test_zero_values_dropped(self):
        ds = SparseDataset.from_cells(2, 2, [0, 1], [0, 1], [0.0, 3.0], [1, -1])
        assert ds.nnz == 1
        assert ds.value(0, 0) == 0.0
        assert ds.value(1, 1) == 3.0

    def test_duplicate_cell_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            SparseDataset.from_cells(2, 2, [0, 0], [1, 1], [1.0, 2.0], [1, -1])

    def test_bad_label_rejected(self):
        with pytest.raises(ValueError):
            SparseDataset.from_cells(1, 1, [0], [0], [1.0], [0])

    def test_out_of_range_cell_rejected(self):
        with pytest.raises((ValueError, IndexError)):
            SparseDataset.from_cells(2, 2, [0], [5], [1.0], [1, -1])

    def test_row_col_views_agree(self):
        ds = random_dataset(17, 9, density=0.4, seed=3)
        dense = ds.to_dense()
        for i in range(ds.n):
            cols, vals = ds.row(i)
            row = np.zeros(ds.d)
            row[cols] = vals
            assert np.array_equal(row, dense[i])
        for j in range(ds.d):
            rows, vals = ds.col(j)
            col = np.zeros(ds.n)
            col[rows] = vals
            assert np.array_equal(col, dense[:, j])

    def test_value_lookup(self):
        ds = random_dataset(11, 7, density=0.3, seed=5)
        dense = ds.to_dense()
        for i in range(ds.n):
            for j in range(ds.d):
                assert ds.value(i, j) == dense[i, j]
        with pytest.raises(IndexError):
            ds.value(11, 0)
        with pytest.raises(IndexError):
            ds.value(0, -8)

    def test_take_rows(self):
        ds = random_dataset(10, 6, density=0.5, seed=1)
        sub = ds.take_rows(np.array([3, 0, 7]))
        assert sub.n == 3
        assert np.array_equal(sub.to_dense(), ds.to_dense()[[3, 0, 7]])
        assert np.array_equal(sub.y, ds.y[[3, 0, 7]])


LIBSVM_SAMPLE = "+1 1:0.5 3:-2\n-1 2:1.5\n"


class TestLibsvm:
    def test_parse_frozen(self):
        ds = parse_libsvm(LIBSVM_SAMPLE)
        assert (ds.n, ds.d) == (2, 3)
        assert np.array_equal(ds.y, [1, -1])
        assert np.array_equal(ds.to_dense(), [[0.5, 0.0, -2.0], [0.0, 1.5, 0.0]])

    def test_parse_blank_lines_and_float_labels(self):
        ds = parse_libsvm("2.0 1:1\n\n-3 1:2\n")
        assert np.array_equal(ds.y, [1, -1])
        assert ds.n == 2

    @pytest.mark.parametrize(
        "bad",
        ["+1 0:1\n", "+1 2:1 2:2\n", "+1 3:1 2:5\n", "+1 1:x\n", "+1 1\n"],
    )
    def test_parse_rejects(self, bad):
        with pytest.raises(LibsvmFormatError):
            parse_libsvm(bad)

    def test_error_names_line(self):
        with pytest.raises(LibsvmFormatError, match="line 2"):
            parse_libsvm("+1 1:1\n+1 0:1\n")

    def test_emit_parse_round_trip(self):
        ds = random_dataset(20, 8, density=0.3, seed=9)
        back = parse_libsvm(emit_libsvm(ds))
        # emitted d is the max used index, so compare on the common prefix
        assert np.array_equal(back.to_dense(), ds.to_dense()[:, : back.d])
        assert np.array_equal(back.y, ds.y)

    def test_emit_empty(self):
        ds = SparseDataset.from_cells(0, 3, [], [], [], [])
        assert emit_libsvm(ds) == ""


class TestTransforms:
    def test_normalize_rows_unit(self):
        ds = random_dataset(15, 6, density=0.5, seed=2)
        norm = normalize_rows(ds)
        dense = norm.to_dense()
        lens = np.linalg.norm(dense, axis=1)
        filled = np.linalg.norm(ds.to_dense(), axis=1) > 0
        assert np.allclose(lens[filled], 1.0)
        assert np.all(lens[~filled] == 0.0)

    def test_split_partitions(self):
        ds = random_dataset(23, 5, density=0.4, seed=7)
        first, second = split_train_test(ds, 0.3, seed=0)
        assert first.n == 7  # ceil(0.3 * 23)
        assert first.n + second.n == ds.n
        merged = np.vstack([first.to_dense(), second.to_dense()])
        assert np.array_equal(
            np.sort(merged.sum(axis=1)), np.sort(ds.to_dense().sum(axis=1))
        )

    def test_split_deterministic(self):
        ds = random_dataset(30, 4, density=0.4, seed=8)
        a1, b1 = split_train_test(ds, 0.5, seed=3)
        a2, b2 = split_train_test(ds, 0.5, seed=3)
        assert np.array_equal(a1.to_dense(), a2.to_dense())
        assert np.array_equal(b1.to_dense(), b2.to_dense())

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.2, 1.5])
    def test_split_validates_fraction(self, frac):
        ds = random_dataset(5, 3, seed=0)
        with pytest.raises(ValueError):
            split_train_test(ds, frac, seed=0)


class TestModificationSet:
    def test_later_edit_wins(self):
        mods = ModificationSet.from_triples([(0, 1, 2.0), (0, 1, 5.0)])
        assert len(mods) == 1
        assert mods.edits[(0, 1)] == 5.0

    def test_rows_cols_sorted_unique(self):
        mods = ModificationSet.from_triples(
            [(4, 2, 1.0), (1, 2, 1.0), (4, 0, 1.0)]
        )
        assert np.array_equal(mods.rows, [1, 4])
        assert np.array_equal(mods.cols, [0, 2])

    def test_negative_index_rejected(self):
        with pytest.raises(IndexError):
            ModificationSet.from_triples([(-1, 0, 1.0)])

    def test_json_round_trip(self):
        mods = ModificationSet.from_triples([(3, 1, -0.5), (0, 2, 0.0)])
        back = ModificationSet.from_json(mods.to_json())
        assert back.edits == mods.edits


class TestOverlay:
    def overlay_dense(self, ds, mods):
        dense = ds.to_dense().copy()
        for (i, j), v in mods.edits.items():
            dense[i, j] = v
        return dense

    def test_merged_views(self):
        ds = random_dataset(12, 6, density=0.4, seed=4)
        mods = ModificationSet.from_triples(
            [(0, 0, 9.0), (3, 5, 0.0), (3, 2, -1.0), (11, 1, 2.5)]
        )
        view = OverlayView(ds, mods)
        dense = self.overlay_dense(ds, mods)
        for i in range(ds.n):
            cols, vals = view.row(i)
            row = np.zeros(ds.d)
            row[cols] = vals
            # merged slices may carry explicit zeros; dense comparison absorbs them
            assert np.array_equal(row, dense[i])
        for j in range(ds.d):
            rows, vals = view.col(j)
            col = np.zeros(ds.n)
            col[rows] = vals
            assert np.array_equal(col, dense[:, j])
        for (i, j), v in mods.edits.items():
            assert view.value(i, j) == v

    def test_out_of_range_edit_rejected(self):
        ds = random_dataset(4, 4, seed=0)
        with pytest.raises(IndexError):
            OverlayView(ds, ModificationSet.from_triples([(4, 0, 1.0)]))

    def test_apply_matches_overlay(self):
        ds = random_dataset(10, 5, density=0.5, seed=6)
        mods = ModificationSet.from_triples(
            [(0, 0, 0.0), (2, 3, 7.0), (9, 4, -0.25)]
        )
        applied = apply_modifications(ds, mods)
        assert np.array_equal(applied.to_dense(), self.overlay_dense(ds, mods))
        # zero edits are real deletions in the applied matrix
        assert applied.value(0, 0) == 0.0
        assert np.array_equal(applied.y, ds.y)


cells_strategy = st.lists(
    st.tuples(
        st.integers(0, 7),
        st.integers(0, 5),
        st.floats(-5, 5, allow_nan=False, width=32),
    ),
    max_size=30,
)


@given(cells_strategy)
def test_from_cells_matches_dict(cells):
    last = {}
    for i, j, v in cells:
        last[(i, j)] = float(v)
    dedup = [(i, j, v) for (i, j), v in last.items()]
    ds = SparseDataset.from_cells(
        8, 6, [t[0] for t in dedup], [t[1] for t in dedup],
        [t[2] for t in dedup], np.ones(8, dtype=int),
    )
    expect = np.zeros((8, 6))
    for i, j, v in dedup:
        expect[i, j] = v
    assert np.array_equal(ds.to_dense(), expect)


@given(cells_strategy, st.lists(st.tuples(st.integers(0, 7), st.integers(0, 5), st.floats(-5, 5, allow_nan=False, width=32)), max_size=10))
def test_overlay_matches_dense(cells, edit_list):
    last = {}
    for i, j, v in cells:
        last[(i, j)] = float(v)
    dedup = [(i, j, v) for (i, j), v in last.items()]
    ds = SparseDataset.from_cells(
        8, 6, [t[0] for t in dedup], [t[1] for t in dedup],
        [t[2] for t in dedup], np.ones(8, dtype=int),
    )
    mods = ModificationSet.from_triples(edit_list)
    view = OverlayView(ds, mods)
    dense = ds.to_dense().copy()
    for (i, j), v in mods.edits.items():
        dense[i, j] = v
    assert np.array_equal(apply_modifications(ds, mods).to_dense(), dense)
    for i in range(8):
        cols, vals = view.row(i)
        row = np.zeros(6)
        row[cols] = vals
        assert np.array_equal(row, dense[i])
