"""Sparse datasets with paired row/column access, plus cell-edit sets and overlays.

Storage is CSR and CSC index arrays over the same nonzero cells, so both
row-wise and column-wise iteration are O(nnz of that slice).  Edits are kept
separately as a small map and merged on the fly; materializing the edited
matrix is a distinct (full-cost) operation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np


class LibsvmFormatError(ValueError):
    """Malformed LIBSVM text input (message carries the 1-based line number)."""


def _gather_rows(ptr: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Positions of all stored entries of rows ``idx``, in row order."""
    counts = ptr[idx + 1] - ptr[idx]
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.repeat(ptr[idx] - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
    return starts + np.arange(total, dtype=np.int64)


@dataclass(frozen=True)
class SparseDataset:
    """Immutable labeled sparse matrix; never stores explicit zeros.

    ``row_ptr/row_cols/row_vals`` is the CSR view, ``col_ptr/col_rows/col_vals``
    the CSC view of the same cells.  ``y`` holds labels in {-1.0, +1.0}.
    """

    n: int
    d: int
    row_ptr: np.ndarray
    row_cols: np.ndarray
    row_vals: np.ndarray
    col_ptr: np.ndarray
    col_rows: np.ndarray
    col_vals: np.ndarray
    y: np.ndarray

    @classmethod
    def from_cells(cls, n, d, rows, cols, vals, y) -> "SparseDataset":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (n,):
            raise ValueError(f"label vector has shape {y.shape}, expected ({n},)")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be +1 or -1")
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise IndexError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= d):
            raise IndexError("column index out of range")
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                k = int(np.argmax(dup))
                raise ValueError(f"duplicate cell ({rows[k]}, {cols[k]})")
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=row_ptr[1:])
        corder = np.lexsort((rows, cols))
        col_ptr = np.zeros(d + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=d), out=col_ptr[1:])
        return cls(
            n=n, d=d,
            row_ptr=row_ptr, row_cols=cols, row_vals=vals,
            col_ptr=col_ptr, col_rows=rows[corder], col_vals=vals[corder],
            y=y,
        )

    @property
    def nnz(self) -> int:
        return int(self.row_vals.size)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row i (views, do not mutate)."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.row_cols[lo:hi], self.row_vals[lo:hi]

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices and values of column j (views, do not mutate)."""
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.col_rows[lo:hi], self.col_vals[lo:hi]

    def value(self, i: int, j: int) -> float:
        if not (0 <= i < self.n and 0 <= j < self.d):
            raise IndexError(f"cell ({i}, {j}) outside {self.n}x{self.d}")
        cols, vals = self.row(i)
        k = int(np.searchsorted(cols, j))
        if k < cols.size and cols[k] == j:
            return float(vals[k])
        return 0.0

    def take_rows(self, idx: np.ndarray) -> "SparseDataset":
        """New dataset containing rows ``idx`` in the given order; d is kept."""
        idx = np.asarray(idx, dtype=np.int64)
        pos = _gather_rows(self.row_ptr, idx)
        new_rows = np.repeat(
            np.arange(idx.size, dtype=np.int64),
            self.row_ptr[idx + 1] - self.row_ptr[idx],
        )
        return SparseDataset.from_cells(
            int(idx.size), self.d,
            new_rows, self.row_cols[pos], self.row_vals[pos], self.y[idx],
        )

    def to_dense(self) -> np.ndarray:
        """Dense copy for small-problem oracles only."""
        if self.n * self.d > 4_000_000:
            raise ValueError("dataset too large to densify")
        out = np.zeros((self.n, self.d))
        for i in range(self.n):
            cols, vals = self.row(i)
            out[i, cols] = vals
        return out


def parse_libsvm(source: str | Iterable[str]) -> SparseDataset:
    """Parse LIBSVM text: ``<label> <idx>:<value> ...`` with 1-based, strictly
    increasing feature indices per line.  d is the largest index seen."""
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = list(source)
    rows, cols, vals, labels = [], [], [], []
    d = 0
    i = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        toks = line.split()
        try:
            label = float(toks[0])
        except ValueError:
            raise LibsvmFormatError(f"line {line_no}: invalid label '{toks[0]}'") from None
        labels.append(1.0 if label > 0 else -1.0)
        prev = 0
        for tok in toks[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(f"line {line_no}: invalid token '{tok}'")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(f"line {line_no}: invalid token '{tok}'") from None
            if idx < 1:
                raise LibsvmFormatError(f"line {line_no}: index {idx} is not positive")
            if idx <= prev:
                raise LibsvmFormatError(
                    f"line {line_no}: index {idx} not strictly increasing"
                )
            prev = idx
            d = max(d, idx)
            if val != 0.0:
                rows.append(i)
                cols.append(idx - 1)
                vals.append(val)
        i += 1
    return SparseDataset.from_cells(i, d, rows, cols, vals, labels)


def emit_libsvm(dataset: SparseDataset) -> str:
    """Inverse of parse_libsvm; values are written with shortest round-trip repr."""
    out = []
    for i in range(dataset.n):
        cols, vals = dataset.row(i)
        parts = ["+1" if dataset.y[i] > 0 else "-1"]
        parts.extend(f"{j + 1}:{float(v)!r}" for j, v in zip(cols, vals))
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def normalize_rows(dataset: SparseDataset) -> SparseDataset:
    """Scale each row to unit L2 norm; all-zero rows are kept as-is."""
    sq = dataset.row_vals * dataset.row_vals
    c = np.concatenate(([0.0], np.cumsum(sq)))
    norms = np.sqrt(c[dataset.row_ptr[1:]] - c[dataset.row_ptr[:-1]])
    norms[norms == 0.0] = 1.0
    scale = np.repeat(1.0 / norms, np.diff(dataset.row_ptr))
    rows = np.repeat(np.arange(dataset.n, dtype=np.int64), np.diff(dataset.row_ptr))
    return SparseDataset.from_cells(
        dataset.n, dataset.d, rows, dataset.row_cols, dataset.row_vals * scale, dataset.y
    )


def split_train_test(
    dataset: SparseDataset, fraction: float, seed: int
) -> tuple[SparseDataset, SparseDataset]:
    """Deterministic shuffled split; train gets ceil(fraction * n) rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    k = math.ceil(fraction * dataset.n)
    return dataset.take_rows(perm[:k]), dataset.take_rows(perm[k:])


@dataclass(frozen=True)
class ModificationSet:
    """A batch of cell edits (i, j) -> new value; later duplicates win.

    ``rows``/``cols`` are the sorted distinct touched indices; ``row_edits`` and
    ``col_edits`` give per-row and per-column edit lists sorted by the other
    index, for merge iteration.
    """

    edits: dict[tuple[int, int], float]
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    row_edits: dict[int, list[tuple[int, float]]] = field(repr=False)
    col_edits: dict[int, list[tuple[int, float]]] = field(repr=False)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, float]]) -> "ModificationSet":
        edits: dict[tuple[int, int], float] = {}
        for i, j, v in triples:
            if i < 0 or j < 0:
                raise IndexError(f"negative cell index ({i}, {j})")
            edits[(int(i), int(j))] = float(v)
        row_edits: dict[int, list[tuple[int, float]]] = {}
        col_edits: dict[int, list[tuple[int, float]]] = {}
        for (i, j), v in sorted(edits.items()):
            row_edits.setdefault(i, []).append((j, v))
            col_edits.setdefault(j, []).append((i, v))
        rows = np.array(sorted(row_edits), dtype=np.int64)
        cols = np.array(sorted(col_edits), dtype=np.int64)
        return cls(edits=edits, rows=rows, cols=cols, row_edits=row_edits, col_edits=col_edits)

    def __len__(self) -> int:
        return len(self.edits)

    def to_json(self) -> str:
        items = [{"i": i, "j": j, "v": v} for (i, j), v in sorted(self.edits.items())]
        return json.dumps(items)

    @classmethod
    def from_json(cls, text: str) -> "ModificationSet":
        items = json.loads(text)
        return cls.from_triples((int(e["i"]), int(e["j"]), float(e["v"])) for e in items)


def _merge_edits(
    base_idx: np.ndarray, base_vals: np.ndarray, edits: list[tuple[int, float]]
) -> tuple[np.ndarray, np.ndarray]:
    """Merge a sorted edit list into one sorted sparse slice.

    Edited cells that were absent appear with their new value (possibly 0.0);
    edited cells that were present are overwritten in place.
    """
    if not edits:
        return base_idx, base_vals
    keys = np.fromiter((k for k, _ in edits), dtype=np.int64, count=len(edits))
    new_vals = np.fromiter((v for _, v in edits), dtype=np.float64, count=len(edits))
    pos = np.searchsorted(base_idx, keys)
    present = (pos < base_idx.size) & (base_idx[np.minimum(pos, base_idx.size - 1)] == keys) \
        if base_idx.size else np.zeros(keys.size, dtype=bool)
    out_idx = base_idx.copy()
    out_vals = base_vals.copy()
    out_vals[pos[present]] = new_vals[present]
    if (~present).any():
        out_idx = np.insert(out_idx, pos[~present], keys[~present])
        out_vals = np.insert(out_vals, pos[~present], new_vals[~present])
    return out_idx, out_vals


@dataclass(frozen=True)
class OverlayView:
    """Read-only merged view of a dataset with an edit set applied on top.

    Merged slices include edit cells even when the new value is 0.0; consumers
    that need the stored-nonzero structure filter those out.
    """

    base: SparseDataset
    delta: ModificationSet

    def __post_init__(self):
        for (i, j) in self.delta.edits:
            if i >= self.base.n or j >= self.base.d:
                raise IndexError(f"edit ({i}, {j}) outside {self.base.n}x{self.base.d}")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def y(self) -> np.ndarray:
        return self.base.y

    def value(self, i: int, j: int) -> float:
        v = self.delta.edits.get((i, j))
        if v is not None:
            return v
        return self.base.value(i, j)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        cols, vals = self.base.row(i)
        return _merge_edits(cols, vals, self.delta.row_edits.get(i, []))

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        rows, vals = self.base.col(j)
        return _merge_edits(rows, vals, self.delta.col_edits.get(j, []))


def apply_modifications(dataset: SparseDataset, mods: ModificationSet) -> SparseDataset:
    """Materialize the edits into a fresh dataset (full-cost; zeros dropped)."""
    view = OverlayView(dataset, mods)  # validates ranges
    touched = set(mods.row_edits)
    keep = ~np.isin(
        np.repeat(np.arange(dataset.n, dtype=np.int64), np.diff(dataset.row_ptr)),
        mods.rows,
    )
    rows_parts = [np.repeat(np.arange(dataset.n, dtype=np.int64), np.diff(dataset.row_ptr))[keep]]
    cols_parts = [dataset.row_cols[keep]]
    vals_parts = [dataset.row_vals[keep]]
    for i in sorted(touched):
        cols, vals = view.row(i)
        nz = vals != 0.0
        rows_parts.append(np.full(int(nz.sum()), i, dtype=np.int64))
        cols_parts.append(cols[nz])
        vals_parts.append(vals[nz])
    return SparseDataset.from_cells(
        dataset.n, dataset.d,
        np.concatenate(rows_parts), np.concatenate(cols_parts), np.concatenate(vals_parts),
        dataset.y,
    )
