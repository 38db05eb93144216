"""CSV loading and deterministic train/validation/test partitioning.

Columns are auto-typed: numeric when every non-missing cell parses as a
number, categorical otherwise.  The empty string marks a missing cell.
Class indices follow first appearance in the file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class RawDataset:
    """Tabular classification data before encoding.

    Numeric columns are float arrays with NaN for missing cells; categorical
    columns are lists of tokens with None for missing cells.
    """

    feature_names: tuple[str, ...]
    columns: tuple  # np.ndarray (numeric) or list[str | None] (categorical)
    labels: tuple[int, ...]          # class indices
    label_tokens: tuple[str, ...]    # original class tokens per row
    class_names: tuple[str, ...]     # class index -> token, first-appearance order

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def row(self, r: int) -> list:
        out = []
        for col in self.columns:
            if isinstance(col, np.ndarray):
                v = float(col[r])
                out.append(None if math.isnan(v) else v)
            else:
                out.append(col[r])
        return out


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path: str | Path, label_column: str | int,
             delimiter: str = ",", header: bool = True) -> RawDataset:
    """Load a CSV classification table.

    ``label_column`` is a header name, or a 0-based column index (always an
    index when ``header`` is false).
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from None
    rows = [r for r in rows if r]  # drop fully blank lines
    if not rows:
        raise DatasetError(f"{path} is empty")

    if header:
        names = [c.strip() for c in rows[0]]
        data = rows[1:]
    else:
        names = [f"f{i}" for i in range(len(rows[0]))]
        data = rows
    width = len(names)
    for lineno, r in enumerate(data, start=2 if header else 1):
        if len(r) != width:
            raise DatasetError(
                f"{path}: ragged row at line {lineno} ({len(r)} cells, expected {width})"
            )
    if not data:
        raise DatasetError(f"{path} has no data rows")

    if isinstance(label_column, int):
        label_idx = label_column if label_column >= 0 else width + label_column
        if not 0 <= label_idx < width:
            raise DatasetError(f"label column index {label_column} out of range")
    else:
        if label_column not in names:
            raise DatasetError(f"label column {label_column!r} not found in {names}")
        label_idx = names.index(label_column)

    label_tokens = [r[label_idx].strip() for r in data]
    if any(t == "" for t in label_tokens):
        raise DatasetError(f"{path}: missing label cell(s)")
    class_names: list[str] = []
    for t in label_tokens:
        if t not in class_names:
            class_names.append(t)
    if len(class_names) < 2:
        raise DatasetError(
            f"{path}: need at least 2 distinct labels, found {class_names}"
        )
    class_index = {t: i for i, t in enumerate(class_names)}
    labels = tuple(class_index[t] for t in label_tokens)

    feature_names = tuple(n for i, n in enumerate(names) if i != label_idx)
    columns = []
    for i in range(width):
        if i == label_idx:
            continue
        cells = [r[i].strip() for r in data]
        non_missing = [c for c in cells if c != ""]
        if non_missing and all(_is_number(c) for c in non_missing):
            columns.append(np.array(
                [float(c) if c != "" else float("nan") for c in cells]))
        else:
            columns.append([c if c != "" else None for c in cells])
    return RawDataset(feature_names, tuple(columns), labels,
                      tuple(label_tokens), tuple(class_names))


@dataclass(frozen=True)
class SplitDataset:
    """Disjoint row-index cover: train / validation / test."""

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    fractions: tuple[float, float]

    @property
    def n_rows(self) -> int:
        return len(self.train) + len(self.validation) + len(self.test)


def _apportion(counts: Sequence[int], total: int) -> list[int]:
    """Largest-remainder allocation of `total` over groups, proportional to counts."""
    pool = sum(counts)
    if pool == 0 or total == 0:
        return [0] * len(counts)
    exact = [total * c / pool for c in counts]
    base = [math.floor(e) for e in exact]
    short = total - sum(base)
    order = sorted(range(len(counts)), key=lambda i: (base[i] - exact[i], i))
    for i in order[:short]:
        base[i] += 1
    return [min(b, c) for b, c in zip(base, counts)]


def split(raw: RawDataset, fractions: tuple[float, float] = (0.8, 0.5),
          seed: int = 0, stratified: bool = True) -> SplitDataset:
    """Partition row indices into train / validation / test.

    The test partition takes ceil((1 - f_train) * n_rows) rows; of the
    remainder, validation takes floor(f_val * remainder).  Identical
    (raw, fractions, seed, stratified) always yields identical index lists.
    """
    f_train, f_val = fractions
    if not 0 < f_train < 1:
        raise DatasetError(f"train fraction must be in (0,1), got {f_train}")
    if not 0 <= f_val < 1:
        raise DatasetError(f"validation fraction must be in [0,1), got {f_val}")
    n = raw.n_rows
    test_n = math.ceil((1 - f_train) * n)
    trainval_n = n - test_n
    val_n = math.floor(f_val * trainval_n)

    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(n)
        test = perm[:test_n]
        val = perm[test_n:test_n + val_n]
        train = perm[test_n + val_n:]
    else:
        by_class = [np.flatnonzero(np.asarray(raw.labels) == c)
                    for c in range(raw.n_classes)]
        shuffled = [rng.permutation(ix) for ix in by_class]
        counts = [len(ix) for ix in by_class]
        test_quota = _apportion(counts, test_n)
        remaining = [c - q for c, q in zip(counts, test_quota)]
        val_quota = _apportion(remaining, val_n)
        test_parts, val_parts, train_parts = [], [], []
        for ix, tq, vq in zip(shuffled, test_quota, val_quota):
            test_parts.append(ix[:tq])
            val_parts.append(ix[tq:tq + vq])
            train_parts.append(ix[tq + vq:])
        test = np.concatenate(test_parts) if test_parts else np.array([], dtype=int)
        val = np.concatenate(val_parts) if val_parts else np.array([], dtype=int)
        train = np.concatenate(train_parts) if train_parts else np.array([], dtype=int)
        for c, part in enumerate(train_parts):
            if len(part) == 0 and counts[c] >= 3:
                raise DatasetError(
                    f"stratified split left class {raw.class_names[c]!r} "
                    f"({counts[c]} rows) with no training rows"
                )
    return SplitDataset(
        tuple(int(i) for i in np.sort(train)),
        tuple(int(i) for i in np.sort(val)),
        tuple(int(i) for i in np.sort(test)),
        seed, (f_train, f_val),
    )
