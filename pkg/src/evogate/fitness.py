"""Classification metrics, the regularized fitness R = a*rho - (1-a)*X, and
the secondary objectives (gate count, NAND2 equivalents, stuck-at fault
vulnerability)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import (
    CircuitGraph,
    FunctionSet,
    active_set,
    count_active_gates,
    evaluate_columns,
    nand2_equivalent,
)
from .encoding import Partition, _decode_table


@dataclass(frozen=True)
class FitnessReport:
    rho: float                    # balanced accuracy
    secondary_value: float        # X, normalized to [0,1]
    R: float                      # a*rho - (1-a)*X
    confusion: tuple[tuple[int, ...], ...]  # [true][predicted] counts

    @property
    def accuracy(self) -> float:
        total = sum(sum(row) for row in self.confusion)
        correct = sum(self.confusion[c][c] for c in range(len(self.confusion)))
        return correct / total if total else 0.0


def balanced_accuracy(pred: Sequence[int], truth: Sequence[int],
                      n_classes: int, absent_as_zero: bool = False) -> float:
    """Macro-averaged per-class recall.

    Classes absent from ``truth`` are excluded from the mean unless
    ``absent_as_zero`` counts them as recall 0.
    """
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if truth.size == 0:
        raise ValueError("balanced accuracy of empty inputs is undefined")
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have equal length")
    support = np.bincount(truth, minlength=n_classes)
    correct = np.bincount(truth[pred == truth], minlength=n_classes)
    recalls = correct[support > 0] / support[support > 0]
    denom = n_classes if absent_as_zero else recalls.size
    return float(recalls.sum() / denom)


def confusion_matrix(pred: Sequence[int], truth: Sequence[int],
                     n_classes: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    m = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(m, (truth, pred), 1)
    return m


def regularized_fitness(rho: float, X: float, a: float) -> float:
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"regularization weight a must be in [0,1], got {a}")
    return a * rho - (1.0 - a) * X


def secondary_gate_count(g: CircuitGraph, n: int) -> float:
    """Active gates as a fraction of the genotype budget n."""
    if n <= 0:
        return 0.0
    return count_active_gates(g) / n


def secondary_nand2(g: CircuitGraph, fs: FunctionSet, n: int) -> float:
    """Active NAND2-equivalents, normalized by the worst case n * max weight."""
    if n <= 0:
        return 0.0
    x = nand2_equivalent(g, fs) / (n * fs.max_weight)
    return min(max(x, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Packed scoring path used by the evolutionary loop
# ---------------------------------------------------------------------------

_PER_ROW_PATTERN_LIMIT = 256  # beyond this, decode row by row


def _confusion_from_columns(out_cols: Sequence[int], part: Partition,
                            ) -> list[list[int]]:
    """Confusion counts from packed output columns, without unpacking rows.

    Builds a row mask per output bit pattern and popcounts it against each
    class mask; equivalent to decode_prediction over every row.
    """
    codec = part.codec
    k = codec.n_classes
    O = codec.bits
    decode = _decode_table(codec)
    confusion = [[0] * k for _ in range(k)]
    mask = part.row_mask
    if 2 ** O <= _PER_ROW_PATTERN_LIMIT:
        inv = [mask & ~c for c in out_cols]
        for p in range(2 ** O):
            m = mask
            for kbit in range(O):
                m &= out_cols[kbit] if (p >> (O - 1 - kbit)) & 1 else inv[kbit]
                if not m:
                    break
            if not m:
                continue
            cls = decode[p]
            for c in range(k):
                hits = m & part.class_masks[c]
                if hits:
                    confusion[c][cls] += hits.bit_count()
    else:
        for r in range(part.n_rows):
            p = 0
            for kbit in range(O):
                p = (p << 1) | ((out_cols[kbit] >> r) & 1)
            confusion[int(part.labels[r])][decode[p]] += 1
    return confusion


def _rho_from_confusion(confusion: Sequence[Sequence[int]]) -> float:
    recalls = []
    for c, row in enumerate(confusion):
        support = sum(row)
        if support:
            recalls.append(row[c] / support)
    return sum(recalls) / len(recalls) if recalls else 0.0


def score_partition(g: CircuitGraph, fs: FunctionSet, part: Partition,
                    forced: dict[int, int] | None = None) -> list[list[int]]:
    """Evaluate a circuit over a packed partition, returning confusion counts."""
    out_cols = evaluate_columns(g, fs, part.columns, part.n_rows, forced=forced)
    return _confusion_from_columns(out_cols, part)


def stuck_at_vulnerability(g: CircuitGraph, fs: FunctionSet, part: Partition) -> float:
    """Mean relative balanced-accuracy drop under single stuck-at faults.

    Faults are enumerated over active function nodes only (inactive nodes
    cannot affect the outputs), each stuck at 0 and at 1.  Per-fault damage is
    max(0, baseline_rho - faulty_rho) / baseline_rho.
    """
    act = active_set(g)
    if act.count == 0 or part.n_rows == 0:
        return 0.0
    baseline = _rho_from_confusion(score_partition(g, fs, part))
    if baseline == 0.0:
        return 0.0
    drops = []
    for j in act.order:
        for stuck in (0, 1):
            faulty = _rho_from_confusion(score_partition(g, fs, part, forced={j: stuck}))
            drops.append(max(0.0, baseline - faulty) / baseline)
    return sum(drops) / len(drops)


def fault_table(g: CircuitGraph, fs: FunctionSet, part: Partition,
                ) -> list[tuple[int, int, float, float, float]]:
    """Per-fault results: (node_id, stuck_value, baseline_rho, faulty_rho, delta)."""
    baseline = _rho_from_confusion(score_partition(g, fs, part))
    rows = []
    for j in sorted(active_set(g).order):
        for stuck in (0, 1):
            faulty = _rho_from_confusion(score_partition(g, fs, part, forced={j: stuck}))
            rows.append((j, stuck, baseline, faulty, baseline - faulty))
    return rows


def evaluate_fitness(g: CircuitGraph, fs: FunctionSet, part: Partition,
                     a: float = 1.0, secondary: str = "none",
                     n_budget: int | None = None) -> FitnessReport:
    """Full fitness of a circuit on one partition.

    ``secondary`` selects X: none | gate_count | nand2 | stuck_at.
    ``n_budget`` is the genotype node budget used to normalize gate counts
    (defaults to the circuit's own node count).
    """
    confusion = score_partition(g, fs, part)
    rho = _rho_from_confusion(confusion)
    n = g.n if n_budget is None else n_budget
    if secondary == "none":
        X = 0.0
    elif secondary == "gate_count":
        X = secondary_gate_count(g, n)
    elif secondary == "nand2":
        X = secondary_nand2(g, fs, n)
    elif secondary == "stuck_at":
        X = stuck_at_vulnerability(g, fs, part)
    else:
        raise ValueError(f"unknown secondary objective {secondary!r}")
    R = regularized_fitness(rho, X, a)
    return FitnessReport(rho, X, R, tuple(tuple(row) for row in confusion))
