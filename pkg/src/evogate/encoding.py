"""Row binarization: per-feature bucketers fitted on training data, bit codecs,
and the output class codec.

Strategies factor into (bucketer, codec):

* ``quantization``  equal-width buckets, binary bucket index
* ``quantiles``     equal-frequency buckets, binary bucket index
* ``one_hot``       equal-width buckets, one set bit per bucket
* ``gray``          equal-width buckets, reflected Gray code

Bit layout is most-significant bit first within each feature's group, features
concatenated in column order.  A value equal to a threshold falls in the lower
bucket; out-of-range values clamp to the edge buckets.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, log2
from typing import Sequence

import numpy as np

from .dataset import RawDataset, SplitDataset

STRATEGIES = ("quantization", "quantiles", "one_hot", "gray")


class EncodingError(Exception):
    pass


@dataclass(frozen=True)
class EncoderSpec:
    strategy: str
    bits_per_input: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise EncodingError(
                f"unknown strategy {self.strategy!r} (choose from {STRATEGIES})"
            )
        if self.bits_per_input < 1:
            raise EncodingError("bits_per_input must be >= 1")

    @property
    def bucket_count(self) -> int:
        if self.strategy == "one_hot":
            return self.bits_per_input
        return 2 ** self.bits_per_input


@dataclass(frozen=True)
class FeatureEncoder:
    """Fitted bucketer for one feature."""

    name: str
    kind: str  # "numeric" | "categorical"
    thresholds: tuple[float, ...] = ()          # numeric: ascending, len = buckets-1
    category_map: dict[str, int] = field(default_factory=dict)
    impute: float | str = 0.0
    degenerate: bool = False                    # constant feature: always bucket 0

    def bucket(self, value) -> int:
        if self.degenerate:
            return 0
        if self.kind == "numeric":
            if value is None or (isinstance(value, float) and value != value):
                value = self.impute
            # value equal to a threshold goes to the lower bucket
            return bisect.bisect_left(self.thresholds, float(value))
        if value is None or value not in self.category_map:
            value = self.impute
        return self.category_map[value]


def _bucket_bits(k: int, spec: EncoderSpec) -> tuple[int, ...]:
    """MSB-first bit group for bucket index k under the spec's codec."""
    b = spec.bits_per_input
    if spec.strategy == "one_hot":
        return tuple(1 if j == k else 0 for j in range(b))
    if spec.strategy == "gray":
        k = k ^ (k >> 1)
    return tuple((k >> (b - 1 - j)) & 1 for j in range(b))


@dataclass(frozen=True)
class FittedEncoder:
    spec: EncoderSpec
    features: tuple[FeatureEncoder, ...]
    warnings: tuple[str, ...] = ()

    @property
    def total_bits(self) -> int:
        return len(self.features) * self.spec.bits_per_input

    def encode_row(self, row: Sequence) -> tuple[int, ...]:
        if len(row) != len(self.features):
            raise EncodingError(
                f"row has {len(row)} cells, encoder expects {len(self.features)}"
            )
        bits: list[int] = []
        for fe, value in zip(self.features, row):
            bits.extend(_bucket_bits(fe.bucket(value), self.spec))
        return tuple(bits)


def fit_encoder(raw: RawDataset, train_rows: Sequence[int], spec: EncoderSpec) -> FittedEncoder:
    """Fit per-feature bucketers on the training rows only."""
    if len(train_rows) == 0:
        raise EncodingError("cannot fit an encoder on an empty training slice")
    idx = np.asarray(train_rows, dtype=int)
    buckets = spec.bucket_count
    features: list[FeatureEncoder] = []
    warnings: list[str] = []
    for name, col in zip(raw.feature_names, raw.columns):
        if isinstance(col, np.ndarray):
            values = col[idx]
            values = values[~np.isnan(values)]
            if values.size == 0:
                warnings.append(f"feature {name!r}: no training values, encoding as constant")
                features.append(FeatureEncoder(name, "numeric", impute=0.0, degenerate=True))
                continue
            lo, hi = float(values.min()), float(values.max())
            impute = float(np.median(values))
            if lo == hi:
                warnings.append(f"feature {name!r}: constant on training data, encoding as all-zero bits")
                features.append(FeatureEncoder(name, "numeric", impute=impute, degenerate=True))
                continue
            if spec.strategy == "quantiles":
                qs = [k / buckets for k in range(1, buckets)]
                thresholds = tuple(float(t) for t in np.quantile(values, qs))
            else:
                thresholds = tuple(lo + (hi - lo) * k / buckets for k in range(1, buckets))
            features.append(FeatureEncoder(name, "numeric", thresholds=thresholds, impute=impute))
        else:
            counts: dict[str, int] = {}
            for r in idx:
                tok = col[r]
                if tok is None:
                    continue
                counts[tok] = counts.get(tok, 0) + 1
            if not counts:
                warnings.append(f"feature {name!r}: no training values, encoding as constant")
                features.append(FeatureEncoder(name, "categorical", impute="", degenerate=True))
                continue
            # frequency rank (ties lexicographic), round-robin over buckets
            ranked = sorted(counts, key=lambda t: (-counts[t], t))
            category_map = {tok: rank % buckets for rank, tok in enumerate(ranked)}
            features.append(
                FeatureEncoder(name, "categorical", category_map=category_map, impute=ranked[0])
            )
    return FittedEncoder(spec, tuple(features), tuple(warnings))


def encode_row(enc: FittedEncoder, row: Sequence) -> tuple[int, ...]:
    return enc.encode_row(row)


# ---------------------------------------------------------------------------
# Output class codec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutputCodec:
    n_classes: int
    bits: int
    codes: tuple[tuple[int, ...], ...]  # codes[c] is the O-bit code, MSB first

    def __post_init__(self):
        if len(set(self.codes)) != len(self.codes):
            raise EncodingError("class codes must be distinct")
        if self.bits < ceil(log2(max(self.n_classes, 2))):
            raise EncodingError(
                f"{self.bits} output bits cannot distinguish {self.n_classes} classes"
            )


def make_output_codec(n_classes: int, bits_per_output: int | None = None) -> OutputCodec:
    """Class c maps to the big-endian binary of c, zero-padded to the bit width."""
    if n_classes < 2:
        raise EncodingError("need at least 2 classes")
    needed = max(1, ceil(log2(n_classes)))
    bits = needed if bits_per_output is None else bits_per_output
    if bits < needed:
        raise EncodingError(
            f"bits_per_output={bits} too small for {n_classes} classes (need {needed})"
        )
    codes = tuple(
        tuple((c >> (bits - 1 - k)) & 1 for k in range(bits)) for c in range(n_classes)
    )
    return OutputCodec(n_classes, bits, codes)


@lru_cache(maxsize=64)
def _decode_table(codec: OutputCodec) -> tuple[int, ...]:
    """Predicted class for every possible output bit pattern.

    Pattern p reads the output bits as a big-endian integer.  Exact code
    matches decode to their class; anything else decodes to the Hamming-nearest
    code, ties broken toward the lowest class index.
    """
    exact = {}
    for c, code in enumerate(codec.codes):
        v = 0
        for bit in code:
            v = (v << 1) | bit
        exact[v] = c
    table = []
    for p in range(2 ** codec.bits):
        if p in exact:
            table.append(exact[p])
            continue
        best_c, best_d = 0, codec.bits + 1
        for v, c in sorted(exact.items(), key=lambda kv: kv[1]):
            d = (p ^ v).bit_count()
            if d < best_d:
                best_c, best_d = c, d
        table.append(best_c)
    return tuple(table)


def decode_prediction(output_bits: Sequence[int], codec: OutputCodec) -> int:
    if len(output_bits) != codec.bits:
        raise EncodingError(
            f"prediction has {len(output_bits)} bits, codec expects {codec.bits}"
        )
    p = 0
    for bit in output_bits:
        p = (p << 1) | (1 if bit else 0)
    return _decode_table(codec)[p]


# ---------------------------------------------------------------------------
# Encoded datasets and packed partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """One split of an encoded dataset, packed for bit-parallel evaluation.

    ``columns[i]`` is a python int whose bit r is input bit i of the
    partition's r-th row.  ``class_masks[c]`` marks the rows of class c.
    """

    name: str
    columns: tuple[int, ...]
    labels: np.ndarray
    n_rows: int
    codec: OutputCodec
    class_masks: tuple[int, ...]

    @property
    def row_mask(self) -> int:
        return (1 << self.n_rows) - 1


def _pack_partition(name: str, bits: np.ndarray, labels: np.ndarray,
                    codec: OutputCodec, n_classes: int) -> Partition:
    n_rows, total_bits = bits.shape
    columns = []
    for i in range(total_bits):
        raw = np.packbits(bits[:, i], bitorder="little").tobytes()
        columns.append(int.from_bytes(raw, "little"))
    class_masks = []
    for c in range(n_classes):
        raw = np.packbits(labels == c, bitorder="little").tobytes()
        class_masks.append(int.from_bytes(raw, "little"))
    return Partition(name, tuple(columns), labels, n_rows, codec, tuple(class_masks))


@dataclass(frozen=True)
class EncodedDataset:
    """Bit matrix of encoded rows plus labels, partitioned train/validation/test."""

    bits: np.ndarray          # (n_rows, total_bits) bool
    labels: np.ndarray        # (n_rows,) int class indices
    target_bits: np.ndarray   # (n_rows, O) bool class-code bits
    codec: OutputCodec
    split: SplitDataset
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...] = ()
    _partitions: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]

    @property
    def total_bits(self) -> int:
        return self.bits.shape[1]

    def partition(self, name: str) -> Partition:
        part = self._partitions.get(name)
        if part is None:
            idx = {"train": self.split.train, "validation": self.split.validation,
                   "test": self.split.test}[name]
            idx = np.asarray(idx, dtype=int)
            part = _pack_partition(name, self.bits[idx], self.labels[idx],
                                   self.codec, self.codec.n_classes)
            self._partitions[name] = part
        return part


def encode_dataset(enc: FittedEncoder, raw: RawDataset, split: SplitDataset,
                   codec: OutputCodec) -> EncodedDataset:
    """Encode every row; semantics equal row-by-row encode_row."""
    n = raw.n_rows
    bits = np.zeros((n, enc.total_bits), dtype=bool)
    for r in range(n):
        bits[r] = enc.encode_row(raw.row(r))
    labels = np.asarray(raw.labels, dtype=int)
    target_bits = np.array([codec.codes[c] for c in labels], dtype=bool)
    return EncodedDataset(bits, labels, target_bits, codec, split,
                          tuple(raw.class_names), tuple(raw.feature_names))


def dataset_from_bits(bits: np.ndarray, labels: Sequence[int], codec: OutputCodec,
                      split: SplitDataset, class_names: Sequence[str] | None = None,
                      ) -> EncodedDataset:
    """Build an EncodedDataset directly from a bit matrix (truth-table tasks)."""
    bits = np.asarray(bits, dtype=bool)
    labels = np.asarray(labels, dtype=int)
    if class_names is None:
        class_names = tuple(str(c) for c in range(codec.n_classes))
    target_bits = np.array([codec.codes[c] for c in labels], dtype=bool)
    return EncodedDataset(bits, labels, target_bits, codec, split, tuple(class_names))


# ---------------------------------------------------------------------------
# Persistence: {strategy, bits_per_input, features: [...], output_codec: {...}}
# ---------------------------------------------------------------------------

def encoder_to_json(enc: FittedEncoder, codec: OutputCodec) -> str:
    features = []
    for fe in enc.features:
        fd: dict = {"name": fe.name, "kind": fe.kind, "impute": fe.impute}
        if fe.kind == "numeric":
            fd["thresholds"] = list(fe.thresholds)
        else:
            fd["category_map"] = dict(sorted(fe.category_map.items()))
        if fe.degenerate:
            fd["degenerate"] = True
        features.append(fd)
    doc = {
        "strategy": enc.spec.strategy,
        "bits_per_input": enc.spec.bits_per_input,
        "features": features,
        "output_codec": {
            "n_classes": codec.n_classes,
            "bits": codec.bits,
            "codes": ["".join(str(b) for b in code) for code in codec.codes],
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def encoder_from_json(text: str) -> tuple[FittedEncoder, OutputCodec]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise EncodingError(f"invalid encoder JSON: {e}") from None
    try:
        spec = EncoderSpec(doc["strategy"], doc["bits_per_input"])
        features = []
        for fd in doc["features"]:
            features.append(FeatureEncoder(
                name=fd["name"],
                kind=fd["kind"],
                thresholds=tuple(fd.get("thresholds", ())),
                category_map=dict(fd.get("category_map", {})),
                impute=fd["impute"],
                degenerate=bool(fd.get("degenerate", False)),
            ))
        oc = doc["output_codec"]
        codes = tuple(tuple(int(ch) for ch in s) for s in oc["codes"])
        codec = OutputCodec(oc["n_classes"], oc["bits"], codes)
    except (KeyError, TypeError) as e:
        raise EncodingError(f"encoder JSON missing or malformed field: {e}") from None
    return FittedEncoder(spec, tuple(features)), codec
