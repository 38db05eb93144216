"""Acyclic gate-graph genotype: inputs, two-input function nodes, outputs.

Node references are plain ints in a single id space: ids ``0 .. I-1`` are the
circuit inputs, id ``I + j`` is function node ``j``.  Every function node
stores an ordered tuple of argument references (slots); outputs each reference
a single node.  Edges are oriented consumer -> producer, so reachability
questions ("is there a path v -> s?") follow argument slots.

Graphs are treated as immutable once built; mutation constructs patched
copies.  Evaluation is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np


class CircuitError(Exception):
    """Raised for malformed circuit files or invariant violations."""


class GateFunction(NamedTuple):
    name: str
    table: tuple[int, int, int, int]  # indexed by in0*2 + in1: (b00, b01, b10, b11)
    nand2_weight: float = 1.0

    @property
    def arity(self) -> int:
        return 2


# Conventional CMOS NAND2-equivalent weights; override by building a custom set.
AND = GateFunction("and", (0, 0, 0, 1), 2.0)
OR = GateFunction("or", (0, 1, 1, 1), 3.0)
NAND = GateFunction("nand", (1, 1, 1, 0), 1.0)
NOR = GateFunction("nor", (1, 0, 0, 0), 1.0)
XOR = GateFunction("xor", (0, 1, 1, 0), 4.0)


@dataclass(frozen=True)
class FunctionSet:
    """Ordered gate vocabulary a circuit may draw from."""

    gates: tuple[GateFunction, ...]

    def __post_init__(self):
        if not self.gates:
            raise CircuitError("function set must not be empty")
        names = [g.name for g in self.gates]
        if len(set(names)) != len(names):
            raise CircuitError(f"duplicate gate names in function set: {names}")

    def __len__(self) -> int:
        return len(self.gates)

    def __getitem__(self, idx: int) -> GateFunction:
        return self.gates[idx]

    def index_of(self, name: str) -> int:
        for i, g in enumerate(self.gates):
            if g.name == name:
                return i
        raise CircuitError(f"gate {name!r} not in function set")

    @property
    def max_weight(self) -> float:
        return max(g.nand2_weight for g in self.gates)


FULL_SET = FunctionSet((AND, OR, NAND, NOR))
NAND_SET = FunctionSet((NAND,))

NAMED_FUNCTION_SETS = {"full": FULL_SET, "nand": NAND_SET}


def function_set_by_name(name: str) -> FunctionSet:
    try:
        return NAMED_FUNCTION_SETS[name]
    except KeyError:
        raise CircuitError(
            f"unknown function set {name!r} (choose from {sorted(NAMED_FUNCTION_SETS)})"
        ) from None


class Node(NamedTuple):
    fn: int                   # index into FunctionSet.gates
    args: tuple[int, ...]     # global node ids, one per slot


@dataclass
class CircuitGraph:
    """The genotype: ``input_count`` inputs, ordered function nodes, outputs."""

    input_count: int
    nodes: list[Node]
    output_targets: list[int]

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def output_count(self) -> int:
        return len(self.output_targets)

    @property
    def total_ids(self) -> int:
        return self.input_count + len(self.nodes)

    @property
    def edge_count(self) -> int:
        # function-node slots plus one edge per output
        return sum(len(nd.args) for nd in self.nodes) + len(self.output_targets)

    def copy(self) -> "CircuitGraph":
        return CircuitGraph(self.input_count, list(self.nodes), list(self.output_targets))


def validate(g: CircuitGraph, fs: FunctionSet) -> str | None:
    """Check reference ranges and acyclicity; return a violation string or None.

    Total decision procedure: never raises on a structurally complete graph.
    """
    limit = g.total_ids
    if g.input_count < 0:
        return f"negative input count {g.input_count}"
    for j, nd in enumerate(g.nodes):
        if not 0 <= nd.fn < len(fs):
            return f"node n{j}: gate index {nd.fn} out of range for function set of {len(fs)}"
        if len(nd.args) != fs[nd.fn].arity:
            return f"node n{j}: {len(nd.args)} slots for arity-{fs[nd.fn].arity} gate"
        for ref in nd.args:
            if not 0 <= ref < limit:
                return f"node n{j}: dangling reference {ref} (valid ids are 0..{limit - 1})"
    for k, ref in enumerate(g.output_targets):
        if not 0 <= ref < limit:
            return f"output {k}: dangling reference {ref} (valid ids are 0..{limit - 1})"

    # Iterative DFS over consumer->producer arcs; colour 1 = on stack, 2 = done.
    colour = [0] * len(g.nodes)
    I = g.input_count
    for start in range(len(g.nodes)):
        if colour[start]:
            continue
        stack: list[tuple[int, int]] = [(start, 0)]
        colour[start] = 1
        path = [start]
        while stack:
            j, slot = stack[-1]
            args = g.nodes[j].args
            if slot == len(args):
                stack.pop()
                path.pop()
                colour[j] = 2
                continue
            stack[-1] = (j, slot + 1)
            ref = args[slot]
            if ref < I:
                continue
            child = ref - I
            if colour[child] == 1:
                cycle = path[path.index(child):] + [child]
                return "cycle: " + " -> ".join(f"n{c}" for c in cycle)
            if colour[child] == 0:
                colour[child] = 1
                stack.append((child, 0))
                path.append(child)
    return None


def check(g: CircuitGraph, fs: FunctionSet) -> None:
    """Raise CircuitError on the first validate() violation."""
    violation = validate(g, fs)
    if violation is not None:
        raise CircuitError(violation)


@dataclass(frozen=True)
class ActiveSet:
    """Function nodes reachable (via slots) from some output target."""

    mask: tuple[bool, ...]
    order: tuple[int, ...]  # topological, producers before consumers

    @property
    def count(self) -> int:
        return len(self.order)

    def __contains__(self, node_index: int) -> bool:
        return self.mask[node_index]


def active_set(g: CircuitGraph) -> ActiveSet:
    """Reverse-reachability from the outputs, with a topological order.

    The returned order lists active function-node indices so that every node
    appears after everything it references.
    """
    I = g.input_count
    mask = [False] * len(g.nodes)
    order: list[int] = []
    for ref in g.output_targets:
        if ref < I or mask[ref - I]:
            continue
        # DFS postorder from this output's target
        stack: list[tuple[int, int]] = [(ref - I, 0)]
        mask[ref - I] = True
        while stack:
            j, slot = stack[-1]
            args = g.nodes[j].args
            if slot == len(args):
                stack.pop()
                order.append(j)
                continue
            stack[-1] = (j, slot + 1)
            child = args[slot] - I
            if child >= 0 and not mask[child]:
                mask[child] = True
                stack.append((child, 0))
    return ActiveSet(tuple(mask), tuple(order))


def count_active_gates(g: CircuitGraph) -> int:
    return active_set(g).count


def nand2_equivalent(g: CircuitGraph, fs: FunctionSet) -> float:
    return sum(fs[g.nodes[j].fn].nand2_weight for j in active_set(g).order)


def evaluate(g: CircuitGraph, fs: FunctionSet, input_bits: Sequence[int]) -> list[int]:
    """Scalar reference evaluator: one bit vector in, one bit vector out."""
    if len(input_bits) != g.input_count:
        raise CircuitError(
            f"expected {g.input_count} input bits, got {len(input_bits)}"
        )
    I = g.input_count
    values: dict[int, int] = {i: int(b) & 1 for i, b in enumerate(input_bits)}
    for j in active_set(g).order:
        nd = g.nodes[j]
        a, b = (values[r] for r in nd.args)
        values[I + j] = fs[nd.fn].table[a * 2 + b]
    return [values[ref] for ref in g.output_targets]


# ---------------------------------------------------------------------------
# Bit-parallel evaluation: a column is a python int whose bit r is row r.
# ---------------------------------------------------------------------------

def _packed_op(table: tuple[int, int, int, int]) -> Callable[[int, int, int], int]:
    """Specialise a 4-entry truth table into a packed-column operation."""
    if table == (0, 0, 0, 1):
        return lambda a, b, mask: a & b
    if table == (0, 1, 1, 1):
        return lambda a, b, mask: a | b
    if table == (1, 1, 1, 0):
        return lambda a, b, mask: mask & ~(a & b)
    if table == (1, 0, 0, 0):
        return lambda a, b, mask: mask & ~(a | b)
    if table == (0, 1, 1, 0):
        return lambda a, b, mask: a ^ b

    b00, b01, b10, b11 = table

    def op(a: int, b: int, mask: int) -> int:
        out = 0
        if b11:
            out |= a & b
        if b10:
            out |= a & ~b
        if b01:
            out |= ~a & b
        if b00:
            out |= ~(a | b)
        return out & mask

    return op


_OP_CACHE: dict[tuple[int, int, int, int], Callable[[int, int, int], int]] = {}


def packed_op(table: tuple[int, int, int, int]) -> Callable[[int, int, int], int]:
    op = _OP_CACHE.get(table)
    if op is None:
        op = _OP_CACHE[table] = _packed_op(table)
    return op


def evaluate_columns(
    g: CircuitGraph,
    fs: FunctionSet,
    input_columns: Sequence[int],
    n_rows: int,
    forced: dict[int, int] | None = None,
) -> list[int]:
    """Evaluate all rows at once over packed bit columns.

    ``input_columns[i]`` holds input bit i for every row (bit r = row r).
    ``forced`` pins function nodes to a stuck value: {node_index: 0 or 1}.
    Returns one packed column per output.
    """
    if len(input_columns) != g.input_count:
        raise CircuitError(
            f"expected {g.input_count} input columns, got {len(input_columns)}"
        )
    I = g.input_count
    mask = (1 << n_rows) - 1
    values: dict[int, int] = dict(enumerate(input_columns))
    for j in active_set(g).order:
        if forced is not None and j in forced:
            values[I + j] = mask if forced[j] else 0
            continue
        nd = g.nodes[j]
        a = values[nd.args[0]]
        b = values[nd.args[1]]
        values[I + j] = packed_op(fs[nd.fn].table)(a, b, mask)
    return [values[ref] for ref in g.output_targets]


def pack_column(bits: Sequence[int] | np.ndarray) -> int:
    """Pack a per-row bit sequence into a single int column (bit r = row r)."""
    col = 0
    for r, b in enumerate(bits):
        if b:
            col |= 1 << r
    return col


def unpack_column(col: int, n_rows: int) -> np.ndarray:
    raw = col.to_bytes((n_rows + 7) // 8, "little")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits[:n_rows].astype(bool)


def evaluate_batch(g: CircuitGraph, fs: FunctionSet, data) -> np.ndarray:
    """Per-row predictions over a dataset partition.

    ``data`` is anything with ``columns`` (packed input bit columns) and
    ``n_rows`` -- see ``evogate.encoding.Partition``.  Bit-exact equal to
    mapping :func:`evaluate` over the partition's rows.  Returns a boolean
    array of shape (n_rows, output_count).
    """
    cols = evaluate_columns(g, fs, data.columns, data.n_rows)
    out = np.zeros((data.n_rows, len(cols)), dtype=bool)
    for k, col in enumerate(cols):
        out[:, k] = unpack_column(col, data.n_rows)
    return out


# ---------------------------------------------------------------------------
# Serialization.  Schema (field names are part of the file contract):
#   {"inputs": I, "outputs": O,
#    "function_set": [{"name", "table": [b00,b01,b10,b11], "nand2": w}],
#    "nodes": [{"fn": idx, "args": [ref, ref]}],
#    "output_targets": [ref]}
# where ref = {"in": i} or {"node": j}.  An optional "meta" key is ignored.
# ---------------------------------------------------------------------------

def _ref_to_json(ref: int, input_count: int) -> dict:
    if ref < input_count:
        return {"in": ref}
    return {"node": ref - input_count}


def _ref_from_json(obj, input_count: int, n_nodes: int, where: str) -> int:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise CircuitError(f"{where}: reference must be {{'in': i}} or {{'node': j}}")
    if "in" in obj:
        i = obj["in"]
        if not isinstance(i, int) or not 0 <= i < input_count:
            raise CircuitError(f"{where}: input reference {i!r} out of range 0..{input_count - 1}")
        return i
    if "node" in obj:
        j = obj["node"]
        if not isinstance(j, int) or not 0 <= j < n_nodes:
            raise CircuitError(f"{where}: node reference {j!r} out of range 0..{n_nodes - 1}")
        return input_count + j
    raise CircuitError(f"{where}: reference must be {{'in': i}} or {{'node': j}}")


def serialize(g: CircuitGraph, fs: FunctionSet, meta: dict | None = None) -> str:
    doc = {
        "inputs": g.input_count,
        "outputs": g.output_count,
        "function_set": [
            {"name": gate.name, "table": list(gate.table), "nand2": gate.nand2_weight}
            for gate in fs.gates
        ],
        "nodes": [
            {"fn": nd.fn, "args": [_ref_to_json(r, g.input_count) for r in nd.args]}
            for nd in g.nodes
        ],
        "output_targets": [_ref_to_json(r, g.input_count) for r in g.output_targets],
    }
    if meta is not None:
        doc["meta"] = meta
    return json.dumps(doc, indent=2) + "\n"


def deserialize(text: str) -> tuple[CircuitGraph, FunctionSet]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CircuitError(f"invalid circuit JSON: {e}") from None
    if not isinstance(doc, dict):
        raise CircuitError("circuit file must be a JSON object")
    required = {"inputs", "outputs", "function_set", "nodes", "output_targets"}
    missing = required - doc.keys()
    if missing:
        raise CircuitError(f"circuit file missing keys: {sorted(missing)}")
    unknown = doc.keys() - required - {"meta"}
    if unknown:
        raise CircuitError(f"circuit file has unknown keys: {sorted(unknown)}")

    I = doc["inputs"]
    if not isinstance(I, int) or I < 0:
        raise CircuitError(f"'inputs' must be a non-negative integer, got {I!r}")
    gates = []
    for k, gd in enumerate(doc["function_set"]):
        try:
            table = tuple(int(b) & 1 for b in gd["table"])
            if len(table) != 4:
                raise ValueError
            gates.append(GateFunction(str(gd["name"]), table, float(gd.get("nand2", 1.0))))
        except (KeyError, TypeError, ValueError):
            raise CircuitError(f"function_set[{k}] malformed: {gd!r}") from None
    fs = FunctionSet(tuple(gates))

    n_nodes = len(doc["nodes"])
    nodes = []
    for j, nd in enumerate(doc["nodes"]):
        if not isinstance(nd, dict) or "fn" not in nd or "args" not in nd:
            raise CircuitError(f"node n{j} malformed: {nd!r}")
        fn = nd["fn"]
        if not isinstance(fn, int) or not 0 <= fn < len(fs):
            raise CircuitError(f"node n{j}: gate index {fn!r} out of range")
        args = tuple(
            _ref_from_json(a, I, n_nodes, f"node n{j} arg {s}")
            for s, a in enumerate(nd["args"])
        )
        nodes.append(Node(fn, args))
    outputs = [
        _ref_from_json(o, I, n_nodes, f"output {k}")
        for k, o in enumerate(doc["output_targets"])
    ]
    if doc["outputs"] != len(outputs):
        raise CircuitError(
            f"'outputs' is {doc['outputs']} but {len(outputs)} output_targets given"
        )
    g = CircuitGraph(I, nodes, outputs)
    check(g, fs)
    return g, fs
