"""Deterministic code generation: Verilog netlists, DOT graphs, run summaries,
plus a structural parser for the emitted Verilog subset that closes the
emission-equivalence loop without an external simulator.

The Verilog template::

    module <name>(input wire [I-1:0] x, output wire [O-1:0] y);
      wire n<j>;
      assign n<j> = <expr>;
      ...
      assign y[k] = <ref>;
    endmodule

with one wire/assign pair per active function node in topological order.
Gates with the four standard truth tables render as operator expressions;
any other table renders as a sum of products.  Inactive nodes never appear.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .circuit import (
    CircuitGraph,
    CircuitError,
    FULL_SET,
    FunctionSet,
    Node,
    active_set,
    check,
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

_TABLE_AND = (0, 0, 0, 1)
_TABLE_OR = (0, 1, 1, 1)
_TABLE_NAND = (1, 1, 1, 0)
_TABLE_NOR = (1, 0, 0, 0)


@dataclass(frozen=True)
class VerilogOptions:
    module_name: str = "classifier"
    include_port_comments: bool = False
    input_labels: tuple[str, ...] | None = None   # provenance per x bit
    output_labels: tuple[str, ...] | None = None  # provenance per y bit
    header_comments: tuple[str, ...] = ()         # extra leading // lines

    def __post_init__(self):
        if not _IDENT_RE.match(self.module_name):
            raise ValueError(f"invalid Verilog module name {self.module_name!r}")


def _render_ref(ref: int, input_count: int) -> str:
    if ref < input_count:
        return f"x[{ref}]"
    return f"n{ref - input_count}"


def _render_expr(table: tuple[int, int, int, int], a: str, b: str) -> str:
    if table == _TABLE_AND:
        return f"{a} & {b}"
    if table == _TABLE_OR:
        return f"{a} | {b}"
    if table == _TABLE_NAND:
        return f"~({a} & {b})"
    if table == _TABLE_NOR:
        return f"~({a} | {b})"
    minterms = []
    for idx, lit_a, lit_b in ((0, f"~{a}", f"~{b}"), (1, f"~{a}", b),
                              (2, a, f"~{b}"), (3, a, b)):
        if table[idx]:
            minterms.append(f"{lit_a} & {lit_b}")
    if not minterms:
        return "1'b0"
    if len(minterms) == 4:
        return "1'b1"
    if len(minterms) == 1:
        return minterms[0]
    return " | ".join(f"({m})" for m in minterms)


def emit_verilog(g: CircuitGraph, fs: FunctionSet,
                 opts: VerilogOptions | None = None) -> str:
    """Render the active subgraph as a synthesizable Verilog-2001 module."""
    opts = opts or VerilogOptions()
    act = active_set(g)
    I, O = g.input_count, g.output_count
    lines = [f"// {c}" for c in opts.header_comments]
    lines.append(f"module {opts.module_name}(input wire [{I - 1}:0] x, "
                 f"output wire [{O - 1}:0] y);")
    lines.append("  // y[k] carries class-code bit k, most significant bit first")
    if opts.include_port_comments:
        if opts.input_labels:
            for i, label in enumerate(opts.input_labels):
                lines.append(f"  // x[{i}]: {label}")
        if opts.output_labels:
            for k, label in enumerate(opts.output_labels):
                lines.append(f"  // y[{k}]: {label}")
    for j in act.order:
        nd = g.nodes[j]
        a = _render_ref(nd.args[0], I)
        b = _render_ref(nd.args[1], I)
        lines.append(f"  wire n{j};")
        lines.append(f"  assign n{j} = {_render_expr(fs[nd.fn].table, a, b)};")
    for k, ref in enumerate(g.output_targets):
        lines.append(f"  assign y[{k}] = {_render_ref(ref, I)};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subset parser
# ---------------------------------------------------------------------------

class VerilogParseError(Exception):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<comment>//[^\n]*)"
    r"|(?P<bitlit>1'b[01])"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<number>\d+)"
    r"|(?P<sym>[()\[\]:;,=&|~])"
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise VerilogParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    return tokens


class _Parser:
    """Recursive-descent parser for the emitted module grammar.

    Wires declare function-node slots; expressions beyond the four standard
    gate forms are lowered onto {and, or, nand, nor} with extra anonymous
    nodes, so the reconstructed graph is semantically equivalent rather than
    structurally identical.
    """

    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.input_count = 0
        self.output_count = 0
        self.nodes: list[Node | None] = []
        self.wire_index: dict[str, int] = {}
        self.assigned: set[str] = set()
        self.outputs: dict[int, int] = {}

    # -- token plumbing ----------------------------------------------------

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            raise VerilogParseError("unexpected end of file",
                                    last.line if last else 1,
                                    last.col if last else 1)
        self.pos += 1
        return tok

    def _expect(self, text: str) -> _Token:
        tok = self._next()
        if tok.text != text:
            raise VerilogParseError(f"expected {text!r}, found {tok.text!r}",
                                    tok.line, tok.col)
        return tok

    def _expect_number(self) -> int:
        tok = self._next()
        if tok.kind != "number":
            raise VerilogParseError(f"expected a number, found {tok.text!r}",
                                    tok.line, tok.col)
        return int(tok.text)

    # -- node construction ---------------------------------------------------

    def _new_node(self, gate_index: int, a: int, b: int) -> int:
        self.nodes.append(Node(gate_index, (a, b)))
        return self.input_count + len(self.nodes) - 1

    def _lower(self, ast) -> int:
        """Reduce an expression tree to a node reference, adding gates."""
        kind = ast[0]
        if kind == "ref":
            return ast[1]
        if kind == "lit":
            a = 0  # constants synthesize from x[0]
            not_a = self._new_node(_FS_NAND, a, a)
            if ast[1] == 0:
                return self._new_node(_FS_AND, a, not_a)
            return self._new_node(_FS_NAND, a, not_a)
        if kind == "not":
            child = ast[1]
            if child[0] == "and":
                return self._new_node(_FS_NAND, self._lower(child[1]), self._lower(child[2]))
            if child[0] == "or":
                return self._new_node(_FS_NOR, self._lower(child[1]), self._lower(child[2]))
            u = self._lower(child)
            return self._new_node(_FS_NAND, u, u)
        if kind == "and":
            return self._new_node(_FS_AND, self._lower(ast[1]), self._lower(ast[2]))
        if kind == "or":
            return self._new_node(_FS_OR, self._lower(ast[1]), self._lower(ast[2]))
        raise AssertionError(f"unknown ast kind {kind}")

    def _place(self, ast, slot: int) -> None:
        """Materialize an expression at an existing wire's node slot."""
        kind = ast[0]
        if kind == "and":
            self.nodes[slot] = Node(_FS_AND, (self._lower(ast[1]), self._lower(ast[2])))
        elif kind == "or":
            self.nodes[slot] = Node(_FS_OR, (self._lower(ast[1]), self._lower(ast[2])))
        elif kind == "not" and ast[1][0] == "and":
            self.nodes[slot] = Node(_FS_NAND, (self._lower(ast[1][1]), self._lower(ast[1][2])))
        elif kind == "not" and ast[1][0] == "or":
            self.nodes[slot] = Node(_FS_NOR, (self._lower(ast[1][1]), self._lower(ast[1][2])))
        elif kind == "not":
            u = self._lower(ast[1])
            self.nodes[slot] = Node(_FS_NAND, (u, u))
        else:
            r = self._lower(ast)
            self.nodes[slot] = Node(_FS_OR, (r, r))  # identity via a | a

    # -- grammar -------------------------------------------------------------

    def parse(self) -> tuple[CircuitGraph, FunctionSet]:
        self._expect("module")
        name = self._next()
        if name.kind != "ident":
            raise VerilogParseError(f"expected module name, found {name.text!r}",
                                    name.line, name.col)
        self._expect("(")
        self._expect("input")
        self._expect("wire")
        self.input_count = self._parse_range() + 1
        self._expect("x")
        self._expect(",")
        self._expect("output")
        self._expect("wire")
        self.output_count = self._parse_range() + 1
        self._expect("y")
        self._expect(")")
        self._expect(";")

        while True:
            tok = self._next()
            if tok.text == "endmodule":
                break
            if tok.text == "wire":
                self._parse_wire_decl()
            elif tok.text == "assign":
                self._parse_assign()
            else:
                raise VerilogParseError(f"unsupported token {tok.text!r}",
                                        tok.line, tok.col)

        for wire_name in self.wire_index:
            if wire_name not in self.assigned:
                raise VerilogParseError(f"wire {wire_name} declared but never assigned")
        missing = [k for k in range(self.output_count) if k not in self.outputs]
        if missing:
            raise VerilogParseError(f"outputs never assigned: {missing}")
        g = CircuitGraph(
            self.input_count,
            list(self.nodes),  # type: ignore[arg-type]
            [self.outputs[k] for k in range(self.output_count)],
        )
        try:
            check(g, FULL_SET)
        except CircuitError as e:
            raise VerilogParseError(str(e)) from None
        return g, FULL_SET

    def _parse_range(self) -> int:
        self._expect("[")
        hi = self._expect_number()
        self._expect(":")
        lo = self._expect_number()
        self._expect("]")
        if lo != 0:
            raise VerilogParseError(f"vector ranges must end at 0, found [{hi}:{lo}]")
        return hi

    def _parse_wire_decl(self) -> None:
        tok = self._next()
        if tok.kind != "ident" or not re.fullmatch(r"n\d+", tok.text):
            raise VerilogParseError(f"expected a wire name n<j>, found {tok.text!r}",
                                    tok.line, tok.col)
        if tok.text in self.wire_index:
            raise VerilogParseError(f"wire {tok.text} declared twice", tok.line, tok.col)
        self.nodes.append(None)
        self.wire_index[tok.text] = self.input_count + len(self.nodes) - 1
        self._expect(";")

    def _parse_assign(self) -> None:
        tok = self._next()
        if tok.text == "y":
            self._expect("[")
            k = self._expect_number()
            self._expect("]")
            if not 0 <= k < self.output_count:
                raise VerilogParseError(f"output index y[{k}] out of range",
                                        tok.line, tok.col)
            if k in self.outputs:
                raise VerilogParseError(f"y[{k}] assigned twice", tok.line, tok.col)
            self._expect("=")
            ast = self._parse_expr()
            self._expect(";")
            self.outputs[k] = self._lower(ast)
            return
        if tok.kind == "ident" and tok.text in self.wire_index:
            name = tok.text
            if name in self.assigned:
                raise VerilogParseError(f"wire {name} assigned twice", tok.line, tok.col)
            self._expect("=")
            ast = self._parse_expr()
            self._expect(";")
            slot = self.wire_index[name] - self.input_count
            self._place(ast, slot)
            self.assigned.add(name)
            return
        raise VerilogParseError(f"assignment to undeclared wire {tok.text!r}",
                                tok.line, tok.col)

    def _parse_expr(self):
        ast = self._parse_and()
        while self._peek() is not None and self._peek().text == "|":
            self._next()
            ast = ("or", ast, self._parse_and())
        return ast

    def _parse_and(self):
        ast = self._parse_unary()
        while self._peek() is not None and self._peek().text == "&":
            self._next()
            ast = ("and", ast, self._parse_unary())
        return ast

    def _parse_unary(self):
        tok = self._next()
        if tok.text == "~":
            return ("not", self._parse_unary())
        if tok.text == "(":
            ast = self._parse_expr()
            self._expect(")")
            return ast
        if tok.kind == "bitlit":
            return ("lit", int(tok.text[-1]))
        if tok.text == "x":
            self._expect("[")
            i = self._expect_number()
            self._expect("]")
            if not 0 <= i < self.input_count:
                raise VerilogParseError(f"input x[{i}] out of range", tok.line, tok.col)
            return ("ref", i)
        if tok.kind == "ident" and tok.text in self.wire_index:
            return ("ref", self.wire_index[tok.text])
        raise VerilogParseError(f"unexpected token {tok.text!r} in expression",
                                tok.line, tok.col)


_FS_AND = FULL_SET.index_of("and")
_FS_OR = FULL_SET.index_of("or")
_FS_NAND = FULL_SET.index_of("nand")
_FS_NOR = FULL_SET.index_of("nor")


def parse_verilog_subset(text: str) -> tuple[CircuitGraph, FunctionSet]:
    """Parse text produced by :func:`emit_verilog` back into a circuit.

    The reconstructed graph is semantically equivalent to the emitted active
    subgraph.  Anything outside the emitted grammar raises VerilogParseError
    with the offending token's line and column.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# DOT and text reports
# ---------------------------------------------------------------------------

def emit_dot(g: CircuitGraph, fs: FunctionSet, name: str = "circuit") -> str:
    """Graphviz digraph; inactive function nodes are filled grey.

    Arcs run producer -> consumer for readability (the reverse of the stored
    slot orientation).
    """
    act = active_set(g)
    I = g.input_count
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for i in range(I):
        lines.append(f'  i{i} [shape=box, label="x[{i}]"];')
    for j, nd in enumerate(g.nodes):
        style = "" if act.mask[j] else ", style=filled, fillcolor=grey"
        lines.append(f'  n{j} [label="{fs[nd.fn].name}"{style}];')
    for k in range(g.output_count):
        lines.append(f'  o{k} [shape=box, peripheries=2, label="y[{k}]"];')

    def node_id(ref: int) -> str:
        return f"i{ref}" if ref < I else f"n{ref - I}"

    for j, nd in enumerate(g.nodes):
        for ref in nd.args:
            lines.append(f"  {node_id(ref)} -> n{j};")
    for k, ref in enumerate(g.output_targets):
        lines.append(f"  {node_id(ref)} -> o{k};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit_report(rr, config: dict | None = None) -> str:
    """Human-readable run summary (see evolve.RunReport)."""
    lines = []
    lines.append("run report")
    lines.append("==========")
    lines.append(f"termination        : {rr.termination_reason} "
                 f"(generation {rr.generations_run} of max "
                 f"{rr.hyperparameters.max_generations})")
    lines.append(f"seed               : {rr.seed}")
    lines.append(f"input bits         : {rr.input_bits}")
    lines.append(f"output bits        : {rr.output_bits}")
    lines.append(f"active gates       : {rr.active_gates} of {rr.hyperparameters.n}")
    lines.append(f"nand2 equivalent   : {rr.nand2:g}")
    lines.append(f"neutral accepts    : {rr.neutral_replacements}")
    lines.append(f"classes            : {', '.join(rr.class_names)}")
    lines.append("")
    lines.append(f"{'partition':<12} {'balanced_acc':>12} {'accuracy':>9}")
    for part in ("train", "validation", "test"):
        m = rr.metrics.get(part)
        if m is None:
            continue
        lines.append(f"{part:<12} {m['balanced_accuracy']:>12.4f} {m['accuracy']:>9.4f}")
    lines.append("")
    hp = rr.hyperparameters.echo()
    hp_str = " ".join(f"{k}={v}" for k, v in hp.items() if k != "function_set")
    lines.append(f"hyperparameters    : {hp_str}")
    lines.append(f"function set       : {', '.join(hp['function_set'])}")
    for w in rr.warnings:
        lines.append(f"warning            : {w}")
    if config is not None:
        import json as _json
        lines.append(f"config             : {_json.dumps(config, sort_keys=True)}")
    return "\n".join(lines) + "\n"
