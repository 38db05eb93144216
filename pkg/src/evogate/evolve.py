"""1+lambda evolution with neutral drift.

Each generation the parent produces ``lam`` mutated children; any child whose
training fitness is >= the parent's may replace it (the best such child wins,
ties broken at random).  Accepting equal-fitness children lets the genotype
random-walk across fitness-equivalent circuits.  The best solution is tracked
on the validation partition and the run stops once that score has not improved
by at least ``gamma`` within ``kappa`` generations, or at the generation cap.

Reproducibility: one master seed.  Child i of generation t draws from a
stream keyed by (seed, t, i), so results are identical for any worker count.
Tie-breaks draw from the per-generation stream (seed, t).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .circuit import (
    CircuitGraph,
    FULL_SET,
    FunctionSet,
    Node,
    count_active_gates,
    nand2_equivalent,
    serialize,
)
from .encoding import EncodedDataset, Partition
from .fitness import evaluate_fitness

SECONDARY_OBJECTIVES = ("none", "gate_count", "nand2", "stuck_at")


@dataclass(frozen=True)
class Hyperparameters:
    lam: int = 4                      # children per generation
    n: int = 300                      # function-node budget
    p: float | None = None            # mutation rate; None means 1/n
    function_set: FunctionSet = FULL_SET
    gamma: float = 0.01               # minimum validation improvement
    kappa: int = 300                  # stall window, generations
    max_generations: int = 8000
    reg_weight: float = 1.0           # a: weight of rho against the secondary X
    secondary: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if not 0.0 < self.effective_p <= 1.0:
            raise ValueError(f"mutation rate must be in (0,1], got {self.effective_p}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if not 0.0 <= self.reg_weight <= 1.0:
            raise ValueError("reg_weight must be in [0,1]")
        if self.secondary not in SECONDARY_OBJECTIVES:
            raise ValueError(
                f"unknown secondary {self.secondary!r} (choose from {SECONDARY_OBJECTIVES})"
            )

    @property
    def effective_p(self) -> float:
        return self.p if self.p is not None else 1.0 / max(self.n, 1)

    def echo(self) -> dict:
        return {
            "lam": self.lam,
            "n": self.n,
            "p": self.effective_p,
            "function_set": [g.name for g in self.function_set.gates],
            "gamma": self.gamma,
            "kappa": self.kappa,
            "max_generations": self.max_generations,
            "reg_weight": self.reg_weight,
            "secondary": self.secondary,
            "seed": self.seed,
        }


def _gen_stream(seed: int, t: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(t,))))


def _child_stream(seed: int, t: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(t, i))))


# ---------------------------------------------------------------------------
# Genetic operators
# ---------------------------------------------------------------------------

def init_random(I: int, O: int, hp: Hyperparameters,
                rng: np.random.Generator) -> CircuitGraph:
    """Random genotype: node v_i wires uniformly to inputs and earlier nodes.

    Forward references only, so the result is always acyclic.
    """
    if I < 1 or O < 1:
        raise ValueError("need at least one input and one output")
    fs = hp.function_set
    nodes = []
    for i in range(hp.n):
        fn = int(rng.integers(len(fs)))
        pool = I + i
        args = tuple(int(rng.integers(pool)) for _ in range(fs[fn].arity))
        nodes.append(Node(fn, args))
    outputs = [int(rng.integers(I + hp.n)) for _ in range(O)]
    return CircuitGraph(I, nodes, outputs)


def mutation_counts(n: int, n_edges: int, p: float,
                    rng: np.random.Generator) -> tuple[int, int]:
    """Independent binomial draws for node and edge point mutations."""
    return int(rng.binomial(n, p)), int(rng.binomial(n_edges, p))


def _mutate_node_inplace(g: CircuitGraph, fs: FunctionSet,
                         rng: np.random.Generator) -> None:
    if g.n == 0 or len(fs) == 1:
        return  # no node, or no alternative gate to mutate to
    j = int(rng.integers(g.n))
    old = g.nodes[j].fn
    r = int(rng.integers(len(fs) - 1))
    new = r if r < old else r + 1
    g.nodes[j] = Node(new, g.nodes[j].args)


def edge_candidates(g: CircuitGraph, edge_index: int) -> list[int]:
    """Legal retarget ids for an edge slot, sorted ascending.

    Edge slots are numbered over function-node slots first (node j slot s is
    edge 2j+s) then output slots.  A candidate must differ from the current
    target and must not reach the owning node through argument slots (that
    would close a cycle).  Output-owned edges exclude only the current target.
    """
    I = g.input_count
    n = g.n
    total = I + n
    node_slots = 2 * n
    excluded = bytearray(total)
    if edge_index < node_slots:
        j, slot = divmod(edge_index, 2)
        t = g.nodes[j].args[slot]
        consumers: dict[int, list[int]] = {}
        for jj, nd in enumerate(g.nodes):
            for a in nd.args:
                consumers.setdefault(a, []).append(jj)
        # everything that can reach node j, including j itself
        s_id = I + j
        excluded[s_id] = 1
        queue = [s_id]
        while queue:
            u = queue.pop()
            for jj in consumers.get(u, ()):
                v = I + jj
                if not excluded[v]:
                    excluded[v] = 1
                    queue.append(v)
    else:
        k = edge_index - node_slots
        t = g.output_targets[k]
    excluded[t] = 1
    return [v for v in range(total) if not excluded[v]]


def _mutate_edge_inplace(g: CircuitGraph, rng: np.random.Generator) -> None:
    n_edges = g.edge_count
    e = int(rng.integers(n_edges))
    cands = edge_candidates(g, e)
    if not cands:
        return  # nowhere legal to retarget: mutation abandoned
    v = cands[int(rng.integers(len(cands)))]
    node_slots = 2 * g.n
    if e < node_slots:
        j, slot = divmod(e, 2)
        args = list(g.nodes[j].args)
        args[slot] = v
        g.nodes[j] = Node(g.nodes[j].fn, tuple(args))
    else:
        g.output_targets[e - node_slots] = v


def mutate_node(g: CircuitGraph, fs: FunctionSet,
                rng: np.random.Generator) -> CircuitGraph:
    """Replace a uniform node's gate with a uniform different gate."""
    child = g.copy()
    _mutate_node_inplace(child, fs, rng)
    return child


def mutate_edge(g: CircuitGraph, rng: np.random.Generator) -> CircuitGraph:
    """Redirect a uniform edge slot to a uniform legal new target."""
    child = g.copy()
    _mutate_edge_inplace(child, rng)
    return child


def mutate(g: CircuitGraph, hp: Hyperparameters,
           rng: np.random.Generator) -> CircuitGraph:
    """Apply binomially many node and edge point mutations in shuffled order."""
    m_n, m_e = mutation_counts(g.n, g.edge_count, hp.effective_p, rng)
    tokens = [0] * m_n + [1] * m_e
    rng.shuffle(tokens)
    child = g.copy()
    fs = hp.function_set
    for tok in tokens:
        if tok == 0:
            _mutate_node_inplace(child, fs, rng)
        else:
            _mutate_edge_inplace(child, rng)
    return child


def select_parent(parent_fitness: float, child_fitnesses: Sequence[float],
                  rng: np.random.Generator) -> int | None:
    """Index of the replacing child, or None if every child is strictly worse.

    A child is eligible when its fitness is >= the parent's; the highest
    eligible fitness wins and exact ties are broken uniformly at random.
    """
    if not child_fitnesses:
        return None
    fmax = max(child_fitnesses)
    if fmax < parent_fitness:
        return None
    winners = [i for i, f in enumerate(child_fitnesses) if f == fmax]
    if len(winners) == 1:
        return winners[0]
    return winners[int(rng.integers(len(winners)))]


# ---------------------------------------------------------------------------
# The run loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    parent_train_fitness: float
    best_val_fitness: float
    active_gates: int
    replacement: str  # "init" | "none" | "improved" | "neutral"


@dataclass
class RunReport:
    termination_reason: str            # "stalled" | "max_generations"
    generations_run: int
    trace: list[GenerationRecord]
    best_circuit: CircuitGraph
    function_set: FunctionSet
    hyperparameters: Hyperparameters
    metrics: dict                      # partition -> {balanced_accuracy, accuracy, R, X, confusion}
    active_gates: int
    nand2: float
    input_bits: int
    output_bits: int
    neutral_replacements: int
    class_names: tuple[str, ...]
    warnings: list[str] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.hyperparameters.seed

    def to_json(self, config: dict | None = None) -> str:
        doc = {
            "termination_reason": self.termination_reason,
            "generations_run": self.generations_run,
            "seed": self.seed,
            "hyperparameters": self.hyperparameters.echo(),
            "metrics": self.metrics,
            "active_gates": self.active_gates,
            "nand2_equivalent": self.nand2,
            "input_bits": self.input_bits,
            "output_bits": self.output_bits,
            "neutral_replacements": self.neutral_replacements,
            "class_names": list(self.class_names),
            "warnings": list(self.warnings),
            "best_circuit": json.loads(serialize(self.best_circuit, self.function_set)),
            "trace": [
                {
                    "generation": r.generation,
                    "parent_train_fitness": r.parent_train_fitness,
                    "best_val_fitness": r.best_val_fitness,
                    "active_gates": r.active_gates,
                    "replacement": r.replacement,
                }
                for r in self.trace
            ],
        }
        if config is not None:
            doc["config"] = config
        return json.dumps(doc, indent=2) + "\n"

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "parent_train_fitness", "best_val_fitness", "active_gates"])
        for r in self.trace:
            w.writerow([r.generation, repr(r.parent_train_fitness),
                        repr(r.best_val_fitness), r.active_gates])
        return buf.getvalue()


FitnessFn = Callable[[CircuitGraph, Partition], float]


def run(data: EncodedDataset, hp: Hyperparameters,
        fitness_fn: FitnessFn | None = None, workers: int = 1) -> RunReport:
    """Evolve a circuit against the encoded dataset's train partition.

    ``fitness_fn(circuit, partition) -> float`` defaults to the regularized
    fitness R under ``hp``; training fitness drives selection, validation
    fitness drives best-solution tracking and the stall terminator.
    """
    fs = hp.function_set
    train = data.partition("train")
    if train.n_rows == 0:
        raise ValueError("training partition is empty")
    warnings: list[str] = []
    val = data.partition("validation")
    if val.n_rows == 0:
        warnings.append(
            "validation partition is empty: best-tracking and termination "
            "fall back to training fitness"
        )
        val = train

    if fitness_fn is None:
        def fitness_fn(g: CircuitGraph, part: Partition) -> float:
            return evaluate_fitness(g, fs, part, hp.reg_weight, hp.secondary, hp.n).R

    seed = hp.seed
    parent = init_random(data.total_bits, data.codec.bits, hp, _gen_stream(seed, 0))
    parent_fit = fitness_fn(parent, train)
    best_val = fitness_fn(parent, val)
    best_circuit = parent
    baseline = best_val
    stall = 0
    neutral = 0
    trace = [GenerationRecord(0, parent_fit, best_val, count_active_gates(parent), "init")]
    termination = "max_generations"
    generations_run = hp.max_generations

    def make_child(t: int, i: int, parent: CircuitGraph) -> tuple[CircuitGraph, float]:
        child = mutate(parent, hp, _child_stream(seed, t, i))
        return child, fitness_fn(child, train)

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, hp.max_generations + 1):
            gen_rng = _gen_stream(seed, t)
            if pool is not None:
                task = lambda i, t=t, parent=parent: make_child(t, i, parent)
                results = list(pool.map(task, range(hp.lam)))
            else:
                results = [make_child(t, i, parent) for i in range(hp.lam)]
            fits = [f for _, f in results]
            pick = select_parent(parent_fit, fits, gen_rng)
            replacement = "none"
            if pick is not None:
                replacement = "neutral" if fits[pick] == parent_fit else "improved"
                if replacement == "neutral":
                    neutral += 1
                parent = results[pick][0]
                parent_fit = fits[pick]
                v = fitness_fn(parent, val)
                if v > best_val:
                    best_val = v
                    best_circuit = parent
            trace.append(GenerationRecord(t, parent_fit, best_val,
                                          count_active_gates(parent), replacement))
            if best_val >= baseline + hp.gamma:
                baseline = best_val
                stall = 0
            else:
                stall += 1
                if stall >= hp.kappa:
                    termination = "stalled"
                    generations_run = t
                    break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    metrics = {}
    for name in ("train", "validation", "test"):
        part = data.partition(name)
        if part.n_rows == 0:
            continue
        rep = evaluate_fitness(best_circuit, fs, part, hp.reg_weight, hp.secondary, hp.n)
        metrics[name] = {
            "balanced_accuracy": rep.rho,
            "accuracy": rep.accuracy,
            "R": rep.R,
            "X": rep.secondary_value,
            "confusion": [list(row) for row in rep.confusion],
        }
    return RunReport(
        termination_reason=termination,
        generations_run=generations_run,
        trace=trace,
        best_circuit=best_circuit,
        function_set=fs,
        hyperparameters=hp,
        metrics=metrics,
        active_gates=count_active_gates(best_circuit),
        nand2=nand2_equivalent(best_circuit, fs),
        input_bits=data.total_bits,
        output_bits=data.codec.bits,
        neutral_replacements=neutral,
        class_names=tuple(data.class_names),
        warnings=warnings,
    )
