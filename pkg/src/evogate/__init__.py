"""evogate: evolve tiny combinational logic classifiers from tabular data.

The pipeline: load a CSV (`dataset`), binarize rows (`encoding`), evolve an
acyclic gate graph against the training bits (`evolve` over `circuit` and
`fitness`), then emit Verilog / DOT / reports (`emit`).  The `cli` module
wires it all behind the ``evogate`` command.
"""

from .circuit import (
    ActiveSet,
    CircuitError,
    CircuitGraph,
    FULL_SET,
    FunctionSet,
    GateFunction,
    NAND_SET,
    Node,
    active_set,
    count_active_gates,
    deserialize,
    evaluate,
    evaluate_batch,
    nand2_equivalent,
    serialize,
    validate,
)
from .dataset import DatasetError, RawDataset, SplitDataset, load_csv, split
from .encoding import (
    EncodedDataset,
    EncoderSpec,
    EncodingError,
    FittedEncoder,
    OutputCodec,
    Partition,
    dataset_from_bits,
    decode_prediction,
    encode_dataset,
    encode_row,
    encoder_from_json,
    encoder_to_json,
    fit_encoder,
    make_output_codec,
)
from .evolve import (
    Hyperparameters,
    RunReport,
    edge_candidates,
    init_random,
    mutate,
    mutate_edge,
    mutate_node,
    mutation_counts,
    run,
    select_parent,
)
from .fitness import (
    FitnessReport,
    balanced_accuracy,
    confusion_matrix,
    evaluate_fitness,
    fault_table,
    regularized_fitness,
    secondary_gate_count,
    secondary_nand2,
    stuck_at_vulnerability,
)
from .emit import (
    VerilogOptions,
    VerilogParseError,
    emit_dot,
    emit_report,
    emit_verilog,
    parse_verilog_subset,
)

__version__ = "0.1.0"
