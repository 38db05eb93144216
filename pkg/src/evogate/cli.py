"""Command-line front end: evolve, explore, evaluate, emit, faults, encode-stats.

Configuration comes from an optional JSON file (--config) merged with
per-field flags; unknown config keys are rejected.  A single master seed
drives the split, the encoder fit and the evolutionary run, so identical
config + seed reproduces every artifact byte for byte.

Exit codes: 0 ok, 1 internal error, 2 input error, 3 consistency error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .circuit import CircuitError, deserialize, function_set_by_name, serialize
from .dataset import DatasetError, RawDataset, load_csv, split
from .encoding import (
    EncodedDataset,
    EncoderSpec,
    EncodingError,
    STRATEGIES,
    encode_dataset,
    encoder_from_json,
    encoder_to_json,
    fit_encoder,
    make_output_codec,
)
from .evolve import SECONDARY_OBJECTIVES, Hyperparameters, RunReport, run
from .emit import VerilogOptions, VerilogParseError, emit_dot, emit_report, emit_verilog
from .fitness import evaluate_fitness, fault_table

AUTO_ENCODE_GRID = tuple((s, b) for s in STRATEGIES for b in (2, 4))

EXPLORE_COLUMNS = (
    "dataset", "n", "function_set", "kappa", "max_generations",
    "strategy", "bits", "seed", "test_balanced_accuracy",
    "active_gates", "generations", "error",
)


class ConsistencyError(Exception):
    pass


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset: str | None = None
    label_column: str | int = -1       # header name, or 0-based column index
    delimiter: str = ","
    header: bool = True
    strategy: str = "quantiles"
    bits_per_input: int = 4
    bits_per_output: int | None = None
    auto_encode: bool = False
    train_frac: float = 0.8
    val_frac: float = 0.5
    stratified: bool = True
    n: int = 300
    lam: int = 4
    p: float | None = None
    gamma: float = 0.01
    kappa: int = 300
    max_generations: int = 8000
    reg_weight: float = 1.0
    secondary: str = "none"
    function_set: str = "full"
    seed: int = 0
    out_dir: str = "runs"
    name: str | None = None
    write_verilog: bool = True
    write_dot: bool = True
    write_report: bool = True

    def validate(self) -> None:
        if self.dataset is None:
            raise ConfigError("no dataset given (set 'dataset' or --dataset)")
        EncoderSpec(self.strategy, self.bits_per_input)  # raises on bad values
        if not 0 < self.train_frac < 1:
            raise ConfigError(f"train_frac must be in (0,1), got {self.train_frac}")
        if not 0 <= self.val_frac < 1:
            raise ConfigError(f"val_frac must be in [0,1), got {self.val_frac}")
        self.hyperparameters()  # raises on bad values

    def hyperparameters(self, **overrides) -> Hyperparameters:
        values = dict(
            lam=self.lam, n=self.n, p=self.p,
            function_set=function_set_by_name(self.function_set),
            gamma=self.gamma, kappa=self.kappa,
            max_generations=self.max_generations,
            reg_weight=self.reg_weight, secondary=self.secondary,
            seed=self.seed,
        )
        values.update(overrides)
        try:
            return Hyperparameters(**values)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(RunConfig)}


_CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = doc.keys() - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**values)
    if isinstance(cfg.label_column, str) and not cfg.header:
        try:
            cfg = replace(cfg, label_column=int(cfg.label_column))
        except ValueError:
            raise ConfigError(
                "label_column must be a column index when the CSV has no header"
            ) from None
    return cfg


# ---------------------------------------------------------------------------
# Pipeline pieces
# ---------------------------------------------------------------------------

def _load_and_split(cfg: RunConfig):
    label: str | int = cfg.label_column
    if isinstance(label, str) and cfg.header is True and label.lstrip("-").isdigit():
        label = int(label)
    raw = load_csv(cfg.dataset, label, delimiter=cfg.delimiter, header=cfg.header)
    parts = split(raw, (cfg.train_frac, cfg.val_frac), seed=cfg.seed,
                  stratified=cfg.stratified)
    return raw, parts


def _encode(cfg: RunConfig, raw: RawDataset, parts, strategy: str, bits: int):
    enc = fit_encoder(raw, parts.train, EncoderSpec(strategy, bits))
    codec = make_output_codec(raw.n_classes, cfg.bits_per_output)
    data = encode_dataset(enc, raw, parts, codec)
    return enc, codec, data


def _input_labels(enc) -> tuple[str, ...]:
    labels = []
    b = enc.spec.bits_per_input
    for fe in enc.features:
        for k in range(b):
            labels.append(f"feature {fe.name!r} bit {k} of {b} (MSB first)")
    return tuple(labels)


def _output_labels(codec, class_names) -> tuple[str, ...]:
    return tuple(
        f"class-code bit {k}; codes: "
        + ", ".join(f"{name}={''.join(map(str, code))}"
                    for name, code in zip(class_names, codec.codes))
        for k in range(codec.bits)
    )


def _write_artifacts(cfg: RunConfig, report: RunReport, enc, codec,
                     out_dir: Path, base: str) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = cfg.echo()
    paths = {}

    paths["circuit"] = out_dir / f"{base}.circuit.json"
    paths["circuit"].write_text(
        serialize(report.best_circuit, report.function_set, meta={"config": echo}))

    paths["encoder"] = out_dir / f"{base}.encoder.json"
    paths["encoder"].write_text(encoder_to_json(enc, codec))

    paths["run"] = out_dir / f"{base}.run.json"
    paths["run"].write_text(report.to_json(config=echo))

    paths["trace"] = out_dir / f"{base}.trace.csv"
    paths["trace"].write_text(report.trace_csv())

    if cfg.write_verilog:
        opts = VerilogOptions(
            module_name=base.replace("-", "_").replace(".", "_"),
            include_port_comments=True,
            input_labels=_input_labels(enc),
            output_labels=_output_labels(codec, report.class_names),
            header_comments=(f"config: {json.dumps(echo, sort_keys=True)}",),
        )
        paths["verilog"] = out_dir / f"{base}.v"
        paths["verilog"].write_text(emit_verilog(report.best_circuit,
                                                 report.function_set, opts))
    if cfg.write_dot:
        paths["dot"] = out_dir / f"{base}.dot"
        paths["dot"].write_text(emit_dot(report.best_circuit, report.function_set))
    if cfg.write_report:
        paths["report"] = out_dir / f"{base}.report.txt"
        paths["report"].write_text(emit_report(report, config=echo))
    return paths


def cmd_evolve(cfg: RunConfig, workers: int = 1) -> int:
    cfg.validate()
    raw, parts = _load_and_split(cfg)
    if cfg.auto_encode:
        cells = AUTO_ENCODE_GRID
    else:
        cells = ((cfg.strategy, cfg.bits_per_input),)
    best = None
    for strategy, bits in cells:
        enc, codec, data = _encode(cfg, raw, parts, strategy, bits)
        report = run(data, cfg.hyperparameters(), workers=workers)
        val_R = report.metrics.get("validation", report.metrics["train"])["R"]
        if cfg.auto_encode:
            print(f"  [{strategy}/{bits} bits] validation R={val_R:.4f} "
                  f"test bal_acc={report.metrics['test']['balanced_accuracy']:.4f}")
        if best is None or val_R > best[0]:
            best = (val_R, strategy, bits, enc, codec, report)
    _, strategy, bits, enc, codec, report = best
    if cfg.auto_encode:
        cfg = replace(cfg, strategy=strategy, bits_per_input=bits, auto_encode=False)
    base = cfg.name or Path(cfg.dataset).stem
    paths = _write_artifacts(cfg, report, enc, codec, Path(cfg.out_dir), base)
    test_bal = report.metrics["test"]["balanced_accuracy"]
    print(f"encoding: {strategy} x {bits} bits -> {report.input_bits} input bits")
    print(f"terminated: {report.termination_reason} after "
          f"{report.generations_run} generations; active gates: {report.active_gates}")
    print(f"test balanced accuracy: {test_bal:.4f}")
    print("artifacts: " + ", ".join(str(p) for p in paths.values()))
    return 0


# ---------------------------------------------------------------------------
# explore: hyperparameter grid sweep
# ---------------------------------------------------------------------------

def _existing_cells(csv_path: Path) -> set[tuple]:
    done = set()
    if not csv_path.exists():
        return done
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            done.add((row["dataset"], int(row["n"]), row["function_set"],
                      int(row["kappa"]), int(row["max_generations"]),
                      row["strategy"], int(row["bits"]), int(row["seed"])))
    return done


def cmd_explore(cfg: RunConfig, grid: dict, seeds: list[int],
                csv_path: Path, workers: int = 1) -> int:
    cfg.validate()
    ns = grid.get("n") or [cfg.n]
    function_sets = grid.get("function_set") or [cfg.function_set]
    kappas = grid.get("kappa") or [cfg.kappa]
    max_gens = grid.get("max_generations") or [cfg.max_generations]
    if cfg.auto_encode:
        encodings = list(AUTO_ENCODE_GRID)
    else:
        strategies = grid.get("strategy") or [cfg.strategy]
        bit_counts = grid.get("bits") or [cfg.bits_per_input]
        encodings = [(s, b) for s in strategies for b in bit_counts]

    dataset_name = Path(cfg.dataset).stem
    done = _existing_cells(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_header = not csv_path.exists()

    cells = [
        (n, fset, kappa, gmax, strategy, bits, seed)
        for n in ns for fset in function_sets for kappa in kappas
        for gmax in max_gens for strategy, bits in encodings for seed in seeds
    ]
    ran = skipped = 0
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if write_header:
            writer.writerow(EXPLORE_COLUMNS)
        raw_cache: dict[int, tuple] = {}
        for n, fset, kappa, gmax, strategy, bits, seed in cells:
            key = (dataset_name, n, fset, kappa, gmax, strategy, bits, seed)
            if key in done:
                skipped += 1
                continue
            cell_cfg = replace(cfg, n=n, function_set=fset, kappa=kappa,
                               max_generations=gmax, strategy=strategy,
                               bits_per_input=bits, seed=seed, auto_encode=False)
            try:
                if seed not in raw_cache:
                    raw_cache[seed] = _load_and_split(cell_cfg)
                raw, parts = raw_cache[seed]
                _, _, data = _encode(cell_cfg, raw, parts, strategy, bits)
                report = run(data, cell_cfg.hyperparameters(), workers=workers)
                row = [dataset_name, n, fset, kappa, gmax, strategy, bits, seed,
                       repr(report.metrics["test"]["balanced_accuracy"]),
                       report.active_gates, report.generations_run, ""]
            except Exception as e:  # record the failure, keep sweeping
                row = [dataset_name, n, fset, kappa, gmax, strategy, bits, seed,
                       "", "", "", f"{type(e).__name__}: {e}"]
            writer.writerow(row)
            fh.flush()
            done.add(key)
            ran += 1
            print(f"  cell n={n} F={fset} kappa={kappa} G={gmax} "
                  f"{strategy}/{bits}b seed={seed}: {row[8] or row[11]}")
    print(f"explore: {ran} cells run, {skipped} already present -> {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / emit / faults / encode-stats
# ---------------------------------------------------------------------------

def _load_circuit_and_encoder(circuit_path: str, encoder_path: str):
    g, fs = deserialize(Path(circuit_path).read_text(encoding="utf-8"))
    enc, codec = encoder_from_json(Path(encoder_path).read_text(encoding="utf-8"))
    if g.input_count != enc.total_bits:
        raise ConsistencyError(
            f"circuit has {g.input_count} inputs but encoder produces "
            f"{enc.total_bits} bits"
        )
    if g.output_count != codec.bits:
        raise ConsistencyError(
            f"circuit has {g.output_count} outputs but codec uses {codec.bits} bits"
        )
    return g, fs, enc, codec


def _encoded_for_eval(cfg: RunConfig, enc, codec) -> EncodedDataset:
    raw, parts = _load_and_split(cfg)
    if codec.n_classes != raw.n_classes:
        raise ConsistencyError(
            f"encoder codec has {codec.n_classes} classes but dataset has "
            f"{raw.n_classes}"
        )
    return encode_dataset(enc, raw, parts, codec)


def cmd_evaluate(cfg: RunConfig, circuit_path: str, encoder_path: str) -> int:
    g, fs, enc, codec = _load_circuit_and_encoder(circuit_path, encoder_path)
    data = _encoded_for_eval(cfg, enc, codec)
    for part_name in ("train", "validation", "test"):
        part = data.partition(part_name)
        if part.n_rows == 0:
            continue
        rep = evaluate_fitness(g, fs, part, cfg.reg_weight, cfg.secondary, g.n or None)
        print(f"{part_name}: balanced_accuracy={rep.rho:.6f} "
              f"accuracy={rep.accuracy:.6f} R={rep.R:.6f} X={rep.secondary_value:.6f}")
    return 0


def cmd_emit(circuit_path: str, fmt: str, out: str | None,
             module_name: str) -> int:
    g, fs = deserialize(Path(circuit_path).read_text(encoding="utf-8"))
    if fmt == "verilog":
        text = emit_verilog(g, fs, VerilogOptions(module_name=module_name))
    elif fmt == "dot":
        text = emit_dot(g, fs)
    elif fmt == "json":
        text = serialize(g, fs)
    else:
        raise ConfigError(f"unknown emit format {fmt!r}")
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        print(f"wrote {out}")
    return 0


def cmd_faults(cfg: RunConfig, circuit_path: str, encoder_path: str,
               partition: str, out: str | None) -> int:
    g, fs, enc, codec = _load_circuit_and_encoder(circuit_path, encoder_path)
    data = _encoded_for_eval(cfg, enc, codec)
    part = data.partition(partition)
    if part.n_rows == 0:
        raise ConfigError(f"partition {partition!r} is empty")
    rows = fault_table(g, fs, part)
    target = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(["node_id", "stuck_value", "baseline_rho", "faulty_rho", "delta"])
        for node_id, stuck, baseline, faulty, delta in rows:
            writer.writerow([node_id, stuck, repr(baseline), repr(faulty), repr(delta)])
    finally:
        if out:
            target.close()
            print(f"wrote {out} ({len(rows)} faults)")
    return 0


def cmd_encode_stats(cfg: RunConfig) -> int:
    cfg.validate()
    raw, parts = _load_and_split(cfg)
    enc, codec, data = _encode(cfg, raw, parts, cfg.strategy, cfg.bits_per_input)
    print(f"dataset: {cfg.dataset} ({raw.n_rows} rows, {raw.n_features} features, "
          f"{raw.n_classes} classes)")
    print(f"splits: train={len(parts.train)} validation={len(parts.validation)} "
          f"test={len(parts.test)} (seed {cfg.seed})")
    print(f"encoder: {cfg.strategy} x {cfg.bits_per_input} bits "
          f"-> {enc.total_bits} input bits")
    print(f"output codec: {codec.n_classes} classes x {codec.bits} bits")
    train_rows = list(parts.train)
    for fi, fe in enumerate(enc.features):
        buckets = enc.spec.bucket_count
        occupancy = [0] * buckets
        for r in train_rows:
            occupancy[fe.bucket(raw.row(r)[fi])] += 1
        if fe.kind == "numeric":
            detail = ("degenerate (constant)" if fe.degenerate else
                      "thresholds " + ", ".join(f"{t:g}" for t in fe.thresholds))
        else:
            detail = f"{len(fe.category_map)} categories, modal {fe.impute!r}"
        print(f"  {fe.name} [{fe.kind}]: {detail}; train bucket counts {occupancy}")
    for w in enc.warnings:
        print(f"  warning: {w}")
    return 0


# ---------------------------------------------------------------------------
# argparse wiring
# ---------------------------------------------------------------------------

def _add_config_flags(sp: argparse.ArgumentParser, include_evolve: bool = True) -> None:
    sp.add_argument("--config", help="JSON config file (RunConfig schema)")
    sp.add_argument("--dataset", help="CSV file with one label column")
    sp.add_argument("--label-column", dest="label_column",
                    help="label column name (or index; default: last column)")
    sp.add_argument("--delimiter")
    sp.add_argument("--header", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--strategy", choices=STRATEGIES)
    sp.add_argument("--bits-per-input", dest="bits_per_input", type=int)
    sp.add_argument("--bits-per-output", dest="bits_per_output", type=int)
    sp.add_argument("--train-frac", dest="train_frac", type=float)
    sp.add_argument("--val-frac", dest="val_frac", type=float)
    sp.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", dest="out_dir")
    if include_evolve:
        sp.add_argument("--auto-encode", dest="auto_encode",
                        action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--n", type=int, help="function-node budget")
        sp.add_argument("--lam", "--lambda", dest="lam", type=int)
        sp.add_argument("--p", type=float, help="mutation rate (default 1/n)")
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--kappa", type=int)
        sp.add_argument("--max-generations", dest="max_generations", type=int)
        sp.add_argument("--reg-weight", dest="reg_weight", type=float)
        sp.add_argument("--secondary", choices=SECONDARY_OBJECTIVES)
        sp.add_argument("--function-set", dest="function_set", choices=("full", "nand"))
        sp.add_argument("--name", help="artifact base name (default: dataset stem)")
        sp.add_argument("--write-verilog", dest="write_verilog",
                        action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--write-dot", dest="write_dot",
                        action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--write-report", dest="write_report",
                        action=argparse.BooleanOptionalAction, default=None)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FIELDS}
    return load_config(getattr(args, "config", None), overrides)


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _str_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip() != ""]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="evogate",
        description="Evolve tiny combinational logic classifiers from tabular data.")
    ap.add_argument("--workers", type=int, default=1,
                    help="parallel child evaluations (results are identical)")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("evolve", help="run the full pipeline and write artifacts")
    _add_config_flags(sp)

    sp = sub.add_parser("explore", help="sweep a hyperparameter grid into a CSV")
    _add_config_flags(sp)
    sp.add_argument("--grid-n", type=_int_list, help="comma-separated n values")
    sp.add_argument("--grid-function-set", type=_str_list)
    sp.add_argument("--grid-kappa", type=_int_list)
    sp.add_argument("--grid-max-generations", type=_int_list)
    sp.add_argument("--grid-strategy", type=_str_list)
    sp.add_argument("--grid-bits", type=_int_list)
    sp.add_argument("--seeds", type=_int_list, help="explicit seed list")
    sp.add_argument("--seeds-per-cell", type=int, default=5)
    sp.add_argument("--csv", help="sweep output CSV (default <out_dir>/explore.csv)")

    sp = sub.add_parser("evaluate", help="score a saved circuit against a dataset")
    _add_config_flags(sp, include_evolve=False)
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--encoder", required=True)
    sp.add_argument("--reg-weight", dest="reg_weight", type=float)
    sp.add_argument("--secondary", choices=SECONDARY_OBJECTIVES)

    sp = sub.add_parser("emit", help="re-emit a saved circuit")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--format", choices=("verilog", "dot", "json"), default="verilog")
    sp.add_argument("--out")
    sp.add_argument("--module-name", default="classifier")

    sp = sub.add_parser("faults", help="stuck-at fault table for a saved circuit")
    _add_config_flags(sp, include_evolve=False)
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--encoder", required=True)
    sp.add_argument("--partition", choices=("train", "validation", "test"),
                    default="train")
    sp.add_argument("--out")

    sp = sub.add_parser("encode-stats", help="summarize how a dataset encodes")
    _add_config_flags(sp)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evolve":
            return cmd_evolve(_config_from_args(args), workers=args.workers)
        if args.command == "explore":
            cfg = _config_from_args(args)
            grid = {
                "n": args.grid_n,
                "function_set": args.grid_function_set,
                "kappa": args.grid_kappa,
                "max_generations": args.grid_max_generations,
                "strategy": args.grid_strategy,
                "bits": args.grid_bits,
            }
            seeds = args.seeds or [cfg.seed + k for k in range(args.seeds_per_cell)]
            csv_path = Path(args.csv) if args.csv else Path(cfg.out_dir) / "explore.csv"
            return cmd_explore(cfg, grid, seeds, csv_path, workers=args.workers)
        if args.command == "evaluate":
            return cmd_evaluate(_config_from_args(args), args.circuit, args.encoder)
        if args.command == "emit":
            return cmd_emit(args.circuit, args.format, args.out, args.module_name)
        if args.command == "faults":
            return cmd_faults(_config_from_args(args), args.circuit, args.encoder,
                              args.partition, args.out)
        if args.command == "encode-stats":
            return cmd_encode_stats(_config_from_args(args))
        raise AssertionError(f"unhandled command {args.command}")
    except ConsistencyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, DatasetError, EncodingError, CircuitError,
            VerilogParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except Exception as e:  # pragma: no cover
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
