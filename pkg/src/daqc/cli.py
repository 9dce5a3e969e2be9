"""Command-line front end.

Every run reads one JSON document whose ``kind`` field names the pipeline
(``train``, ``eval``, ``expressibility``, ``entangling``, ``bp-sweep`` or
``trace``).  Missing sections fall back to the defaults shown by
``--print-defaults``.  Each run writes into its own ``--out`` directory:

* ``config.json``: the fully resolved configuration (defaults filled in)
* ``run.json``: seed, package version, ``git describe`` and a timestamp
* the reports of the pipeline (JSON/CSV) and ``manifest.json`` with their
  SHA-256 digests

Reports never contain the timestamp, so repeated runs with the same
configuration and seed produce byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 capacity
error.
"""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import logging
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .builder import DaqcConfig, build_circuit, encode_images
from .datasets import (SUBSETS, SubsetRule, load_idx, seeded_subsample, standard_paths,
                       stratified_split, subset)
from .diagnostics import (BpSweepConfig, ExpressibilityConfig, bp_sweep, decay_fit,
                          depth_setting, state_ensemble_report, write_bp_csv,
                          write_histogram_csv, write_json)
from .errors import CapacityError, ConfigError, DaqcError, DataError
from .training import (TrainConfig, evaluate, load_checkpoint, save_checkpoint, train,
                       write_trace_csv)

log = logging.getLogger("daqc")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CAPACITY = 0, 2, 3, 4
KINDS = ("train", "eval", "expressibility", "entangling", "bp-sweep", "trace")

_DATA_DEFAULTS = {
    "root": None,
    "subset": "mnist-2",
    "train_images": None,
    "train_labels": None,
    "test_images": None,
    "test_labels": None,
    "val_fraction": 0.2,
    "train_limit": None,
    "test_limit": None,
}

_SECTIONS = {
    "train": ("circuit", "train", "data"),
    "eval": ("data",),
    "expressibility": ("circuit", "expressibility"),
    "entangling": ("circuit", "expressibility"),
    "bp-sweep": ("bp_sweep",),
    "trace": (),
}


def default_config(kind: str) -> dict:
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    doc = {"kind": kind, "seed": 0}
    for section in _SECTIONS[kind]:
        doc[section] = {
            "circuit": DaqcConfig().to_json,
            "train": TrainConfig().to_json,
            "data": lambda: dict(_DATA_DEFAULTS),
            "expressibility": ExpressibilityConfig().to_json,
            "bp_sweep": BpSweepConfig().to_json,
        }[section]()
    if kind in ("expressibility", "entangling"):
        # when set, overrides ``circuit`` with the 1x1-window template that
        # holds this many ECR rings on ``circuit.n_qubits`` wires
        doc["ecr_layers"] = None
    if kind in ("eval", "trace"):
        doc["checkpoint"] = None
    if kind == "eval":
        doc["split"] = "test"
    return doc


def _merge(defaults: dict, given: dict, where: str) -> dict:
    extra = set(given) - set(defaults)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(out.get(key), dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def _as_u64(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
        raise ConfigError(f"{field} must be an unsigned 64-bit integer, got {value!r}")
    return value


def resolve_config(doc: dict, seed: int | None = None, limit: int | None = None,
                   source: str = "config") -> dict:
    """Fill in defaults, apply command-line overrides and validate every
    section before any work starts."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"{source}: missing field 'kind' (one of {KINDS})")
    cfg = _merge(default_config(doc["kind"]), doc, source)
    if seed is not None:
        cfg["seed"] = seed
    cfg["seed"] = _as_u64(cfg["seed"], f"{source}: seed")
    if limit is not None:
        if "data" not in cfg:
            raise ConfigError(f"--limit does not apply to kind {cfg['kind']!r}")
        cfg["data"]["test_limit"] = limit
    _validate(cfg, source)
    return cfg


def _section(cls, cfg: dict, name: str, source: str):
    try:
        return cls.from_json(cfg[name])
    except (TypeError, DaqcError) as exc:
        if isinstance(exc, CapacityError):
            raise
        raise ConfigError(f"{source}: {name}: {exc}") from None


def _validate(cfg: dict, source: str) -> None:
    kind = cfg["kind"]
    if "circuit" in cfg:
        _section(DaqcConfig, cfg, "circuit", source)
    if "train" in cfg:
        _section(TrainConfig, cfg, "train", source)
    if "expressibility" in cfg:
        _section(ExpressibilityConfig, cfg, "expressibility", source)
    if "bp_sweep" in cfg:
        _section(BpSweepConfig, cfg, "bp_sweep", source)
    if "data" in cfg:
        _data_paths(cfg, source, need_train=kind == "train")
    if kind in ("eval", "trace"):
        ck = cfg.get("checkpoint")
        if not ck:
            raise ConfigError(f"{source}: field 'checkpoint' is required for kind {kind!r}")
        if not Path(ck).is_file():
            raise ConfigError(f"{source}: checkpoint: no such file {ck!r}")
    if kind == "eval" and cfg["split"] not in ("train", "test"):
        raise ConfigError(f"{source}: split must be 'train' or 'test', got {cfg['split']!r}")
    layers = cfg.get("ecr_layers")
    if layers is not None and (isinstance(layers, bool) or not isinstance(layers, int) or layers < 0):
        raise ConfigError(f"{source}: ecr_layers must be a non-negative integer, got {layers!r}")


def _data_paths(cfg: dict, source: str, need_train: bool) -> dict:
    """Image/label paths per split, each checked for existence."""
    data = cfg["data"]
    if data["subset"] is not None and str(data["subset"]).lower() not in SUBSETS:
        raise ConfigError(f"{source}: data.subset: unknown subset {data['subset']!r}; "
                          f"known: {sorted(SUBSETS)}")
    for key in ("train_limit", "test_limit"):
        v = data[key]
        if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 1):
            raise ConfigError(f"{source}: data.{key} must be a positive integer or null")
    if not 0 < float(data["val_fraction"]) < 1:
        raise ConfigError(f"{source}: data.val_fraction must lie in (0, 1)")
    splits = ("train", "test") if need_train else (cfg.get("split", "test"),)
    out = {}
    for split in splits:
        images, labels = data[f"{split}_images"], data[f"{split}_labels"]
        if images is None and labels is None:
            if not data["root"]:
                raise ConfigError(f"{source}: data.{split}_images: no path given and data.root is unset")
            try:
                images, labels = standard_paths(data["root"], split)
            except DataError as exc:
                raise ConfigError(f"{source}: data.root: {exc}") from None
        for field, path in ((f"{split}_images", images), (f"{split}_labels", labels)):
            if not path:
                raise ConfigError(f"{source}: data.{field}: no path given")
            if not Path(path).is_file():
                raise ConfigError(f"{source}: data.{field}: no such file {str(path)!r}")
        out[split] = (Path(images), Path(labels))
    return out


def _load_split(cfg: dict, split: str):
    paths = _data_paths(cfg, "config", need_train=cfg["kind"] == "train")[split]
    ds = load_idx(*paths, name=split)
    name = cfg["data"]["subset"]
    if name is not None:
        ds = subset(ds, SubsetRule.named(name))
    limit = cfg["data"][f"{split}_limit"]
    if limit is not None:
        ds = seeded_subsample(ds, limit, cfg["seed"])
    if len(ds) == 0:
        raise DataError(f"{split} split is empty after subsetting")
    return ds


# ---------------------------------------------------------------------------
# run directory


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunDir:
    """Output directory of one run; tracks the report files it receives."""

    def __init__(self, path, cfg: dict):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.reports = []
        self.cfg = cfg
        write_json(self.path / "config.json", cfg)

    def file(self, name: str) -> Path:
        self.reports.append(name)
        return self.path / name

    def json(self, name: str, doc) -> None:
        write_json(self.file(name), doc)

    def finish(self, threads: int, deterministic: bool) -> None:
        names = ["config.json"] + self.reports
        write_json(self.path / "manifest.json",
                   {name: sha256_file(self.path / name) for name in names})
        write_json(self.path / "run.json", {
            "kind": self.cfg["kind"],
            "seed": self.cfg["seed"],
            "version": _version(),
            "git_describe": git_describe(),
            "threads": threads,
            "deterministic": deterministic,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        })


# ---------------------------------------------------------------------------
# pipelines


def _split_arrays(ds, config: DaqcConfig):
    return encode_images(ds.images, config), ds.labels


def cmd_train(cfg: dict, run: RunDir) -> dict:
    circuit = DaqcConfig.from_json(cfg["circuit"])
    tcfg = TrainConfig.from_json({**cfg["train"], "init_seed": cfg["seed"]})
    train_ds = _load_split(cfg, "train")
    test_ds = _load_split(cfg, "test")
    if test_ds.n_classes != train_ds.n_classes:
        raise DataError(f"train split has {train_ds.n_classes} classes, test split {test_ds.n_classes}")
    fit_ds, val_ds = stratified_split(train_ds, cfg["data"]["val_fraction"], cfg["seed"])
    spec = build_circuit(circuit)
    log.info("training on %d samples, validating on %d, testing on %d",
             len(fit_ds), len(val_ds), len(test_ds))
    params, trace = train(spec, _split_arrays(fit_ds, circuit), _split_arrays(val_ds, circuit),
                          tcfg, n_classes=train_ds.n_classes)
    metrics = evaluate(spec, params, _split_arrays(test_ds, circuit)).to_json()
    save_checkpoint(run.file("checkpoint.json"), spec, params, trace, tcfg)
    write_trace_csv(run.file("trace.csv"), trace)
    summary = {"metrics": metrics, "n_train": len(fit_ds), "n_val": len(val_ds),
               "n_test": len(test_ds), "epochs_run": len(trace),
               "n_trainables": circuit.n_trainables(train_ds.n_classes)}
    run.json("metrics.json", summary)
    return summary


def cmd_eval(cfg: dict, run: RunDir) -> dict:
    spec, params, _ = load_checkpoint(cfg["checkpoint"])
    split = cfg["split"]
    limit = cfg["data"][f"{split}_limit"]
    if split == "train" and cfg["data"]["test_limit"] is not None:
        limit = cfg["data"]["test_limit"]
        cfg = copy.deepcopy(cfg)
        cfg["data"]["train_limit"] = limit
    ds = _load_split({**cfg, "kind": "eval"}, split)
    if ds.n_classes != params.n_classes:
        raise ConfigError(f"checkpoint has {params.n_classes} classes but the "
                          f"{split} split has {ds.n_classes}")
    metrics = evaluate(spec, params, _split_arrays(ds, spec.config)).to_json()
    summary = {"metrics": metrics, "n_samples": len(ds), "split": split, "limit": limit}
    run.json("metrics.json", summary)
    return summary


def _diag_circuit(cfg: dict):
    circuit = DaqcConfig.from_json(cfg["circuit"])
    if cfg.get("ecr_layers") is not None:
        circuit = depth_setting(cfg["ecr_layers"], n_qubits=circuit.n_qubits,
                                entangle_period=max(circuit.entangle_period, 1),
                                axis_seed=circuit.axis_seed)
    return build_circuit(circuit)


def cmd_expressibility(cfg: dict, run: RunDir) -> dict:
    spec = _diag_circuit(cfg)
    ecfg = ExpressibilityConfig.from_json({**cfg["expressibility"], "seed": cfg["seed"]})
    report = state_ensemble_report(spec, ecfg, entangling=False)
    write_histogram_csv(run.file("fidelity_histogram.csv"), report.histogram)
    summary = {"d_kl": report.d_kl, "n_qubits": spec.n_qubits, "gate_counts": spec.gate_counts(),
               "fidelity_range": ecfg.fidelity_range, "n_bins": ecfg.n_bins,
               "n_pairs": ecfg.n_pairs, "n_states": ecfg.n_states}
    run.json("expressibility.json", summary)
    return summary


def cmd_entangling(cfg: dict, run: RunDir) -> dict:
    spec = _diag_circuit(cfg)
    ecfg = ExpressibilityConfig.from_json({**cfg["expressibility"], "seed": cfg["seed"]})
    report = state_ensemble_report(spec, ecfg, expressive=False)
    summary = {"mean_q": report.mean_q, "std_q": float(report.q_values.std(ddof=1)),
               "n_states": ecfg.n_states, "n_qubits": spec.n_qubits,
               "gate_counts": spec.gate_counts()}
    run.json("entangling.json", summary)
    return summary


def cmd_bp_sweep(cfg: dict, run: RunDir) -> dict:
    bcfg = BpSweepConfig.from_json({**cfg["bp_sweep"], "seed": cfg["seed"]})
    rows = bp_sweep(bcfg)
    write_bp_csv(run.file("bp_variance.csv"), rows)
    fits = {}
    for cost in bcfg.costs:
        sel = [r for r in rows if r["cost"] == cost]
        if len(sel) >= 2:
            slope, r2 = decay_fit([r["n_qubits"] for r in sel], [r["variance"] for r in sel])
            fits[cost] = {"slope": slope, "r2": r2}
    summary = {"rows": rows, "fits": fits}
    run.json("bp_sweep.json", summary)
    return summary


def cmd_trace(cfg: dict, run: RunDir) -> dict:
    _, _, doc = load_checkpoint(cfg["checkpoint"])
    trace = doc.get("trace", [])
    write_trace_csv(run.file("trace.csv"), trace)
    return {"epochs": len(trace)}


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "expressibility": cmd_expressibility,
    "entangling": cmd_entangling,
    "bp-sweep": cmd_bp_sweep,
    "trace": cmd_trace,
}


# ---------------------------------------------------------------------------
# argument handling


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=_u64, metavar="U64", help="override the global seed")
    common.add_argument("--threads", type=_positive, metavar="N",
                        help="worker threads (default: all cores)")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded execution for bit-identical output")
    common.add_argument("--out", metavar="DIR", help="run output directory")
    common.add_argument("--print-defaults", action="store_true",
                        help="print the default configuration and exit")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="daqc", description="Domain-aware quantum circuit experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("train", parents=[common], help="train a classifier")
    p.add_argument("--limit", type=_positive, metavar="N", help="seeded test subsample size")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--limit", type=_positive, metavar="N", help="seeded subsample size")
    p = sub.add_parser("trace", parents=[common], help="export the epoch trace of a checkpoint")
    p.add_argument("--checkpoint", metavar="PATH")
    diag = sub.add_parser("diag", help="circuit diagnostics")
    dsub = diag.add_subparsers(dest="diag", required=True, parser_class=_Parser)
    for name, text in (("expressibility", "fidelity histogram and KL divergence to Haar"),
                       ("entangling", "mean Meyer-Wallach entanglement"),
                       ("bp-sweep", "gradient variance against register width")):
        dsub.add_parser(name, parents=[common], help=text)
    return parser


def _configure_threads(threads: int | None, deterministic: bool) -> int:
    import numba
    if deterministic:
        threads = 1
    if threads is not None:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()


def _read_config(path: str | None, kind: str) -> tuple[dict, str]:
    if path is None:
        return {"kind": kind}, "defaults"
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"--config: no such file {path!r}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and doc.get("kind", kind) != kind:
        raise ConfigError(f"{path}: kind is {doc['kind']!r} but the command is {kind!r}")
    if isinstance(doc, dict):
        doc.setdefault("kind", kind)
    return doc, path


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = args.diag if args.command == "diag" else args.command
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.print_defaults:
            json.dump(default_config(kind), sys.stdout, indent=1, sort_keys=True)
            sys.stdout.write("\n")
            return EXIT_OK
        doc, source = _read_config(args.config, kind)
        if getattr(args, "checkpoint", None):
            doc["checkpoint"] = args.checkpoint
        cfg = resolve_config(doc, args.seed, getattr(args, "limit", None), source)
        if not args.out:
            raise ConfigError("--out: an output directory is required")
        threads = _configure_threads(args.threads, args.deterministic)
        run_dir = RunDir(args.out, cfg)
        summary = COMMANDS[kind](cfg, run_dir)
        run_dir.finish(threads, args.deterministic)
    except ConfigError as exc:
        print(f"daqc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"daqc: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except DataError as exc:
        print(f"daqc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DaqcError as exc:
        print(f"daqc: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    json.dump(summary, sys.stdout, indent=1, sort_keys=True, default=_jsonable)
    sys.stdout.write("\n")
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")


def main() -> None:
    sys.exit(run())
