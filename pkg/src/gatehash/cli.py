"""Command-line pipeline: synth, train, encode, eval, search.

Every command writes a small JSON run manifest next to its outputs with the
resolved arguments, so any artifact can be reproduced from its manifest.

Exit codes: 0 success, 2 argument error, 3 data/format error, 4 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DEFAULT_MODALITY_DIMS,
    generate_synthetic,
    load_split,
    read_embedding_file,
    stack_concat,
    write_embedding_file,
    write_split_manifest,
)
from .errors import FormatError, NumericError, ValidationError
from .evaluation import mean_average_precision, render_report
from .index import pack_codes, read_code_file, search_topk, write_code_file
from .model import (
    Checkpoint,
    SUPPORTED_CODE_LENGTHS,
    binarize,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .training import TrainConfig, render_epoch_log, train

ENCODE_CHUNK = 1024


class UsageError(Exception):
    """Bad command-line arguments (maps to exit code 2)."""


def _write_manifest(path: Path, command: str, arguments: dict, outputs: dict) -> None:
    doc = {
        "tool": "gatehash",
        "version": __version__,
        "command": command,
        "arguments": arguments,
        "outputs": outputs,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"--dims must be comma-separated integers, got {text!r}")
    if not dims or any(d < 1 for d in dims):
        raise UsageError("--dims entries must be positive")
    return dims


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    if args.classes < 2:
        raise UsageError("--classes must be at least 2")
    if args.per_class < 3:
        raise UsageError("--per-class must be at least 3")
    if args.noise < 0:
        raise UsageError("--noise must be non-negative")
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")
    dims = _parse_dims(args.dims)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    split = generate_synthetic(
        class_count=args.classes,
        per_class=args.per_class,
        modality_dims=dims,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    names = {"train": "train.embx", "retrieval": "retrieval.embx", "query": "query.embx"}
    for role, name in names.items():
        write_embedding_file(getattr(split, role), out_dir / name)
    manifest = out_dir / "split.json"
    write_split_manifest(manifest, names["train"], names["retrieval"], names["query"],
                         split.category_count)
    _write_manifest(
        out_dir / "synth.manifest.json",
        "synth",
        {
            "classes": args.classes,
            "per_class": args.per_class,
            "dims": list(dims),
            "noise": args.noise,
            "seed": args.seed,
        },
        {"split_manifest": str(manifest), **{k: str(out_dir / v) for k, v in names.items()}},
    )
    print(f"wrote split manifest {manifest} "
          f"(train={split.train.sample_count}, retrieval={split.retrieval.sample_count}, "
          f"query={split.query.sample_count})")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    if args.bits not in SUPPORTED_CODE_LENGTHS and not args.allow_any_bits:
        raise UsageError(
            f"--bits must be one of {SUPPORTED_CODE_LENGTHS} (or pass --allow-any-bits)"
        )
    if args.bits < 1:
        raise UsageError("--bits must be positive")
    if args.epochs < 0:
        raise UsageError("--epochs must be non-negative")
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")

    config = TrainConfig(
        k=args.bits,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        lambda_quant=args.lambda_quant,
        normalize_inputs=not args.no_normalize,
        seed=args.seed,
        optimizer=args.optimizer,
    )
    split = load_split(args.manifest)
    result = train(split, config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.cmhw"
    save_checkpoint(ckpt_path, Checkpoint(
        params=result.params, seed=config.seed,
        normalize_inputs=config.normalize_inputs,
    ))
    log_text = render_epoch_log(result.epoch_log)
    log_path = out_dir / "train_log.tsv"
    log_path.write_text(log_text)
    print(log_text, end="")

    outputs = {"checkpoint": str(ckpt_path), "log": str(log_path)}
    if result.epoch_log and not args.no_figures:
        from .figures import save_loss_curves

        fig_path = out_dir / "loss_curves.png"
        save_loss_curves(result.epoch_log, fig_path)
        outputs["figure"] = str(fig_path)
    _write_manifest(
        out_dir / "train.manifest.json",
        "train",
        {
            "manifest": str(args.manifest),
            "bits": config.k,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "lambda_quant": config.lambda_quant,
            "normalize_inputs": config.normalize_inputs,
            "optimizer": config.optimizer,
            "seed": config.seed,
        },
        outputs,
    )
    print(f"wrote checkpoint {ckpt_path}")
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    emb_set = read_embedding_file(args.embx)
    features = stack_concat(emb_set, normalize=ckpt.normalize_inputs)
    if features.shape[1] != ckpt.params.n:
        raise ValidationError(
            f"embedding dim {features.shape[1]} does not match checkpoint n={ckpt.params.n}"
        )

    k = ckpt.params.k
    bits = np.zeros((emb_set.sample_count, k), dtype=np.uint8)
    for start in range(0, emb_set.sample_count, ENCODE_CHUNK):
        chunk = features[start:start + ENCODE_CHUNK]
        trace = model_forward(ckpt.params, chunk)
        bits[start:start + ENCODE_CHUNK] = binarize(trace.relaxed_code)
    matrix = pack_codes(bits, emb_set.ids)

    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_code_file(matrix, out_path)
    _write_manifest(
        Path(str(out_path) + ".manifest.json"),
        "encode",
        {"checkpoint": str(args.checkpoint), "embx": str(args.embx)},
        {"codes": str(out_path)},
    )
    print(f"encoded {matrix.count} samples at {k} bits -> {out_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    query_paths = args.query_codes or []
    retrieval_paths = args.retrieval_codes or []
    if not query_paths:
        raise UsageError("at least one --query-codes/--retrieval-codes pair is required")
    if len(query_paths) != len(retrieval_paths):
        raise UsageError("--query-codes and --retrieval-codes must be paired")

    split = load_split(args.manifest)
    rows = []
    for q_path, r_path in zip(query_paths, retrieval_paths):
        query_codes = read_code_file(q_path)
        retrieval_codes = read_code_file(r_path)
        rows.append((query_codes.k,
                     mean_average_precision(split, query_codes, retrieval_codes)))
    rows.sort(key=lambda item: item[0])

    report = render_report(rows)
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report)
    print(report, end="")

    outputs = {"report": str(out_path)}
    if not args.no_figures:
        from .figures import save_map_by_bits

        fig_path = out_path.with_suffix(".png")
        save_map_by_bits(rows, fig_path)
        outputs["figure"] = str(fig_path)
    _write_manifest(
        Path(str(out_path) + ".manifest.json"),
        "eval",
        {
            "manifest": str(args.manifest),
            "query_codes": [str(p) for p in query_paths],
            "retrieval_codes": [str(p) for p in retrieval_paths],
        },
        outputs,
    )
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    if args.topk < 1:
        raise UsageError("--topk must be at least 1")
    if (args.query_id is None) == (args.query_bits is None):
        raise UsageError("exactly one of --query-id or --query-bits is required")

    matrix = read_code_file(args.codes)
    if args.query_id is not None:
        row = matrix.row_of_id(args.query_id)
        query = matrix.words[row]
    else:
        text = args.query_bits
        if len(text) != matrix.k or set(text) - {"0", "1"}:
            raise UsageError(
                f"--query-bits must be {matrix.k} characters of 0/1 for this index"
            )
        bit_vec = np.array([[1 if c == "1" else 0 for c in text]], dtype=np.uint8)
        query = pack_codes(bit_vec, np.array([0], dtype=np.uint64)).words[0]

    result = search_topk(matrix, query, args.topk)
    lines = ["id\tdistance"]
    for sample_id, dist in result.pairs():
        lines.append(f"{sample_id}\t{dist}")
    text_out = "\n".join(lines) + "\n"
    print(text_out, end="")

    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text_out)
    _write_manifest(
        Path(str(out_path) + ".manifest.json"),
        "search",
        {
            "codes": str(args.codes),
            "query_id": args.query_id,
            "query_bits": args.query_bits,
            "topk": args.topk,
        },
        {"results": str(out_path)},
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatehash",
        description="Gated multi-modal fusion hashing: synthesize data, train, "
                    "encode, search, and evaluate binary codes.",
    )
    parser.add_argument("--version", action="version", version=f"gatehash {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled split")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dims", type=str, default=",".join(map(str, DEFAULT_MODALITY_DIMS)))
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a hashing model on a split")
    p.add_argument("--manifest", type=str, required=True, help="split manifest JSON")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--lambda-quant", type=float, default=0.1)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true",
                   help="skip per-modality L2 normalization of inputs")
    p.add_argument("--allow-any-bits", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", type=str, required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="binarize an embedding file with a checkpoint")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--embx", type=str, required=True)
    p.add_argument("--out", type=str, required=True, help="output code file")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="mAP report for one or more code files")
    p.add_argument("--manifest", type=str, required=True, help="split manifest JSON")
    p.add_argument("--query-codes", action="append", type=str)
    p.add_argument("--retrieval-codes", action="append", type=str)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", type=str, required=True, help="output report TSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="top-k nearest codes for one query")
    p.add_argument("--codes", type=str, required=True, help="index code file")
    p.add_argument("--query-id", type=int, default=None)
    p.add_argument("--query-bits", type=str, default=None,
                   help="raw query code as a 0/1 string of length k")
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--out", type=str, required=True, help="output results TSV")
    p.set_defaults(func=cmd_search)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FormatError, ValidationError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
