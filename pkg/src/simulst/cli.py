"""Command-line entry point.

Verbs:
  run               evaluate a manifest under one config
  sweep             run a hyperparameter grid and write a latency-quality CSV
  score             recompute metrics from existing emission logs
  extract-features  audio front end: WAV to binary feature file

Every config key has a matching flag; flags override values from --config.
Exit codes: 0 success, 1 at least one utterance failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

from .config import SWEEP_FIELD, ConfigError, SessionConfig
from .features import (
    global_cmvn,
    load_cmvn_stats,
    load_source_features,
    compute_cmvn_stats,
    save_cmvn_stats,
    write_features,
)
from .manifest import ManifestError, load_manifest
from .metrics import bleu, corpus_bleu, latency_report
from .runner import (
    default_workers,
    run_eval,
    sweep,
    write_curve_csv,
)
from .simulator import read_emission_log

__all__ = ["main"]

_CONFIG_FLAGS = (
    # (flag, config key, type)
    ("--policy", "policy", str),
    ("--f", "f", int),
    ("--alpha", "alpha", float),
    ("--lambda", "lambda", int),
    ("--k", "k", int),
    ("--t-s-ms", "t_s_ms", float),
    ("--chunk-ms", "chunk_ms", float),
    ("--adapter", "adapter", str),
    ("--seed", "seed", int),
    ("--attention-layer", "attention_layer", int),
    ("--max-new", "max_new", int),
    ("--clock", "clock", str),
    ("--step-cost-s", "step_cost_s", float),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its keys")
    for flag, key, value_type in _CONFIG_FLAGS:
        kwargs = {"type": value_type, "dest": f"cfg_{key}", "default": None}
        if key == "policy":
            kwargs["choices"] = ("alignatt", "edatt", "waitk", "local_agreement")
        if key == "clock":
            kwargs["choices"] = ("simulated", "real")
        parser.add_argument(flag, **kwargs)
    parser.add_argument(
        "--laal-cap-s",
        dest="cfg_laal_cap_s",
        type=float,
        nargs="?",
        const=3.5,
        default=None,
        help="drop sweep rows whose mean computational-aware LAAL exceeds this (default 3.5 when given bare)",
    )
    parser.add_argument("--workers", type=int, default=None, help="thread count (env SIMULST_WORKERS)")


def _build_config(args: argparse.Namespace, sweep_seed: float | None = None) -> SessionConfig:
    data: dict = {}
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        data = json.loads(text) if text.strip() else {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for _, key, _ in _CONFIG_FLAGS:
        value = getattr(args, f"cfg_{key}")
        if value is not None:
            data[key] = value
    if args.cfg_laal_cap_s is not None:
        data["laal_cap_s"] = args.cfg_laal_cap_s
    if sweep_seed is not None:
        # a sweep supplies the policy's knob from the grid, so the base
        # config may omit it
        field = SWEEP_FIELD.get(data.get("policy"))
        if field is not None and data.get(field) is None:
            data[field] = sweep_seed
            return SessionConfig.from_dict(data).with_sweep_value(sweep_seed)
    return SessionConfig.from_dict(data)


def _workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        return args.workers
    return default_workers()


def _print_aggregate(record: dict) -> None:
    for utt in record["utterances"]:
        if utt["error"] is not None:
            print(f"{utt['id']}\tFAILED\t{utt['error']}")
        else:
            laal = utt["laal_s"]
            laal_txt = "n/a" if laal is None else f"{laal:.3f}"
            print(f"{utt['id']}\tbleu={utt['bleu']:.2f}\tlaal_s={laal_txt}")
    bleu_txt = "n/a" if record["corpus_bleu"] is None else f"{record['corpus_bleu']:.2f}"
    laal_txt = "n/a" if record["mean_laal_s"] is None else f"{record['mean_laal_s']:.3f}"
    print(f"corpus_bleu={bleu_txt} mean_laal_s={laal_txt} failed={record['num_failed']}/{record['num_utterances']}")


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    entries = load_manifest(args.manifest)
    evaluation = run_eval(entries, config, out_dir=args.out, workers=_workers(args))
    _print_aggregate(evaluation.to_record())
    print(f"run_id={config.run_id} -> {Path(args.out) / config.run_id}")
    return 1 if evaluation.num_failed else 0


def _parse_grid(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"grid must be comma-separated numbers, got {raw!r}")
    if not values:
        raise ConfigError("sweep grid is empty")
    return values


def _cmd_sweep(args: argparse.Namespace) -> int:
    grid = _parse_grid(args.grid)
    config = _build_config(args, sweep_seed=min(grid))
    entries = load_manifest(args.manifest)
    rows, evaluations = sweep(entries, config, grid, out_dir=args.out, workers=_workers(args))
    digest = hashlib.sha256((config.run_id + args.grid).encode("utf-8")).hexdigest()[:12]
    curve_path = Path(args.out) / f"curve_{digest}.csv"
    write_curve_csv(curve_path, rows)
    for row in rows:
        print(f"param={row.param:g} bleu={row.bleu:.2f} laal_s={row.laal_s:.3f} laal_ca_s={row.laal_ca_s:.3f}")
    print(f"curve -> {curve_path}")
    return 1 if any(e.num_failed for e in evaluations) else 0


def _cmd_score(args: argparse.Namespace) -> int:
    entries = load_manifest(args.manifest)
    logs_dir = Path(args.logs)
    hyps: list[str] = []
    refs: list[str] = []
    utterances = []
    failed = 0
    for entry in entries:
        log_path = logs_dir / f"{entry.id}.jsonl"
        try:
            log = read_emission_log(log_path)
        except (OSError, ValueError) as exc:
            utterances.append({"id": entry.id, "error": str(exc)})
            failed += 1
            continue
        report = latency_report(log, entry.reference)
        quality = bleu(log.final_text, entry.reference)
        hyps.append(log.final_text)
        refs.append(entry.reference)
        utterances.append(
            {
                "id": entry.id,
                "error": None,
                "bleu": quality.bleu,
                "al_s": _nan_to_none(report.al_s),
                "laal_s": _nan_to_none(report.laal_s),
                "al_ca_s": _nan_to_none(report.al_ca_s),
                "laal_ca_s": _nan_to_none(report.laal_ca_s),
            }
        )
    record = {
        "num_utterances": len(entries),
        "num_failed": failed,
        "corpus_bleu": corpus_bleu(hyps, refs).bleu if hyps else None,
        "utterances": utterances,
    }
    text = json.dumps(record, indent=2, sort_keys=True)
    if args.out is not None:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 1 if failed else 0


def _nan_to_none(value: float) -> float | None:
    return None if math.isnan(value) else value


def _cmd_extract_features(args: argparse.Namespace) -> int:
    try:
        features = load_source_features(args.input)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.save_cmvn is not None:
        save_cmvn_stats(args.save_cmvn, compute_cmvn_stats(features))
    if args.cmvn is not None:
        features = global_cmvn(features, load_cmvn_stats(args.cmvn))
    write_features(args.output, features)
    print(f"{args.input} -> {args.output} ({features.num_frames} frames x {features.feature_dim})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulst",
        description="Streaming translation policy simulator and evaluator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="evaluate a manifest under one config")
    run_p.add_argument("--manifest", type=Path, required=True)
    run_p.add_argument("--out", type=Path, required=True, help="output directory for logs")
    _add_config_flags(run_p)
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="grid over the policy's knob, write curve CSV")
    sweep_p.add_argument("--manifest", type=Path, required=True)
    sweep_p.add_argument("--out", type=Path, required=True)
    sweep_p.add_argument("--grid", required=True, help="comma-separated values, e.g. 2,4,6,8")
    _add_config_flags(sweep_p)
    sweep_p.set_defaults(func=_cmd_sweep)

    score_p = sub.add_parser("score", help="metrics over existing emission logs")
    score_p.add_argument("--manifest", type=Path, required=True)
    score_p.add_argument("--logs", type=Path, required=True, help="directory of <id>.jsonl logs")
    score_p.add_argument("--out", type=Path, default=None, help="optional JSON report path")
    score_p.set_defaults(func=_cmd_score)

    feat_p = sub.add_parser("extract-features", help="WAV to binary feature file")
    feat_p.add_argument("input", type=Path, help="WAV (or feature) file to read")
    feat_p.add_argument("output", type=Path, help="feature file to write")
    feat_p.add_argument("--cmvn", type=Path, default=None, help="apply stats from this JSON file")
    feat_p.add_argument("--save-cmvn", type=Path, default=None, help="save this utterance's stats")
    feat_p.set_defaults(func=_cmd_extract_features)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ManifestError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
