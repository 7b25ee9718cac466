"""Batch evaluation: run sessions over a manifest, aggregate, sweep grids.

Each utterance runs as an independent session with its own adapter instance
and clock, so utterances may execute on a thread pool; aggregation reduces
results in manifest order regardless of completion order. Per-utterance
failures (missing source file, adapter fault) are recorded and skipped;
corpus BLEU pools n-gram counts over the successful sessions and latency is
macro-averaged over them (sessions with empty output contribute no latency).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, SessionConfig
from .features import load_source_features
from .manifest import ManifestEntry
from .metrics import LatencyReport, bleu, corpus_bleu, latency_report
from .model import ModelAdapter, ToyModel, ToyModelConfig
from .simulator import (
    EmissionLog,
    RealClock,
    SessionError,
    SimulatedClock,
    run_session,
    write_emission_log,
)
from .vocab import build_default_vocabulary

__all__ = [
    "UtteranceResult",
    "EvalResult",
    "CurveRow",
    "CURVE_HEADER",
    "WORKERS_ENV_VAR",
    "default_workers",
    "make_adapter",
    "run_eval",
    "sweep",
    "write_curve_csv",
]

WORKERS_ENV_VAR = "SIMULST_WORKERS"
CURVE_HEADER = "param,bleu,laal_s,laal_ca_s,al_s"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}")
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV_VAR} must be >= 1, got {workers}")
    return workers


def make_adapter(config: SessionConfig) -> ModelAdapter:
    """Build a fresh adapter owned by one session."""
    if config.adapter == "toy":
        return ToyModel(ToyModelConfig(seed=config.seed), build_default_vocabulary())
    raise ConfigError(f"unknown adapter {config.adapter!r}; available: 'toy'")


@dataclass(frozen=True)
class UtteranceResult:
    """Outcome of one manifest entry: a log and metrics, or an error."""

    id: str
    log: EmissionLog | None = None
    latency: LatencyReport | None = None
    bleu: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class EvalResult:
    """One run over a manifest: per-utterance outcomes plus corpus aggregates."""

    config: SessionConfig
    results: tuple[UtteranceResult, ...]
    corpus_bleu: float
    mean_al_s: float
    mean_laal_s: float
    mean_al_ca_s: float
    mean_laal_ca_s: float

    @property
    def num_failed(self) -> int:
        return sum(1 for r in self.results if r.failed)

    def to_record(self) -> dict:
        """JSON-able aggregate record written next to the per-session logs."""
        return {
            "run_id": self.config.run_id,
            "config": self.config.to_dict(),
            "num_utterances": len(self.results),
            "num_failed": self.num_failed,
            "failed_ids": [r.id for r in self.results if r.failed],
            "corpus_bleu": _json_number(self.corpus_bleu),
            "mean_al_s": _json_number(self.mean_al_s),
            "mean_laal_s": _json_number(self.mean_laal_s),
            "mean_al_ca_s": _json_number(self.mean_al_ca_s),
            "mean_laal_ca_s": _json_number(self.mean_laal_ca_s),
            "utterances": [
                {
                    "id": r.id,
                    "error": r.error,
                    "bleu": _json_number(r.bleu),
                    "al_s": _json_number(r.latency.al_s) if r.latency else None,
                    "laal_s": _json_number(r.latency.laal_s) if r.latency else None,
                    "al_ca_s": _json_number(r.latency.al_ca_s) if r.latency else None,
                    "laal_ca_s": _json_number(r.latency.laal_ca_s) if r.latency else None,
                    "final_text": r.log.final_text if r.log else None,
                }
                for r in self.results
            ],
        }


def _json_number(value: float | None) -> float | None:
    """NaN (undefined metric) serializes as null to keep the JSON strict."""
    if value is None or math.isnan(value):
        return None
    return value


def _run_one(entry: ManifestEntry, config: SessionConfig) -> UtteranceResult:
    try:
        source = load_source_features(entry.source)
    except (OSError, ValueError) as exc:
        return UtteranceResult(id=entry.id, error=f"source unreadable: {exc}")
    adapter = make_adapter(config)
    clock = RealClock() if config.clock == "real" else SimulatedClock()
    try:
        log = run_session(
            source,
            adapter,
            config.make_policy(),
            chunk_ms=config.effective_chunk_ms,
            clock=clock,
            attention_layer=config.attention_layer,
            step_cost_s=config.step_cost_s,
            max_new=config.max_new,
        )
    except (SessionError, ValueError) as exc:
        return UtteranceResult(id=entry.id, error=str(exc))
    return UtteranceResult(
        id=entry.id,
        log=log,
        latency=latency_report(log, entry.reference),
        bleu=None,  # filled during aggregation, against this entry's reference
    )


def _mean(values: list[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return sum(finite) / len(finite) if finite else math.nan


def run_eval(
    entries: list[ManifestEntry],
    config: SessionConfig,
    out_dir: Path | None = None,
    workers: int | None = None,
) -> EvalResult:
    """Evaluate every manifest entry under one config.

    Writes, when ``out_dir`` is given, ``<out_dir>/<run_id>/<utterance>.jsonl``
    per session plus an ``aggregate.json`` record. Per-utterance errors are
    recorded in the result rather than raised.
    """
    if not entries:
        raise ConfigError("manifest is empty")
    if workers is None:
        workers = default_workers()

    if workers == 1:
        results = [_run_one(entry, config) for entry in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: _run_one(e, config), entries))

    by_id = {entry.id: entry for entry in entries}
    succeeded = [r for r in results if not r.failed]
    if succeeded:
        pooled = corpus_bleu(
            [r.log.final_text for r in succeeded],
            [by_id[r.id].reference for r in succeeded],
        ).bleu
    else:
        pooled = math.nan
    results = [
        r if r.failed else dataclasses.replace(r, bleu=bleu(r.log.final_text, by_id[r.id].reference).bleu)
        for r in results
    ]

    evaluation = EvalResult(
        config=config,
        results=tuple(results),
        corpus_bleu=pooled,
        mean_al_s=_mean([r.latency.al_s for r in results if r.latency]),
        mean_laal_s=_mean([r.latency.laal_s for r in results if r.latency]),
        mean_al_ca_s=_mean([r.latency.al_ca_s for r in results if r.latency]),
        mean_laal_ca_s=_mean([r.latency.laal_ca_s for r in results if r.latency]),
    )

    if out_dir is not None:
        run_dir = Path(out_dir) / config.run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        for result in evaluation.results:
            if result.log is not None:
                write_emission_log(run_dir / f"{result.id}.jsonl", result.log)
        (run_dir / "aggregate.json").write_text(
            json.dumps(evaluation.to_record(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return evaluation


@dataclass(frozen=True)
class CurveRow:
    """One latency-quality point of a sweep."""

    param: float
    bleu: float
    laal_s: float
    laal_ca_s: float
    al_s: float


def sweep(
    entries: list[ManifestEntry],
    base_config: SessionConfig,
    grid,
    out_dir: Path | None = None,
    workers: int | None = None,
) -> tuple[list[CurveRow], list[EvalResult]]:
    """Run one evaluation per grid value of the policy's sweep knob.

    Rows come back sorted by parameter. When the config sets ``laal_cap_s``,
    rows whose mean computational-aware LAAL exceeds the cap are dropped from
    the curve (the underlying EvalResults are all returned).
    """
    values = sorted(set(grid))
    if not values:
        raise ConfigError("sweep grid is empty")
    rows: list[CurveRow] = []
    evaluations: list[EvalResult] = []
    for value in values:
        config = base_config.with_sweep_value(value)
        evaluation = run_eval(entries, config, out_dir=out_dir, workers=workers)
        evaluations.append(evaluation)
        row = CurveRow(
            param=float(value),
            bleu=evaluation.corpus_bleu,
            laal_s=evaluation.mean_laal_s,
            laal_ca_s=evaluation.mean_laal_ca_s,
            al_s=evaluation.mean_al_s,
        )
        if base_config.laal_cap_s is not None and row.laal_ca_s > base_config.laal_cap_s:
            continue
        rows.append(row)
    return rows, evaluations


def write_curve_csv(path, rows: list[CurveRow]) -> None:
    lines = [CURVE_HEADER]
    for row in rows:
        lines.append(f"{row.param:g},{row.bleu:.4f},{row.laal_s:.4f},{row.laal_ca_s:.4f},{row.al_s:.4f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
