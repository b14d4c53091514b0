"""Dataset ingestion, per-entry attack orchestration, metrics, persistence."""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, TextIO

import numpy as np

from .config import MASK_TOKEN, AttackConfig
from .embeddings import EmbeddingStore
from .perturbation import AttackRecord, execute_attack
from .pivot_search import TokenSequence, find_pivot
from .victim import BudgetExhaustedError, VictimError, VictimOracle

OracleFactory = Callable[[], VictimOracle]


@dataclass(frozen=True)
class DatasetEntry:
    identifier: str
    text: str
    label: int


@dataclass(frozen=True)
class RunSummary:
    """Aggregate metrics. asr and mean_pert are percentages; mean_pert and
    mean_sim average over successful attacks only. Skipped entries are not
    part of the asr denominator; no_attempts flags an empty denominator."""

    asr: float
    mean_pert: float
    mean_sim: float
    total_queries: int
    attempted: int
    skipped: int
    no_attempts: bool


def load_dataset(source: Iterable[str], format: str = "jsonl") -> list[DatasetEntry]:
    """Read entries from a jsonl or csv stream.

    jsonl: one object per line with string "text", integer "label", optional
    "id". csv: header row naming text,label[,id] columns. A missing id becomes
    the zero-based line (jsonl) or data-row (csv) index in decimal. Malformed
    or incomplete rows raise ValueError naming the location.
    """
    if format == "jsonl":
        entries = _load_jsonl(source)
    elif format == "csv":
        entries = _load_csv(source)
    else:
        raise ValueError(f"unknown dataset format {format!r}")
    seen: set[str] = set()
    for entry in entries:
        if entry.identifier in seen:
            raise ValueError(f"duplicate identifier {entry.identifier!r}")
        seen.add(entry.identifier)
    return entries


def _load_jsonl(source: Iterable[str]) -> list[DatasetEntry]:
    entries = []
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ValueError(f"line {line_no}: invalid JSON") from None
        if not isinstance(obj, dict):
            raise ValueError(f"line {line_no}: expected a JSON object")
        if "text" not in obj:
            raise ValueError(f"line {line_no}: missing field 'text'")
        if "label" not in obj:
            raise ValueError(f"line {line_no}: missing field 'label'")
        text, label = obj["text"], obj["label"]
        if not isinstance(text, str):
            raise ValueError(f"line {line_no}: field 'text' must be a string")
        if isinstance(label, bool) or not isinstance(label, int):
            raise ValueError(f"line {line_no}: field 'label' must be an integer")
        if label < 0:
            raise ValueError(f"line {line_no}: field 'label' must be >= 0")
        identifier = str(obj["id"]) if "id" in obj else str(line_no - 1)
        entries.append(DatasetEntry(identifier, text, label))
    return entries


def _load_csv(source: Iterable[str]) -> list[DatasetEntry]:
    reader = csv.DictReader(source)
    fields = reader.fieldnames or []
    for required in ("text", "label"):
        if required not in fields:
            raise ValueError(f"csv header must name a {required!r} column")
    entries = []
    for row_no, row in enumerate(reader):
        text = row.get("text")
        label_raw = row.get("label")
        if text is None or label_raw is None:
            raise ValueError(f"csv row {row_no}: missing text or label value")
        try:
            label = int(label_raw)
        except (TypeError, ValueError):
            raise ValueError(f"csv row {row_no}: label must be an integer") from None
        if label < 0:
            raise ValueError(f"csv row {row_no}: label must be >= 0")
        identifier = row.get("id") or str(row_no)
        entries.append(DatasetEntry(identifier, text, label))
    return entries


def derive_seed(run_seed: int, identifier: str) -> int:
    """Stable per-entry seed: reproducible across runs, decorrelated across
    entries."""
    digest = hashlib.sha256(f"{run_seed}:{identifier}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def run_attack(
    entry: DatasetEntry,
    victim_factory: OracleFactory,
    store: EmbeddingStore,
    cfg: AttackConfig,
) -> AttackRecord:
    """Attack one entry with a fresh metered oracle.

    The clean-label check costs one metered query. If the victim already
    disagrees with the entry label (or refuses), the entry is skipped.
    Transport failures become failed-with-error records instead of raising.
    """
    oracle = victim_factory()
    seed = derive_seed(cfg.seed, entry.identifier)
    record = AttackRecord(identifier=entry.identifier, seed=seed)
    tokens = tuple(entry.text.split())
    if not tokens:
        return replace(record, error="empty text")
    if MASK_TOKEN in tokens:
        return replace(record, error=f"input contains the reserved token {MASK_TOKEN!r}")
    record = replace(record, original_tokens=tokens)

    try:
        clean = oracle.query(tokens)
    except BudgetExhaustedError:
        return replace(record, queries_used=oracle.used)
    except VictimError as exc:
        return replace(record, error=str(exc), queries_used=oracle.used)
    if clean is None or clean != entry.label:
        return replace(record, skipped=True, queries_used=oracle.used)

    x = TokenSequence(tokens, entry.label)
    rng = np.random.default_rng(seed)
    try:
        pivot = find_pivot(x, oracle, cfg, rng)
        if pivot.culled:
            # too robust to attack in budget: out of the attempted population
            return replace(record, skipped=True, queries_used=oracle.used)
        attacked = execute_attack(x, pivot, oracle, store, cfg)
    except VictimError as exc:
        return replace(record, error=str(exc), queries_used=oracle.used)
    return replace(attacked, identifier=entry.identifier, seed=seed, skipped=False)


def summarize(records: Sequence[AttackRecord]) -> RunSummary:
    attempted = [r for r in records if not r.skipped]
    successes = [r for r in attempted if r.success]
    asr = 100.0 * len(successes) / len(attempted) if attempted else 0.0
    mean_pert = (
        100.0 * sum(r.pert for r in successes) / len(successes) if successes else 0.0
    )
    mean_sim = sum(r.sim for r in successes) / len(successes) if successes else 0.0
    return RunSummary(
        asr=asr,
        mean_pert=mean_pert,
        mean_sim=mean_sim,
        total_queries=sum(r.queries_used for r in records),
        attempted=len(attempted),
        skipped=len(records) - len(attempted),
        no_attempts=not attempted,
    )


def run_dataset(
    entries: Sequence[DatasetEntry],
    victim_factory: OracleFactory,
    store: EmbeddingStore,
    cfg: AttackConfig,
    parallelism: int = 1,
) -> tuple[list[AttackRecord], RunSummary]:
    """Attack every entry; with parallelism > 1 records arrive in completion
    order, otherwise in dataset order."""
    if parallelism <= 1:
        records = [run_attack(e, victim_factory, store, cfg) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [
                pool.submit(run_attack, e, victim_factory, store, cfg) for e in entries
            ]
            records = [future.result() for future in as_completed(futures)]
    return records, summarize(records)


def write_records(
    stream: TextIO,
    records: Sequence[AttackRecord],
    summary: Optional[RunSummary] = None,
) -> None:
    """Persist one JSON object per record, append-only, then the summary."""
    for record in records:
        stream.write(json.dumps(asdict(record), sort_keys=True) + "\n")
    if summary is not None:
        stream.write(json.dumps({"summary": asdict(summary)}, sort_keys=True) + "\n")


def read_records(stream: Iterable[str]) -> list[AttackRecord]:
    """Load records written by write_records, ignoring the summary line."""
    records = []
    for line in stream:
        if not line.strip():
            continue
        obj = json.loads(line)
        if "summary" in obj and "identifier" not in obj:
            continue
        adversarial = obj.get("adversarial_tokens")
        records.append(
            AttackRecord(
                identifier=obj["identifier"],
                success=obj["success"],
                skipped=obj["skipped"],
                original_tokens=tuple(obj["original_tokens"]),
                adversarial_tokens=tuple(adversarial) if adversarial is not None else None,
                queries_used=obj["queries_used"],
                pert=obj["pert"],
                sim=obj["sim"],
                pivot_indices=tuple(obj["pivot_indices"]),
                seed=obj["seed"],
                error=obj.get("error"),
            )
        )
    return records
