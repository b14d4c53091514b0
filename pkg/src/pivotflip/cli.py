"""Command line interface: attack a dataset, summarize results, self-check bounds."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import bandit_core
from .config import AttackConfig
from .embeddings import load_vectors
from .harness import load_dataset, read_records, run_dataset, summarize, write_records
from .victim import BagOfWordsVictim, KeywordVictim, RemoteVictim, VictimOracle

USAGE_ERROR = 2

# attack flags that may also appear (dashes or underscores) in a config file
_FILE_KEYS = {
    "dataset": str,
    "format": str,
    "embeddings": str,
    "victim": str,
    "victim-config": str,
    "endpoint": str,
    "budget": int,
    "gamma": float,
    "tau": float,
    "epsilon": float,
    "delta": float,
    "init-samples": int,
    "candidates": int,
    "mask-prob": float,
    "cull-threshold": float,
    "h-base": float,
    "h-max": float,
    "seed": int,
    "parallelism": int,
    "min-tokens": int,
    "out": str,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pivotflip",
        description="Hard-label black-box attack via pivot token search and synonym substitution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    attack = sub.add_parser("attack", help="attack every entry of a dataset")
    attack.add_argument("--config", help="flat key=value file mirroring the flags below")
    attack.add_argument("--dataset", help="path to the dataset file")
    attack.add_argument("--format", choices=["jsonl", "csv"], help="dataset format (default jsonl)")
    attack.add_argument("--embeddings", help="path to the word vector file")
    attack.add_argument("--victim", choices=["keyword", "bow", "remote"], help="victim kind")
    attack.add_argument("--victim-config", help="JSON file describing the victim")
    attack.add_argument("--endpoint", help="URL of a remote victim")
    attack.add_argument("--budget", type=int, help="query budget per entry")
    attack.add_argument("--gamma", type=float, help="fraction of the budget for the pivot search")
    attack.add_argument("--tau", type=float, help="retention precision threshold")
    attack.add_argument("--epsilon", type=float, help="best-arm stopping tolerance")
    attack.add_argument("--delta", type=float, help="confidence parameter")
    attack.add_argument("--init-samples", type=int, help="masked samples per arm initialization")
    attack.add_argument("--candidates", type=int, help="substitution candidates per token")
    attack.add_argument("--mask-prob", type=float, help="per-token masking probability")
    attack.add_argument("--cull-threshold", type=float, help="lower-bound level that culls an input")
    attack.add_argument("--h-base", type=float, help="floor of the perturbation-rate cap")
    attack.add_argument("--h-max", type=float, help="ceiling of the perturbation-rate cap")
    attack.add_argument("--seed", type=int, help="run seed (PIVOT_SEED env overrides)")
    attack.add_argument("--parallelism", type=int, help="concurrent entries (default 1)")
    attack.add_argument("--min-tokens", type=int, help="drop entries shorter than this many tokens")
    attack.add_argument("--out", help="output records file (JSON lines)")

    summ = sub.add_parser("summarize", help="recompute the summary of a records file")
    summ.add_argument("--in", dest="in_path", required=True, help="records file to read")

    sub.add_parser("verify-bounds", help="self-check the confidence-bound solver")
    return parser


def parse_config_file(path: str) -> dict:
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ValueError(f"cannot read config file {path!r}: {exc}") from exc
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key = key.strip().replace("_", "-")
        value = value.strip()
        if key not in _FILE_KEYS:
            raise ValueError(f"config file line {line_no}: unknown key {key!r}")
        if not value:
            raise ValueError(f"config file line {line_no}: missing value for {key!r}")
        try:
            values[key] = _FILE_KEYS[key](value)
        except ValueError:
            raise ValueError(
                f"config file line {line_no}: bad value {value!r} for {key!r}"
            ) from None
    return values


def _merged(args: argparse.Namespace, file_values: dict, key: str, default=None):
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in file_values:
        return file_values[key]
    return default


def _make_victim_factory(kind: str, victim_config: Optional[str], endpoint: Optional[str], budget: int):
    data = {}
    if victim_config:
        try:
            data = json.loads(Path(victim_config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read victim config {victim_config!r}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError("victim config must be a JSON object")

    if kind == "keyword":
        keywords = data.get("keywords")
        if not keywords or not all(isinstance(k, str) for k in keywords):
            raise ValueError("keyword victim config needs a non-empty 'keywords' string list")
        victim = KeywordVictim(
            keywords=frozenset(keywords),
            label_present=int(data.get("label_present", 1)),
            label_absent=int(data.get("label_absent", 0)),
        )
        return lambda: VictimOracle(victim, budget)
    if kind == "bow":
        weights = data.get("weights")
        if not isinstance(weights, dict) or not weights:
            raise ValueError("bow victim config needs a non-empty 'weights' object")
        victim = BagOfWordsVictim(
            weights={str(k): int(v) for k, v in weights.items()},
            bias=int(data.get("bias", 0)),
        )
        return lambda: VictimOracle(victim, budget)
    if kind == "remote":
        url = endpoint or data.get("endpoint")
        if not url:
            raise ValueError("remote victim needs --endpoint or an 'endpoint' config key")
        kwargs = dict(
            endpoint=url,
            timeout=float(data.get("timeout", 10.0)),
            retries=int(data.get("retries", 2)),
            label_field=str(data.get("label_field", "label")),
            bearer_token=data.get("bearer_token"),
        )
        return lambda: VictimOracle(RemoteVictim(**kwargs), budget)
    raise ValueError(f"unknown victim kind {kind!r}")


def _run_attack_command(args: argparse.Namespace) -> int:
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        dataset_path = _merged(args, file_values, "dataset")
        embeddings_path = _merged(args, file_values, "embeddings")
        out_path = _merged(args, file_values, "out")
        victim_kind = _merged(args, file_values, "victim")
        if not dataset_path or not embeddings_path or not out_path or not victim_kind:
            raise ValueError("--dataset, --embeddings, --victim and --out are required")

        seed = _merged(args, file_values, "seed", 0)
        env_seed = os.environ.get("PIVOT_SEED")
        if env_seed is not None:
            try:
                seed = int(env_seed)
            except ValueError:
                raise ValueError(f"PIVOT_SEED must be an integer, got {env_seed!r}") from None

        cfg = AttackConfig(
            budget=_merged(args, file_values, "budget", 100),
            quota_fraction=_merged(args, file_values, "gamma", 0.8),
            threshold=_merged(args, file_values, "tau", 0.85),
            epsilon=_merged(args, file_values, "epsilon", 0.9),
            delta=_merged(args, file_values, "delta", 0.85),
            init_samples=_merged(args, file_values, "init-samples", 5),
            candidate_size=_merged(args, file_values, "candidates", 50),
            mask_probability=_merged(args, file_values, "mask-prob", 0.5),
            cull_threshold=_merged(args, file_values, "cull-threshold", 0.95),
            h_base=_merged(args, file_values, "h-base", 0.1),
            h_max=_merged(args, file_values, "h-max", 0.25),
            seed=seed,
        )
        parallelism = _merged(args, file_values, "parallelism", 1)
        min_tokens = _merged(args, file_values, "min-tokens", 0)
        fmt = _merged(args, file_values, "format", "jsonl")

        factory = _make_victim_factory(
            victim_kind,
            _merged(args, file_values, "victim-config"),
            _merged(args, file_values, "endpoint"),
            cfg.budget,
        )
        with open(dataset_path, "r", encoding="utf-8") as handle:
            entries = load_dataset(handle, fmt)
        if min_tokens:
            entries = [e for e in entries if len(e.text.split()) >= min_tokens]
        with open(embeddings_path, "r", encoding="utf-8") as handle:
            store = load_vectors(handle)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR

    records, summary = run_dataset(entries, factory, store, cfg, parallelism=parallelism)
    with open(out_path, "w", encoding="utf-8") as handle:
        write_records(handle, records, summary)
    print(
        f"attempted={summary.attempted} skipped={summary.skipped} "
        f"asr={summary.asr:.1f}% mean_pert={summary.mean_pert:.2f}% "
        f"total_queries={summary.total_queries}"
    )
    return 1 if any(record.error for record in records) else 0


def _run_summarize_command(args: argparse.Namespace) -> int:
    try:
        with open(args.in_path, "r", encoding="utf-8") as handle:
            records = read_records(handle)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: cannot read records from {args.in_path!r}: {exc}", file=sys.stderr)
        return 1
    summary = summarize(records)
    print(json.dumps(summary.__dict__, sort_keys=True))
    return 0


def _grid_bound(estimate: float, pulls: int, beta: float, upper: bool) -> float:
    """Independent check value: largest (upper) or smallest (lower) point of
    the 1e-6 lattice around `estimate` whose divergence stays within
    beta / pulls, located by bisection over the lattice indices (the
    divergence is monotone away from the estimate)."""
    step = 1e-6
    level = beta / pulls
    span = (1.0 - estimate) if upper else estimate

    def point(k: int) -> float:
        q = estimate + k * step if upper else estimate - k * step
        return min(1.0, q) if upper else max(0.0, q)

    k_max = int(math.floor(span / step))
    if bandit_core.bernoulli_kl(estimate, point(k_max)) <= level:
        return point(k_max)
    lo, hi = 0, k_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bandit_core.bernoulli_kl(estimate, point(mid)) <= level:
            lo = mid
        else:
            hi = mid
    return point(lo)


def _run_verify_bounds() -> int:
    rng = np.random.default_rng(20240817)
    checks: list[tuple[str, bool]] = []

    ok = (
        bandit_core.bernoulli_kl(0.3, 0.3) == 0.0
        and math.isinf(bandit_core.bernoulli_kl(0.4, 0.0))
        and abs(bandit_core.bernoulli_kl(1.0, 0.5) - math.log(2.0)) < 1e-12
    )
    checks.append(("divergence identity and endpoint conventions", ok))

    ok = True
    for n in (1, 5, 20, 100):
        for beta in (0.05, 0.5, 2.0):
            if abs(bandit_core.kl_lower_bound(1.0, n, beta) - math.exp(-beta / n)) > 1e-9:
                ok = False
            if abs(bandit_core.kl_upper_bound(0.0, n, beta) - (1.0 - math.exp(-beta / n))) > 1e-9:
                ok = False
    checks.append(("closed-form inversion at estimates 0 and 1", ok))

    ok = True
    for _ in range(200):
        estimate = float(rng.uniform(0.0, 1.0))
        pulls = int(rng.integers(1, 200))
        beta = float(rng.uniform(0.0, 6.0))
        if abs(bandit_core.kl_upper_bound(estimate, pulls, beta) - _grid_bound(estimate, pulls, beta, True)) > 1e-5:
            ok = False
        if abs(bandit_core.kl_lower_bound(estimate, pulls, beta) - _grid_bound(estimate, pulls, beta, False)) > 1e-5:
            ok = False
    checks.append(("grid-scan agreement on 200 random cases", ok))

    ok = True
    for _ in range(200):
        estimate = float(rng.uniform(0.0, 1.0))
        pulls = int(rng.integers(1, 100))
        beta = float(rng.uniform(0.0, 4.0))
        lower = bandit_core.kl_lower_bound(estimate, pulls, beta)
        upper = bandit_core.kl_upper_bound(estimate, pulls, beta)
        if not 0.0 <= lower <= estimate <= upper <= 1.0:
            ok = False
        wider = bandit_core.kl_upper_bound(estimate, pulls + 10, beta) - bandit_core.kl_lower_bound(
            estimate, pulls + 10, beta
        )
        if wider > upper - lower + 1e-12:
            ok = False
    checks.append(("bound ordering and interval shrinkage", ok))

    failed = False
    for name, passed in checks:
        print(f"{name}: {'pass' if passed else 'FAIL'}")
        failed = failed or not passed
    return 1 if failed else 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "attack":
        return _run_attack_command(args)
    if args.command == "summarize":
        return _run_summarize_command(args)
    if args.command == "verify-bounds":
        return _run_verify_bounds()
    parser.error(f"unknown command {args.command!r}")
    return USAGE_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
