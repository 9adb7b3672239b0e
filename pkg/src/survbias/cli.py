"""Command-line pipeline driver.

Five subcommands cover the full workflow: ingest raw exchange files,
reconstruct index membership, analyze survivor-vs-complete bias, sweep
robustness scenarios, and generate synthetic data with ground truth.
Every command writes its outputs under --out with fixed names plus a
manifest.json recording inputs, config, and timings.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .bias import compute_bias, decompose, run_bootstrap, save_decomposition
from .errors import DomainError, SurvbiasError
from .ingest import ingest_directory
from .metrics import TRADING_DAYS_PER_YEAR, compute_metrics
from .portfolio import UniverseSpec, WeightScheme, build_series
from .robustness import (default_scenarios, load_scenarios, run_scenario,
                         save_scenario_table, scenario_table,
                         snapshot_dates_for, subperiod_table)
from .store import load_store, save_store
from .synth import SynthConfig, generate
from .universe import (DEAD_THRESHOLD_DAYS, DEFAULT_HIGH_RANK,
                       DEFAULT_LOW_RANK, build_snapshots, build_timeline,
                       classify_removals, load_official_list, load_timeline,
                       save_timeline, validate_reconstruction)

ROLLING_WINDOW = 252


@dataclass
class RunManifest:
    command: str
    config: dict
    input_hashes: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tool_version: str = __version__

    def write(self, out_dir: Path) -> Path:
        for rel in self.outputs:
            if rel != "manifest.json" and not (out_dir / rel).exists():
                raise DomainError(f"declared output missing: {rel}")
        if "manifest.json" not in self.outputs:
            self.outputs.append("manifest.json")
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2)
                        + "\n")
        return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_input(path) -> str:
    path = Path(path)
    if path.is_file():
        return _sha256(path)
    digest = hashlib.sha256()
    for child in sorted(path.rglob("*")):
        if child.is_file():
            digest.update(child.name.encode())
            digest.update(bytes.fromhex(_sha256(child)))
    return digest.hexdigest()


def _parse_band(text: str) -> tuple:
    match = re.fullmatch(r"(\d+):(\d+)", text.strip())
    if not match:
        raise DomainError(f"band must look like 151:400, got {text!r}")
    return int(match.group(1)), int(match.group(2))


def _parse_clip(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise DomainError(f"clip must look like -0.5:1.0, got {text!r}")
    return float(parts[0]), float(parts[1])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_json(blob, path: Path) -> None:
    path.write_text(json.dumps(blob, indent=2) + "\n")


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    frame, stats = ingest_directory(args.data_dir)
    elapsed = time.perf_counter() - t0
    save_store(frame, out / "store.csv")
    _save_json(stats.to_dict(), out / "ingest_stats.json")
    RunManifest(
        command="ingest",
        config={"data_dir": str(args.data_dir)},
        input_hashes={"data_dir": _hash_input(args.data_dir)},
        outputs=["store.csv", "ingest_stats.json"],
        timings={"ingest_s": round(elapsed, 3)},
    ).write(out)
    print(f"ingested {stats.files_parsed} files, "
          f"{stats.retained_rows} rows retained -> {out}")
    return 0


def _reconstruct(frame, band, frequency, dead_days):
    dates = snapshot_dates_for(frame, frequency)
    rankings, snaps = build_snapshots(frame, band[0], band[1], dates=dates)
    timelines = build_timeline(snaps)
    classify_removals(timelines, frame, snaps[-1].members,
                      dead_threshold_days=dead_days)
    return rankings, snaps, timelines


def cmd_reconstruct(args) -> int:
    out = _out_dir(args)
    band = _parse_band(args.band)
    frame = load_store(args.store)
    t0 = time.perf_counter()
    rankings, snaps, timelines = _reconstruct(frame, band, args.frequency,
                                              args.dead_days)
    elapsed = time.perf_counter() - t0

    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    outputs = []
    for ranking, snap in zip(rankings, snaps):
        rel = f"snapshots/members_{snap.date.date()}.csv"
        members = ranking.frame[ranking.frame["SYMBOL"].isin(snap.members)]
        members.to_csv(out / rel, index=False,
                       columns=["RANK", "SYMBOL", "PROXY"],
                       float_format="%.2f")
        outputs.append(rel)
    save_timeline(timelines, out / "timeline.json")
    outputs.append("timeline.json")

    inputs = {"store": _hash_input(args.store)}
    if args.official_list:
        official = load_official_list(args.official_list)
        report = validate_reconstruction(snaps[-1], official, timelines)
        _save_json({
            "current_match_count": report.current_match_count,
            "current_list_size": report.current_list_size,
            "match_fraction": report.match_fraction,
            "stale_survivors": report.stale_survivors,
            "inverted_intervals": report.inverted_intervals,
            "mean_exit_age_removed": report.mean_exit_age_removed,
            "mean_exit_age_survivor": report.mean_exit_age_survivor,
            "consistent": report.consistent,
        }, out / "validation.json")
        outputs.append("validation.json")
        inputs["official_list"] = _hash_input(args.official_list)
        print(f"validation: {report.current_match_count}/"
              f"{report.current_list_size} current constituents matched")
    else:
        print("warning: no official list supplied, validation skipped",
              file=sys.stderr)

    RunManifest(
        command="reconstruct",
        config={"store": str(args.store), "band": args.band,
                "frequency": args.frequency, "dead_days": args.dead_days,
                "official_list": (str(args.official_list)
                                  if args.official_list else None)},
        input_hashes=inputs,
        outputs=outputs,
        timings={"reconstruct_s": round(elapsed, 3)},
    ).write(out)
    print(f"{len(snaps)} snapshots, {len(timelines)} ever-members -> {out}")
    return 0


def _rolling_sharpe(returns: np.ndarray,
                    window: int = ROLLING_WINDOW) -> np.ndarray:
    r = pd.Series(returns)
    mean = r.rolling(window).mean()
    std = r.rolling(window).std(ddof=1)
    return (mean / std * np.sqrt(TRADING_DAYS_PER_YEAR)).to_numpy()


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    frame = load_store(args.store)
    clip = _parse_clip(args.clip) if args.clip else None
    scheme = WeightScheme(kind=args.weighting, clip_bounds=clip)

    t0 = time.perf_counter()
    _, snaps, timelines = _reconstruct(
        frame, (DEFAULT_LOW_RANK, DEFAULT_HIGH_RANK), "quarterly",
        args.dead_days)
    inputs = {"store": _hash_input(args.store)}
    if args.timelines:
        timelines = load_timeline(args.timelines)
        inputs["timelines"] = _hash_input(args.timelines)

    survivor = UniverseSpec.survivor_only(snaps[-1].members)
    complete = UniverseSpec.complete(snaps)
    surv_series = build_series(frame, survivor, scheme, label="survivor")
    comp_series = build_series(frame, complete, scheme, label="complete")
    m_surv = compute_metrics(surv_series.returns)
    m_comp = compute_metrics(comp_series.returns)
    report = compute_bias(m_surv, m_comp)
    if args.bootstrap_n > 0:
        report.bootstrap = run_bootstrap(comp_series.returns, m_surv,
                                         n=args.bootstrap_n, seed=args.seed)
    report.decomposition = decompose(timelines, frame)
    elapsed = time.perf_counter() - t0

    surv_series.save_csv(out / "survivor_series.csv")
    comp_series.save_csv(out / "complete_series.csv")
    _save_json({"survivor": m_surv.to_dict(), "complete": m_comp.to_dict()},
               out / "metrics.json")
    report.save_json(out / "bias_report.json")
    save_decomposition(report.decomposition, out / "decomposition.csv")

    dates = [str(d.date()) for d in surv_series.dates]
    pd.DataFrame({
        "DATE": dates,
        "SURVIVOR_WEALTH": np.cumprod(1.0 + surv_series.returns),
        "COMPLETE_WEALTH": np.cumprod(1.0 + comp_series.returns),
    }).to_csv(out / "fig_cumulative.csv", index=False,
              float_format="%.10g")
    rolling = pd.DataFrame({
        "DATE": dates,
        "SURVIVOR_SHARPE": _rolling_sharpe(surv_series.returns),
        "COMPLETE_SHARPE": _rolling_sharpe(comp_series.returns),
    }).dropna()
    rolling.to_csv(out / "fig_rolling_sharpe.csv", index=False,
                   float_format="%.10g")
    pd.DataFrame({
        "SNAPSHOT_DATE": [str(s.date.date()) for s in snaps],
        "N_MEMBERS": [len(s) for s in snaps],
    }).to_csv(out / "fig_membership_counts.csv", index=False)

    RunManifest(
        command="analyze",
        config={"store": str(args.store),
                "timelines": str(args.timelines) if args.timelines else None,
                "weighting": args.weighting, "clip": args.clip,
                "bootstrap_n": args.bootstrap_n, "seed": args.seed,
                "dead_days": args.dead_days},
        input_hashes=inputs,
        outputs=["survivor_series.csv", "complete_series.csv",
                 "metrics.json", "bias_report.json", "decomposition.csv",
                 "fig_cumulative.csv", "fig_rolling_sharpe.csv",
                 "fig_membership_counts.csv"],
        timings={"analyze_s": round(elapsed, 3)},
    ).write(out)
    ret_bias = report.metrics["annualized_return"].absolute_bias * 100
    sharpe_bias = report.metrics["sharpe"].absolute_bias
    print(f"return bias {ret_bias:+.2f}pp, sharpe bias {sharpe_bias:+.3f} "
          f"-> {out}")
    return 0


def cmd_robustness(args) -> int:
    out = _out_dir(args)
    frame = load_store(args.store)
    inputs = {"store": _hash_input(args.store)}
    if args.scenarios:
        configs = load_scenarios(args.scenarios)
        inputs["scenarios"] = _hash_input(args.scenarios)
    else:
        configs = default_scenarios()
    if not configs:
        raise DomainError("scenario file holds no scenarios")

    t0 = time.perf_counter()
    scenario_dir = out / "scenarios"
    scenario_dir.mkdir(exist_ok=True)
    outputs = []
    results = []
    for config in configs:
        result = run_scenario(frame, config,
                              dead_threshold_days=args.dead_days)
        results.append(result)
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", config.label)
        rel = f"scenarios/{safe}.json"
        result.save_json(out / rel)
        outputs.append(rel)
    save_scenario_table(scenario_table(results), out / "scenario_table.csv")
    outputs.append("scenario_table.csv")

    years, summary = subperiod_table(frame,
                                     dead_threshold_days=args.dead_days)
    years.to_csv(out / "subperiod_table.csv", index=False,
                 float_format="%.6f")
    _save_json(summary, out / "subperiod_summary.json")
    outputs += ["subperiod_table.csv", "subperiod_summary.json"]
    elapsed = time.perf_counter() - t0

    RunManifest(
        command="robustness",
        config={"store": str(args.store),
                "scenarios": str(args.scenarios) if args.scenarios else None,
                "dead_days": args.dead_days},
        input_hashes=inputs,
        outputs=outputs,
        timings={"robustness_s": round(elapsed, 3)},
    ).write(out)
    print(f"{len(results)} scenarios -> {out}")
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args)
    blob = {}
    inputs = {}
    if args.config:
        blob = json.loads(Path(args.config).read_text())
        known = {f.name for f in dataclasses.fields(SynthConfig)}
        unknown = set(blob) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        inputs["config"] = _hash_input(args.config)
    if args.seed is not None:
        blob["seed"] = args.seed
    config = SynthConfig(**blob)

    t0 = time.perf_counter()
    data_dir = out / "data"
    data_dir.mkdir(exist_ok=True)
    truth = generate(config, data_dir)
    elapsed = time.perf_counter() - t0
    truth.save_json(out / "truth.json")
    _save_json(dataclasses.asdict(config), out / "synth_config.json")

    outputs = [f"data/{p.name}" for p in sorted(data_dir.iterdir())]
    outputs += ["truth.json", "synth_config.json"]
    RunManifest(
        command="synth",
        config=dataclasses.asdict(config),
        input_hashes=inputs,
        outputs=outputs,
        timings={"synth_s": round(elapsed, 3)},
    ).write(out)
    print(f"{len(outputs) - 2} files, {config.n_stocks} stocks -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survbias",
        description="Measure survivorship bias in a rules-based "
                    "small-cap index backtest.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw daily files into a store")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("reconstruct",
                       help="rebuild index membership history")
    p.add_argument("--store", required=True)
    p.add_argument("--band", default=f"{DEFAULT_LOW_RANK}:"
                                     f"{DEFAULT_HIGH_RANK}")
    p.add_argument("--frequency", default="quarterly",
                   choices=["quarterly", "semiannual"])
    p.add_argument("--official-list", default=None)
    p.add_argument("--dead-days", type=int, default=DEAD_THRESHOLD_DAYS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("analyze", help="measure survivor-vs-complete bias")
    p.add_argument("--store", required=True)
    p.add_argument("--timelines", default=None,
                   help="timeline.json from reconstruct; recomputed "
                        "when omitted")
    p.add_argument("--weighting", default="equal",
                   choices=["equal", "value"])
    p.add_argument("--clip", default=None,
                   help="daily return clip bounds; pass as --clip=-0.5:1.0")
    p.add_argument("--bootstrap-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dead-days", type=int, default=DEAD_THRESHOLD_DAYS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("robustness", help="sweep alternative scenarios")
    p.add_argument("--store", required=True)
    p.add_argument("--scenarios", default=None,
                   help="JSON array of scenario configs; defaults to the "
                        "built-in sweep")
    p.add_argument("--dead-days", type=int, default=DEAD_THRESHOLD_DAYS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("synth",
                       help="generate synthetic data with ground truth")
    p.add_argument("--config", default=None, help="JSON config overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SurvbiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
