"""Shared pipeline driver for tests: raw files -> all pipeline outputs."""

from survbias import ingest, universe
from survbias.portfolio import UniverseSpec, WeightScheme, build_series


def run_full_pipeline(data_dir, dead_threshold_days=365):
    """Ingest a directory and produce snapshots, classified timelines, and
    the four portfolio series keyed like the generator's ground truth."""
    frame, stats = ingest.ingest_directory(data_dir)
    rankings, snaps = universe.build_snapshots(frame)
    timelines = universe.build_timeline(snaps)
    universe.classify_removals(timelines, frame, snaps[-1].members,
                               dead_threshold_days=dead_threshold_days)
    survivor = UniverseSpec.survivor_only(snaps[-1].members)
    complete = UniverseSpec.complete(snaps)
    series = {
        "survivor_equal": build_series(frame, survivor, WeightScheme.equal()),
        "complete_equal": build_series(frame, complete, WeightScheme.equal()),
        "survivor_value": build_series(frame, survivor, WeightScheme.value()),
        "complete_value": build_series(frame, complete, WeightScheme.value()),
    }
    return {
        "frame": frame,
        "stats": stats,
        "rankings": rankings,
        "snapshots": snaps,
        "timelines": timelines,
        "series": series,
    }
