"""Result persistence: frames.jsonl, summary.csv, config.resolved.json."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .runner import FrameRecord

SUMMARY_FIELDS = ("algorithm", "mode", "seed", "frames", "mpr", "mean_budget", "weighted_recall", "mean_bandwidth", "mean_scheduled")


def emit_outputs(records, summary, out_dir, cfg=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "frames.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for row in summary:
            w.writerow({k: row[k] for k in SUMMARY_FIELDS})
    if cfg is not None:
        (out / "config.resolved.json").write_text(cfg.to_json() + "\n")
    return out


def read_frames(path) -> list:
    with open(path) as fh:
        return [FrameRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def recompute_recall(records) -> dict:
    """Weighted recall per algorithm from raw frame records."""
    num, den = {}, {}
    for r in records:
        num[r.algorithm] = num.get(r.algorithm, 0.0) + r.utility
        den[r.algorithm] = den.get(r.algorithm, 0.0) + r.total_weight
    return {a: (num[a] / den[a] if den[a] > 0 else 0.0) for a in num}


def write_sweep(table, path) -> None:
    fields = ("axis", "value", "algorithm", "mean_recall", "std_recall", "n_seeds")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in table:
            w.writerow({k: row[k] for k in fields})
