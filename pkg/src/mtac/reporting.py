"""Aggregate finished runs into a strategy comparison table.

A "run" is a directory containing metrics.jsonl. Runs that share everything
except the seed (same train config, same tags) are replicates of one strategy
and are collapsed with the median, which is what the noise-robustness grids
compare.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Optional

from .trainer import strategy_key

COLUMNS = ("branches", "edges", "noise", "seeds", "test_acc", "ccc_v", "ccc_a", "au_f1", "relabel_prec", "relabel_rec")


@dataclass
class RunRecord:
    path: Path
    config: dict
    tags: dict
    branches: str
    final: dict
    num_classes: int
    au_count: int


@dataclass
class StrategyRow:
    branches: str
    edge_mode: Optional[str]
    tags: dict
    seeds: list[int] = field(default_factory=list)
    runs: list[RunRecord] = field(default_factory=list)

    def _median(self, key: str) -> Optional[float]:
        values = [r.final.get(key) for r in self.runs]
        values = [v for v in values if v is not None]
        return median(values) if values else None

    def as_columns(self) -> dict:
        return {
            "branches": self.branches,
            "edges": self.edge_mode if self.edge_mode is not None else "-",
            "noise": self.tags.get("noise", "-"),
            "seeds": len(self.seeds),
            "test_acc": self._median("test_accuracy"),
            "ccc_v": self._median("ccc_valence"),
            "ccc_a": self._median("ccc_arousal"),
            "au_f1": self._median("au_f1"),
            "relabel_prec": self._median("relabel_precision"),
            "relabel_rec": self._median("relabel_recall"),
        }


def load_run(path: str | Path) -> RunRecord:
    path = Path(path)
    metrics = path / "metrics.jsonl"
    if not metrics.exists():
        raise ValueError(f"{path} is not a run directory (no metrics.jsonl)")
    run_line = None
    final_line = None
    for line in metrics.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("type") == "run":
            run_line = rec
        elif rec.get("type") == "final":
            final_line = rec
    if run_line is None:
        raise ValueError(f"{metrics} has no run record")
    if final_line is None:
        raise ValueError(f"{metrics} has no final record (training did not finish)")
    return RunRecord(
        path=path,
        config=run_line["config"],
        tags=run_line.get("tags", {}),
        branches=run_line.get("branches", "custom"),
        final=final_line,
        num_classes=run_line["num_classes"],
        au_count=run_line["au_count"],
    )


def discover_runs(roots) -> list[RunRecord]:
    """Collect runs under one or many directories; each may be a run dir or a tree of them."""
    if isinstance(roots, (str, Path)):
        roots = [roots]
    found: list[Path] = []
    for root in roots:
        root = Path(root)
        if not root.exists():
            raise ValueError(f"no such directory: {root}")
        hits = sorted(p.parent for p in root.rglob("metrics.jsonl"))
        if not hits:
            raise ValueError(f"no runs under {root}")
        found.extend(hits)
    seen = set()
    unique = [p for p in found if not (p.resolve() in seen or seen.add(p.resolve()))]
    return [load_run(p) for p in unique]


def group_runs(runs: list[RunRecord]) -> list[StrategyRow]:
    if not runs:
        raise ValueError("no runs to report")
    shapes = {(r.num_classes, r.au_count) for r in runs}
    if len(shapes) > 1:
        raise ValueError(f"runs use different taxonomies or AU sets, refusing to aggregate: {sorted(shapes)}")
    rows: dict[str, StrategyRow] = {}
    for r in runs:
        key = strategy_key(r.config) + "|" + json.dumps(r.tags, sort_keys=True)
        if key not in rows:
            rows[key] = StrategyRow(
                branches=r.branches,
                edge_mode=r.config["edge_mode"] if r.config.get("use_au") else None,
                tags=r.tags,
            )
        rows[key].seeds.append(r.config["seed"])
        rows[key].runs.append(r)
    return [rows[k] for k in sorted(rows)]


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def format_table(rows: list[StrategyRow]) -> str:
    grid = [COLUMNS] + [tuple(_cell(row.as_columns()[c]) for c in COLUMNS) for row in rows]
    widths = [max(len(r[i]) for r in grid) for i in range(len(COLUMNS))]
    lines = []
    for i, r in enumerate(grid):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_csv(rows: list[StrategyRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.as_columns().items()})
    return buf.getvalue()


def report(roots, csv_path: Optional[str | Path] = None) -> str:
    rows = group_runs(discover_runs(roots))
    if csv_path is not None:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        Path(csv_path).write_text(format_csv(rows), encoding="utf-8")
    return format_table(rows)
