"""Per-stage statistics, retention, real-time factor, and report rendering.

A run report is six stage rows (source, then one per transform), a drop
ledger, a failed-item list, and a timing footer. Statistics use the
population standard deviation and exact summation, so merging per-item
partial results in any order yields identical numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ParseError, ZeroAudio
from .filtering import DropRecord

STAGE_SOURCE = "Source"
STAGE_SEPARATION = "+ Source Separation"
STAGE_DIARIZATION = "+ Speaker Diarization"
STAGE_VAD = "+ Fine-grained Segmentation by VAD"
STAGE_ASR = "+ ASR"
STAGE_FILTERING = "+ Filtering"

STAGE_ORDER = (
    STAGE_SOURCE,
    STAGE_SEPARATION,
    STAGE_DIARIZATION,
    STAGE_VAD,
    STAGE_ASR,
    STAGE_FILTERING,
)


@dataclass(frozen=True)
class ClipRecord:
    """One clip's contribution to a stage row."""

    duration_s: float
    quality: float | None = None


@dataclass(frozen=True)
class StageStats:
    """One row of the run report; None marks an empty statistic."""

    stage: str
    clip_count: int
    total_hours: float
    duration_min: float | None
    duration_max: float | None
    duration_mean: float | None
    duration_std: float | None
    quality_min: float | None
    quality_max: float | None
    quality_mean: float | None
    quality_std: float | None
    retention_pct: float | None


@dataclass(frozen=True)
class FailedItem:
    """A quarantined source item and where it failed."""

    item_id: str
    stage: str
    kind: str
    message: str


def _summary(values: list[float]) -> tuple[float, float, float, float] | None:
    if not values:
        return None
    n = len(values)
    mean = math.fsum(values) / n
    variance = math.fsum((x - mean) ** 2 for x in values) / n
    return min(values), max(values), mean, math.sqrt(variance)


def collect_stats(
    stage: str, records: list[ClipRecord], source_hours: float | None = None
) -> StageStats:
    """Reduce one stage's clip records to its report row.

    ``source_hours`` is the first row's total; when given, the row carries
    retention relative to it. Zero records produce zero counts with the
    statistics fields empty-marked.
    """
    durations = [r.duration_s for r in records]
    qualities = [r.quality for r in records if r.quality is not None]
    total_hours = math.fsum(durations) / 3600.0
    dur = _summary(durations)
    qual = _summary(qualities)
    retention = None
    if source_hours is not None:
        retention = 100.0 * total_hours / source_hours if source_hours > 0 else 0.0
    return StageStats(
        stage=stage,
        clip_count=len(records),
        total_hours=total_hours,
        duration_min=dur[0] if dur else None,
        duration_max=dur[1] if dur else None,
        duration_mean=dur[2] if dur else None,
        duration_std=dur[3] if dur else None,
        quality_min=qual[0] if qual else None,
        quality_max=qual[1] if qual else None,
        quality_mean=qual[2] if qual else None,
        quality_std=qual[3] if qual else None,
        retention_pct=retention,
    )


def compute_rtf(wall_s: float, source_hours: float) -> float:
    """Wall-clock seconds per second of source audio; lower is faster."""
    if source_hours <= 0.0:
        raise ZeroAudio(f"cannot compute RTF over {source_hours} hours of audio")
    return wall_s / (source_hours * 3600.0)


@dataclass(frozen=True)
class PipelineReport:
    run_id: str
    stages: tuple[StageStats, ...]
    wall_processing_s: float
    rtf: float
    failed_items: tuple[FailedItem, ...]
    drops: tuple[DropRecord, ...]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "stages": [asdict(s) for s in self.stages],
            "wall_processing_s": self.wall_processing_s,
            "rtf": self.rtf,
            "failed_items": [asdict(f) for f in self.failed_items],
            "drops": [asdict(d) for d in self.drops],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineReport":
        try:
            return cls(
                run_id=data["run_id"],
                stages=tuple(StageStats(**s) for s in data["stages"]),
                wall_processing_s=data["wall_processing_s"],
                rtf=data["rtf"],
                failed_items=tuple(FailedItem(**f) for f in data["failed_items"]),
                drops=tuple(DropRecord(**d) for d in data["drops"]),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed report: {exc}") from exc

    def save(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: Path) -> "PipelineReport":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot read report {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParseError(f"report {path} is not an object")
        return cls.from_dict(data)


def _fmt(value: float | None, pattern: str = "{:.2f}") -> str:
    return pattern.format(value) if value is not None else "-"


def _fmt_pm(mean: float | None, std: float | None) -> str:
    if mean is None or std is None:
        return "-"
    return f"{mean:.2f} ± {std:.2f}"


def render_stage_table(stages: tuple[StageStats, ...] | list[StageStats]) -> str:
    """Render the stage rows as a fixed-column text table.

    The final row's total hours carry the retention percentage in
    parentheses. The output is a pure function of the stats, so goldens
    can compare it byte for byte.
    """
    header = [
        "Processing Stage",
        "Dur min (s)",
        "Dur max (s)",
        "Dur avg ± std (s)",
        "Q min",
        "Q max",
        "Q avg ± std",
        "Clips",
        "Total Duration (hours)",
    ]
    rows = [header]
    for i, s in enumerate(stages):
        hours = f"{s.total_hours:.2f}"
        if i == len(stages) - 1 and s.retention_pct is not None:
            hours = f"{hours} ({s.retention_pct:.2f}%)"
        rows.append(
            [
                s.stage,
                _fmt(s.duration_min),
                _fmt(s.duration_max),
                _fmt_pm(s.duration_mean, s.duration_std),
                _fmt(s.quality_min),
                _fmt(s.quality_max),
                _fmt_pm(s.quality_mean, s.quality_std),
                str(s.clip_count),
                hours,
            ]
        )
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for r, row in enumerate(rows):
        cells = [
            cell.ljust(widths[c]) if c == 0 else cell.rjust(widths[c])
            for c, cell in enumerate(row)
        ]
        lines.append(" | ".join(cells).rstrip())
        if r == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_report(report: PipelineReport) -> str:
    """Stage table plus the run's timing footer."""
    parts = [render_stage_table(report.stages)]
    parts.append(f"\nTotal Processing Time: {report.wall_processing_s / 60.0:.2f} mins\n")
    parts.append(f"Real-Time Factor (RTF): {report.rtf:.5f}\n")
    if report.failed_items:
        parts.append(f"Failed items: {len(report.failed_items)}\n")
        for item in report.failed_items:
            parts.append(f"  {item.item_id}: {item.stage}: {item.kind}: {item.message}\n")
    return "".join(parts)
