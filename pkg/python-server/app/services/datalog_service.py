"""
Episode dataset logging and benchmark metrics.

Episode records are written as JSONL (one ``EpisodeRecord`` per line). Metrics
and comparisons are pydantic models serialized to JSON, so the same seed
always produces the same bytes.
"""

import json
import logging
import os
from collections import Counter
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from pydantic import BaseModel, ValidationError

from app.core.errors import DatalogError, MetricsError
from app.models.records import (
    ComparisonRow,
    ComparisonTable,
    EpisodeOutcome,
    EpisodeRecord,
    EpisodeResult,
    MetricsReport,
    Mode,
    ScenarioMetrics,
)

logger = logging.getLogger(__name__)

AGGREGATE = "aggregate"


def _write_atomic(path: Path, lines: Iterable[str], what: str) -> int:
    """Write to a temporary sibling and move it into place; a failure leaves ``path`` untouched."""
    path = Path(path)
    count = 0
    tmp: Optional[Path] = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
        with tmp.open("w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line)
                count += 1
        os.replace(tmp, path)
    except (OSError, ValueError) as e:
        _discard(tmp)
        raise DatalogError(f"Failed to write {what} {path}: {e}") from e
    except BaseException:
        _discard(tmp)
        raise
    return count


def _discard(tmp: Optional[Path]) -> None:
    if tmp is not None:
        try:
            tmp.unlink()
        except FileNotFoundError:
            pass


def write_jsonl(records: Iterable[EpisodeRecord], path: Path) -> int:
    count = _write_atomic(path, (record.model_dump_json() + "\n" for record in records), "episode log")
    logger.debug(f"Wrote {count} records to {path}")
    return count


def read_jsonl(path: Path) -> List[EpisodeRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DatalogError(f"Failed to read episode log {path}: {e}") from e
    records = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(EpisodeRecord.model_validate_json(line))
        except ValidationError as e:
            raise DatalogError(f"{path}:{number}: invalid record: {e}") from e
    return records


def write_json(model: BaseModel, path: Path) -> Path:
    _write_atomic(path, [model.model_dump_json(indent=2) + "\n"], "JSON")
    return Path(path)


def load_metrics(path: Path) -> MetricsReport:
    path = Path(path)
    try:
        return MetricsReport.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DatalogError(f"Failed to read metrics {path}: {e}") from e
    except ValidationError as e:
        raise MetricsError(f"{path} is not a metrics report: {e}") from e


def write_manifest(path: Path, payload: Dict[str, Any]) -> Path:
    """Describe a run directory: seed, scenarios, modes, configuration and files."""
    _write_atomic(path, [json.dumps(payload, indent=2, sort_keys=True) + "\n"], "manifest")
    return Path(path)


def _scenario_metrics(results: List[EpisodeResult]) -> ScenarioMetrics:
    successes = [r for r in results if r.outcome is EpisodeOutcome.SUCCESS]
    outcomes = Counter(r.outcome.value for r in results)
    return ScenarioMetrics(
        trials=len(results),
        successes=len(successes),
        success_rate=len(successes) / len(results),
        violation_count=sum(r.violation_total for r in results),
        peak_force=max(r.peak_force for r in results),
        mean_time_to_success=(
            sum(r.duration for r in successes) / len(successes) if successes else None
        ),
        outcomes={o.value: outcomes.get(o.value, 0) for o in EpisodeOutcome},
    )


def _aggregate(per_scenario: List[ScenarioMetrics]) -> ScenarioMetrics:
    """Unweighted mean over scenarios for rates and times; sums for counts."""
    times = [m.mean_time_to_success for m in per_scenario if m.mean_time_to_success is not None]
    outcomes: Counter = Counter()
    for m in per_scenario:
        outcomes.update(m.outcomes)
    return ScenarioMetrics(
        trials=sum(m.trials for m in per_scenario),
        successes=sum(m.successes for m in per_scenario),
        success_rate=sum(m.success_rate for m in per_scenario) / len(per_scenario),
        violation_count=sum(m.violation_count for m in per_scenario),
        peak_force=max(m.peak_force for m in per_scenario),
        mean_time_to_success=sum(times) / len(times) if times else None,
        outcomes={o.value: outcomes.get(o.value, 0) for o in EpisodeOutcome},
    )


def compute_metrics(results: List[EpisodeResult], mode: Optional[Mode] = None) -> MetricsReport:
    if not results:
        raise MetricsError("cannot compute metrics from an empty result list")
    modes = {r.mode for r in results}
    if len(modes) > 1:
        raise MetricsError(f"results mix modes {sorted(m.value for m in modes)}; compute per mode")
    if mode is None:
        mode = next(iter(modes))

    grouped: Dict[str, List[EpisodeResult]] = {}
    for result in results:
        grouped.setdefault(result.scenario_id, []).append(result)
    scenarios = {sid: _scenario_metrics(group) for sid, group in grouped.items()}
    return MetricsReport(
        mode=mode, scenarios=scenarios, aggregate=_aggregate(list(scenarios.values()))
    )


def _row(name: str, baseline: ScenarioMetrics, adaptor: ScenarioMetrics) -> ComparisonRow:
    return ComparisonRow(
        scenario=name,
        baseline_success_rate=baseline.success_rate,
        adaptor_success_rate=adaptor.success_rate,
        success_delta=adaptor.success_rate - baseline.success_rate,
        baseline_violations=baseline.violation_count,
        adaptor_violations=adaptor.violation_count,
        violation_delta=adaptor.violation_count - baseline.violation_count,
        baseline_peak_force=baseline.peak_force,
        adaptor_peak_force=adaptor.peak_force,
    )


def compare_report(baseline: MetricsReport, adaptor: MetricsReport) -> ComparisonTable:
    if set(baseline.scenarios) != set(adaptor.scenarios):
        raise MetricsError(
            f"scenario sets differ: baseline {sorted(baseline.scenarios)} "
            f"vs adaptor {sorted(adaptor.scenarios)}"
        )
    rows = [
        _row(name, metrics, adaptor.scenarios[name]) for name, metrics in baseline.scenarios.items()
    ]
    return ComparisonTable(rows=rows, aggregate=_row(AGGREGATE, baseline.aggregate, adaptor.aggregate))


def report_table(metrics: MetricsReport) -> str:
    """Aligned text table for a single report."""
    title = f"mode: {metrics.mode.value}" if metrics.mode else "mode: unknown"
    header = f"{'scenario':<16} {'trials':>6} {'success':>8} {'rate':>6} {'viol':>6} {'F_peak':>8} {'t_success':>10}"
    lines = [title, header, "-" * len(header)]
    rows = list(metrics.scenarios.items()) + [(AGGREGATE, metrics.aggregate)]
    for name, m in rows:
        t = f"{m.mean_time_to_success:.2f}" if m.mean_time_to_success is not None else "-"
        lines.append(
            f"{name:<16} {m.trials:>6d} {m.successes:>8d} {m.success_rate:>6.2f} "
            f"{m.violation_count:>6d} {m.peak_force:>8.2f} {t:>10}"
        )
    return "\n".join(lines) + "\n"
